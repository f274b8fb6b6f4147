use std::collections::BTreeSet;
use std::path::PathBuf;

use hqam_mimo::cli::csv::reference_header;
use hqam_mimo::cli::presets::series_of;
use hqam_mimo::cli::{parse_reference_csv, preset};

fn load(fig: &str) -> (String, Vec<hqam_mimo::cli::ReferencePoint>) {
    let path: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "..",
        "reference",
        &format!("{fig}.csv"),
    ]
    .iter()
    .collect();
    let text = std::fs::read_to_string(path).unwrap();
    let pts = parse_reference_csv(&text).unwrap();
    (text, pts)
}

#[test]
fn every_figure_has_a_reference_file() {
    for (fig, rows) in [("fig2", 32), ("fig3", 64), ("fig4", 62), ("fig5", 33)] {
        let (text, pts) = load(fig);
        assert!(text.starts_with(&reference_header()));
        assert_eq!(pts.len(), rows, "{fig}");
        let series: BTreeSet<&str> = pts.iter().map(|p| p.series.as_str()).collect();
        let expected: BTreeSet<&str> = series_of(fig).unwrap().iter().copied().collect();
        assert_eq!(series, expected, "{fig}");
    }
}

#[test]
fn layers_match_the_simulated_rows() {
    for fig in ["fig2", "fig3", "fig4", "fig5"] {
        let (_, pts) = load(fig);
        for &s in series_of(fig).unwrap() {
            let names: BTreeSet<&str> = preset(fig, Some(s))
                .unwrap()
                .layer_names()
                .into_iter()
                .collect();
            for p in pts.iter().filter(|p| p.series == s) {
                assert!(names.contains(p.layer.as_str()), "{fig}/{s}: {}", p.layer);
            }
        }
    }
}

#[test]
fn values_are_probabilities_and_curves_do_not_rise() {
    for fig in ["fig2", "fig3", "fig4", "fig5"] {
        let (_, pts) = load(fig);
        for p in &pts {
            let v = if fig == "fig2" { p.ber } else { p.fer }.expect("value present");
            assert!(v > 0.0 && v <= 1.0, "{fig} {p:?}");
        }
        let mut keys: Vec<(&str, &str)> = pts
            .iter()
            .map(|p| (p.series.as_str(), p.layer.as_str()))
            .collect();
        keys.dedup();
        for (s, l) in keys {
            let curve: Vec<f64> = pts
                .iter()
                .filter(|p| p.series == s && p.layer == l)
                .map(|p| p.fer.or(p.ber).unwrap())
                .collect();
            // Floors carry Monte Carlo noise of a few percent.
            assert!(
                curve.windows(2).all(|w| w[1] <= 1.05 * w[0]),
                "{fig}/{s}/{l} rises"
            );
        }
    }
}
