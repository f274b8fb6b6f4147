//! Frozen experiment presets, one per reproduced figure. Each figure has a
//! primary series (selected when no series is given) and optional
//! comparison series.

use crate::channel::FadingMode;
use crate::sim::{Coding, Detector, Modulation, SimConfig};
use crate::wimax_ldpc::RateId;

use super::CliError;

pub const PRESETS: &[&str] = &["fig2", "fig3", "fig4", "fig5"];

/// Series names per preset; the first one is the default.
pub fn series_of(preset: &str) -> Option<&'static [&'static str]> {
    match preset {
        "fig2" => Some(&["d4", "d8"]),
        "fig3" => Some(&["r23_56", "r34_34"]),
        "fig4" => Some(&["proposed", "mmse", "ml"]),
        "fig5" => Some(&["proposed", "mmse"]),
        _ => None,
    }
}

/// Every `(preset, series)` pair.
pub fn all_series() -> Vec<(&'static str, &'static str)> {
    PRESETS
        .iter()
        .flat_map(|&p| series_of(p).unwrap().iter().map(move |&s| (p, s)))
        .collect()
}

fn grid(start: f64, stop: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut x = start;
    while x <= stop + 1e-9 {
        v.push(x);
        x += 1.0;
    }
    v
}

fn coded_2x2() -> SimConfig {
    SimConfig {
        nt: 2,
        nr: 2,
        f_blocks: 8,
        fading: FadingMode::BlockFading,
        modulation: Modulation::Hqam16,
        coding: Coding::Ldpc,
        detector: Detector::MmseMl,
        max_decoder_iterations: 50,
        ..SimConfig::default()
    }
}

fn qam16(detector: Detector, base: SimConfig) -> SimConfig {
    SimConfig {
        modulation: Modulation::Qam16,
        ratios: Vec::new(),
        detector,
        rates: vec![RateId::R3_4A],
        ..base
    }
}

/// Expands a preset (and series) into a complete configuration.
pub fn preset(name: &str, series: Option<&str>) -> Result<SimConfig, CliError> {
    let names = series_of(name).ok_or_else(|| {
        CliError::Config(format!(
            "preset: unknown preset {name:?} (expected one of {})",
            PRESETS.join(", ")
        ))
    })?;
    let series = series.unwrap_or(names[0]);
    if !names.contains(&series) {
        return Err(CliError::Config(format!(
            "series: {name} has no series {series:?} (expected one of {})",
            names.join(", ")
        )));
    }
    let cfg = match (name, series) {
        ("fig2", d) => SimConfig {
            nt: 2,
            nr: 2,
            fading: FadingMode::PerVectorIid,
            modulation: Modulation::Hqam16,
            ratios: vec![if d == "d4" { 4.0 } else { 8.0 }],
            detector: Detector::MlMlUncoded,
            coding: Coding::None,
            rates: Vec::new(),
            ebn0_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            min_frames: 1800,
            ..SimConfig::default()
        },
        ("fig3", "r23_56") => SimConfig {
            ratios: vec![2.0],
            rates: vec![RateId::R2_3A, RateId::R5_6],
            ebn0_db: grid(0.0, 14.0),
            ..coded_2x2()
        },
        ("fig3", _) => SimConfig {
            ratios: vec![2.0],
            rates: vec![RateId::R3_4A, RateId::R3_4A],
            ebn0_db: grid(0.0, 16.0),
            ..coded_2x2()
        },
        ("fig4", "proposed") => SimConfig {
            ratios: vec![1.9],
            rates: vec![RateId::R2_3A, RateId::R5_6],
            ebn0_db: grid(0.0, 14.0),
            ..coded_2x2()
        },
        ("fig4", "mmse") => qam16(
            Detector::Mmse,
            SimConfig {
                ebn0_db: grid(0.0, 18.0),
                ..coded_2x2()
            },
        ),
        ("fig4", _) => qam16(
            Detector::Ml,
            SimConfig {
                ebn0_db: grid(0.0, 13.0),
                ..coded_2x2()
            },
        ),
        ("fig5", "proposed") => SimConfig {
            nt: 4,
            nr: 4,
            ratios: vec![2.0],
            rates: vec![RateId::R2_3A, RateId::R5_6],
            ebn0_db: grid(0.0, 8.0),
            ..coded_2x2()
        },
        ("fig5", _) => qam16(
            Detector::Mmse,
            SimConfig {
                nt: 4,
                nr: 4,
                ebn0_db: grid(0.0, 14.0),
                ..coded_2x2()
            },
        ),
        _ => unreachable!(),
    };
    cfg.validate()
        .map_err(|e| CliError::Config(format!("preset {name}/{series}: {e}")))?;
    Ok(cfg)
}
