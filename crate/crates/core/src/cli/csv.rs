//! Result tables as CSV.
//!
//! Numbers are written in Rust's shortest round-trip form, so parsing a
//! written file recovers every value exactly. Empty cells stand for values
//! that do not apply (confidence bounds of the layer average, decoder
//! iterations of uncoded runs, disabled timing).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::sim::SimResult;

use super::CliError;

pub const HEADER: &str = "ebn0_db,layer,frames,frame_errors,fer,fer_ci_lo,fer_ci_hi,bit_errors,bits,ber,avg_iters,metric_evals,seconds,seed";

/// Header of the reference curve files: a `series` column followed by the
/// result schema.
pub fn reference_header() -> String {
    format!("series,{HEADER}")
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn format_row(r: &SimResult) -> String {
    let (lo, hi) = match r.fer_ci {
        Some((lo, hi)) => (num(lo), num(hi)),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        num(r.ebn0_db),
        r.layer,
        r.frames,
        r.frame_errors,
        num(r.fer),
        lo,
        hi,
        r.bit_errors,
        r.bits,
        num(r.ber),
        opt(r.avg_iters),
        r.metric_evals,
        opt(r.seconds),
        r.seed
    )
}

pub fn to_csv_string(rows: &[SimResult]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", format_row(r));
    }
    out
}

/// Writes `rows` to `path`, header first.
pub fn emit_csv(rows: &[SimResult], path: &Path) -> Result<(), CliError> {
    fs::write(path, to_csv_string(rows)).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T, CliError> {
    s.parse()
        .map_err(|_| CliError::Config(format!("csv line {line}: bad {name} {s:?}")))
}

fn opt_field(line: usize, name: &str, s: &str) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(line, name, s).map(Some)
    }
}

/// Parses a file written by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<SimResult>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HEADER => {}
        other => {
            return Err(CliError::Config(format!(
                "csv: expected header {HEADER:?}, got {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(CliError::Config(format!(
                "csv line {lineno}: expected 14 fields, got {}",
                f.len()
            )));
        }
        let lo = opt_field(lineno, "fer_ci_lo", f[5])?;
        let hi = opt_field(lineno, "fer_ci_hi", f[6])?;
        rows.push(SimResult {
            ebn0_db: field(lineno, "ebn0_db", f[0])?,
            layer: f[1].to_string(),
            frames: field(lineno, "frames", f[2])?,
            frame_errors: field(lineno, "frame_errors", f[3])?,
            fer: field(lineno, "fer", f[4])?,
            fer_ci: lo.zip(hi),
            bit_errors: field(lineno, "bit_errors", f[7])?,
            bits: field(lineno, "bits", f[8])?,
            ber: field(lineno, "ber", f[9])?,
            avg_iters: opt_field(lineno, "avg_iters", f[10])?,
            metric_evals: field(lineno, "metric_evals", f[11])?,
            seconds: opt_field(lineno, "seconds", f[12])?,
            seed: field(lineno, "seed", f[13])?,
        });
    }
    Ok(rows)
}

/// One digitized point of a reference curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub series: String,
    pub ebn0_db: f64,
    pub layer: String,
    pub fer: Option<f64>,
    pub ber: Option<f64>,
}

/// Parses a reference curve file (only `ebn0_db`, `layer`, `fer` and `ber`
/// are read; the other columns are empty in the shipped files).
pub fn parse_reference_csv(text: &str) -> Result<Vec<ReferencePoint>, CliError> {
    let mut lines = text.lines();
    let header = reference_header();
    match lines.next() {
        Some(h) if h.trim_end() == header => {}
        other => {
            return Err(CliError::Config(format!(
                "reference csv: expected header {header:?}, got {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(CliError::Config(format!(
                "reference csv line {lineno}: expected 15 fields, got {}",
                f.len()
            )));
        }
        out.push(ReferencePoint {
            series: f[0].to_string(),
            ebn0_db: field(lineno, "ebn0_db", f[1])?,
            layer: f[2].to_string(),
            fer: opt_field(lineno, "fer", f[5])?,
            ber: opt_field(lineno, "ber", f[10])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SimResult> {
        vec![
            SimResult {
                ebn0_db: 7.5,
                layer: "base".into(),
                frames: 1234,
                frame_errors: 101,
                fer: 101.0 / 1234.0,
                fer_ci: Some((0.0677, 0.0987)),
                bit_errors: 5000,
                bits: 1234 * 768,
                ber: 5000.0 / (1234.0 * 768.0),
                avg_iters: Some(7.25),
                metric_evals: 999_999_999_999,
                seconds: Some(1.0e-3),
                seed: 7,
            },
            SimResult {
                ebn0_db: 7.5,
                layer: "overall".into(),
                frames: 1234,
                frame_errors: 0,
                fer: 3.3e-18,
                fer_ci: None,
                bit_errors: 0,
                bits: 0,
                ber: 0.0,
                avg_iters: None,
                metric_evals: 0,
                seconds: None,
                seed: 7,
            },
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = sample();
        let text = to_csv_string(&rows);
        assert!(text.starts_with(HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(to_csv_string(&[]), format!("{HEADER}\n"));
        assert!(parse_csv(&to_csv_string(&[])).unwrap().is_empty());
    }

    #[test]
    fn file_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&sample(), &path).unwrap();
        let back = parse_csv(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, sample());
        let missing = dir.path().join("no/such/dir/out.csv");
        let err = emit_csv(&sample(), &missing).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
        assert!(err.to_string().contains("out.csv"));
    }

    #[test]
    fn rejects_bad_csv() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{HEADER}\n1,base\n")).is_err());
        let bad = format!("{HEADER}\nx,base,1,0,0,,,0,0,0,,0,,1\n");
        assert!(parse_csv(&bad).unwrap_err().to_string().contains("ebn0_db"));
    }

    #[test]
    fn reference_rows() {
        let text = format!(
            "{}\nfig4/ml,3.0,single,,,0.5,,,,,,,,,\nfig2/d4,35.0,base,,,,,,,,0.007,,,,\n",
            reference_header()
        );
        let pts = parse_reference_csv(&text).unwrap();
        assert_eq!(pts[0].fer, Some(0.5));
        assert_eq!(pts[0].ber, None);
        assert_eq!(pts[1].ber, Some(0.007));
        assert_eq!(pts[1].layer, "base");
    }
}
