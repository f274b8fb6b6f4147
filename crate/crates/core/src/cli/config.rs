//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment, lists are comma separated and an
//! Eb/N0 list may also be written as a `start:step:stop` range. A `preset`
//! (and optional `series`) key seeds the configuration before the remaining
//! keys are applied, regardless of line order.

use std::fmt::Write as _;

use crate::channel::EbN0Convention;
use crate::detect::LlrMode;
use crate::sim::SimConfig;
use crate::wimax_ldpc::{DecoderKind, RateId};

use super::presets;
use super::CliError;

/// Every key accepted by [`parse_config`].
pub const KEYS: &[&str] = &[
    "preset",
    "series",
    "nt",
    "nr",
    "f_blocks",
    "fading",
    "modulation",
    "d",
    "ratios",
    "detector",
    "coding",
    "rates",
    "n",
    "ebn0_db",
    "ebn0_convention",
    "min_frame_errors",
    "stop_rule",
    "min_frames",
    "max_frames",
    "master_seed",
    "llr_mode",
    "max_decoder_iterations",
    "decoder",
    "min_sum_scale",
    "workers",
    "timing",
];

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| bad(key, format!("{value:?}: {e}")))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got {value:?}"))),
    }
}

/// Parses `a,b,c` or `start:step:stop` (inclusive of `stop`).
pub fn parse_ebn0_list(value: &str) -> Result<Vec<f64>, CliError> {
    const KEY: &str = "ebn0_db";
    if value.contains(':') {
        let parts: Vec<f64> = value
            .split(':')
            .map(|s| scalar::<f64>(KEY, s.trim()))
            .collect::<Result<_, _>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad(KEY, "a range is written start:step:stop"));
        };
        if !(step > 0.0) || stop < start {
            return Err(bad(KEY, "a range needs step > 0 and stop ≥ start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    list(KEY, value)
}

/// Parses a configuration file. Unknown keys, duplicate keys and invalid
/// values are rejected with a message naming the key.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected key = value, got {line:?}",
                lineno + 1
            )));
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "line {}: unknown key {key:?}",
                lineno + 1
            )));
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config(format!(
                "line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
        entries.push((key, value));
    }

    let get = |k: &str| {
        entries
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
    };
    let mut cfg = match get("preset") {
        Some(name) => presets::preset(name, get("series"))?,
        None => {
            if get("series").is_some() {
                return Err(bad("series", "only valid together with preset"));
            }
            SimConfig::default()
        }
    };
    let mut min_sum_scale = None;
    for (key, value) in &entries {
        apply(&mut cfg, key, value, &mut min_sum_scale)?;
    }
    if let Some(scale) = min_sum_scale {
        match cfg.decoder {
            DecoderKind::MinSum(_) => cfg.decoder = DecoderKind::MinSum(scale),
            DecoderKind::SumProduct => {
                return Err(bad("min_sum_scale", "requires decoder = minsum"));
            }
        }
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn apply(
    cfg: &mut SimConfig,
    key: &str,
    value: &str,
    min_sum_scale: &mut Option<f64>,
) -> Result<(), CliError> {
    match key {
        "preset" | "series" => {}
        "nt" => cfg.nt = scalar(key, value)?,
        "nr" => cfg.nr = scalar(key, value)?,
        "f_blocks" => cfg.f_blocks = scalar(key, value)?,
        "fading" => cfg.fading = scalar(key, value)?,
        "modulation" => cfg.modulation = scalar(key, value)?,
        "d" => cfg.ratios = vec![scalar(key, value)?],
        "ratios" => cfg.ratios = list(key, value)?,
        "detector" => cfg.detector = scalar(key, value)?,
        "coding" => {
            cfg.coding = scalar(key, value)?;
            if cfg.coding == crate::sim::Coding::None {
                cfg.rates.clear();
            }
        }
        "rates" => cfg.rates = list::<RateId>(key, value)?,
        "n" => cfg.n = Some(scalar(key, value)?),
        "ebn0_db" => cfg.ebn0_db = parse_ebn0_list(value)?,
        "ebn0_convention" => cfg.ebn0_convention = scalar::<EbN0Convention>(key, value)?,
        "min_frame_errors" => cfg.min_frame_errors = scalar(key, value)?,
        "stop_rule" => cfg.stop_rule = scalar(key, value)?,
        "min_frames" => cfg.min_frames = scalar(key, value)?,
        "max_frames" => cfg.max_frames = Some(scalar(key, value)?),
        "master_seed" => cfg.master_seed = scalar(key, value)?,
        "llr_mode" => cfg.llr_mode = scalar::<LlrMode>(key, value)?,
        "max_decoder_iterations" => cfg.max_decoder_iterations = scalar(key, value)?,
        "decoder" => {
            cfg.decoder = match value {
                "spa" => DecoderKind::SumProduct,
                "minsum" => DecoderKind::MinSum(0.75),
                _ => return Err(bad(key, format!("expected spa or minsum, got {value:?}"))),
            }
        }
        "min_sum_scale" => *min_sum_scale = Some(scalar(key, value)?),
        "workers" => cfg.workers = scalar(key, value)?,
        "timing" => cfg.timing = boolean(key, value)?,
        _ => unreachable!("key list and match arms disagree on {key}"),
    }
    Ok(())
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a configuration in the format read by [`parse_config`].
pub fn config_to_text(cfg: &SimConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("nt", cfg.nt.to_string());
    kv("nr", cfg.nr.to_string());
    kv("f_blocks", cfg.f_blocks.to_string());
    kv("fading", cfg.fading.to_string());
    kv("modulation", cfg.modulation.to_string());
    kv("ratios", join(&cfg.ratios));
    kv("detector", cfg.detector.to_string());
    kv("coding", cfg.coding.to_string());
    if !cfg.rates.is_empty() {
        kv("rates", join(&cfg.rates));
    }
    if let Some(n) = cfg.n {
        kv("n", n.to_string());
    }
    if !cfg.ebn0_db.is_empty() {
        kv("ebn0_db", join(&cfg.ebn0_db));
    }
    kv("ebn0_convention", cfg.ebn0_convention.to_string());
    kv("min_frame_errors", cfg.min_frame_errors.to_string());
    kv("stop_rule", cfg.stop_rule.to_string());
    kv("min_frames", cfg.min_frames.to_string());
    if let Some(m) = cfg.max_frames {
        kv("max_frames", m.to_string());
    }
    kv("master_seed", cfg.master_seed.to_string());
    kv("llr_mode", cfg.llr_mode.to_string());
    kv(
        "max_decoder_iterations",
        cfg.max_decoder_iterations.to_string(),
    );
    match cfg.decoder {
        DecoderKind::SumProduct => kv("decoder", "spa".into()),
        DecoderKind::MinSum(a) => {
            kv("decoder", "minsum".into());
            kv("min_sum_scale", a.to_string());
        }
    }
    kv("workers", cfg.workers.to_string());
    kv("timing", cfg.timing.to_string());
    out
}
