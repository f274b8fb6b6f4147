//! Monte Carlo engine: frame assembly, the receiver chain, stopping rules and
//! per-layer statistics.
//!
//! Frame `i` of a point draws all of its randomness from a ChaCha8 stream
//! keyed by `(master_seed, i)`. Frames are simulated in parallel batches but
//! folded into the counters strictly in index order, and the stopping rule
//! is evaluated after every frame, so the reported numbers do not depend on
//! the number of workers or on the batch size.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{draw_channel, transmit, ChannelError, EbN0Convention, EbN0Point, FadingMode};
use crate::detect::{self, DetectError, DetectionOutput, DetectorSettings, FrameView, LlrMode};
use crate::hqam::{build_hqam, HqamError, HqamParams, LayeredConstellation};
use crate::layout::SymbolLayout;
use crate::wimax_ldpc::{load_code, DecoderKind, LdpcError, QcLdpcCode, RateId};

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Total coded bits carried by one frame.
pub const FRAME_BITS: usize = 2304;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Hqam(#[from] HqamError),
    #[error(transparent)]
    Ldpc(#[from] LdpcError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn config_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    /// Uniform Gray 16-QAM carrying a single codeword.
    Qam16,
    /// Two-layer hierarchical 16-QAM.
    Hqam16,
    /// Three-layer hierarchical 64-QAM.
    Hqam64,
}

impl Modulation {
    pub fn layers(self) -> usize {
        match self {
            Modulation::Qam16 | Modulation::Hqam16 => 2,
            Modulation::Hqam64 => 3,
        }
    }

    pub fn layout(self) -> SymbolLayout {
        match self {
            Modulation::Qam16 => SymbolLayout::Single { bits_per_symbol: 4 },
            _ => SymbolLayout::Layered {
                layers: self.layers(),
            },
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Qam16 => "qam16",
            Modulation::Hqam16 => "hqam16",
            Modulation::Hqam64 => "hqam64",
        })
    }
}

impl FromStr for Modulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qam16" => Ok(Modulation::Qam16),
            "hqam16" => Ok(Modulation::Hqam16),
            "hqam64" => Ok(Modulation::Hqam64),
            _ => Err(format!("expected qam16, hqam16 or hqam64, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// Exhaustive joint ML over the full constellation.
    Ml,
    /// Linear MMSE over the full constellation.
    Mmse,
    /// MMSE on the base layer, cancellation, ML on the enhancement layer.
    MmseMl,
    /// Uncoded hard ML on the base layer, cancellation, hard ML on the
    /// enhancement layer.
    MlMlUncoded,
    /// Successive MMSE stages followed by ML on the last layer.
    MultiStage,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Ml => "ml",
            Detector::Mmse => "mmse",
            Detector::MmseMl => "mmse_ml",
            Detector::MlMlUncoded => "ml_ml_uncoded",
            Detector::MultiStage => "multi_stage",
        })
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ml" => Ok(Detector::Ml),
            "mmse" => Ok(Detector::Mmse),
            "mmse_ml" => Ok(Detector::MmseMl),
            "ml_ml_uncoded" => Ok(Detector::MlMlUncoded),
            "multi_stage" => Ok(Detector::MultiStage),
            _ => Err(format!(
                "expected ml, mmse, mmse_ml, ml_ml_uncoded or multi_stage, got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coding {
    None,
    Ldpc,
}

impl fmt::Display for Coding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coding::None => "none",
            Coding::Ldpc => "ldpc",
        })
    }
}

impl FromStr for Coding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Coding::None),
            "ldpc" => Ok(Coding::Ldpc),
            _ => Err(format!("expected none or ldpc, got {s:?}")),
        }
    }
}

/// When a point has seen enough frame errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Every codeword has reached `min_frame_errors`.
    #[default]
    AllLayers,
    /// The worst codeword has reached `min_frame_errors`.
    AnyLayer,
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopRule::AllLayers => "all_layers",
            StopRule::AnyLayer => "any_layer",
        })
    }
}

impl FromStr for StopRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all_layers" => Ok(StopRule::AllLayers),
            "any_layer" => Ok(StopRule::AnyLayer),
            _ => Err(format!("expected all_layers or any_layer, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nt: usize,
    pub nr: usize,
    pub f_blocks: usize,
    pub fading: FadingMode,
    pub modulation: Modulation,
    /// Consecutive-layer distance ratios (`d` for two layers).
    pub ratios: Vec<f64>,
    pub detector: Detector,
    pub coding: Coding,
    /// One rate per codeword (per layer, or a single one for `qam16`).
    pub rates: Vec<RateId>,
    /// Bits per codeword; `None` splits [`FRAME_BITS`] evenly.
    pub n: Option<usize>,
    pub ebn0_db: Vec<f64>,
    pub ebn0_convention: EbN0Convention,
    pub min_frame_errors: u64,
    pub stop_rule: StopRule,
    pub min_frames: u64,
    /// `None` selects 10^5 for coded and 2·10^6 for uncoded runs.
    pub max_frames: Option<u64>,
    pub master_seed: u64,
    pub llr_mode: LlrMode,
    pub max_decoder_iterations: usize,
    pub decoder: DecoderKind,
    pub workers: usize,
    /// Report wall-clock seconds per point.
    pub timing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            nt: 2,
            nr: 2,
            f_blocks: 8,
            fading: FadingMode::BlockFading,
            modulation: Modulation::Hqam16,
            ratios: vec![2.0],
            detector: Detector::MmseMl,
            coding: Coding::Ldpc,
            rates: vec![RateId::R2_3A, RateId::R5_6],
            n: None,
            ebn0_db: Vec::new(),
            ebn0_convention: EbN0Convention::PerStream,
            min_frame_errors: 100,
            stop_rule: StopRule::AllLayers,
            min_frames: 1,
            max_frames: None,
            master_seed: 1,
            llr_mode: LlrMode::Exact,
            max_decoder_iterations: 50,
            decoder: DecoderKind::SumProduct,
            workers: 1,
            timing: true,
        }
    }
}

impl SimConfig {
    pub fn codewords(&self) -> usize {
        self.modulation.layout().codewords()
    }

    /// Bits per codeword.
    pub fn codeword_len(&self) -> usize {
        self.n.unwrap_or(FRAME_BITS / self.codewords())
    }

    pub fn symbols_per_frame(&self) -> usize {
        let layout = self.modulation.layout();
        self.codeword_len() * layout.codewords() / layout.bits_per_symbol()
    }

    pub fn vectors_per_frame(&self) -> usize {
        self.symbols_per_frame() / self.nt
    }

    pub fn effective_max_frames(&self) -> u64 {
        self.max_frames.unwrap_or(match self.coding {
            Coding::Ldpc => 100_000,
            Coding::None => 2_000_000,
        })
    }

    /// Overall code rate: the mean of the codeword rates (1 when uncoded).
    pub fn overall_rate(&self) -> f64 {
        match self.coding {
            Coding::None => 1.0,
            Coding::Ldpc => {
                self.rates.iter().map(|r| r.value()).sum::<f64>() / self.rates.len() as f64
            }
        }
    }

    pub fn layer_names(&self) -> Vec<&'static str> {
        match self.modulation.layout() {
            SymbolLayout::Single { .. } => vec!["single"],
            SymbolLayout::Layered { layers } => ["base", "enh1", "enh2"][..layers].to_vec(),
        }
    }

    pub fn hqam_params(&self) -> Result<HqamParams, SimError> {
        match self.modulation {
            Modulation::Qam16 => Ok(HqamParams::uniform(2)?),
            m => Ok(HqamParams::new(m.layers(), self.ratios.clone())?),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.nt == 0 || self.nr == 0 {
            return Err(config_err("nt and nr must be at least 1"));
        }
        if self.nt > self.nr {
            return Err(config_err(format!(
                "nt/nr: N_t ≤ N_r required (nt = {}, nr = {})",
                self.nt, self.nr
            )));
        }
        let expected_ratios = match self.modulation {
            Modulation::Qam16 => 0,
            m => m.layers() - 1,
        };
        if self.modulation != Modulation::Qam16 && self.ratios.len() != expected_ratios {
            return Err(config_err(format!(
                "ratios: {} needs {expected_ratios} value(s), got {}",
                self.modulation,
                self.ratios.len()
            )));
        }
        if self.modulation != Modulation::Qam16
            && self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(config_err(
                "ratios: every ratio must be finite and positive",
            ));
        }
        if let Some(x) = self.ebn0_db.iter().find(|x| !x.is_finite()) {
            return Err(config_err(format!("ebn0_db: {x} is not a finite value")));
        }
        match (self.detector, self.modulation) {
            (Detector::MmseMl | Detector::MlMlUncoded, m) if m != Modulation::Hqam16 => {
                return Err(config_err(format!(
                    "detector: {} requires modulation hqam16",
                    self.detector
                )))
            }
            (Detector::MultiStage, Modulation::Qam16) => {
                return Err(config_err(
                    "detector: multi_stage requires a hierarchical modulation",
                ))
            }
            _ => {}
        }
        if self.detector == Detector::MlMlUncoded && self.coding != Coding::None {
            return Err(config_err("detector: ml_ml_uncoded requires coding = none"));
        }
        if self.coding == Coding::Ldpc && self.rates.len() != self.codewords() {
            return Err(config_err(format!(
                "rates: {} codeword(s) need {} rate(s), got {}",
                self.codewords(),
                self.codewords(),
                self.rates.len()
            )));
        }
        let layout = self.modulation.layout();
        let n = self.codeword_len();
        let per_symbol = match layout {
            SymbolLayout::Layered { .. } => 2,
            SymbolLayout::Single { bits_per_symbol } => bits_per_symbol,
        };
        if n == 0 || !n.is_multiple_of(per_symbol) {
            return Err(config_err(format!(
                "n: {n} bits is not a whole number of symbols"
            )));
        }
        let symbols = self.symbols_per_frame();
        if !symbols.is_multiple_of(self.nt) {
            return Err(config_err(format!(
                "n: {symbols} symbols per frame are not divisible by nt = {}",
                self.nt
            )));
        }
        if self.fading == FadingMode::BlockFading {
            let v = self.vectors_per_frame();
            if self.f_blocks == 0 || !v.is_multiple_of(self.f_blocks) {
                return Err(config_err(format!(
                    "f_blocks: {v} vectors per frame are not divisible by f_blocks = {}",
                    self.f_blocks
                )));
            }
        }
        if self.coding == Coding::Ldpc {
            for &r in &self.rates {
                load_code(r, n).map_err(|e| config_err(format!("n: {e}")))?;
            }
        }
        if let Some(bad) = self.ebn0_db.iter().find(|v| !v.is_finite()) {
            return Err(config_err(format!("ebn0_db: {bad} is not finite")));
        }
        if self.min_frame_errors == 0 {
            return Err(config_err("min_frame_errors must be at least 1"));
        }
        if self.effective_max_frames() == 0 {
            return Err(config_err("max_frames must be at least 1"));
        }
        if self.min_frames > self.effective_max_frames() {
            return Err(config_err("min_frames must not exceed max_frames"));
        }
        if self.max_decoder_iterations == 0 {
            return Err(config_err("max_decoder_iterations must be at least 1"));
        }
        if let DecoderKind::MinSum(a) = self.decoder {
            if !(a > 0.0 && a <= 1.0) {
                return Err(config_err("min_sum_scale must lie in (0, 1]"));
            }
        }
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        Ok(())
    }
}

/// Everything a frame needs that does not change between frames.
pub struct SimContext {
    config: SimConfig,
    constellation: LayeredConstellation,
    layout: SymbolLayout,
    codes: Vec<Option<QcLdpcCode>>,
}

impl SimContext {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let constellation = build_hqam(&config.hqam_params()?);
        let layout = config.modulation.layout();
        let n = config.codeword_len();
        let codes = match config.coding {
            Coding::None => vec![None; layout.codewords()],
            Coding::Ldpc => config
                .rates
                .iter()
                .map(|&r| load_code(r, n).map(Some))
                .collect::<Result<_, _>>()?,
        };
        Ok(Self {
            config: config.clone(),
            constellation,
            layout,
            codes,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn constellation(&self) -> &LayeredConstellation {
        &self.constellation
    }

    /// Information bits per codeword.
    pub fn info_len(&self, codeword: usize) -> usize {
        self.codes[codeword]
            .as_ref()
            .map_or(self.config.codeword_len(), |c| c.k())
    }

    /// Noise variance at `ebn0_db` under the configured convention.
    pub fn n0(&self, ebn0_db: f64) -> f64 {
        EbN0Point::new(
            ebn0_db,
            self.config.overall_rate(),
            self.constellation.bits_per_symbol(),
        )
        .n0_with(self.config.ebn0_convention, self.config.nt)
    }
}

/// One transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub info_bits: Vec<Vec<u8>>,
    pub codewords: Vec<Vec<u8>>,
    /// Label of symbol `t`; symbol `t` is sent on antenna `t mod N_t` of
    /// vector `t / N_t`.
    pub labels: Vec<usize>,
    pub symbols: Vec<Complex64>,
}

/// Draws uniform information bits for every codeword, encodes them and maps
/// the codewords onto symbols.
pub fn build_frame<R: Rng + ?Sized>(ctx: &SimContext, rng: &mut R) -> Result<Frame, SimError> {
    let mut info_bits = Vec::with_capacity(ctx.codes.len());
    let mut codewords = Vec::with_capacity(ctx.codes.len());
    for (i, code) in ctx.codes.iter().enumerate() {
        let info: Vec<u8> = (0..ctx.info_len(i))
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        let cw = match code {
            Some(code) => code.encode(&info)?,
            None => info.clone(),
        };
        info_bits.push(info);
        codewords.push(cw);
    }
    let s = ctx.config.symbols_per_frame();
    let labels: Vec<usize> = (0..s).map(|t| ctx.layout.label(&codewords, t)).collect();
    let symbols = labels.iter().map(|&l| ctx.constellation.point(l)).collect();
    Ok(Frame {
        info_bits,
        codewords,
        labels,
        symbols,
    })
}

/// Per-codeword result of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerOutcome {
    pub bit_errors: u64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameOutcome {
    pub layers: Vec<LayerOutcome>,
    pub metric_evaluations: u64,
}

fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

fn detect_frame(ctx: &SimContext, view: &FrameView<'_>) -> Result<DetectionOutput, DetectError> {
    let cfg = &ctx.config;
    let settings = DetectorSettings {
        llr_mode: cfg.llr_mode,
        max_iterations: cfg.max_decoder_iterations,
        decoder: cfg.decoder,
    };
    let codes: Vec<Option<&QcLdpcCode>> = ctx.codes.iter().map(|c| c.as_ref()).collect();
    let cst = &ctx.constellation;
    match cfg.detector {
        Detector::MmseMl => detect::two_stage_mmse_ml(view, cst, &codes, &settings),
        Detector::MultiStage => detect::multi_stage(view, cst, &codes, &settings),
        Detector::Mmse => detect::linear_mmse(view, cst, &ctx.layout, &codes, &settings),
        Detector::Ml => detect::full_ml(view, cst, &ctx.layout, &codes, &settings),
        Detector::MlMlUncoded => detect::two_stage_ml_ml_uncoded(view, cst),
    }
}

/// Simulates frame `frame_index` at noise variance `n0`.
pub fn simulate_frame(
    ctx: &SimContext,
    n0: f64,
    frame_index: u64,
) -> Result<FrameOutcome, SimError> {
    let cfg = &ctx.config;
    let mut rng = frame_rng(cfg.master_seed, frame_index);
    let frame = build_frame(ctx, &mut rng)?;
    let channel = draw_channel(
        cfg.nt,
        cfg.nr,
        cfg.f_blocks,
        cfg.fading,
        cfg.vectors_per_frame(),
        n0,
        &mut rng,
    )?;
    let y = transmit(&frame.symbols, &channel, &mut rng)?;
    let view = FrameView::new(&y, &channel)?;
    let out = detect_frame(ctx, &view)?;
    let layers = out
        .layers
        .iter()
        .zip(&frame.info_bits)
        .map(|(dec, info)| LayerOutcome {
            bit_errors: dec
                .info_bits
                .iter()
                .zip(info)
                .filter(|(a, b)| a != b)
                .count() as u64,
            iterations: dec.iterations as u64,
        })
        .collect();
    Ok(FrameOutcome {
        layers,
        metric_evaluations: out.counter.metric_evaluations,
    })
}

/// Integer counters for one codeword over many frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCounts {
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub bits: u64,
    pub iterations: u64,
}

impl LayerCounts {
    fn add(&mut self, o: &LayerOutcome, bits: u64) {
        self.frames += 1;
        self.frame_errors += (o.bit_errors > 0) as u64;
        self.bit_errors += o.bit_errors;
        self.bits += bits;
        self.iterations += o.iterations;
    }
}

/// Counters accumulated while running one Eb/N0 point.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PointCounts {
    pub frames: u64,
    pub layers: Vec<LayerCounts>,
    pub metric_evaluations: u64,
}

/// Wilson score interval for `errors` successes out of `trials` at 95%.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = p + z2 / (2.0 * n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 {
        0.0
    } else {
        (centre - half) / denom
    };
    let hi = if errors == trials {
        1.0
    } else {
        (centre + half) / denom
    };
    (lo.max(0.0), hi.min(1.0))
}

/// `⌊f(1 − r)⌋ + 1`, the diversity order reachable by a rate-`r` code over
/// `f` independent blocks.
pub fn singleton_diversity_bound(f: usize, r: f64) -> usize {
    // The small slack keeps exact fractions such as 8·(1 − 3/4) = 2 from
    // rounding down.
    ((f as f64) * (1.0 - r) + 1e-9).floor() as usize + 1
}

/// One output row: a layer (or the layer average) at one Eb/N0.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub ebn0_db: f64,
    pub layer: String,
    pub frames: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub fer_ci: Option<(f64, f64)>,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub avg_iters: Option<f64>,
    pub metric_evals: u64,
    pub seconds: Option<f64>,
    pub seed: u64,
}

fn stop_reached(cfg: &SimConfig, counts: &PointCounts, max_frames: u64) -> bool {
    if counts.frames >= max_frames {
        return true;
    }
    let enough = |l: &LayerCounts| l.frame_errors >= cfg.min_frame_errors;
    counts.frames >= cfg.min_frames
        && match cfg.stop_rule {
            StopRule::AllLayers => counts.layers.iter().all(enough),
            StopRule::AnyLayer => counts.layers.iter().any(enough),
        }
}

/// Runs frames in index order until the stopping rule fires and returns the
/// raw counters.
pub fn run_point_counts(
    ctx: &SimContext,
    ebn0_db: f64,
    pool: &rayon::ThreadPool,
) -> Result<PointCounts, SimError> {
    let cfg = &ctx.config;
    let n0 = ctx.n0(ebn0_db);
    let max_frames = cfg.effective_max_frames();
    let bits: Vec<u64> = (0..ctx.codes.len())
        .map(|i| ctx.info_len(i) as u64)
        .collect();
    let mut counts = PointCounts {
        layers: vec![LayerCounts::default(); ctx.codes.len()],
        ..Default::default()
    };
    let batch = (4 * cfg.workers as u64).max(8);
    let mut next = 0u64;
    while !stop_reached(cfg, &counts, max_frames) {
        let end = (next + batch).min(max_frames);
        let outcomes: Vec<Result<FrameOutcome, SimError>> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|i| simulate_frame(ctx, n0, i))
                .collect()
        });
        for outcome in outcomes {
            let outcome = outcome?;
            counts.frames += 1;
            counts.metric_evaluations += outcome.metric_evaluations;
            for (l, (o, &b)) in counts
                .layers
                .iter_mut()
                .zip(outcome.layers.iter().zip(&bits))
            {
                l.add(o, b);
            }
            if stop_reached(cfg, &counts, max_frames) {
                break;
            }
        }
        next = end;
    }
    Ok(counts)
}

/// Turns the counters of one point into output rows.
pub fn rows_for_point(
    ctx: &SimContext,
    ebn0_db: f64,
    counts: &PointCounts,
    seconds: Option<f64>,
) -> Vec<SimResult> {
    let cfg = &ctx.config;
    let coded = cfg.coding == Coding::Ldpc;
    let mut rows: Vec<SimResult> = cfg
        .layer_names()
        .into_iter()
        .zip(&counts.layers)
        .map(|(name, l)| {
            let frames = l.frames.max(1) as f64;
            SimResult {
                ebn0_db,
                layer: name.to_string(),
                frames: l.frames,
                frame_errors: l.frame_errors,
                fer: l.frame_errors as f64 / frames,
                fer_ci: Some(wilson_interval(l.frame_errors, l.frames)),
                bit_errors: l.bit_errors,
                bits: l.bits,
                ber: l.bit_errors as f64 / l.bits.max(1) as f64,
                avg_iters: coded.then(|| l.iterations as f64 / frames),
                metric_evals: counts.metric_evaluations,
                seconds,
                seed: cfg.master_seed,
            }
        })
        .collect();
    if coded && rows.len() > 1 {
        let k = rows.len() as f64;
        let overall = SimResult {
            ebn0_db,
            layer: "overall".to_string(),
            frames: counts.frames,
            frame_errors: rows.iter().map(|r| r.frame_errors).sum(),
            fer: rows.iter().map(|r| r.fer).sum::<f64>() / k,
            fer_ci: None,
            bit_errors: rows.iter().map(|r| r.bit_errors).sum(),
            bits: rows.iter().map(|r| r.bits).sum(),
            ber: rows.iter().map(|r| r.ber).sum::<f64>() / k,
            avg_iters: Some(rows.iter().filter_map(|r| r.avg_iters).sum::<f64>() / k),
            metric_evals: counts.metric_evaluations,
            seconds,
            seed: cfg.master_seed,
        };
        rows.push(overall);
    }
    rows
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))
}

/// Rows for one Eb/N0 point.
pub fn run_point(config: &SimConfig, ebn0_db: f64) -> Result<Vec<SimResult>, SimError> {
    let ctx = SimContext::new(config)?;
    let pool = build_pool(config.workers)?;
    point_rows(&ctx, ebn0_db, &pool)
}

fn point_rows(
    ctx: &SimContext,
    ebn0_db: f64,
    pool: &rayon::ThreadPool,
) -> Result<Vec<SimResult>, SimError> {
    let start = Instant::now();
    let counts = run_point_counts(ctx, ebn0_db, pool)?;
    let seconds = ctx.config.timing.then(|| start.elapsed().as_secs_f64());
    Ok(rows_for_point(ctx, ebn0_db, &counts, seconds))
}

/// Rows for every configured Eb/N0 point, in order.
pub fn run_sweep(config: &SimConfig) -> Result<Vec<SimResult>, SimError> {
    let ctx = SimContext::new(config)?;
    let pool = build_pool(config.workers)?;
    let mut rows = Vec::new();
    for &ebn0 in &config.ebn0_db {
        rows.extend(point_rows(&ctx, ebn0, &pool)?);
    }
    Ok(rows)
}
