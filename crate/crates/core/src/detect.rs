//! Receiver-side processing: MMSE filtering, LLR demapping, exhaustive ML,
//! base-layer cancellation and the composed receivers.
//!
//! All LLRs use `ln P(bit = 0) / P(bit = 1)`, so a positive value favours 0.
//! Values handed to the decoder are clamped to `±LLR_CLAMP`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{CMatrix, ChannelRealization};
use crate::hqam::LayeredConstellation;
use crate::layout::SymbolLayout;
use crate::wimax_ldpc::{DecoderKind, LdpcError, QcLdpcCode};

pub const LLR_CLAMP: f64 = 50.0;

/// Largest `N_t·log2|C|` the exhaustive search accepts.
pub const MAX_CANDIDATE_BITS: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("layer energy must lie in (0, {remaining}], got {energy}")]
    Energy { energy: f64, remaining: f64 },
    #[error("MMSE system matrix is not positive definite")]
    Singular,
    #[error("exhaustive search over {0} candidate bits exceeds the limit of {MAX_CANDIDATE_BITS}")]
    CandidateOverflow(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("receiver needs {needed}, got {got}")]
    Unsupported { needed: String, got: String },
    #[error(transparent)]
    Ldpc(#[from] LdpcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LlrMode {
    /// Exact log-sum-exp.
    #[default]
    Exact,
    /// Max-log approximation.
    MaxLog,
}

impl fmt::Display for LlrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlrMode::Exact => "exact",
            LlrMode::MaxLog => "maxlog",
        })
    }
}

impl FromStr for LlrMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(LlrMode::Exact),
            "maxlog" => Ok(LlrMode::MaxLog),
            _ => Err(format!("expected exact or maxlog, got {s:?}")),
        }
    }
}

/// Work counters accumulated over a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComplexityCounter {
    /// Euclidean metric evaluations (one per candidate symbol or vector).
    pub metric_evaluations: u64,
    pub matrix_inversions: u64,
}

impl ComplexityCounter {
    pub fn merge(&mut self, other: &ComplexityCounter) {
        self.metric_evaluations += other.metric_evaluations;
        self.matrix_inversions += other.matrix_inversions;
    }
}

/// Per-stream MMSE filter output statistics for one channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseStageStats {
    /// Filter vectors `g_i` as columns (`N_r × N_t`).
    pub filters: CMatrix,
    /// Effective gains `β_i = g_i^H h_i / sqrt(N_t)`.
    pub beta: Vec<Complex64>,
    /// Interference-plus-noise variances.
    pub sigma2: Vec<f64>,
}

impl MmseStageStats {
    /// `z_i = g_i^H y` for every stream.
    pub fn equalize_into(&self, y: &[Complex64], z: &mut [Complex64]) {
        let (nr, nt) = self.filters.shape();
        debug_assert_eq!(y.len(), nr);
        for (i, zi) in z.iter_mut().enumerate().take(nt) {
            let g = self.filters.column(i);
            *zi = g.iter().zip(y).map(|(gr, yr)| gr.conj() * yr).sum();
        }
    }

    pub fn equalize(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut z = vec![Complex64::new(0.0, 0.0); self.filters.ncols()];
        self.equalize_into(y, &mut z);
        z
    }
}

/// MMSE filter for the base layer of the full received signal.
pub fn mmse_filter(h: &CMatrix, n0: f64, e_xb: f64) -> Result<MmseStageStats, DetectError> {
    mmse_filter_stage(h, n0, e_xb, 1.0)
}

/// MMSE filter targeting a layer of energy `e_x` when layers carrying
/// `e_remaining` in total (the target included) are still present in the
/// signal:
///
/// `g_i = (e_x / sqrt(N_t)) · (e_remaining·H H^H / N_t + n0·I)^{-1} h_i`
///
/// and `σ_i^2 = ((e_remaining - e_x)/N_t)|g_i^H h_i|^2
/// + (e_remaining/N_t) Σ_{k≠i} |g_i^H h_k|^2 + n0 ||g_i||^2`.
/// With `e_remaining = 1` this is the first stage of the two-layer receiver,
/// and `e_x = e_remaining = 1` gives the plain full-symbol MMSE receiver.
pub fn mmse_filter_stage(
    h: &CMatrix,
    n0: f64,
    e_x: f64,
    e_remaining: f64,
) -> Result<MmseStageStats, DetectError> {
    if !(n0 > 0.0) {
        return Err(DetectError::NonPositiveNoise(n0));
    }
    if !(e_x > 0.0 && e_x <= e_remaining + 1e-12) {
        return Err(DetectError::Energy {
            energy: e_x,
            remaining: e_remaining,
        });
    }
    let (nr, nt) = h.shape();
    let ntf = nt as f64;
    let scale = 1.0 / ntf.sqrt();

    let mut a = h * h.adjoint() * Complex64::new(e_remaining / ntf, 0.0);
    for r in 0..nr {
        a[(r, r)] += Complex64::new(n0, 0.0);
    }
    let chol = a.cholesky().ok_or(DetectError::Singular)?;
    let filters = chol.solve(h) * Complex64::new(e_x * scale, 0.0);

    let cross = filters.adjoint() * h; // cross[(i, k)] = g_i^H h_k
    let mut beta = Vec::with_capacity(nt);
    let mut sigma2 = Vec::with_capacity(nt);
    for i in 0..nt {
        let own = cross[(i, i)];
        let others: f64 = (0..nt)
            .filter(|&k| k != i)
            .map(|k| cross[(i, k)].norm_sqr())
            .sum();
        let gnorm: f64 = filters.column(i).iter().map(|c| c.norm_sqr()).sum();
        beta.push(own * scale);
        sigma2.push(
            (e_remaining - e_x).max(0.0) / ntf * own.norm_sqr()
                + e_remaining / ntf * others
                + n0 * gnorm,
        );
    }
    Ok(MmseStageStats {
        filters,
        beta,
        sigma2,
    })
}

#[inline]
fn bit_of(label: usize, bits: usize, j: usize) -> usize {
    (label >> (bits - 1 - j)) & 1
}

/// Combines the two per-bit hypotheses `ln Σ exp(-d)` over bit 0 and bit 1
/// given as `(min, Σ exp(-(d - min)))` pairs.
#[inline]
fn lse_difference(min0: f64, sum0: f64, min1: f64, sum1: f64) -> f64 {
    (min1 - min0) + sum0.ln() - sum1.ln()
}

/// Gaussian-approximation LLRs of one equalized symbol
/// `z = β·x + η`, `η ~ CN(0, σ^2)`, over the candidate `points` (indexed by
/// their `bits`-bit label). Writes `bits` values into `out`.
pub fn symbol_llrs(
    z: Complex64,
    beta: Complex64,
    sigma2: f64,
    points: &[Complex64],
    bits: usize,
    mode: LlrMode,
    out: &mut [f64],
) {
    debug_assert_eq!(points.len(), 1 << bits);
    let mut metrics = [0.0f64; 64];
    let metrics = &mut metrics[..points.len()];
    for (m, &c) in metrics.iter_mut().zip(points) {
        *m = (z - beta * c).norm_sqr() / sigma2;
    }
    for (j, o) in out.iter_mut().enumerate().take(bits) {
        let mut min = [f64::INFINITY; 2];
        for (label, &m) in metrics.iter().enumerate() {
            let b = bit_of(label, bits, j);
            if m < min[b] {
                min[b] = m;
            }
        }
        *o = match mode {
            LlrMode::MaxLog => min[1] - min[0],
            LlrMode::Exact => {
                let mut sum = [0.0f64; 2];
                for (label, &m) in metrics.iter().enumerate() {
                    let b = bit_of(label, bits, j);
                    sum[b] += (-(m - min[b])).exp();
                }
                lse_difference(min[0], sum[0], min[1], sum[1])
            }
        };
    }
}

/// LLR of base-layer bit `bit_index` at one MMSE output.
pub fn base_llr(
    z: Complex64,
    beta: Complex64,
    sigma2: f64,
    base_points: &[Complex64; 4],
    bit_index: usize,
    mode: LlrMode,
) -> f64 {
    let mut out = [0.0; 2];
    symbol_llrs(z, beta, sigma2, base_points, 2, mode, &mut out);
    out[bit_index]
}

/// Visits every candidate vector `x̃` (stream `i` drawn from
/// `candidates[i]`) with its metric `||y - H x̃ / sqrt(N_t)||^2`. The
/// candidate index is mixed radix with stream 0 most significant.
fn for_each_candidate<F: FnMut(usize, f64)>(
    y: &[Complex64],
    h: &CMatrix,
    candidates: &[&[Complex64]],
    mut visit: F,
) {
    let (nr, nt) = h.shape();
    let size = candidates[0].len();
    let scale = 1.0 / (nt as f64).sqrt();

    // contrib[(i·size + c)·nr + r] = h_{r,i} · candidates[i][c] / sqrt(N_t)
    let mut contrib = vec![Complex64::new(0.0, 0.0); nt * size * nr];
    for i in 0..nt {
        for (c, &x) in candidates[i].iter().enumerate() {
            for r in 0..nr {
                contrib[(i * size + c) * nr + r] = h[(r, i)] * x * scale;
            }
        }
    }
    let mut stack = vec![Complex64::new(0.0, 0.0); (nt + 1) * nr];
    stack[..nr].copy_from_slice(y);
    let mut digits = vec![0usize; nt];
    let refresh = |stack: &mut Vec<Complex64>, digits: &[usize], from: usize| {
        for l in from..nt {
            let base = (l * size + digits[l]) * nr;
            for r in 0..nr {
                stack[(l + 1) * nr + r] = stack[l * nr + r] - contrib[base + r];
            }
        }
    };
    refresh(&mut stack, &digits, 0);
    let mut idx = 0usize;
    loop {
        let leaf = &stack[nt * nr..];
        visit(idx, leaf.iter().map(|c| c.norm_sqr()).sum());
        idx += 1;
        let mut lvl = nt;
        loop {
            if lvl == 0 {
                return;
            }
            lvl -= 1;
            digits[lvl] += 1;
            if digits[lvl] < size {
                break;
            }
            digits[lvl] = 0;
        }
        refresh(&mut stack, &digits, lvl);
    }
}

fn check_candidates(
    y: &[Complex64],
    h: &CMatrix,
    candidates: &[&[Complex64]],
    bits: usize,
) -> Result<(), DetectError> {
    let (nr, nt) = h.shape();
    if y.len() != nr {
        return Err(DetectError::Dimension(format!(
            "y has {} entries, H has {nr} rows",
            y.len()
        )));
    }
    if candidates.len() != nt {
        return Err(DetectError::Dimension(format!(
            "{} candidate sets for {nt} streams",
            candidates.len()
        )));
    }
    if nt * bits > MAX_CANDIDATE_BITS {
        return Err(DetectError::CandidateOverflow(nt * bits));
    }
    if let Some(bad) = candidates.iter().find(|c| c.len() != 1 << bits) {
        return Err(DetectError::Dimension(format!(
            "candidate set of size {} for {bits} bits",
            bad.len()
        )));
    }
    Ok(())
}

/// Exhaustive-search vector LLRs
/// `ln Σ_{x̃: bit=0} exp(-||y - Hx̃/sqrt(N_t)||^2 / n0) - ln Σ_{x̃: bit=1} (...)`
/// for every bit of every stream. `out[i·bits + j]` is bit `j` of stream `i`.
#[allow(clippy::too_many_arguments)]
pub fn ml_joint_llrs(
    y: &[Complex64],
    h: &CMatrix,
    n0: f64,
    candidates: &[&[Complex64]],
    bits: usize,
    mode: LlrMode,
    counter: &mut ComplexityCounter,
    out: &mut [f64],
) -> Result<(), DetectError> {
    check_candidates(y, h, candidates, bits)?;
    if !(n0 > 0.0) {
        return Err(DetectError::NonPositiveNoise(n0));
    }
    let nt = h.ncols();
    let total = 1usize << (nt * bits);
    let nbits = nt * bits;

    let mut metrics = vec![0.0f64; total];
    for_each_candidate(y, h, candidates, |idx, m| metrics[idx] = m / n0);
    counter.metric_evaluations += total as u64;

    // Global bit position q = i·bits + j is bit (nbits - 1 - q) of idx.
    let mut min0 = vec![f64::INFINITY; nbits];
    let mut min1 = vec![f64::INFINITY; nbits];
    for (idx, &m) in metrics.iter().enumerate() {
        for q in 0..nbits {
            if (idx >> (nbits - 1 - q)) & 1 == 0 {
                if m < min0[q] {
                    min0[q] = m;
                }
            } else if m < min1[q] {
                min1[q] = m;
            }
        }
    }
    if mode == LlrMode::MaxLog {
        for q in 0..nbits {
            out[q] = min1[q] - min0[q];
        }
        return Ok(());
    }

    let global = min0[0].min(min1[0]);
    let mut sum0 = vec![0.0f64; nbits];
    let mut sum1 = vec![0.0f64; nbits];
    for (idx, &m) in metrics.iter().enumerate() {
        let w = (-(m - global)).exp();
        for q in 0..nbits {
            if (idx >> (nbits - 1 - q)) & 1 == 0 {
                sum0[q] += w;
            } else {
                sum1[q] += w;
            }
        }
    }
    for q in 0..nbits {
        let (s0, s1) = (sum0[q], sum1[q]);
        out[q] = if s0 > 1e-280 && s1 > 1e-280 {
            s0.ln() - s1.ln()
        } else {
            // One hypothesis underflowed relative to the global minimum;
            // redo this bit with per-hypothesis references.
            let mut r = [0.0f64; 2];
            for (idx, &m) in metrics.iter().enumerate() {
                let b = (idx >> (nbits - 1 - q)) & 1;
                let reference = if b == 0 { min0[q] } else { min1[q] };
                r[b] += (-(m - reference)).exp();
            }
            lse_difference(min0[q], r[0], min1[q], r[1])
        };
    }
    Ok(())
}

/// Exhaustive-search hard decision: per-stream candidate indices of the
/// minimum-metric vector (lowest index on ties).
pub fn ml_hard(
    y: &[Complex64],
    h: &CMatrix,
    candidates: &[&[Complex64]],
    counter: &mut ComplexityCounter,
) -> Result<Vec<usize>, DetectError> {
    let size = candidates.first().map_or(0, |c| c.len());
    if !size.is_power_of_two() {
        return Err(DetectError::Dimension(format!(
            "candidate set size {size} is not a power of two"
        )));
    }
    let bits = size.trailing_zeros() as usize;
    check_candidates(y, h, candidates, bits)?;
    let nt = h.ncols();
    let mut best = (f64::INFINITY, 0usize);
    let mut visited = 0u64;
    for_each_candidate(y, h, candidates, |idx, m| {
        visited += 1;
        if m < best.0 {
            best = (m, idx);
        }
    });
    counter.metric_evaluations += visited;
    let mask = size - 1;
    Ok((0..nt)
        .map(|i| (best.1 >> (bits * (nt - 1 - i))) & mask)
        .collect())
}

/// `y' = y - H x̂ / sqrt(N_t)`.
pub fn cancel_base(
    y: &[Complex64],
    h: &CMatrix,
    x_hat: &[Complex64],
) -> Result<Vec<Complex64>, DetectError> {
    let (nr, nt) = h.shape();
    if y.len() != nr || x_hat.len() != nt {
        return Err(DetectError::Dimension(format!(
            "cancel: y has {}, x̂ has {}, H is {nr}×{nt}",
            y.len(),
            x_hat.len()
        )));
    }
    let mut out = y.to_vec();
    cancel_in_place(&mut out, h, x_hat);
    Ok(out)
}

#[inline]
fn cancel_in_place(y: &mut [Complex64], h: &CMatrix, x_hat: &[Complex64]) {
    let scale = 1.0 / (h.ncols() as f64).sqrt();
    for (r, yr) in y.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, &x) in x_hat.iter().enumerate() {
            acc += h[(r, t)] * x;
        }
        *yr -= acc * scale;
    }
}

/// Knobs shared by the coded receivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSettings {
    pub llr_mode: LlrMode,
    pub max_iterations: usize,
    pub decoder: DecoderKind,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            llr_mode: LlrMode::Exact,
            max_iterations: 50,
            decoder: DecoderKind::SumProduct,
        }
    }
}

/// Decisions for one codeword (one layer, or the single codeword).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDecision {
    /// Decoded information bits; the raw hard decisions when uncoded.
    pub info_bits: Vec<u8>,
    /// Codeword implied by `info_bits` (re-encoded when coded).
    pub codeword: Vec<u8>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    pub layers: Vec<LayerDecision>,
    pub counter: ComplexityCounter,
}

/// Received samples of one frame: `V·N_r` values, vector-major.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub y: &'a [Complex64],
    pub channel: &'a ChannelRealization,
}

impl<'a> FrameView<'a> {
    pub fn new(y: &'a [Complex64], channel: &'a ChannelRealization) -> Result<Self, DetectError> {
        let expected = channel.vectors() * channel.nr();
        if y.len() != expected {
            return Err(DetectError::Dimension(format!(
                "frame has {} samples, channel expects {expected}",
                y.len()
            )));
        }
        Ok(Self { y, channel })
    }

    fn vector(&self, v: usize) -> &'a [Complex64] {
        let nr = self.channel.nr();
        &self.y[v * nr..(v + 1) * nr]
    }

    fn symbols(&self) -> usize {
        self.channel.vectors() * self.channel.nt()
    }
}

fn check_codes(
    codes: &[Option<&QcLdpcCode>],
    layout: &SymbolLayout,
    symbols: usize,
) -> Result<(), DetectError> {
    if codes.len() != layout.codewords() {
        return Err(DetectError::Dimension(format!(
            "{} codecs for {} codewords",
            codes.len(),
            layout.codewords()
        )));
    }
    let n = layout.codeword_len(symbols);
    for code in codes.iter().flatten() {
        if code.n() != n {
            return Err(DetectError::Dimension(format!(
                "code length {} but the frame carries {n} bits per codeword",
                code.n()
            )));
        }
    }
    Ok(())
}

/// Clamps the LLRs and decodes them (or slices them when uncoded).
fn decode_layer(
    llrs: &mut [f64],
    code: Option<&QcLdpcCode>,
    settings: &DetectorSettings,
) -> Result<LayerDecision, DetectError> {
    for l in llrs.iter_mut() {
        *l = l.clamp(-LLR_CLAMP, LLR_CLAMP);
    }
    match code {
        Some(code) => {
            let out = code.decode(llrs, settings.max_iterations, settings.decoder)?;
            let codeword = if out.converged {
                out.hard_bits
            } else {
                code.encode(&out.info_bits)?
            };
            Ok(LayerDecision {
                info_bits: out.info_bits,
                codeword,
                iterations: out.iterations,
                converged: out.converged,
            })
        }
        None => {
            let hard: Vec<u8> = llrs.iter().map(|&l| (l < 0.0) as u8).collect();
            Ok(LayerDecision {
                info_bits: hard.clone(),
                codeword: hard,
                iterations: 0,
                converged: true,
            })
        }
    }
}

fn require_layers(cst: &LayeredConstellation, min: usize) -> Result<(), DetectError> {
    if cst.layers() < min {
        return Err(DetectError::Unsupported {
            needed: format!("at least {min} layers"),
            got: format!("{} layers", cst.layers()),
        });
    }
    Ok(())
}

/// Base layer by MMSE, decode, re-encode, cancel, enhancement layer by
/// exhaustive ML over the 4-QAM sub-constellation, decode.
pub fn two_stage_mmse_ml(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    codes: &[Option<&QcLdpcCode>],
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    if cst.layers() != 2 {
        return Err(DetectError::Unsupported {
            needed: "a two-layer constellation".into(),
            got: format!("{} layers", cst.layers()),
        });
    }
    let layout = SymbolLayout::Layered { layers: 2 };
    let symbols = frame.symbols();
    check_codes(codes, &layout, symbols)?;
    let ch = frame.channel;
    let (nt, n0) = (ch.nt(), ch.n0());
    let mut counter = ComplexityCounter::default();
    let n = layout.codeword_len(symbols);

    // Stage 1: MMSE on the base layer.
    let base_points = cst.layer_centroids(0);
    let e_xb = cst.layer_energy()[0];
    let mut base_llrs = vec![0.0f64; n];
    let mut z = vec![Complex64::new(0.0, 0.0); nt];
    let mut pair = [0.0f64; 2];
    for (b, h) in ch.blocks().iter().enumerate() {
        let stats = mmse_filter(h, n0, e_xb)?;
        counter.matrix_inversions += 1;
        for v in block_vectors(ch, b) {
            stats.equalize_into(frame.vector(v), &mut z);
            for i in 0..nt {
                symbol_llrs(
                    z[i],
                    stats.beta[i],
                    stats.sigma2[i],
                    base_points,
                    2,
                    settings.llr_mode,
                    &mut pair,
                );
                counter.metric_evaluations += 4;
                let t = v * nt + i;
                base_llrs[2 * t] = pair[0];
                base_llrs[2 * t + 1] = pair[1];
            }
        }
    }
    let base = decode_layer(&mut base_llrs, codes[0], settings)?;

    // Stage 2: cancel the re-encoded base layer, ML on the enhancement layer.
    let mut enh_llrs = vec![0.0f64; n];
    let mut x_hat = vec![Complex64::new(0.0, 0.0); nt];
    let mut cand_store = vec![[Complex64::new(0.0, 0.0); 4]; nt];
    let mut out = vec![0.0f64; 2 * nt];
    for v in 0..ch.vectors() {
        let h = ch.matrix_for_vector(v);
        for i in 0..nt {
            let t = v * nt + i;
            let b_label =
                ((base.codeword[2 * t] as usize) << 1) | base.codeword[2 * t + 1] as usize;
            x_hat[i] = base_points[b_label];
            cand_store[i] = cst.layer_candidates(b_label << 2, 1);
        }
        let y_res = cancel_base(frame.vector(v), h, &x_hat)?;
        let cands: Vec<&[Complex64]> = cand_store.iter().map(|c| &c[..]).collect();
        ml_joint_llrs(
            &y_res,
            h,
            n0,
            &cands,
            2,
            settings.llr_mode,
            &mut counter,
            &mut out,
        )?;
        for i in 0..nt {
            let t = v * nt + i;
            enh_llrs[2 * t] = out[2 * i];
            enh_llrs[2 * t + 1] = out[2 * i + 1];
        }
    }
    let enh = decode_layer(&mut enh_llrs, codes[1], settings)?;
    Ok(DetectionOutput {
        layers: vec![base, enh],
        counter,
    })
}

fn block_vectors(ch: &ChannelRealization, b: usize) -> std::ops::Range<usize> {
    ch.vectors_in_block(b)
}

/// Generalisation to `P ≥ 2` layers: layers `0..P-1` are detected in turn
/// by MMSE (each filter sees the not-yet-cancelled layers as interference),
/// decoded, re-encoded and cancelled; the last layer is detected by ML over
/// its 4-QAM sub-constellation.
pub fn multi_stage(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    codes: &[Option<&QcLdpcCode>],
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    require_layers(cst, 2)?;
    let layers = cst.layers();
    let layout = SymbolLayout::Layered { layers };
    let symbols = frame.symbols();
    check_codes(codes, &layout, symbols)?;
    let ch = frame.channel;
    let (nt, nr, n0) = (ch.nt(), ch.nr(), ch.n0());
    let n = layout.codeword_len(symbols);
    let mut counter = ComplexityCounter::default();

    let mut residual = frame.y.to_vec();
    // Decided label bits of finished layers, per symbol, left-aligned in
    // the full label.
    let mut prefix = vec![0usize; symbols];
    let mut decisions = Vec::with_capacity(layers);
    let mut z = vec![Complex64::new(0.0, 0.0); nt];
    let mut pair = [0.0f64; 2];
    let mut out = vec![0.0f64; 2 * nt];

    for p in 0..layers {
        let shift = 2 * (layers - 1 - p);
        let mut llrs = vec![0.0f64; n];
        if p + 1 < layers {
            let e_x = cst.layer_energy()[p];
            let e_rem = if p == 0 { 1.0 } else { cst.residual_energy(p) };
            for (b, h) in ch.blocks().iter().enumerate() {
                let stats = mmse_filter_stage(h, n0, e_x, e_rem)?;
                counter.matrix_inversions += 1;
                for v in block_vectors(ch, b) {
                    stats.equalize_into(&residual[v * nr..(v + 1) * nr], &mut z);
                    for i in 0..nt {
                        let t = v * nt + i;
                        let cands = cst.layer_candidates(prefix[t], p);
                        symbol_llrs(
                            z[i],
                            stats.beta[i],
                            stats.sigma2[i],
                            &cands,
                            2,
                            settings.llr_mode,
                            &mut pair,
                        );
                        counter.metric_evaluations += 4;
                        llrs[2 * t] = pair[0];
                        llrs[2 * t + 1] = pair[1];
                    }
                }
            }
        } else {
            let mut cand_store = vec![[Complex64::new(0.0, 0.0); 4]; nt];
            for v in 0..ch.vectors() {
                let h = ch.matrix_for_vector(v);
                for i in 0..nt {
                    cand_store[i] = cst.layer_candidates(prefix[v * nt + i], p);
                }
                let cands: Vec<&[Complex64]> = cand_store.iter().map(|c| &c[..]).collect();
                ml_joint_llrs(
                    &residual[v * nr..(v + 1) * nr],
                    h,
                    n0,
                    &cands,
                    2,
                    settings.llr_mode,
                    &mut counter,
                    &mut out,
                )?;
                for i in 0..nt {
                    let t = v * nt + i;
                    llrs[2 * t] = out[2 * i];
                    llrs[2 * t + 1] = out[2 * i + 1];
                }
            }
        }
        let decision = decode_layer(&mut llrs, codes[p], settings)?;
        if p + 1 < layers {
            let mut x_hat = vec![Complex64::new(0.0, 0.0); nt];
            for v in 0..ch.vectors() {
                for i in 0..nt {
                    let t = v * nt + i;
                    let bits = ((decision.codeword[2 * t] as usize) << 1)
                        | decision.codeword[2 * t + 1] as usize;
                    prefix[t] |= bits << shift;
                    x_hat[i] = cst.component(prefix[t], p);
                }
                cancel_in_place(
                    &mut residual[v * nr..(v + 1) * nr],
                    ch.matrix_for_vector(v),
                    &x_hat,
                );
            }
        }
        decisions.push(decision);
    }
    Ok(DetectionOutput {
        layers: decisions,
        counter,
    })
}

/// Full-symbol linear MMSE with per-stream Gaussian LLRs over the whole
/// constellation, then decoding per `layout`.
pub fn linear_mmse(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    layout: &SymbolLayout,
    codes: &[Option<&QcLdpcCode>],
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    let symbols = frame.symbols();
    check_layout(cst, layout)?;
    check_codes(codes, layout, symbols)?;
    let ch = frame.channel;
    let (nt, n0) = (ch.nt(), ch.n0());
    let m = cst.bits_per_symbol();
    let mut counter = ComplexityCounter::default();
    let n = layout.codeword_len(symbols);
    let mut llrs = vec![vec![0.0f64; n]; layout.codewords()];
    let mut z = vec![Complex64::new(0.0, 0.0); nt];
    let mut sym = vec![0.0f64; m];

    for (b, h) in ch.blocks().iter().enumerate() {
        let stats = mmse_filter_stage(h, n0, 1.0, 1.0)?;
        counter.matrix_inversions += 1;
        for v in block_vectors(ch, b) {
            stats.equalize_into(frame.vector(v), &mut z);
            for i in 0..nt {
                symbol_llrs(
                    z[i],
                    stats.beta[i],
                    stats.sigma2[i],
                    cst.points(),
                    m,
                    settings.llr_mode,
                    &mut sym,
                );
                counter.metric_evaluations += cst.points().len() as u64;
                let t = v * nt + i;
                for (bit, &l) in sym.iter().enumerate() {
                    let (cw, idx) = layout.position(t, bit);
                    llrs[cw][idx] = l;
                }
            }
        }
    }
    let layers = llrs
        .iter_mut()
        .zip(codes)
        .map(|(l, code)| decode_layer(l, *code, settings))
        .collect::<Result<_, _>>()?;
    Ok(DetectionOutput { layers, counter })
}

/// Exhaustive joint ML over the full constellation on every stream, then
/// decoding per `layout`.
pub fn full_ml(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    layout: &SymbolLayout,
    codes: &[Option<&QcLdpcCode>],
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    let symbols = frame.symbols();
    check_layout(cst, layout)?;
    check_codes(codes, layout, symbols)?;
    let ch = frame.channel;
    let (nt, n0) = (ch.nt(), ch.n0());
    let m = cst.bits_per_symbol();
    let mut counter = ComplexityCounter::default();
    let n = layout.codeword_len(symbols);
    let mut llrs = vec![vec![0.0f64; n]; layout.codewords()];
    let cands: Vec<&[Complex64]> = vec![cst.points(); nt];
    let mut out = vec![0.0f64; nt * m];

    for v in 0..ch.vectors() {
        ml_joint_llrs(
            frame.vector(v),
            ch.matrix_for_vector(v),
            n0,
            &cands,
            m,
            settings.llr_mode,
            &mut counter,
            &mut out,
        )?;
        for i in 0..nt {
            let t = v * nt + i;
            for bit in 0..m {
                let (cw, idx) = layout.position(t, bit);
                llrs[cw][idx] = out[i * m + bit];
            }
        }
    }
    let layers = llrs
        .iter_mut()
        .zip(codes)
        .map(|(l, code)| decode_layer(l, *code, settings))
        .collect::<Result<_, _>>()?;
    Ok(DetectionOutput { layers, counter })
}

/// Linear MMSE over uniform 16-QAM carrying one codeword.
pub fn mmse_only_16qam(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    code: Option<&QcLdpcCode>,
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    let layout = SymbolLayout::Single {
        bits_per_symbol: cst.bits_per_symbol(),
    };
    linear_mmse(frame, cst, &layout, &[code], settings)
}

/// Exhaustive joint ML over uniform 16-QAM carrying one codeword.
pub fn ml_16qam(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
    code: Option<&QcLdpcCode>,
    settings: &DetectorSettings,
) -> Result<DetectionOutput, DetectError> {
    let layout = SymbolLayout::Single {
        bits_per_symbol: cst.bits_per_symbol(),
    };
    full_ml(frame, cst, &layout, &[code], settings)
}

fn check_layout(cst: &LayeredConstellation, layout: &SymbolLayout) -> Result<(), DetectError> {
    let ok = match *layout {
        SymbolLayout::Layered { layers } => layers == cst.layers(),
        SymbolLayout::Single { bits_per_symbol } => bits_per_symbol == cst.bits_per_symbol(),
    };
    if ok {
        Ok(())
    } else {
        Err(DetectError::Unsupported {
            needed: format!("a layout for {} bits per symbol", cst.bits_per_symbol()),
            got: format!("{layout:?}"),
        })
    }
}

/// Uncoded two-stage hard ML: joint ML over base-layer centroid vectors
/// with metric `||y - H x̃_b / sqrt(N_t)||^2` (the enhancement layer is
/// treated as absent), then cancellation and joint ML over the
/// enhancement sub-constellation. Returns raw bit decisions per layer.
pub fn two_stage_ml_ml_uncoded(
    frame: &FrameView<'_>,
    cst: &LayeredConstellation,
) -> Result<DetectionOutput, DetectError> {
    if cst.layers() != 2 {
        return Err(DetectError::Unsupported {
            needed: "a two-layer constellation".into(),
            got: format!("{} layers", cst.layers()),
        });
    }
    let ch = frame.channel;
    let nt = ch.nt();
    let n = 2 * frame.symbols();
    let mut counter = ComplexityCounter::default();
    let mut base_bits = vec![0u8; n];
    let mut enh_bits = vec![0u8; n];
    let base_points = cst.layer_centroids(0);
    let base_sets: Vec<&[Complex64]> = vec![&base_points[..]; nt];
    let mut x_hat = vec![Complex64::new(0.0, 0.0); nt];
    let mut enh_store = vec![[Complex64::new(0.0, 0.0); 4]; nt];

    for v in 0..ch.vectors() {
        let h = ch.matrix_for_vector(v);
        let y = frame.vector(v);
        let base = ml_hard(y, h, &base_sets, &mut counter)?;
        for i in 0..nt {
            x_hat[i] = base_points[base[i]];
            enh_store[i] = cst.layer_candidates(base[i] << 2, 1);
        }
        let y_res = cancel_base(y, h, &x_hat)?;
        let enh_sets: Vec<&[Complex64]> = enh_store.iter().map(|c| &c[..]).collect();
        let enh = ml_hard(&y_res, h, &enh_sets, &mut counter)?;
        for i in 0..nt {
            let t = v * nt + i;
            base_bits[2 * t] = (base[i] >> 1) as u8;
            base_bits[2 * t + 1] = (base[i] & 1) as u8;
            enh_bits[2 * t] = (enh[i] >> 1) as u8;
            enh_bits[2 * t + 1] = (enh[i] & 1) as u8;
        }
    }
    let layer = |bits: Vec<u8>| LayerDecision {
        info_bits: bits.clone(),
        codeword: bits,
        iterations: 0,
        converged: true,
    };
    Ok(DetectionOutput {
        layers: vec![layer(base_bits), layer(enh_bits)],
        counter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, FadingMode};
    use crate::hqam::{build_hqam, HqamParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_h(rng: &mut impl Rng, nr: usize, nt: usize) -> CMatrix {
        CMatrix::from_fn(nr, nt, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn scalar_mmse() {
        let h = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let s = mmse_filter(&h, 0.2, 0.8).unwrap();
        let g = 0.8 / 1.2;
        assert!((s.filters[(0, 0)] - c(g, 0.0)).norm() < 1e-15);
        assert!((s.beta[0] - c(g, 0.0)).norm() < 1e-15);
        assert!((s.sigma2[0] - (0.2 * g * g + 0.2 * g * g)).abs() < 1e-15);
        assert!((s.sigma2[0] - 0.177_777_777_777_777_8).abs() < 1e-12);
    }

    #[test]
    fn mmse_rejects_bad_inputs() {
        let h = CMatrix::identity(2, 2);
        assert!(matches!(
            mmse_filter(&h, 0.0, 0.8),
            Err(DetectError::NonPositiveNoise(_))
        ));
        assert!(matches!(
            mmse_filter(&h, 0.1, 1.5),
            Err(DetectError::Energy { .. })
        ));
        assert!(mmse_filter(&h, 0.1, 0.0).is_err());
    }

    #[test]
    fn sigma2_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let h = random_h(&mut rng, 3, 2);
            let s = mmse_filter(&h, 1e-3, 0.8).unwrap();
            assert!(s.sigma2.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn base_llr_symmetry_and_sign() {
        let q = build_hqam(&HqamParams::qam4());
        let pts = q.layer_centroids(0);
        let beta = c(0.7, 0.0);
        for j in 0..2 {
            assert!(base_llr(c(0.0, 0.0), beta, 0.3, pts, j, LlrMode::Exact).abs() < 1e-15);
        }
        // Point with both bits 0 sent, tiny variance: large positive LLRs.
        let z = beta * pts[0];
        for j in 0..2 {
            let l = base_llr(z, beta, 1e-4, pts, j, LlrMode::Exact);
            assert!(l > 100.0, "{l}");
        }
        let z = beta * pts[0b11];
        assert!(base_llr(z, beta, 1e-4, pts, 0, LlrMode::Exact) < -100.0);
    }

    #[test]
    fn ml_counts_candidates() {
        let cst = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_h(&mut rng, 2, 2);
        let y = vec![c(0.1, 0.2), c(-0.3, 0.4)];
        let mut counter = ComplexityCounter::default();
        let mut out = vec![0.0; 8];
        let full: Vec<&[Complex64]> = vec![cst.points(); 2];
        ml_joint_llrs(
            &y,
            &h,
            0.1,
            &full,
            4,
            LlrMode::Exact,
            &mut counter,
            &mut out,
        )
        .unwrap();
        assert_eq!(counter.metric_evaluations, 256);
        let sub: Vec<&[Complex64]> = vec![&cst.layer_centroids(1)[..]; 2];
        let mut counter = ComplexityCounter::default();
        ml_joint_llrs(
            &y,
            &h,
            0.1,
            &sub,
            2,
            LlrMode::Exact,
            &mut counter,
            &mut out[..4],
        )
        .unwrap();
        assert_eq!(counter.metric_evaluations, 16);
    }

    #[test]
    fn ml_overflow_guard() {
        let cst = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let h = CMatrix::identity(9, 9);
        let y = vec![c(0.0, 0.0); 9];
        let sets: Vec<&[Complex64]> = vec![cst.points(); 9];
        let mut out = vec![0.0; 36];
        let err = ml_joint_llrs(
            &y,
            &h,
            0.1,
            &sets,
            4,
            LlrMode::Exact,
            &mut ComplexityCounter::default(),
            &mut out,
        );
        assert_eq!(err, Err(DetectError::CandidateOverflow(36)));
    }

    #[test]
    fn ml_noise_free_signs() {
        let cst = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let h = CMatrix::from_element(1, 1, c(0.8, -0.6));
        for label in 0..16 {
            let y = vec![h[(0, 0)] * cst.point(label)];
            let mut out = [0.0; 4];
            ml_joint_llrs(
                &y,
                &h,
                0.01,
                &[cst.points()],
                4,
                LlrMode::Exact,
                &mut ComplexityCounter::default(),
                &mut out,
            )
            .unwrap();
            for (j, &l) in out.iter().enumerate() {
                let bit = (label >> (3 - j)) & 1;
                assert_eq!(l < 0.0, bit == 1, "label {label} bit {j}: {l}");
            }
        }
    }

    #[test]
    fn ml_hard_finds_transmitted_vector() {
        let cst = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let h = random_h(&mut rng, 3, 3);
            let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..16)).collect();
            let x: Vec<Complex64> = labels.iter().map(|&l| cst.point(l)).collect();
            let y = cancel_base(&[c(0.0, 0.0); 3], &h, &x)
                .unwrap()
                .iter()
                .map(|v| -v)
                .collect::<Vec<_>>();
            let sets: Vec<&[Complex64]> = vec![cst.points(); 3];
            let mut counter = ComplexityCounter::default();
            assert_eq!(ml_hard(&y, &h, &sets, &mut counter).unwrap(), labels);
            assert_eq!(counter.metric_evaluations, 4096);
        }
    }

    #[test]
    fn cancellation() {
        let cst = build_hqam(&HqamParams::hqam16(2.5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_h(&mut rng, 2, 2);
        let labels = [5usize, 12];
        let x: Vec<Complex64> = labels.iter().map(|&l| cst.point(l)).collect();
        let xb: Vec<Complex64> = labels.iter().map(|&l| cst.component(l, 0)).collect();
        let xe: Vec<Complex64> = labels.iter().map(|&l| cst.component(l, 1)).collect();
        let zero = [c(0.0, 0.0); 2];
        let hx = |v: &[Complex64]| -> Vec<Complex64> {
            cancel_base(&zero, &h, v)
                .unwrap()
                .iter()
                .map(|a| -a)
                .collect()
        };
        let y = hx(&x);
        let y_res = cancel_base(&y, &h, &xb).unwrap();
        for (a, b) in y_res.iter().zip(hx(&xe)) {
            assert!((a - b).norm() < 1e-15);
        }
        assert_eq!(cancel_base(&y, &h, &zero).unwrap(), y);

        // Wrong decision on stream 0.
        let noise = [c(0.01, -0.02), c(0.03, 0.0)];
        let y_noisy: Vec<Complex64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let wrong = [cst.layer_centroids(0)[3], xb[1]];
        let got = cancel_base(&y_noisy, &h, &wrong).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for r in 0..2 {
            let expect = h[(r, 0)] * (xb[0] - wrong[0]) * s + hx(&xe)[r] + noise[r];
            assert!((got[r] - expect).norm() < 1e-14);
        }
        assert!(cancel_base(&y, &h, &xb[..1]).is_err());
    }

    fn noise_free_frame(
        cst: &LayeredConstellation,
        nt: usize,
        vectors: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<usize>, ChannelRealization, Vec<Complex64>) {
        let ch =
            crate::channel::draw_channel(nt, nt, 4, FadingMode::BlockFading, vectors, 1e-9, rng)
                .unwrap();
        let labels: Vec<usize> = (0..vectors * nt)
            .map(|_| rng.random_range(0..cst.points().len()))
            .collect();
        let x: Vec<Complex64> = labels.iter().map(|&l| cst.point(l)).collect();
        let mut quiet = ch.clone();
        quiet.set_n0(0.0);
        let y = crate::channel::transmit(&x, &quiet, rng).unwrap();
        (labels, ch, y)
    }

    #[test]
    fn uncoded_receivers_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cst = build_hqam(&HqamParams::hqam16(3.0).unwrap());
        let layout = SymbolLayout::Layered { layers: 2 };
        let (labels, ch, y) = noise_free_frame(&cst, 2, 16, &mut rng);
        let frame = FrameView::new(&y, &ch).unwrap();
        let settings = DetectorSettings::default();
        let expect = |layer: usize| -> Vec<u8> {
            labels
                .iter()
                .flat_map(|&l| {
                    let b = cst.layer_bits(l, layer);
                    [(b >> 1) as u8, (b & 1) as u8]
                })
                .collect()
        };
        let outs = [
            two_stage_mmse_ml(&frame, &cst, &[None, None], &settings).unwrap(),
            multi_stage(&frame, &cst, &[None, None], &settings).unwrap(),
            linear_mmse(&frame, &cst, &layout, &[None, None], &settings).unwrap(),
            full_ml(&frame, &cst, &layout, &[None, None], &settings).unwrap(),
        ];
        for out in &outs {
            assert_eq!(out.layers[0].info_bits, expect(0));
            assert_eq!(out.layers[1].info_bits, expect(1));
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn ml_ml_noise_free_without_enhancement() {
        // A vanishing enhancement layer leaves a clean base layer.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cst = build_hqam(&HqamParams::hqam16(1e6).unwrap());
        let (labels, ch, y) = noise_free_frame(&cst, 2, 32, &mut rng);
        let frame = FrameView::new(&y, &ch).unwrap();
        let out = two_stage_ml_ml_uncoded(&frame, &cst).unwrap();
        for (t, &l) in labels.iter().enumerate() {
            let b = cst.layer_bits(l, 0);
            assert_eq!(out.layers[0].info_bits[2 * t], (b >> 1) as u8);
            assert_eq!(out.layers[0].info_bits[2 * t + 1], (b & 1) as u8);
        }
        assert_eq!(out.counter.metric_evaluations, 32 * 2 * 16);
    }

    #[test]
    fn three_layer_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cst = build_hqam(&HqamParams::new(3, vec![2.0, 2.0]).unwrap());
        let (labels, ch, y) = noise_free_frame(&cst, 2, 8, &mut rng);
        let frame = FrameView::new(&y, &ch).unwrap();
        let out = multi_stage(
            &frame,
            &cst,
            &[None, None, None],
            &DetectorSettings::default(),
        )
        .unwrap();
        for p in 0..3 {
            for (t, &l) in labels.iter().enumerate() {
                let b = cst.layer_bits(l, p);
                assert_eq!(out.layers[p].info_bits[2 * t], (b >> 1) as u8);
            }
        }
        // Two MMSE stages of 4 metrics per stream plus 4^Nt for the last stage.
        assert_eq!(out.counter.metric_evaluations, 8 * (2 * 2 * 4 + 16));
    }

    #[test]
    fn multi_stage_needs_two_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cst = build_hqam(&HqamParams::qam4());
        let (_, ch, y) = noise_free_frame(&cst, 2, 4, &mut rng);
        let frame = FrameView::new(&y, &ch).unwrap();
        assert!(matches!(
            multi_stage(&frame, &cst, &[None], &DetectorSettings::default()),
            Err(DetectError::Unsupported { .. })
        ));
        assert!(FrameView::new(&y[1..], &ch).is_err());
    }
}
