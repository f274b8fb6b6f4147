//! Detector complexity benchmark: exhaustive ML over 16-QAM vectors versus
//! the two-stage receiver on two-layer 16-HQAM, per vector use.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_gaussian, CMatrix};
use crate::detect::{
    cancel_base, ml_joint_llrs, mmse_filter, symbol_llrs, ComplexityCounter, DetectError, LlrMode,
};
use crate::hqam::{build_hqam, HqamParams};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub nts: Vec<usize>,
    /// Vector uses timed per detector and antenna count.
    pub vectors: usize,
    /// Vector uses sharing one channel matrix (one MMSE filter).
    pub vectors_per_block: usize,
    pub n0: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nts: vec![2, 3, 4],
            vectors: 200,
            vectors_per_block: 36,
            n0: 0.05,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub nt: usize,
    /// `4^{2 N_t}` metric evaluations for joint ML over 16-QAM.
    pub ml_analytic: u64,
    /// `4 N_t + 4^{N_t}` for the two-stage receiver.
    pub proposed_analytic: u64,
    pub ml_measured: u64,
    pub proposed_measured: u64,
    pub ml_seconds_per_vector: f64,
    pub proposed_seconds_per_vector: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.ml_seconds_per_vector / self.proposed_seconds_per_vector
    }
}

pub fn ml_metric_count(nt: usize) -> u64 {
    16u64.pow(nt as u32)
}

pub fn proposed_metric_count(nt: usize) -> u64 {
    4 * nt as u64 + 4u64.pow(nt as u32)
}

/// Times both detectors over the same received vectors. Metric counts are
/// reported per vector use.
pub fn bench_detectors(cfg: &BenchConfig) -> Result<Vec<BenchRow>, DetectError> {
    let cst = build_hqam(&HqamParams::hqam16(2.0).expect("constant ratio"));
    let base = cst.layer_centroids(0);
    let e_xb = cst.layer_energy()[0];
    let mut rows = Vec::new();
    for &nt in &cfg.nts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ nt as u64);
        let blocks = cfg.vectors.div_ceil(cfg.vectors_per_block.max(1));
        let hs: Vec<CMatrix> = (0..blocks)
            .map(|_| CMatrix::from_fn(nt, nt, |_, _| complex_gaussian(&mut rng, 1.0)))
            .collect();
        let scale = 1.0 / (nt as f64).sqrt();
        let ys: Vec<Vec<Complex64>> = (0..cfg.vectors)
            .map(|v| {
                let h = &hs[v / cfg.vectors_per_block.max(1)];
                let x: Vec<Complex64> = (0..nt)
                    .map(|_| cst.point(rng.random_range(0..16)))
                    .collect();
                (0..nt)
                    .map(|r| {
                        let s: Complex64 = (0..nt).map(|t| h[(r, t)] * x[t]).sum();
                        s * scale + complex_gaussian(&mut rng, cfg.n0)
                    })
                    .collect()
            })
            .collect();

        let full: Vec<&[Complex64]> = vec![cst.points(); nt];
        let mut out = vec![0.0; 4 * nt];
        let mut ml_counter = ComplexityCounter::default();
        let start = Instant::now();
        for (v, y) in ys.iter().enumerate() {
            let h = &hs[v / cfg.vectors_per_block.max(1)];
            ml_joint_llrs(
                y,
                h,
                cfg.n0,
                &full,
                4,
                LlrMode::Exact,
                &mut ml_counter,
                &mut out,
            )?;
        }
        let ml_time = start.elapsed().as_secs_f64();

        let mut counter = ComplexityCounter::default();
        let mut pair = [0.0; 2];
        let mut enh = vec![0.0; 2 * nt];
        let mut z = vec![Complex64::new(0.0, 0.0); nt];
        let start = Instant::now();
        for (b, h) in hs.iter().enumerate() {
            let stats = mmse_filter(h, cfg.n0, e_xb)?;
            let first = b * cfg.vectors_per_block.max(1);
            let last = (first + cfg.vectors_per_block.max(1)).min(cfg.vectors);
            for y in &ys[first..last] {
                stats.equalize_into(y, &mut z);
                let mut x_hat = vec![Complex64::new(0.0, 0.0); nt];
                let mut labels = vec![0usize; nt];
                for i in 0..nt {
                    symbol_llrs(
                        z[i],
                        stats.beta[i],
                        stats.sigma2[i],
                        base,
                        2,
                        LlrMode::Exact,
                        &mut pair,
                    );
                    counter.metric_evaluations += 4;
                    labels[i] = ((pair[0] < 0.0) as usize) << 1 | (pair[1] < 0.0) as usize;
                    x_hat[i] = base[labels[i]];
                }
                let y_res = cancel_base(y, h, &x_hat)?;
                let cands: Vec<[Complex64; 4]> = labels
                    .iter()
                    .map(|&l| cst.layer_candidates(l << 2, 1))
                    .collect();
                let sets: Vec<&[Complex64]> = cands.iter().map(|c| &c[..]).collect();
                ml_joint_llrs(
                    &y_res,
                    h,
                    cfg.n0,
                    &sets,
                    2,
                    LlrMode::Exact,
                    &mut counter,
                    &mut enh,
                )?;
            }
        }
        let proposed_time = start.elapsed().as_secs_f64();

        let v = cfg.vectors.max(1) as f64;
        rows.push(BenchRow {
            nt,
            ml_analytic: ml_metric_count(nt),
            proposed_analytic: proposed_metric_count(nt),
            ml_measured: ml_counter.metric_evaluations / cfg.vectors.max(1) as u64,
            proposed_measured: counter.metric_evaluations / cfg.vectors.max(1) as u64,
            ml_seconds_per_vector: ml_time / v,
            proposed_seconds_per_vector: proposed_time / v,
        });
    }
    Ok(rows)
}

pub fn format_report(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "nt,ml_metrics_analytic,proposed_metrics_analytic,ml_metrics_measured,proposed_metrics_measured,ml_us_per_vector,proposed_us_per_vector,speedup\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{:.3},{:.1}",
            r.nt,
            r.ml_analytic,
            r.proposed_analytic,
            r.ml_measured,
            r.proposed_measured,
            r.ml_seconds_per_vector * 1e6,
            r.proposed_seconds_per_vector * 1e6,
            r.speedup()
        );
    }
    out
}
