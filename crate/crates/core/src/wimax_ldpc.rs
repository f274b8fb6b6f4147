//! Quasi-cyclic LDPC codes of the IEEE 802.16e family.
//!
//! Base matrices are shipped as plain-text assets (`assets/wimax/*.txt`):
//! the first line is `m_b n_b z0`, followed by `m_b` rows of `n_b`
//! space-separated shifts, where `-1` is an all-zero block and `p >= 0` the
//! `z × z` identity cyclically shifted by `p`. In an expanded block of shift
//! `s`, row `r` has its one in column `(r + s) mod z`.
//!
//! Encoding exploits the almost lower triangular parity part of the family:
//! one weight-3 column `h_b` followed by a dual diagonal of unshifted
//! identities. Decoding is flooding belief propagation on the expanded
//! Tanner graph, either exact sum-product or normalised min-sum.
//!
//! LLRs follow the convention `ln P(bit = 0) / P(bit = 1)`: positive means
//! the bit is more likely 0.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpcError {
    #[error("unsupported code: rate {rate} with n = {n}")]
    Unsupported { rate: RateId, n: usize },
    #[error("unknown rate id {0:?} (expected 1/2, 2/3A, 3/4A or 5/6)")]
    UnknownRate(String),
    #[error("cannot read base matrix asset {path}: {reason}")]
    Asset { path: String, reason: String },
    #[error("malformed base matrix: {0}")]
    Malformed(String),
    #[error("parity part is not in dual-diagonal form: {0}")]
    NotEncodable(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite LLR at position {0}")]
    NonFiniteLlr(usize),
}

/// Code rate classes shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateId {
    R1_2,
    R2_3A,
    R3_4A,
    R5_6,
}

impl RateId {
    pub const ALL: [RateId; 4] = [RateId::R1_2, RateId::R2_3A, RateId::R3_4A, RateId::R5_6];

    /// Nominal rate as a fraction.
    pub fn fraction(self) -> (usize, usize) {
        match self {
            RateId::R1_2 => (1, 2),
            RateId::R2_3A => (2, 3),
            RateId::R3_4A => (3, 4),
            RateId::R5_6 => (5, 6),
        }
    }

    pub fn value(self) -> f64 {
        let (a, b) = self.fraction();
        a as f64 / b as f64
    }

    fn asset(self) -> &'static str {
        match self {
            RateId::R1_2 => include_str!("../assets/wimax/r1_2.txt"),
            RateId::R2_3A => include_str!("../assets/wimax/r2_3a.txt"),
            RateId::R3_4A => include_str!("../assets/wimax/r3_4a.txt"),
            RateId::R5_6 => include_str!("../assets/wimax/r5_6.txt"),
        }
    }

    /// Shift adaptation for expansion factors below `z0`. The 2/3A class
    /// reduces shifts modulo `z`; all others scale with `floor(p·z/z0)`.
    pub fn shift_rule(self) -> ShiftRule {
        match self {
            RateId::R2_3A => ShiftRule::Modulo,
            _ => ShiftRule::Floor,
        }
    }
}

impl fmt::Display for RateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateId::R1_2 => "1/2",
            RateId::R2_3A => "2/3A",
            RateId::R3_4A => "3/4A",
            RateId::R5_6 => "5/6",
        })
    }
}

impl FromStr for RateId {
    type Err = LdpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1/2" => Ok(RateId::R1_2),
            "2/3" | "2/3A" => Ok(RateId::R2_3A),
            "3/4" | "3/4A" => Ok(RateId::R3_4A),
            "5/6" => Ok(RateId::R5_6),
            _ => Err(LdpcError::UnknownRate(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftRule {
    Floor,
    Modulo,
}

/// A base matrix as read from an asset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub z0: usize,
    pub shifts: Vec<i32>,
}

impl BaseMatrix {
    pub fn parse(text: &str) -> Result<Self, LdpcError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| LdpcError::Malformed("empty asset".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| LdpcError::Malformed(format!("header {header:?}: {e}")))?;
        let [rows, cols, z0] = dims[..] else {
            return Err(LdpcError::Malformed(format!(
                "header must be `m_b n_b z0`, got {header:?}"
            )));
        };
        let mut shifts = Vec::with_capacity(rows * cols);
        for (r, line) in lines.enumerate() {
            if r >= rows {
                return Err(LdpcError::Malformed(format!("more than {rows} rows")));
            }
            let row: Vec<i32> = line
                .split_whitespace()
                .map(|t| t.parse::<i32>())
                .collect::<Result<_, _>>()
                .map_err(|e| LdpcError::Malformed(format!("row {r}: {e}")))?;
            if row.len() != cols {
                return Err(LdpcError::Malformed(format!(
                    "row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&p| p < -1 || p >= z0 as i32) {
                return Err(LdpcError::Malformed(format!(
                    "row {r}: shift {bad} outside [-1, {z0})"
                )));
            }
            shifts.extend(row);
        }
        if shifts.len() != rows * cols {
            return Err(LdpcError::Malformed(format!(
                "expected {rows} rows, got {}",
                shifts.len() / cols.max(1)
            )));
        }
        Ok(Self {
            rows,
            cols,
            z0,
            shifts,
        })
    }

    pub fn at(&self, row: usize, col: usize) -> i32 {
        self.shifts[row * self.cols + col]
    }

    /// Copy with shifts adapted to expansion factor `z`.
    pub fn adapted(&self, z: usize, rule: ShiftRule) -> BaseMatrix {
        let shifts = self
            .shifts
            .iter()
            .map(|&p| {
                if p < 0 {
                    p
                } else {
                    match rule {
                        ShiftRule::Floor => ((p as usize * z) / self.z0) as i32,
                        ShiftRule::Modulo => (p as usize % z) as i32,
                    }
                }
            })
            .collect();
        BaseMatrix {
            rows: self.rows,
            cols: self.cols,
            z0: z,
            shifts,
        }
    }
}

/// Result of one decoder call.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub hard_bits: Vec<u8>,
    pub info_bits: Vec<u8>,
    pub iterations: usize,
    pub converged: bool,
}

/// Check-node update rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DecoderKind {
    #[default]
    SumProduct,
    /// Normalised min-sum with the given scaling factor.
    MinSum(f64),
}

/// An expanded QC-LDPC code with its encoder structure.
#[derive(Debug, Clone)]
pub struct QcLdpcCode {
    rate: Option<RateId>,
    base: BaseMatrix,
    z: usize,
    n: usize,
    k: usize,
    m: usize,
    // Tanner graph, edges ordered by check node.
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    var_ptr: Vec<usize>,
    var_edges: Vec<usize>,
    // Encoder: total shift of the h_b column after pairwise cancellation.
    hb_total_shift: usize,
}

/// Loads one of the shipped codes with codeword length `n`.
pub fn load_code(rate: RateId, n: usize) -> Result<QcLdpcCode, LdpcError> {
    let base = BaseMatrix::parse(rate.asset())?;
    if !n.is_multiple_of(base.cols) {
        return Err(LdpcError::Unsupported { rate, n });
    }
    let z = n / base.cols;
    // 802.16e defines z = 24, 28, ..., z0.
    if z < 24 || z > base.z0 || !z.is_multiple_of(4) {
        return Err(LdpcError::Unsupported { rate, n });
    }
    let mut code = QcLdpcCode::from_base(&base.adapted(z, rate.shift_rule()))?;
    code.rate = Some(rate);
    Ok(code)
}

/// Loads a base matrix asset from disk and expands it with factor `z`
/// using floor scaling.
pub fn load_code_from_file(path: &Path, z: usize) -> Result<QcLdpcCode, LdpcError> {
    let text = std::fs::read_to_string(path).map_err(|e| LdpcError::Asset {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = BaseMatrix::parse(&text)?;
    QcLdpcCode::from_base(&base.adapted(z, ShiftRule::Floor))
}

impl QcLdpcCode {
    /// Expands a base matrix whose shifts are already adapted to its `z0`.
    pub fn from_base(base: &BaseMatrix) -> Result<Self, LdpcError> {
        let (mb, nb, z) = (base.rows, base.cols, base.z0);
        if mb < 2 || nb <= mb || z == 0 {
            return Err(LdpcError::Malformed(format!(
                "unusable dimensions {mb}×{nb}, z = {z}"
            )));
        }
        let kb = nb - mb;

        // Dual diagonal: parity column kb + t sits on rows t - 1 and t.
        for t in 1..mb {
            for r in 0..mb {
                let p = base.at(r, kb + t);
                let on_diag = r + 1 == t || r == t;
                if on_diag && p != 0 || !on_diag && p != -1 {
                    return Err(LdpcError::NotEncodable(format!(
                        "base entry ({r}, {}) = {p}",
                        kb + t
                    )));
                }
            }
        }
        // h_b column: shifts must cancel pairwise down to a single circulant.
        let mut residual: Vec<usize> = Vec::new();
        for r in 0..mb {
            let p = base.at(r, kb);
            if p >= 0 {
                let p = p as usize;
                if let Some(pos) = residual.iter().position(|&q| q == p) {
                    residual.swap_remove(pos);
                } else {
                    residual.push(p);
                }
            }
        }
        let [hb_total_shift] = residual[..] else {
            return Err(LdpcError::NotEncodable(format!(
                "h_b column sums to {} circulants",
                residual.len()
            )));
        };

        let n = nb * z;
        let m = mb * z;
        let mut check_ptr = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        check_ptr.push(0);
        for bi in 0..mb {
            for r in 0..z {
                for bj in 0..nb {
                    let p = base.at(bi, bj);
                    if p >= 0 {
                        edge_var.push(bj * z + (r + p as usize) % z);
                    }
                }
                check_ptr.push(edge_var.len());
            }
        }
        let mut degree = vec![0usize; n];
        for &v in &edge_var {
            degree[v] += 1;
        }
        let mut var_ptr = vec![0usize; n + 1];
        for v in 0..n {
            var_ptr[v + 1] = var_ptr[v] + degree[v];
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0usize; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v]] = e;
            fill[v] += 1;
        }

        Ok(Self {
            rate: None,
            base: base.clone(),
            z,
            n,
            k: kb * z,
            m,
            check_ptr,
            edge_var,
            var_ptr,
            var_edges,
            hb_total_shift,
        })
    }

    pub fn rate_id(&self) -> Option<RateId> {
        self.rate
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn base_matrix(&self) -> &BaseMatrix {
        &self.base
    }

    /// Expansion factor.
    pub fn z(&self) -> usize {
        self.z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of parity checks.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Variable indices of check `c`.
    pub fn check_vars(&self, c: usize) -> &[usize] {
        &self.edge_var[self.check_ptr[c]..self.check_ptr[c + 1]]
    }

    /// Systematic encoding: the first `k` codeword bits are `info`.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, LdpcError> {
        if info.len() != self.k {
            return Err(LdpcError::Length {
                expected: self.k,
                got: info.len(),
            });
        }
        let (mb, nb, z) = (self.base.rows, self.base.cols, self.z);
        let kb = nb - mb;

        // lambda_i = sum_j P^{s_ij} u_j over the information blocks.
        let mut lambda = vec![0u8; mb * z];
        for bi in 0..mb {
            let acc = &mut lambda[bi * z..(bi + 1) * z];
            for bj in 0..kb {
                let p = self.base.at(bi, bj);
                if p < 0 {
                    continue;
                }
                let block = &info[bj * z..(bj + 1) * z];
                let p = p as usize;
                for (r, a) in acc.iter_mut().enumerate() {
                    *a ^= block[(r + p) % z] & 1;
                }
            }
        }

        let mut codeword = vec![0u8; self.n];
        for (c, &u) in codeword.iter_mut().zip(info) {
            *c = u & 1;
        }

        // Summing every block row cancels the dual diagonal, leaving
        // P^{s} p0 = sum_i lambda_i.
        let mut sum = vec![0u8; z];
        for bi in 0..mb {
            for r in 0..z {
                sum[r] ^= lambda[bi * z + r];
            }
        }
        let s = self.hb_total_shift;
        let mut p0 = vec![0u8; z];
        for t in 0..z {
            p0[t] = sum[(t + z - s) % z];
        }

        // Forward substitution down the dual diagonal.
        let mut prev = vec![0u8; z];
        let mut next = vec![0u8; z];
        for bi in 0..mb - 1 {
            let hb = self.base.at(bi, kb);
            for r in 0..z {
                let mut v = lambda[bi * z + r];
                if bi > 0 {
                    v ^= prev[r];
                }
                if hb >= 0 {
                    v ^= p0[(r + hb as usize) % z];
                }
                next[r] = v;
            }
            let off = (kb + bi + 1) * z;
            codeword[off..off + z].copy_from_slice(&next);
            std::mem::swap(&mut prev, &mut next);
        }
        codeword[kb * z..(kb + 1) * z].copy_from_slice(&p0);
        Ok(codeword)
    }

    /// `H·bits` over GF(2).
    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        (0..self.m)
            .map(|c| {
                self.check_vars(c)
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ (bits[v] & 1))
            })
            .collect()
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n
            && (0..self.m).all(|c| {
                self.check_vars(c)
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ (bits[v] & 1))
                    == 0
            })
    }

    /// Belief-propagation decoding with early stopping on a zero syndrome.
    pub fn decode(
        &self,
        llrs: &[f64],
        max_iter: usize,
        kind: DecoderKind,
    ) -> Result<DecodeOutcome, LdpcError> {
        if llrs.len() != self.n {
            return Err(LdpcError::Length {
                expected: self.n,
                got: llrs.len(),
            });
        }
        if let Some(pos) = llrs.iter().position(|l| !l.is_finite()) {
            return Err(LdpcError::NonFiniteLlr(pos));
        }

        let mut hard: Vec<u8> = llrs.iter().map(|&l| (l < 0.0) as u8).collect();
        if self.is_codeword(&hard) {
            return Ok(self.outcome(hard, 0, true));
        }

        let edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llrs[v]).collect();
        let mut c2v = vec![0.0f64; edges];
        let mut scratch = Vec::new();

        for iteration in 1..=max_iter {
            for c in 0..self.m {
                let range = self.check_ptr[c]..self.check_ptr[c + 1];
                match kind {
                    DecoderKind::SumProduct => {
                        check_update_spa(&v2c[range.clone()], &mut c2v[range], &mut scratch)
                    }
                    DecoderKind::MinSum(alpha) => {
                        check_update_min_sum(&v2c[range.clone()], &mut c2v[range], alpha)
                    }
                }
            }
            for v in 0..self.n {
                let es = &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]];
                let total = llrs[v] + es.iter().map(|&e| c2v[e]).sum::<f64>();
                for &e in es {
                    v2c[e] = total - c2v[e];
                }
                hard[v] = (total < 0.0) as u8;
            }
            if self.is_codeword(&hard) {
                return Ok(self.outcome(hard, iteration, true));
            }
        }
        Ok(self.outcome(hard, max_iter, false))
    }

    fn outcome(&self, hard_bits: Vec<u8>, iterations: usize, converged: bool) -> DecodeOutcome {
        DecodeOutcome {
            info_bits: hard_bits[..self.k].to_vec(),
            hard_bits,
            iterations,
            converged,
        }
    }
}

const TANH_LIMIT: f64 = 1.0 - 1e-15;

/// Tanh rule with forward/backward products, so no division is needed.
fn check_update_spa(incoming: &[f64], outgoing: &mut [f64], scratch: &mut Vec<f64>) {
    let d = incoming.len();
    scratch.clear();
    scratch.extend(incoming.iter().map(|&l| (0.5 * l).tanh()));
    // outgoing temporarily holds prefix products.
    let mut acc = 1.0;
    for i in 0..d {
        outgoing[i] = acc;
        acc *= scratch[i];
    }
    let mut suffix = 1.0;
    for i in (0..d).rev() {
        let t = (outgoing[i] * suffix).clamp(-TANH_LIMIT, TANH_LIMIT);
        outgoing[i] = ((1.0 + t) / (1.0 - t)).ln();
        suffix *= scratch[i];
    }
}

fn check_update_min_sum(incoming: &[f64], outgoing: &mut [f64], alpha: f64) {
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut arg = 0;
    let mut sign = false;
    for (i, &l) in incoming.iter().enumerate() {
        let a = l.abs();
        sign ^= l < 0.0;
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, (o, &l)) in outgoing.iter_mut().zip(incoming).enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let s = sign ^ (l < 0.0);
        *o = if s { -alpha * mag } else { alpha * mag };
    }
}
