//! Gray-mapped hierarchical QAM.
//!
//! A `4^P`-ary constellation is built as a sum of `P` nested 4-QAM layers.
//! Layer `p` contributes an offset of `±d_p/2` per real dimension, so every
//! point decomposes as `x = x_1 + x_2 + ... + x_P` and, for two layers, as
//! `x = x_b + x_e`.
//!
//! # Labels
//!
//! A label is a bit string of length `2P`; bits `2p` and `2p + 1` belong to
//! layer `p` (base layer first). Bit `2p` drives the in-phase dimension and
//! bit `2p + 1` the quadrature dimension. Points are stored indexed by label,
//! with the first bit of the string as the most significant bit of the index.
//!
//! Within one real dimension the sign of the layer-`p` offset is the product
//! of `(1 - 2b)` over that dimension's bits of layers `0..=p`. Each layer's
//! quadrant code is therefore `00 -> (+,+)`, `01 -> (+,-)`, `11 -> (-,-)`,
//! `10 -> (-,+)` relative to the enclosing quadrant, and the whole labelling
//! is binary-reflected Gray per dimension. With `P = 2` and ratio 2 this is
//! exactly Gray 16-QAM with per-dimension levels `3, 1, -1, -3` (times
//! `1/sqrt(10)`) labelled `00, 01, 11, 10`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HqamError {
    #[error("a hierarchical constellation needs at least one layer")]
    NoLayers,
    #[error("{layers} layers need {expected} constellation ratios, got {got}")]
    RatioCount {
        layers: usize,
        expected: usize,
        got: usize,
    },
    #[error("constellation ratio {index} must be positive and finite, got {value}")]
    NonPositiveRatio { index: usize, value: f64 },
    #[error("expected a {expected}-bit label, got {got} bits")]
    BitLength { expected: usize, got: usize },
    #[error("label bits must be 0 or 1, got {0}")]
    InvalidBit(u8),
}

/// Layer count and minimum-distance ratios `d_p / d_{p+1}` between
/// consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct HqamParams {
    layers: usize,
    ratios: Vec<f64>,
}

impl HqamParams {
    pub fn new(layers: usize, ratios: Vec<f64>) -> Result<Self, HqamError> {
        if layers == 0 {
            return Err(HqamError::NoLayers);
        }
        if ratios.len() != layers - 1 {
            return Err(HqamError::RatioCount {
                layers,
                expected: layers - 1,
                got: ratios.len(),
            });
        }
        for (index, &value) in ratios.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(HqamError::NonPositiveRatio { index, value });
            }
        }
        Ok(Self { layers, ratios })
    }

    /// Plain 4-QAM.
    pub fn qam4() -> Self {
        Self {
            layers: 1,
            ratios: Vec::new(),
        }
    }

    /// Two-layer 16-HQAM with constellation ratio `d`.
    pub fn hqam16(d: f64) -> Result<Self, HqamError> {
        Self::new(2, vec![d])
    }

    /// Uniform Gray `4^P`-QAM (every ratio equal to 2).
    pub fn uniform(layers: usize) -> Result<Self, HqamError> {
        Self::new(layers, vec![2.0; layers.saturating_sub(1)])
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }
}

/// In-phase/quadrature sign pattern of the 4-QAM sub-constellation index
/// `c = 2·bit_i + bit_q`, following the quadrant code above.
#[inline]
fn quadrant_signs(c: usize) -> (f64, f64) {
    let si = if c & 0b10 == 0 { 1.0 } else { -1.0 };
    let sq = if c & 0b01 == 0 { 1.0 } else { -1.0 };
    (si, sq)
}

/// A hierarchical constellation with its per-layer decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredConstellation {
    layers: usize,
    points: Vec<Complex64>,
    /// `components[label * layers + p]` is the layer-`p` offset of `points[label]`.
    components: Vec<Complex64>,
    layer_centroids: Vec<[Complex64; 4]>,
    layer_energy: Vec<f64>,
    layer_min_distance: Vec<f64>,
}

/// Builds the constellation described by `params`.
pub fn build_hqam(params: &HqamParams) -> LayeredConstellation {
    let layers = params.layers;

    // d_p = d_P · prod_{q >= p} ratio_q, then normalise so that sum d_p^2 / 2 = 1.
    let mut rel = vec![1.0; layers];
    for p in (0..layers - 1).rev() {
        rel[p] = rel[p + 1] * params.ratios[p];
    }
    let norm = (rel.iter().map(|r| r * r / 2.0).sum::<f64>()).sqrt();
    let layer_min_distance: Vec<f64> = rel.iter().map(|r| r / norm).collect();
    let layer_energy: Vec<f64> = layer_min_distance.iter().map(|d| d * d / 2.0).collect();

    let layer_centroids: Vec<[Complex64; 4]> = layer_min_distance
        .iter()
        .map(|&d| {
            let mut c = [Complex64::new(0.0, 0.0); 4];
            for (idx, slot) in c.iter_mut().enumerate() {
                let (si, sq) = quadrant_signs(idx);
                *slot = Complex64::new(si * d / 2.0, sq * d / 2.0);
            }
            c
        })
        .collect();

    let size = 1usize << (2 * layers);
    let mut points = Vec::with_capacity(size);
    let mut components = Vec::with_capacity(size * layers);
    for label in 0..size {
        let (mut sign_i, mut sign_q) = (1.0, 1.0);
        let mut point = Complex64::new(0.0, 0.0);
        for p in 0..layers {
            let shift = 2 * (layers - 1 - p);
            let (ti, tq) = quadrant_signs((label >> shift) & 0b11);
            sign_i *= ti;
            sign_q *= tq;
            let half = layer_min_distance[p] / 2.0;
            let comp = Complex64::new(sign_i * half, sign_q * half);
            components.push(comp);
            point += comp;
        }
        points.push(point);
    }

    LayeredConstellation {
        layers,
        points,
        components,
        layer_centroids,
        layer_energy,
        layer_min_distance,
    }
}

impl LayeredConstellation {
    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Bits per symbol, `2P`.
    pub fn bits_per_symbol(&self) -> usize {
        2 * self.layers
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn layer_centroids(&self, layer: usize) -> &[Complex64; 4] {
        &self.layer_centroids[layer]
    }

    pub fn layer_energy(&self) -> &[f64] {
        &self.layer_energy
    }

    pub fn layer_min_distance(&self) -> &[f64] {
        &self.layer_min_distance
    }

    /// Energy carried by layers `from..P`.
    pub fn residual_energy(&self, from: usize) -> f64 {
        self.layer_energy[from..].iter().sum()
    }

    /// Label index of a `2P`-bit string.
    pub fn label_of(&self, bits: &[u8]) -> Result<usize, HqamError> {
        let expected = self.bits_per_symbol();
        if bits.len() != expected {
            return Err(HqamError::BitLength {
                expected,
                got: bits.len(),
            });
        }
        bits.iter().try_fold(0usize, |acc, &b| match b {
            0 | 1 => Ok((acc << 1) | b as usize),
            other => Err(HqamError::InvalidBit(other)),
        })
    }

    /// Bit string of a label, most significant bit first.
    pub fn label_bits(&self, label: usize) -> Vec<u8> {
        let m = self.bits_per_symbol();
        (0..m).map(|k| ((label >> (m - 1 - k)) & 1) as u8).collect()
    }

    /// The two bits of layer `layer` within `label`.
    #[inline]
    pub fn layer_bits(&self, label: usize, layer: usize) -> usize {
        (label >> (2 * (self.layers - 1 - layer))) & 0b11
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<Complex64, HqamError> {
        Ok(self.points[self.label_of(bits)?])
    }

    /// Per-layer components `[x_1, ..., x_P]` of the symbol labelled `bits`.
    pub fn split_layers(&self, bits: &[u8]) -> Result<Vec<Complex64>, HqamError> {
        let label = self.label_of(bits)?;
        Ok(self.components_of(label).to_vec())
    }

    #[inline]
    pub fn components_of(&self, label: usize) -> &[Complex64] {
        &self.components[label * self.layers..(label + 1) * self.layers]
    }

    /// Layer-`layer` component of the point `label`.
    #[inline]
    pub fn component(&self, label: usize, layer: usize) -> Complex64 {
        self.components[label * self.layers + layer]
    }

    /// Sum of components `0..upto` of `label`, i.e. the part of the symbol
    /// known once the first `upto` layers are decided.
    pub fn partial_sum(&self, label: usize, upto: usize) -> Complex64 {
        self.components_of(label)[..upto].iter().sum()
    }

    /// The four layer-`layer` candidates given the bits of the preceding
    /// layers in `prefix_label` (a full label whose bits for layers
    /// `layer..P` are ignored). Entry `c` is the component whose layer bits
    /// equal `c`.
    pub fn layer_candidates(&self, prefix_label: usize, layer: usize) -> [Complex64; 4] {
        let shift = 2 * (self.layers - 1 - layer);
        let keep = !((1usize << (shift + 2)) - 1);
        let base = prefix_label & keep;
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.component(base | (c << shift), layer);
        }
        out
    }

    /// Nearest point to `z / scale`; see [`hard_demap`].
    pub fn hard_demap(&self, z: Complex64, scale: f64) -> usize {
        hard_demap(&self.points, z, scale)
    }
}

/// Index of the point `c` of `points` minimising `|z - scale·c|^2`. Ties go
/// to the lowest index.
pub fn hard_demap(points: &[Complex64], z: Complex64, scale: f64) -> usize {
    let mut best = 0;
    let mut best_metric = f64::INFINITY;
    for (idx, &c) in points.iter().enumerate() {
        let metric = (z - c * scale).norm_sqr();
        if metric < best_metric {
            best_metric = metric;
            best = idx;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn rejects_bad_params() {
        assert_eq!(HqamParams::new(0, vec![]), Err(HqamError::NoLayers));
        assert!(matches!(
            HqamParams::new(2, vec![0.0]),
            Err(HqamError::NonPositiveRatio { index: 0, .. })
        ));
        assert!(matches!(
            HqamParams::new(3, vec![2.0, -1.0]),
            Err(HqamError::NonPositiveRatio { index: 1, .. })
        ));
        assert!(matches!(
            HqamParams::new(2, vec![]),
            Err(HqamError::RatioCount { .. })
        ));
        assert!(HqamParams::new(2, vec![f64::NAN]).is_err());
    }

    #[test]
    fn qam4_levels() {
        let c = build_hqam(&HqamParams::qam4());
        assert_eq!(c.points().len(), 4);
        let l = 1.0 / 2f64.sqrt();
        for p in c.points() {
            assert_close(p.re.abs(), l, 1e-15);
            assert_close(p.im.abs(), l, 1e-15);
        }
        assert_close(c.layer_energy()[0], 1.0, 1e-15);
        assert_eq!(c.point(0), Complex64::new(l, l));
        assert_eq!(c.point(0b01), Complex64::new(l, -l));
        assert_eq!(c.point(0b11), Complex64::new(-l, -l));
        assert_eq!(c.point(0b10), Complex64::new(-l, l));
    }

    #[test]
    fn hqam16_energy_split() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        assert_close(c.layer_energy()[0], 0.8, 1e-12);
        assert_close(c.layer_energy()[1], 0.2, 1e-12);

        let c = build_hqam(&HqamParams::hqam16(4.0).unwrap());
        assert_close(c.layer_energy()[0], 16.0 / 17.0, 1e-12);
        assert_close(c.layer_min_distance()[1], (2.0f64 / 17.0).sqrt(), 1e-12);
    }

    #[test]
    fn empirical_base_energy_matches_layer_energy() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let mean: f64 = (0..16).map(|l| c.component(l, 0).norm_sqr()).sum::<f64>() / 16.0;
        assert_close(mean, 0.8, 1e-12);
    }

    #[test]
    fn hqam16_levels_for_d2() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let u = 1.0 / 10f64.sqrt();
        let mut levels: Vec<f64> = c.points().iter().map(|p| p.re).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let expected = [-3.0 * u, -u, u, 3.0 * u];
        assert_eq!(levels.len(), 4);
        for (a, b) in levels.iter().zip(expected) {
            assert_close(*a, b, 1e-12);
        }
    }

    #[test]
    fn map_bits_determinism_and_errors() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        let u = 1.0 / 10f64.sqrt();
        let p = c.map_bits(&[0, 0, 0, 0]).unwrap();
        assert_close(p.re, 3.0 * u, 1e-12);
        assert_close(p.im, 3.0 * u, 1e-12);
        assert_eq!(p, c.map_bits(&[0, 0, 0, 0]).unwrap());
        assert_eq!(
            c.map_bits(&[0, 1, 0]),
            Err(HqamError::BitLength {
                expected: 4,
                got: 3
            })
        );
        assert_eq!(c.map_bits(&[0, 2, 0, 0]), Err(HqamError::InvalidBit(2)));
    }

    #[test]
    fn map_bits_is_bijective() {
        for d in [1.5, 2.0, 4.0] {
            let c = build_hqam(&HqamParams::hqam16(d).unwrap());
            for a in 0..16 {
                for b in (a + 1)..16 {
                    assert!((c.point(a) - c.point(b)).norm() > 1e-9);
                }
                assert_eq!(c.label_of(&c.label_bits(a)).unwrap(), a);
            }
        }
    }

    #[test]
    fn flipping_both_base_bits_moves_to_opposite_quadrant() {
        for d in [1.3, 2.0, 3.0, 8.0] {
            let c = build_hqam(&HqamParams::hqam16(d).unwrap());
            for label in 0..16 {
                let flipped = label ^ 0b1100;
                let (a, b) = (c.point(label), c.point(flipped));
                assert!(a.re * b.re < 0.0 && a.im * b.im < 0.0);
            }
        }
    }

    #[test]
    fn split_layers_sums_to_point() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        for label in 0..16 {
            let bits = c.label_bits(label);
            let parts = c.split_layers(&bits).unwrap();
            let sum: Complex64 = parts.iter().sum();
            assert!((sum - c.map_bits(&bits).unwrap()).norm() < 1e-12);
            for (p, part) in parts.iter().enumerate() {
                assert!(c
                    .layer_centroids(p)
                    .iter()
                    .any(|q| (q - part).norm() < 1e-15));
            }
        }
    }

    #[test]
    fn single_layer_split_has_no_enhancement() {
        let c = build_hqam(&HqamParams::qam4());
        for label in 0..4 {
            let parts = c.split_layers(&c.label_bits(label)).unwrap();
            assert_eq!(parts.len(), 1);
            assert_eq!(parts[0], c.point(label));
        }
    }

    #[test]
    fn per_layer_gray_adjacency() {
        // Adjacent levels along one dimension differ in exactly one bit of
        // that dimension.
        let c = build_hqam(&HqamParams::new(3, vec![2.5, 1.7]).unwrap());
        let m = c.bits_per_symbol();
        let i_mask: usize = (0..c.layers()).map(|p| 1 << (m - 1 - 2 * p)).sum();
        let mut by_level: Vec<(f64, usize)> = (0..c.points().len())
            .filter(|l| l & !i_mask == 0)
            .map(|l| (c.point(l).re, l))
            .collect();
        by_level.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in by_level.windows(2) {
            assert_eq!((w[0].1 ^ w[1].1).count_ones(), 1);
        }
    }

    #[test]
    fn layer_candidates_follow_prefix() {
        let c = build_hqam(&HqamParams::hqam16(2.5).unwrap());
        for base in 0..4 {
            let cands = c.layer_candidates(base << 2, 1);
            for (e, cand) in cands.iter().enumerate() {
                assert_eq!(*cand, c.component((base << 2) | e, 1));
            }
        }
        assert_eq!(c.layer_candidates(0, 0), *c.layer_centroids(0));
    }

    #[test]
    fn hard_demap_exact_point_and_tie() {
        let c = build_hqam(&HqamParams::hqam16(2.0).unwrap());
        for label in 0..16 {
            assert_eq!(c.hard_demap(c.point(label) * 0.7, 0.7), label);
        }
        let q = build_hqam(&HqamParams::qam4());
        assert_eq!(q.hard_demap(Complex64::new(0.0, 0.0), 1.0), 0);
    }
}
