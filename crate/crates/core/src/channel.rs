//! Flat Rayleigh MIMO channel, `y = (1/sqrt(N_t))·H·x + n`.
//!
//! Either every transmitted vector sees a fresh channel matrix
//! ([`FadingMode::PerVectorIid`]) or a frame of `V` vectors is split into `F`
//! equal blocks with one independent matrix per block
//! ([`FadingMode::BlockFading`]); vector `v` uses block `floor(v·F/V)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("N_t ≤ N_r required (got N_t = {nt}, N_r = {nr})")]
    MoreTransmitThanReceive { nt: usize, nr: usize },
    #[error("antenna counts must be positive")]
    NoAntennas,
    #[error("at least one fading block is required")]
    NoBlocks,
    #[error("{vectors} vectors cannot be split into {blocks} equal blocks")]
    UnevenBlocks { vectors: usize, blocks: usize },
    #[error("expected {expected} symbols, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingMode {
    PerVectorIid,
    BlockFading,
}

impl fmt::Display for FadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FadingMode::PerVectorIid => "per_vector_iid",
            FadingMode::BlockFading => "block_fading",
        })
    }
}

impl FromStr for FadingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_vector_iid" => Ok(FadingMode::PerVectorIid),
            "block_fading" => Ok(FadingMode::BlockFading),
            _ => Err(format!(
                "expected per_vector_iid or block_fading, got {s:?}"
            )),
        }
    }
}

/// Zero-mean circularly symmetric complex Gaussian with total variance `var`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Channel matrices for one frame plus the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    nt: usize,
    nr: usize,
    vectors: usize,
    mode: FadingMode,
    n0: f64,
    blocks: Vec<CMatrix>,
}

/// Draws the channel for a frame of `vectors` transmit vectors.
///
/// In block mode `f` independent matrices are drawn; in per-vector mode one
/// matrix per vector is drawn and `f` is ignored.
pub fn draw_channel<R: Rng + ?Sized>(
    nt: usize,
    nr: usize,
    f: usize,
    mode: FadingMode,
    vectors: usize,
    n0: f64,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    if nt == 0 || nr == 0 {
        return Err(ChannelError::NoAntennas);
    }
    if nt > nr {
        return Err(ChannelError::MoreTransmitThanReceive { nt, nr });
    }
    let count = match mode {
        FadingMode::PerVectorIid => vectors,
        FadingMode::BlockFading => {
            if f == 0 {
                return Err(ChannelError::NoBlocks);
            }
            if !vectors.is_multiple_of(f) {
                return Err(ChannelError::UnevenBlocks { vectors, blocks: f });
            }
            f
        }
    };
    let blocks = (0..count)
        .map(|_| CMatrix::from_fn(nr, nt, |_, _| complex_gaussian(rng, 1.0)))
        .collect();
    Ok(ChannelRealization {
        nt,
        nr,
        vectors,
        mode,
        n0,
        blocks,
    })
}

impl ChannelRealization {
    /// Builds a realization from explicit matrices (one per block).
    pub fn from_blocks(
        blocks: Vec<CMatrix>,
        mode: FadingMode,
        vectors: usize,
        n0: f64,
    ) -> Result<Self, ChannelError> {
        let first = blocks.first().ok_or(ChannelError::NoBlocks)?;
        let (nr, nt) = first.shape();
        if nt == 0 || nr == 0 {
            return Err(ChannelError::NoAntennas);
        }
        if nt > nr {
            return Err(ChannelError::MoreTransmitThanReceive { nt, nr });
        }
        let expected = match mode {
            FadingMode::PerVectorIid => vectors,
            FadingMode::BlockFading => blocks.len(),
        };
        if blocks.len() != expected || !vectors.is_multiple_of(blocks.len()) {
            return Err(ChannelError::UnevenBlocks {
                vectors,
                blocks: blocks.len(),
            });
        }
        Ok(Self {
            nt,
            nr,
            vectors,
            mode,
            n0,
            blocks,
        })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn vectors(&self) -> usize {
        self.vectors
    }

    pub fn mode(&self) -> FadingMode {
        self.mode
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn set_n0(&mut self, n0: f64) {
        self.n0 = n0;
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    /// Index into [`blocks`](Self::blocks) used by vector `v`.
    #[inline]
    pub fn block_of(&self, v: usize) -> usize {
        v * self.blocks.len() / self.vectors
    }

    /// Vectors belonging to block `b`.
    pub fn vectors_in_block(&self, b: usize) -> std::ops::Range<usize> {
        let per = self.vectors / self.blocks.len();
        b * per..(b + 1) * per
    }

    #[inline]
    pub fn matrix_for_vector(&self, v: usize) -> &CMatrix {
        &self.blocks[self.block_of(v)]
    }
}

/// Passes `x` (vector-major, `V·N_t` symbols) through the channel and adds
/// noise of total variance `n0` per receive component. Returns `V·N_r`
/// received samples, vector-major.
pub fn transmit<R: Rng + ?Sized>(
    x: &[Complex64],
    ch: &ChannelRealization,
    rng: &mut R,
) -> Result<Vec<Complex64>, ChannelError> {
    let (nt, nr, v) = (ch.nt, ch.nr, ch.vectors);
    if x.len() != v * nt {
        return Err(ChannelError::Dimension {
            expected: v * nt,
            got: x.len(),
        });
    }
    let scale = 1.0 / (nt as f64).sqrt();
    let mut y = Vec::with_capacity(v * nr);
    for vi in 0..v {
        let h = ch.matrix_for_vector(vi);
        let xv = &x[vi * nt..(vi + 1) * nt];
        for r in 0..nr {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &xt) in xv.iter().enumerate() {
                acc += h[(r, t)] * xt;
            }
            let noise = if ch.n0 > 0.0 {
                complex_gaussian(rng, ch.n0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            y.push(acc * scale + noise);
        }
    }
    Ok(y)
}

/// How `E_b/N_0` maps to the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EbN0Convention {
    /// `n0 = 1 / (EbN0 · R · m)`: unit received energy per receive
    /// dimension carrying `R·m` information bits.
    #[default]
    PerStream,
    /// `n0 = 1 / (EbN0 · R · m · N_t)`: the `R·m·N_t` information bits of a
    /// whole vector share the unit received energy of one receive dimension.
    PerVector,
}

impl fmt::Display for EbN0Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EbN0Convention::PerStream => "per_stream",
            EbN0Convention::PerVector => "per_vector",
        })
    }
}

impl FromStr for EbN0Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_stream" => Ok(EbN0Convention::PerStream),
            "per_vector" => Ok(EbN0Convention::PerVector),
            _ => Err(format!("expected per_stream or per_vector, got {s:?}")),
        }
    }
}

/// An operating point: `E_b/N_0` in dB, overall code rate and bits per
/// stream symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbN0Point {
    pub ebn0_db: f64,
    pub rate: f64,
    pub bits_per_symbol: usize,
}

impl EbN0Point {
    pub fn new(ebn0_db: f64, rate: f64, bits_per_symbol: usize) -> Self {
        Self {
            ebn0_db,
            rate,
            bits_per_symbol,
        }
    }

    pub fn n0(&self) -> f64 {
        ebn0_to_n0(self)
    }

    pub fn n0_with(&self, convention: EbN0Convention, nt: usize) -> f64 {
        match convention {
            EbN0Convention::PerStream => ebn0_to_n0(self),
            EbN0Convention::PerVector => ebn0_to_n0(self) / nt as f64,
        }
    }
}

pub fn ebn0_to_n0(pt: &EbN0Point) -> f64 {
    1.0 / (10f64.powf(pt.ebn0_db / 10.0) * pt.rate * pt.bits_per_symbol as f64)
}
