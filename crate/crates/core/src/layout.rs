//! Placement of codeword bits on symbol labels.
//!
//! Symbol `t` is sent on antenna `t mod N_t` of vector `floor(t / N_t)`.

/// How codewords feed the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolLayout {
    /// One codeword per layer; symbol `t` takes bits `2t, 2t+1` of every
    /// layer's codeword.
    Layered { layers: usize },
    /// One codeword for the whole constellation; symbol `t` takes bits
    /// `m·t .. m·t + m`.
    Single { bits_per_symbol: usize },
}

impl SymbolLayout {
    pub fn codewords(&self) -> usize {
        match *self {
            SymbolLayout::Layered { layers } => layers,
            SymbolLayout::Single { .. } => 1,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        match *self {
            SymbolLayout::Layered { layers } => 2 * layers,
            SymbolLayout::Single { bits_per_symbol } => bits_per_symbol,
        }
    }

    /// Length of each codeword for a frame of `symbols` symbols.
    pub fn codeword_len(&self, symbols: usize) -> usize {
        match *self {
            SymbolLayout::Layered { .. } => 2 * symbols,
            SymbolLayout::Single { bits_per_symbol } => bits_per_symbol * symbols,
        }
    }

    /// `(codeword, index)` carrying label bit `bit` of symbol `t`.
    #[inline]
    pub fn position(&self, t: usize, bit: usize) -> (usize, usize) {
        match *self {
            SymbolLayout::Layered { .. } => (bit / 2, 2 * t + bit % 2),
            SymbolLayout::Single { bits_per_symbol } => (0, bits_per_symbol * t + bit),
        }
    }

    /// Label of symbol `t` assembled from the codewords.
    pub fn label(&self, codewords: &[Vec<u8>], t: usize) -> usize {
        let m = self.bits_per_symbol();
        (0..m).fold(0usize, |acc, b| {
            let (cw, idx) = self.position(t, b);
            (acc << 1) | (codewords[cw][idx] & 1) as usize
        })
    }
}
