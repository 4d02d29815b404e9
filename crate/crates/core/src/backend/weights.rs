//! Transformer parameters, seeded initialization and the `LEAPW1` file
//! format.
//!
//! File layout: the 6-byte magic `LEAPW1`, seven little-endian `u32` header
//! words `(d_model, n_heads, n_layers, d_ffn, vocab, max_pos, 0)`, then every
//! tensor as little-endian `f32`, row-major, in the order [`DenoiserWeights`]
//! declares them.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{LeapError, Result};
use crate::rng::SplitMix64;

pub const MAGIC: &[u8; 6] = b"LEAPW1";
const HEADER_WORDS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    pub vocab: usize,
    pub max_pos: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let Dims { d_model, n_heads, n_layers, d_ffn, vocab, max_pos } = *self;
        if d_model == 0 || n_heads == 0 || n_layers == 0 || d_ffn == 0 || max_pos == 0 {
            return Err(LeapError::invalid(format!("zero dimension in {self:?}")));
        }
        if vocab < 2 {
            return Err(LeapError::invalid("vocabulary needs at least two tokens"));
        }
        if d_model % n_heads != 0 {
            return Err(LeapError::invalid(format!("d_model {d_model} not divisible by n_heads {n_heads}")));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total number of `f32` parameters.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let f = self.d_ffn;
        let per_layer = 2 * d + 4 * d * d + 2 * d + d * f + f + f * d + d;
        self.vocab * d + self.n_layers * per_layer + 2 * d + d * self.vocab
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm_scale: Array1<f32>,
    pub attn_norm_bias: Array1<f32>,
    pub wq: Array2<f32>,
    pub wk: Array2<f32>,
    pub wv: Array2<f32>,
    pub wo: Array2<f32>,
    pub ffn_norm_scale: Array1<f32>,
    pub ffn_norm_bias: Array1<f32>,
    pub ffn_in: Array2<f32>,
    pub ffn_in_bias: Array1<f32>,
    pub ffn_out: Array2<f32>,
    pub ffn_out_bias: Array1<f32>,
}

/// Parameters of the tiny bidirectional transformer. Field order here is the
/// serialization and seeded-fill order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserWeights {
    pub dims: Dims,
    pub token_embedding: Array2<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm_scale: Array1<f32>,
    pub final_norm_bias: Array1<f32>,
    pub unembedding: Array2<f32>,
}

enum Slot<'a> {
    Matrix(&'a mut Array2<f32>),
    Vector(&'a mut Array1<f32>),
}

impl DenoiserWeights {
    /// Unit norm scales, zero biases, zero matrices.
    fn blank(dims: Dims) -> Self {
        let d = dims.d_model;
        let f = dims.d_ffn;
        let layer = LayerWeights {
            attn_norm_scale: Array1::ones(d),
            attn_norm_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ffn_norm_scale: Array1::ones(d),
            ffn_norm_bias: Array1::zeros(d),
            ffn_in: Array2::zeros((d, f)),
            ffn_in_bias: Array1::zeros(f),
            ffn_out: Array2::zeros((f, d)),
            ffn_out_bias: Array1::zeros(d),
        };
        Self {
            dims,
            token_embedding: Array2::zeros((dims.vocab, d)),
            layers: vec![layer; dims.n_layers],
            final_norm_scale: Array1::ones(d),
            final_norm_bias: Array1::zeros(d),
            unembedding: Array2::zeros((d, dims.vocab)),
        }
    }

    fn slots_mut(&mut self) -> Vec<Slot<'_>> {
        let mut out = vec![Slot::Matrix(&mut self.token_embedding)];
        for l in &mut self.layers {
            out.push(Slot::Vector(&mut l.attn_norm_scale));
            out.push(Slot::Vector(&mut l.attn_norm_bias));
            out.push(Slot::Matrix(&mut l.wq));
            out.push(Slot::Matrix(&mut l.wk));
            out.push(Slot::Matrix(&mut l.wv));
            out.push(Slot::Matrix(&mut l.wo));
            out.push(Slot::Vector(&mut l.ffn_norm_scale));
            out.push(Slot::Vector(&mut l.ffn_norm_bias));
            out.push(Slot::Matrix(&mut l.ffn_in));
            out.push(Slot::Vector(&mut l.ffn_in_bias));
            out.push(Slot::Matrix(&mut l.ffn_out));
            out.push(Slot::Vector(&mut l.ffn_out_bias));
        }
        out.push(Slot::Vector(&mut self.final_norm_scale));
        out.push(Slot::Vector(&mut self.final_norm_bias));
        out.push(Slot::Matrix(&mut self.unembedding));
        out
    }

    fn for_each_tensor(&self, mut f: impl FnMut(&[f32])) {
        // Read-only twin of `slots_mut`; keep the two orders in sync.
        f(self.token_embedding.as_slice().expect("standard layout"));
        for l in &self.layers {
            for t in [&l.attn_norm_scale, &l.attn_norm_bias] {
                f(t.as_slice().expect("standard layout"));
            }
            for t in [&l.wq, &l.wk, &l.wv, &l.wo] {
                f(t.as_slice().expect("standard layout"));
            }
            for t in [&l.ffn_norm_scale, &l.ffn_norm_bias] {
                f(t.as_slice().expect("standard layout"));
            }
            f(l.ffn_in.as_slice().expect("standard layout"));
            f(l.ffn_in_bias.as_slice().expect("standard layout"));
            f(l.ffn_out.as_slice().expect("standard layout"));
            f(l.ffn_out_bias.as_slice().expect("standard layout"));
        }
        f(self.final_norm_scale.as_slice().expect("standard layout"));
        f(self.final_norm_bias.as_slice().expect("standard layout"));
        f(self.unembedding.as_slice().expect("standard layout"));
    }

    /// Deterministic Xavier-uniform initialization. Matrices draw from one
    /// SplitMix64 stream in field order, row-major, each entry uniform in
    /// `(-a, a)` with `a = sqrt(6 / (rows + cols))`. Norm scales are one and
    /// biases zero; vectors consume no draws.
    pub fn seeded(seed: u64, dims: Dims) -> Result<Self> {
        dims.validate()?;
        let mut w = Self::blank(dims);
        let mut rng = SplitMix64::new(seed);
        for slot in w.slots_mut() {
            if let Slot::Matrix(m) = slot {
                let (rows, cols) = m.dim();
                let a = (6.0 / (rows + cols) as f64).sqrt();
                for x in m.iter_mut() {
                    *x = ((2.0 * rng.next_f64() - 1.0) * a) as f32;
                }
            }
        }
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let mut finite = true;
        self.for_each_tensor(|t| finite &= t.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(LeapError::format("weights contain NaN or infinity"));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dims;
        out.write_all(MAGIC)?;
        for word in [d.d_model, d.n_heads, d.n_layers, d.d_ffn, d.vocab, d.max_pos, 0] {
            let word = u32::try_from(word).map_err(|_| LeapError::invalid("dimension does not fit in u32"))?;
            out.write_all(&word.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(d.param_count() * 4);
        self.for_each_tensor(|t| {
            for x in t {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        });
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header_len = MAGIC.len() + 4 * HEADER_WORDS;
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(LeapError::format("bad magic: not a LEAPW1 weight file"));
        }
        if bytes.len() < header_len {
            return Err(LeapError::format("truncated header"));
        }
        let word = |i: usize| {
            let at = MAGIC.len() + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        };
        let dims = Dims {
            d_model: word(0),
            n_heads: word(1),
            n_layers: word(2),
            d_ffn: word(3),
            vocab: word(4),
            max_pos: word(5),
        };
        if word(6) != 0 {
            return Err(LeapError::format("reserved header word must be zero"));
        }
        dims.validate().map_err(|e| LeapError::format(e.to_string()))?;
        let expected = dims
            .param_count()
            .checked_mul(4)
            .and_then(|n| n.checked_add(header_len))
            .ok_or_else(|| LeapError::format("header dimensions overflow"))?;
        if bytes.len() < expected {
            return Err(LeapError::format(format!(
                "truncated file: header declares {expected} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(LeapError::format(format!(
                "dimension mismatch: {} trailing bytes after declared tensors",
                bytes.len() - expected
            )));
        }
        let mut w = Self::blank(dims);
        let mut cursor = header_len;
        let mut take = |dst: &mut [f32]| {
            for x in dst.iter_mut() {
                *x = f32::from_le_bytes(bytes[cursor..cursor + 4].try_into().expect("4 bytes"));
                cursor += 4;
            }
        };
        for slot in w.slots_mut() {
            match slot {
                Slot::Matrix(m) => take(m.as_slice_mut().expect("standard layout")),
                Slot::Vector(v) => take(v.as_slice_mut().expect("standard layout")),
            }
        }
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { d_model: 8, n_heads: 2, n_layers: 2, d_ffn: 16, vocab: 6, max_pos: 32 }
    }

    #[test]
    fn seeded_is_deterministic() {
        let a = DenoiserWeights::seeded(42, dims()).unwrap().to_bytes();
        let b = DenoiserWeights::seeded(42, dims()).unwrap().to_bytes();
        let c = DenoiserWeights::seeded(43, dims()).unwrap().to_bytes();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn first_draw_follows_splitmix_stream() {
        let w = DenoiserWeights::seeded(0, dims()).unwrap();
        // Straight-line SplitMix64 for seed 0, first output.
        let z: u64 = 0xE220_A839_7B1D_CDAF;
        let u = (z >> 11) as f64 / (1u64 << 53) as f64;
        let a = (6.0f64 / (6 + 8) as f64).sqrt();
        assert_eq!(w.token_embedding[[0, 0]], ((2.0 * u - 1.0) * a) as f32);
    }

    #[test]
    fn entries_within_xavier_bound() {
        let w = DenoiserWeights::seeded(5, dims()).unwrap();
        let a = (6.0f32 / 24.0).sqrt();
        assert!(w.layers[0].ffn_in.iter().all(|x| x.abs() <= a));
        assert!(w.layers[1].ffn_in_bias.iter().all(|&x| x == 0.0));
        assert!(w.final_norm_scale.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn file_size_matches_param_count() {
        let w = DenoiserWeights::seeded(1, dims()).unwrap();
        assert_eq!(w.to_bytes().len(), 6 + 28 + 4 * dims().param_count());
    }

    #[test]
    fn bytes_round_trip() {
        let w = DenoiserWeights::seeded(9, dims()).unwrap();
        let back = DenoiserWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = DenoiserWeights::seeded(9, dims()).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(DenoiserWeights::from_bytes(&bytes), Err(LeapError::Format(_))));
    }

    #[test]
    fn rejects_truncation() {
        let bytes = DenoiserWeights::seeded(9, dims()).unwrap().to_bytes();
        let err = DenoiserWeights::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        assert!(DenoiserWeights::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn rejects_inconsistent_header() {
        let mut bytes = DenoiserWeights::seeded(9, dims()).unwrap().to_bytes();
        // n_heads = 3 does not divide d_model = 8
        bytes[10..14].copy_from_slice(&3u32.to_le_bytes());
        assert!(DenoiserWeights::from_bytes(&bytes).is_err());
        let mut bytes = DenoiserWeights::seeded(9, dims()).unwrap().to_bytes();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(DenoiserWeights::from_bytes(&bytes).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut w = DenoiserWeights::seeded(9, dims()).unwrap();
        w.layers[1].wk[[0, 0]] = f32::NAN;
        assert!(DenoiserWeights::from_bytes(&w.to_bytes()).is_err());
    }
}
