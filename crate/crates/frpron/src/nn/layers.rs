//! Transformer building blocks (pre-norm), expressed as parameter-id
//! bundles plus forward functions over a [`Tape`].

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Matrix, NodeId, ParamId, ParamSet, Tape};

fn xavier(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Sinusoidal positional encodings, (max_len, dim).
pub fn positional_encoding(max_len: usize, dim: usize) -> Matrix {
    let mut pe = Matrix::zeros((max_len, dim));
    for pos in 0..max_len {
        for i in 0..dim {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Repeats the first `t` positional rows for each of `batch` items.
pub fn tile_positions(pe: &Matrix, batch: usize, t: usize) -> Matrix {
    let mut out = Matrix::zeros((batch * t, pe.ncols()));
    for b in 0..batch {
        for i in 0..t {
            out.row_mut(b * t + i).assign(&pe.row(i));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha20Rng, name: &str, din: usize, dout: usize) -> Self {
        Linear {
            w: ps.add(format!("{name}.w"), xavier(rng, din, dout)),
            b: ps.add(format!("{name}.b"), Matrix::zeros((1, dout))),
        }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamSet, x: NodeId) -> NodeId {
        let w = t.param(ps, self.w);
        let b = t.param(ps, self.b);
        let h = t.matmul(x, w);
        t.add_bias(h, b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: ps.add(format!("{name}.gamma"), Matrix::ones((1, dim))),
            beta: ps.add(format!("{name}.beta"), Matrix::zeros((1, dim))),
        }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamSet, x: NodeId) -> NodeId {
        let g = t.param(ps, self.gamma);
        let b = t.param(ps, self.beta);
        t.layer_norm(x, g, b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    pub weight: ParamId,
}

impl Embedding {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha20Rng, name: &str, vocab: usize, dim: usize) -> Self {
        Embedding { weight: ps.add(format!("{name}.weight"), xavier(rng, vocab, dim)) }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamSet, ids: &[usize]) -> NodeId {
        let w = t.param(ps, self.weight);
        t.embedding(w, ids)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha20Rng, name: &str, dim: usize, heads: usize) -> Self {
        MultiHeadAttention {
            wq: Linear::new(ps, rng, &format!("{name}.wq"), dim, dim),
            wk: Linear::new(ps, rng, &format!("{name}.wk"), dim, dim),
            wv: Linear::new(ps, rng, &format!("{name}.wv"), dim, dim),
            wo: Linear::new(ps, rng, &format!("{name}.wo"), dim, dim),
            heads,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        t: &mut Tape,
        ps: &ParamSet,
        queries: NodeId,
        keys_values: NodeId,
        t_q: usize,
        t_k: usize,
        causal: bool,
        key_mask: &[bool],
    ) -> NodeId {
        let q = self.wq.forward(t, ps, queries);
        let k = self.wk.forward(t, ps, keys_values);
        let v = self.wv.forward(t, ps, keys_values);
        let a = t.attention(q, k, v, self.heads, t_q, t_k, causal, key_mask);
        self.wo.forward(t, ps, a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

impl FeedForward {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha20Rng, name: &str, dim: usize, ff: usize) -> Self {
        FeedForward {
            lin1: Linear::new(ps, rng, &format!("{name}.lin1"), dim, ff),
            lin2: Linear::new(ps, rng, &format!("{name}.lin2"), ff, dim),
        }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamSet, x: NodeId) -> NodeId {
        let h = self.lin1.forward(t, ps, x);
        let h = t.relu(h);
        self.lin2.forward(t, ps, h)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub mha: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha20Rng,
        name: &str,
        dim: usize,
        heads: usize,
        ff: usize,
    ) -> Self {
        EncoderLayer {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), dim),
            mha: MultiHeadAttention::new(ps, rng, &format!("{name}.mha"), dim, heads),
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), dim),
            ff: FeedForward::new(ps, rng, &format!("{name}.ff"), dim, ff),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        t: &mut Tape,
        ps: &ParamSet,
        x: NodeId,
        seq_len: usize,
        key_mask: &[bool],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> NodeId {
        let h = self.ln1.forward(t, ps, x);
        let h = self
            .mha
            .forward(t, ps, h, h, seq_len, seq_len, false, key_mask);
        let h = t.dropout(h, dropout, rng);
        let x = t.add(x, h);
        let h = self.ln2.forward(t, ps, x);
        let h = self.ff.forward(t, ps, h);
        let h = t.dropout(h, dropout, rng);
        t.add(x, h)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_mha: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub cross_mha: MultiHeadAttention,
    pub ln3: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha20Rng,
        name: &str,
        dim: usize,
        heads: usize,
        ff: usize,
    ) -> Self {
        DecoderLayer {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), dim),
            self_mha: MultiHeadAttention::new(ps, rng, &format!("{name}.self"), dim, heads),
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), dim),
            cross_mha: MultiHeadAttention::new(ps, rng, &format!("{name}.cross"), dim, heads),
            ln3: LayerNorm::new(ps, &format!("{name}.ln3"), dim),
            ff: FeedForward::new(ps, rng, &format!("{name}.ff"), dim, ff),
        }
    }

    /// `causal` distinguishes the autoregressive decoder from the parallel
    /// (non-autoregressive) one.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        t: &mut Tape,
        ps: &ParamSet,
        x: NodeId,
        memory: NodeId,
        t_dec: usize,
        t_enc: usize,
        causal: bool,
        dec_mask: &[bool],
        enc_mask: &[bool],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> NodeId {
        let h = self.ln1.forward(t, ps, x);
        let h = self
            .self_mha
            .forward(t, ps, h, h, t_dec, t_dec, causal, dec_mask);
        let h = t.dropout(h, dropout, rng);
        let x = t.add(x, h);
        let h = self.ln2.forward(t, ps, x);
        let h = self
            .cross_mha
            .forward(t, ps, h, memory, t_dec, t_enc, false, enc_mask);
        let h = t.dropout(h, dropout, rng);
        let x = t.add(x, h);
        let h = self.ln3.forward(t, ps, x);
        let h = self.ff.forward(t, ps, h);
        let h = t.dropout(h, dropout, rng);
        t.add(x, h)
    }
}

/// Parameters per encoder layer for a given dim/ff (weights, biases, two
/// layer norms).
pub fn encoder_layer_param_count(dim: usize, ff: usize) -> usize {
    let mha = 4 * (dim * dim + dim);
    let ffn = dim * ff + ff + ff * dim + dim;
    let lns = 2 * (2 * dim);
    mha + ffn + lns
}

/// Parameters per decoder layer (self + cross attention, FFN, three layer
/// norms).
pub fn decoder_layer_param_count(dim: usize, ff: usize) -> usize {
    let mha = 4 * (dim * dim + dim);
    let ffn = dim * ff + ff + ff * dim + dim;
    let lns = 3 * (2 * dim);
    2 * mha + ffn + lns
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layer_param_counts_match_construction() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut ps = ParamSet::default();
        EncoderLayer::new(&mut ps, &mut rng, "enc", 32, 4, 64);
        assert_eq!(ps.count(), encoder_layer_param_count(32, 64));

        let mut ps = ParamSet::default();
        DecoderLayer::new(&mut ps, &mut rng, "dec", 32, 4, 64);
        assert_eq!(ps.count(), decoder_layer_param_count(32, 64));
    }

    #[test]
    fn positional_encoding_shape_and_range() {
        let pe = positional_encoding(10, 16);
        assert_eq!(pe.dim(), (10, 16));
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        // Position 0 row: sin(0)=0 on even, cos(0)=1 on odd columns.
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
    }
}
