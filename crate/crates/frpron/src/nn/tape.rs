//! Reverse-mode tape over 2-D f64 tensors. Sequences are packed row-wise:
//! a batch of B sequences of length T and width D is a (B*T, D) matrix.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub type Matrix = Array2<f64>;

const NEG_INF: f64 = -1e30;

/// Row-wise softmax, numerically stabilized. Also used outside the tape to
/// turn logits into distributions.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    #[serde(skip)]
    pub grad: Option<Matrix>,
}

/// Owns every parameter of a model, in creation order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub params: Vec<Param>,
}

/// Index into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl ParamSet {
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Param { name: name.into(), value, grad: None });
        ParamId(self.params.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Flat copy of all parameter values, for finite-difference probes.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().cloned()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| match &p.grad {
                Some(g) => g.iter().cloned().collect::<Vec<_>>(),
                None => vec![0.0; p.value.len()],
            })
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) {
        let mut i = 0;
        for p in &mut self.params {
            for v in p.value.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        assert_eq!(i, flat.len());
    }

    /// Indices into the flat vector covered by one parameter.
    pub fn flat_range(&self, id: ParamId) -> std::ops::Range<usize> {
        let mut start = 0;
        for p in &self.params[..id.0] {
            start += p.value.len();
        }
        start..start + self.params[id.0].value.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRowBroadcast(NodeId, NodeId),
    AddConst(NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Embedding { weight: NodeId, ids: Vec<usize> },
    GatherRows { x: NodeId, rows: Vec<usize> },
    Dropout { x: NodeId, mask: Matrix },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        t_q: usize,
        t_k: usize,
        /// Attention probabilities, one (t_q, t_k) matrix per item*head.
        probs: Vec<Matrix>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<f64>,
        denom: f64,
        probs: Matrix,
    },
    WbceWithLogits {
        logits: NodeId,
        targets: Vec<f64>,
        pos_weight: f64,
        denom: f64,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
}

/// One forward/backward pass. Dropout is active only in training mode.
pub struct Tape {
    nodes: Vec<Node>,
    train: bool,
}

impl Tape {
    pub fn new(train: bool) -> Self {
        Tape { nodes: Vec::with_capacity(256), train }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, grad: None, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Brings a parameter onto the tape; its gradient lands back in the
    /// [`ParamSet`] on backward.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), Op::Leaf { param: Some(id) })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    /// `a` is (R, C), `bias` is (1, C), broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b_row = self.nodes[bias.0].value.row(0).to_owned();
        let value = &self.nodes[a.0].value + &b_row;
        self.push(value, Op::AddRowBroadcast(a, bias))
    }

    /// Adds a constant matrix (e.g. positional encodings); gradient passes
    /// through unchanged.
    pub fn add_const(&mut self, a: NodeId, c: &Matrix) -> NodeId {
        let value = &self.nodes[a.0].value + c;
        self.push(value, Op::AddConst(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = &self.nodes[a.0].value * factor;
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = xv.dim();
        let mut xhat = Matrix::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std.push(istd);
            for (c, v) in row.iter().enumerate() {
                xhat[[r, c]] = (v - mean) * istd;
            }
        }
        let g_row = self.nodes[gamma.0].value.row(0).to_owned();
        let b_row = self.nodes[beta.0].value.row(0).to_owned();
        let value = &xhat * &g_row + &b_row;
        self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn embedding(&mut self, weight: NodeId, ids: &[usize]) -> NodeId {
        let w = &self.nodes[weight.0].value;
        let mut value = Matrix::zeros((ids.len(), w.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).assign(&w.row(id));
        }
        self.push(value, Op::Embedding { weight, ids: ids.to_vec() })
    }

    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut value = Matrix::zeros((rows.len(), xv.ncols()));
        for (r, &src) in rows.iter().enumerate() {
            value.row_mut(r).assign(&xv.row(src));
        }
        self.push(value, Op::GatherRows { x, rows: rows.to_vec() })
    }

    /// Inverted dropout; identity in eval mode.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut ChaCha20Rng) -> NodeId {
        if !self.train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let shape = self.nodes[x.0].value.dim();
        let mut mask = Matrix::zeros(shape);
        for v in mask.iter_mut() {
            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
        let value = &self.nodes[x.0].value * &mask;
        self.push(value, Op::Dropout { x, mask })
    }

    /// Scaled dot-product attention over packed sequences. `q` is
    /// (B*t_q, D), `k`/`v` are (B*t_k, D); D must divide evenly by `heads`.
    /// `key_mask[b*t_k + j] == false` hides key j of item b. With `causal`,
    /// query i only sees keys <= i (requires t_q == t_k).
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        t_q: usize,
        t_k: usize,
        causal: bool,
        key_mask: &[bool],
    ) -> NodeId {
        let qv = &self.nodes[q.0].value;
        let kv = &self.nodes[k.0].value;
        let vv = &self.nodes[v.0].value;
        let d = qv.ncols();
        assert_eq!(d % heads, 0, "model dim not divisible by heads");
        let dh = d / heads;
        let batch = qv.nrows() / t_q;
        assert_eq!(kv.nrows(), batch * t_k);
        assert_eq!(key_mask.len(), batch * t_k);
        if causal {
            assert_eq!(t_q, t_k, "causal attention needs square scores");
        }
        let scale = 1.0 / (dh as f64).sqrt();

        let mut out = Matrix::zeros((batch * t_q, d));
        let mut probs = Vec::with_capacity(batch * heads);
        for b in 0..batch {
            let q_rows = qv.slice(s![b * t_q..(b + 1) * t_q, ..]);
            let k_rows = kv.slice(s![b * t_k..(b + 1) * t_k, ..]);
            let v_rows = vv.slice(s![b * t_k..(b + 1) * t_k, ..]);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q_rows.slice(s![.., cols.clone()]);
                let kh = k_rows.slice(s![.., cols.clone()]);
                let vh = v_rows.slice(s![.., cols.clone()]);
                let mut scores = qh.dot(&kh.t()) * scale;
                for i in 0..t_q {
                    for j in 0..t_k {
                        let masked = !key_mask[b * t_k + j] || (causal && j > i);
                        if masked {
                            scores[[i, j]] = NEG_INF;
                        }
                    }
                }
                let p = softmax_rows(&scores);
                let oh = p.dot(&vh);
                out.slice_mut(s![b * t_q..(b + 1) * t_q, cols]).assign(&oh);
                probs.push(p);
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, t_q, t_k, probs })
    }

    /// Weighted token-level cross entropy:
    /// sum_i weights[i] * CE(logits[i], targets[i]) / denom. Scalar (1,1).
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[f64],
        denom: f64,
    ) -> NodeId {
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.nrows(), targets.len());
        assert_eq!(targets.len(), weights.len());
        let probs = softmax_rows(lv);
        let mut loss = 0.0;
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if w != 0.0 {
                loss -= w * probs[[i, t]].max(1e-300).ln();
            }
        }
        let value = Matrix::from_elem((1, 1), loss / denom);
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                denom,
                probs,
            },
        )
    }

    /// Weighted binary cross entropy on logits (one logit per row):
    /// sum_i -(pos_weight*y*ln p + (1-y)*ln(1-p)) / denom, with p clamped
    /// away from 0 and 1.
    pub fn wbce_with_logits(
        &mut self,
        logits: NodeId,
        targets: &[f64],
        pos_weight: f64,
        denom: f64,
    ) -> NodeId {
        const EPS: f64 = 1e-12;
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.ncols(), 1);
        assert_eq!(lv.nrows(), targets.len());
        let mut probs = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let p = sigmoid(lv[[i, 0]]).clamp(EPS, 1.0 - EPS);
            probs.push(p);
            loss -= pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let value = Matrix::from_elem((1, 1), loss / denom);
        self.push(
            value,
            Op::WbceWithLogits {
                logits,
                targets: targets.to_vec(),
                pos_weight,
                denom,
                probs,
            },
        )
    }

    /// Backpropagates from a scalar node, accumulating parameter gradients
    /// into `params`.
    pub fn backward(&mut self, loss: NodeId, params: &mut ParamSet) {
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        self.nodes[loss.0].grad = Some(Matrix::from_elem((1, 1), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            // Split borrow: read-only op data vs grads of earlier nodes.
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        let slot = &mut params.params[pid.0].grad;
                        match slot {
                            Some(g) => *g += &grad,
                            None => *slot = Some(grad.clone()),
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = grad.dot(&before[b.0].value.t());
                    let db = before[a.0].value.t().dot(&grad);
                    accumulate(before, *a, da);
                    accumulate(before, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(before, *a, grad.clone());
                    accumulate(before, *b, grad);
                }
                Op::AddRowBroadcast(a, bias) => {
                    let db = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(before, *a, grad);
                    accumulate(before, *bias, db);
                }
                Op::AddConst(a) => accumulate(before, *a, grad),
                Op::Scale(a, f) => accumulate(before, *a, &grad * *f),
                Op::Relu(a) => {
                    let mut da = grad;
                    for (g, v) in da.iter_mut().zip(before[a.0].value.iter()) {
                        if *v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accumulate(before, *a, da);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let cols = xhat.ncols() as f64;
                    let g_row = before[gamma.0].value.row(0).to_owned();
                    let dgamma = (&grad * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let mut dx = Matrix::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        // dxhat = grad * gamma; standard layernorm backward.
                        let dxhat: Vec<f64> = (0..xhat.ncols())
                            .map(|c| grad[[r, c]] * g_row[c])
                            .collect();
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().enumerate().map(|(c, v)| v * xhat[[r, c]]).sum();
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = inv_std[r] / cols
                                * (cols * dxhat[c] - sum_dxhat - xhat[[r, c]] * sum_dxhat_xhat);
                        }
                    }
                    accumulate(before, *x, dx);
                    accumulate(before, *gamma, dgamma);
                    accumulate(before, *beta, dbeta);
                }
                Op::Embedding { weight, ids } => {
                    let mut dw = Matrix::zeros(before[weight.0].value.dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = dw.row_mut(id);
                        dst += &grad.row(r);
                    }
                    accumulate(before, *weight, dw);
                }
                Op::GatherRows { x, rows } => {
                    let mut dx = Matrix::zeros(before[x.0].value.dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut dst = dx.row_mut(src);
                        dst += &grad.row(r);
                    }
                    accumulate(before, *x, dx);
                }
                Op::Dropout { x, mask } => {
                    accumulate(before, *x, &grad * mask);
                }
                Op::Attention { q, k, v, heads, t_q, t_k, probs } => {
                    let d = before[q.0].value.ncols();
                    let dh = d / heads;
                    let batch = before[q.0].value.nrows() / t_q;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Matrix::zeros(before[q.0].value.dim());
                    let mut dk = Matrix::zeros(before[k.0].value.dim());
                    let mut dv = Matrix::zeros(before[v.0].value.dim());
                    for b in 0..batch {
                        for h in 0..*heads {
                            let cols = h * dh..(h + 1) * dh;
                            let p = &probs[b * heads + h];
                            let dout = grad.slice(s![b * t_q..(b + 1) * t_q, cols.clone()]);
                            let kh = before[k.0]
                                .value
                                .slice(s![b * t_k..(b + 1) * t_k, cols.clone()])
                                .to_owned();
                            let vh = before[v.0]
                                .value
                                .slice(s![b * t_k..(b + 1) * t_k, cols.clone()])
                                .to_owned();
                            let qh = before[q.0]
                                .value
                                .slice(s![b * t_q..(b + 1) * t_q, cols.clone()])
                                .to_owned();
                            let dvh = p.t().dot(&dout);
                            let dp = dout.dot(&vh.t());
                            // Softmax backward per row.
                            let mut ds = Matrix::zeros(p.dim());
                            for i in 0..*t_q {
                                let row_dot: f64 =
                                    (0..*t_k).map(|j| dp[[i, j]] * p[[i, j]]).sum();
                                for j in 0..*t_k {
                                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - row_dot);
                                }
                            }
                            let dqh = ds.dot(&kh) * scale;
                            let dkh = ds.t().dot(&qh) * scale;
                            dq.slice_mut(s![b * t_q..(b + 1) * t_q, cols.clone()])
                                .assign(&dqh);
                            dk.slice_mut(s![b * t_k..(b + 1) * t_k, cols.clone()])
                                .assign(&dkh);
                            dv.slice_mut(s![b * t_k..(b + 1) * t_k, cols])
                                .assign(&dvh);
                        }
                    }
                    accumulate(before, *q, dq);
                    accumulate(before, *k, dk);
                    accumulate(before, *v, dv);
                }
                Op::CrossEntropy { logits, targets, weights, denom, probs } => {
                    let upstream = grad[[0, 0]];
                    let mut dl = probs.clone();
                    for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            dl.row_mut(i).fill(0.0);
                            continue;
                        }
                        dl[[i, t]] -= 1.0;
                        let mut row = dl.row_mut(i);
                        row *= w * upstream / *denom;
                    }
                    accumulate(before, *logits, dl);
                }
                Op::WbceWithLogits { logits, targets, pos_weight, denom, probs } => {
                    let upstream = grad[[0, 0]];
                    let mut dl = Matrix::zeros((targets.len(), 1));
                    for (i, &y) in targets.iter().enumerate() {
                        let p = probs[i];
                        // d/dz of -(w*y*ln p + (1-y)*ln(1-p)), p = sigmoid(z).
                        dl[[i, 0]] =
                            ((1.0 - y) * p - pos_weight * y * (1.0 - p)) * upstream / *denom;
                    }
                    accumulate(before, *logits, dl);
                }
            }
        }
    }
}

fn accumulate(nodes: &mut [Node], id: NodeId, grad: Matrix) {
    let slot = &mut nodes[id.0].grad;
    match slot {
        Some(g) => *g += &grad,
        None => *slot = Some(grad),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fd_check<F>(params: &mut ParamSet, mut loss_fn: F, n_probe: usize, seed: u64)
    where
        F: FnMut(&mut ParamSet) -> f64,
    {
        // Analytic gradient at the current point.
        let base_flat = params.flat_values();
        let analytic = params.flat_grads();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let h = 1e-5;
        for _ in 0..n_probe {
            let idx = rng.gen_range(0..base_flat.len());
            let mut plus = base_flat.clone();
            plus[idx] += h;
            params.set_flat_values(&plus);
            let lp = loss_fn(params);
            let mut minus = base_flat.clone();
            minus[idx] -= h;
            params.set_flat_values(&minus);
            let lm = loss_fn(params);
            params.set_flat_values(&base_flat);
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic[idx].abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic[idx] - fd).abs() / denom < 1e-3,
                "grad mismatch at {idx}: analytic {} vs fd {fd}",
                analytic[idx]
            );
        }
    }

    fn rand_matrix(rng: &mut ChaCha20Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gradcheck_dense_relu_layernorm_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut ps = ParamSet::default();
        let w1 = ps.add("w1", rand_matrix(&mut rng, 6, 8));
        let b1 = ps.add("b1", rand_matrix(&mut rng, 1, 8));
        let g = ps.add("g", Matrix::ones((1, 8)));
        let be = ps.add("be", Matrix::zeros((1, 8)));
        let w2 = ps.add("w2", rand_matrix(&mut rng, 8, 5));
        let x = rand_matrix(&mut rng, 4, 6);
        let targets = vec![0usize, 2, 4, 1];
        let weights = vec![1.0, 1.0, 0.0, 1.0];

        let loss_of = |ps: &mut ParamSet| -> f64 {
            let mut t = Tape::new(false);
            let xn = t.constant(x.clone());
            let w1n = t.param(ps, w1);
            let b1n = t.param(ps, b1);
            let h = t.matmul(xn, w1n);
            let h = t.add_bias(h, b1n);
            let h = t.relu(h);
            let gn = t.param(ps, g);
            let bn = t.param(ps, be);
            let h = t.layer_norm(h, gn, bn);
            let w2n = t.param(ps, w2);
            let logits = t.matmul(h, w2n);
            let loss = t.cross_entropy(logits, &targets, &weights, 3.0);
            t.value(loss)[[0, 0]]
        };

        // Analytic pass.
        {
            let mut t = Tape::new(false);
            let xn = t.constant(x.clone());
            let w1n = t.param(&ps, w1);
            let b1n = t.param(&ps, b1);
            let h = t.matmul(xn, w1n);
            let h = t.add_bias(h, b1n);
            let h = t.relu(h);
            let gn = t.param(&ps, g);
            let bn = t.param(&ps, be);
            let h = t.layer_norm(h, gn, bn);
            let w2n = t.param(&ps, w2);
            let logits = t.matmul(h, w2n);
            let loss = t.cross_entropy(logits, &targets, &weights, 3.0);
            t.backward(loss, &mut ps);
        }
        fd_check(&mut ps, loss_of, 25, 42);
    }

    #[test]
    fn gradcheck_attention_and_embedding() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut ps = ParamSet::default();
        let emb = ps.add("emb", rand_matrix(&mut rng, 7, 8));
        let wq = ps.add("wq", rand_matrix(&mut rng, 8, 8));
        let wk = ps.add("wk", rand_matrix(&mut rng, 8, 8));
        let wv = ps.add("wv", rand_matrix(&mut rng, 8, 8));
        let wo = ps.add("wo", rand_matrix(&mut rng, 8, 4));
        let ids = vec![1usize, 3, 0, 5, 2, 2]; // batch 2, seq 3
        let key_mask = vec![true, true, false, true, true, true];
        let targets = vec![0usize, 1, 2, 3, 0, 1];
        let weights = vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0];

        let run = |ps: &ParamSet, tape: &mut Tape| -> NodeId {
            let e = tape.param(ps, emb);
            let x = tape.embedding(e, &ids);
            let q = {
                let w = tape.param(ps, wq);
                tape.matmul(x, w)
            };
            let k = {
                let w = tape.param(ps, wk);
                tape.matmul(x, w)
            };
            let v = {
                let w = tape.param(ps, wv);
                tape.matmul(x, w)
            };
            let a = tape.attention(q, k, v, 2, 3, 3, true, &key_mask);
            let x = tape.add(a, x);
            let w = tape.param(ps, wo);
            let logits = tape.matmul(x, w);
            tape.cross_entropy(logits, &targets, &weights, 5.0)
        };

        {
            let mut t = Tape::new(false);
            let loss = run(&ps, &mut t);
            t.backward(loss, &mut ps);
        }
        fd_check(
            &mut ps,
            |ps| {
                let mut t = Tape::new(false);
                let loss = run(ps, &mut t);
                t.value(loss)[[0, 0]]
            },
            25,
            43,
        );
    }

    #[test]
    fn gradcheck_wbce() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut ps = ParamSet::default();
        let w = ps.add("w", rand_matrix(&mut rng, 5, 1));
        let x = rand_matrix(&mut rng, 3, 5);
        let y = vec![1.0, 0.0, 1.0];

        let run = |ps: &ParamSet, tape: &mut Tape| -> NodeId {
            let wn = tape.param(ps, w);
            let xn = tape.constant(x.clone());
            let logits = tape.matmul(xn, wn);
            tape.wbce_with_logits(logits, &y, 2.5, 3.0)
        };
        {
            let mut t = Tape::new(false);
            let loss = run(&ps, &mut t);
            t.backward(loss, &mut ps);
        }
        fd_check(
            &mut ps,
            |ps| {
                let mut t = Tape::new(false);
                let loss = run(ps, &mut t);
                t.value(loss)[[0, 0]]
            },
            5,
            44,
        );
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut t = Tape::new(false);
        let x = t.constant(Matrix::ones((3, 3)));
        let y = t.dropout(x, 0.5, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = Matrix::from_shape_fn((4, 6), |(r, c)| (r * c) as f64 - 3.0);
        let s = softmax_rows(&m);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
