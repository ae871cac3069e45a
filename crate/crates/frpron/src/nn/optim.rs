//! AdamW: Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::tape::{Matrix, ParamSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.params.iter().map(|p| Matrix::zeros(p.value.dim())).collect(),
            v: params.params.iter().map(|p| Matrix::zeros(p.value.dim())).collect(),
        }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.params.iter_mut().enumerate() {
            let Some(grad) = p.grad.take() else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((mv, vv), (pv, gv)) in m
                .iter_mut()
                .zip(v.iter_mut())
                .zip(p.value.iter_mut().zip(grad.iter()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *pv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_descends_a_quadratic() {
        // Minimize f(x) = sum x_i^2; gradient 2x.
        let mut ps = ParamSet::default();
        let id = ps.add("x", Matrix::from_elem((2, 2), 3.0));
        let mut opt = AdamW::new(&ps, 0.1, 0.0);
        for _ in 0..300 {
            let g = ps.value(id) * 2.0;
            ps.params[id.0].grad = Some(g);
            opt.step(&mut ps);
        }
        assert!(ps.value(id).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut ps = ParamSet::default();
        let id = ps.add("x", Matrix::from_elem((1, 1), 1.0));
        let mut opt = AdamW::new(&ps, 0.01, 0.5);
        // Zero gradient: decoupled decay still shrinks the weight.
        ps.params[id.0].grad = Some(Matrix::zeros((1, 1)));
        opt.step(&mut ps);
        let after = ps.value(id)[[0, 0]];
        assert!(after < 1.0 && after > 0.99 * (1.0 - 0.01 * 0.5) - 1e-9);
    }
}
