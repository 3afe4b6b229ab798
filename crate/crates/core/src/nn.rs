//! Plain fully connected networks on the autodiff tape.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};

/// Stack of affine layers; ReLU between layers, none after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Layer `i` is `sizes[i+1] × (sizes[i] + 1)`, bias in the last column.
    pub weights: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let weights = sizes
            .windows(2)
            .map(|w| {
                let (din, dout) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / din.max(1) as f64).sqrt()).unwrap();
                let mut v = vec![0.0; dout * (din + 1)];
                for o in 0..dout {
                    for i in 0..din {
                        v[o * (din + 1) + i] = normal.sample(rng);
                    }
                }
                v
            })
            .collect();
        Mlp { sizes: sizes.to_vec(), weights }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| vec![0.0; w[1] * (w[0] + 1)]).collect();
        Mlp { sizes: sizes.to_vec(), weights }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.weights.iter().map(Vec::len).collect()
    }

    /// Record the weights as tape parameters.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.sizes
            .windows(2)
            .zip(&self.weights)
            .map(|(w, v)| tape.param(Tensor::new(w[1], w[0] + 1, v.clone())))
            .collect()
    }

    pub fn forward_with(&self, tape: &mut Tape, params: &[Var], x: Var) -> Var {
        let mut h = x;
        for (i, &w) in params.iter().enumerate() {
            h = tape.linear(h, w);
            if i + 1 < params.len() {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Batch forward without recording gradients (`x` is `b × in`).
    pub fn predict(&self, x: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .sizes
            .windows(2)
            .zip(&self.weights)
            .map(|(w, v)| tape.constant(Tensor::new(w[1], w[0] + 1, v.clone())))
            .collect();
        let xv = tape.constant(x.clone());
        let y = self.forward_with(&mut tape, &params, xv);
        tape.value(y).clone()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.weights.concat()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut off = 0;
        for w in &mut self.weights {
            let n = w.len();
            w.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn predict_matches_manual_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&[3, 4, 2], &mut rng);
        let x = [0.5, -1.0, 2.0];
        let h: Vec<f64> = (0..4)
            .map(|o| {
                let w = &m.weights[0][o * 4..o * 4 + 4];
                (w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3]).max(0.0)
            })
            .collect();
        let y = m.predict(&Tensor::row(x.to_vec()));
        for o in 0..2 {
            let w = &m.weights[1][o * 5..o * 5 + 5];
            let e = w[0] * h[0] + w[1] * h[1] + w[2] * h[2] + w[3] * h[3] + w[4];
            assert!((y.data[o] - e).abs() < 1e-12);
        }
        let mut z = m.clone();
        z.set_flat_params(&vec![0.0; m.n_params()]);
        assert_eq!(z, Mlp::zeros(&[3, 4, 2]));
    }
}
