//! One-hidden-layer ReLU MLP used as the classification head of the
//! statistical stream and of both baselines.

use crate::error::{Error, Result};
use crate::numkit::{relu, Matrix, Params, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual linear-layer default.
pub fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut RngStream) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl MlpHead {
    pub fn new(input: usize, hidden: usize, classes: usize, rng: &mut RngStream) -> Self {
        MlpHead {
            w1: uniform_init(input, hidden, input, rng),
            b1: uniform_init(1, hidden, input, rng),
            w2: uniform_init(hidden, classes, hidden, rng),
            b2: uniform_init(1, classes, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        MlpHead {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, classes),
            b2: Matrix::zeros(1, classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpHead::zeros(self.input_dim(), self.hidden_dim(), self.classes())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "MlpHead::forward",
                expected: format!("{} inputs", self.input_dim()),
                got: format!("{} inputs", input.len()),
            });
        }
        let mut pre = self.w1.vec_mul(input)?;
        for (p, b) in pre.iter_mut().zip(self.b1.as_slice()) {
            *p += b;
        }
        let hidden: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
        let mut logits = self.w2.vec_mul(&hidden)?;
        for (l, b) in logits.iter_mut().zip(self.b2.as_slice()) {
            *l += b;
        }
        Ok((
            logits,
            MlpCache {
                input: input.to_vec(),
                pre,
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dlogits: &[f64], grads: &mut MlpHead) -> Result<Vec<f64>> {
        if dlogits.len() != self.classes() {
            return Err(Error::Shape {
                op: "MlpHead::backward",
                expected: format!("{} logits", self.classes()),
                got: format!("{} logits", dlogits.len()),
            });
        }
        grads.w2.add_outer(&cache.hidden, dlogits)?;
        for (g, d) in grads.b2.as_mut_slice().iter_mut().zip(dlogits) {
            *g += d;
        }
        let mut dpre = self.w2.mul_vec(dlogits)?;
        for (d, &p) in dpre.iter_mut().zip(&cache.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        grads.w1.add_outer(&cache.input, &dpre)?;
        for (g, d) in grads.b1.as_mut_slice().iter_mut().zip(&dpre) {
            *g += d;
        }
        self.w1.mul_vec(&dpre)
    }
}

impl Params for MlpHead {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
