//! Dense numeric kernel: matrices, activations, losses, Lookahead(AdamW),
//! the cosine schedule, seeded randomness and a finite-difference oracle.

mod matrix;
mod ops;
mod optim;
mod rng;

pub use matrix::{dot, norm, Matrix};
pub use ops::{
    cosine_lr, cross_entropy, finite_diff_grad, log_sigmoid, max_rel_error, relu, sigmoid, softmax,
    softmax_rows,
};
pub use optim::{adam_lookahead_step, AdamConfig, OptimizerState};
pub use rng::{derive_seed, RngStream, RNG_ALGORITHM};

/// A set of named trainable tensors with a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    /// Frobenius norm over every tensor.
    fn norm(&self) -> f64 {
        self.tensors().iter().map(|(_, m)| m.sum_sq()).sum::<f64>().sqrt()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().copied())
            .collect()
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for m in self.tensors_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// Stable content hash over all tensor bits, used by freeze checks.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, m) in self.tensors() {
            for v in m.as_slice() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Adds every tensor of `src` into `dst`, scaled by `s`.
pub fn accumulate<P: Params>(dst: &mut P, src: &P, s: f64) {
    let src_t = src.tensors();
    for (d, (_, m)) in dst.tensors_mut().into_iter().zip(src_t) {
        d.axpy(s, m).expect("parameter sets share shapes");
    }
}

/// One optimizer step over a parameter set.
pub fn step_params<P: Params>(params: &mut P, grads: &P, state: &mut OptimizerState, lr: f64) -> crate::Result<()> {
    let g = grads.tensors();
    let gref: Vec<&Matrix> = g.iter().map(|(_, m)| *m).collect();
    let mut p = params.tensors_mut();
    adam_lookahead_step(&mut p, &gref, state, lr)
}

pub fn optimizer_for<P: Params>(params: &P, config: AdamConfig) -> OptimizerState {
    let t = params.tensors();
    let refs: Vec<&Matrix> = t.iter().map(|(_, m)| *m).collect();
    OptimizerState::new(config, &refs)
}
