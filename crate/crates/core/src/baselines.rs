//! Composition-only comparators: mean-pool MIL and tanh-attention MIL.
//! Neither reads coordinates, so both are exactly blind to coordinate shuffles.

use crate::bagstore::Bag;
use crate::error::{Error, Result};
use crate::head::{uniform_init, MlpCache, MlpHead};
use crate::numkit::{softmax, Matrix, Params, RngStream};

pub const ATTENTION_DIM: usize = 128;

/// Mean of the instance embeddings passed through an MLP head.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPool {
    pub head: MlpHead,
}

impl MeanPool {
    pub fn new(dim: usize, hidden: usize, classes: usize, rng: &mut RngStream) -> Self {
        MeanPool {
            head: MlpHead::new(dim, hidden, classes, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MeanPool {
            head: self.head.zeros_like(),
        }
    }

    pub fn forward(&self, bag: &Bag) -> Result<(Vec<f64>, MlpCache)> {
        check_bag(bag, self.head.input_dim())?;
        self.head.forward(&bag.embeddings.column_mean())
    }

    pub fn logits(&self, bag: &Bag) -> Result<Vec<f64>> {
        self.forward(bag).map(|(l, _)| l)
    }

    /// Gradients of `dlogits · logits`.
    pub fn backward(&self, cache: &MlpCache, dlogits: &[f64]) -> Result<MeanPool> {
        let mut grads = self.zeros_like();
        self.head.backward(cache, dlogits, &mut grads.head)?;
        Ok(grads)
    }
}

impl Params for MeanPool {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        self.head.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.head.tensors_mut()
    }
}

/// Attention MIL: `s_i = wᵀ tanh(Vᵀ h_i)`, `a = softmax(s)`, logits from the
/// head applied to `Σ a_i h_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnMil {
    pub v: Matrix,
    pub w: Matrix,
    pub head: MlpHead,
}

#[derive(Clone, Debug)]
pub struct AttnCache {
    pub hidden: Matrix,
    pub attention: Vec<f64>,
    pub head: MlpCache,
}

impl AttnMil {
    pub fn new(dim: usize, hidden: usize, classes: usize, rng: &mut RngStream) -> Self {
        AttnMil {
            v: uniform_init(dim, ATTENTION_DIM, dim, rng),
            w: uniform_init(1, ATTENTION_DIM, ATTENTION_DIM, rng),
            head: MlpHead::new(dim, hidden, classes, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttnMil {
            v: Matrix::zeros(self.v.rows(), self.v.cols()),
            w: Matrix::zeros(1, self.w.cols()),
            head: self.head.zeros_like(),
        }
    }

    pub fn forward(&self, bag: &Bag) -> Result<(Vec<f64>, AttnCache)> {
        check_bag(bag, self.v.rows())?;
        let mut hidden = bag.embeddings.matmul(&self.v)?;
        hidden.as_mut_slice().iter_mut().for_each(|x| *x = x.tanh());
        let scores = hidden.mul_vec(self.w.as_slice())?;
        let attention = softmax(&scores);
        let pooled = bag.embeddings.vec_mul(&attention)?;
        let (logits, head) = self.head.forward(&pooled)?;
        Ok((
            logits,
            AttnCache {
                hidden,
                attention,
                head,
            },
        ))
    }

    pub fn logits(&self, bag: &Bag) -> Result<Vec<f64>> {
        self.forward(bag).map(|(l, _)| l)
    }

    /// Gradients of `dlogits · logits`.
    pub fn backward(&self, bag: &Bag, cache: &AttnCache, dlogits: &[f64]) -> Result<AttnMil> {
        let mut grads = self.zeros_like();
        let dpooled = self.head.backward(&cache.head, dlogits, &mut grads.head)?;
        let da = bag.embeddings.mul_vec(&dpooled)?;
        let a = &cache.attention;
        let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
        let ds: Vec<f64> = a.iter().zip(&da).map(|(ai, g)| ai * (g - mean)).collect();
        let dw = cache.hidden.vec_mul(&ds)?;
        grads.w.as_mut_slice().copy_from_slice(&dw);
        let mut dpre = Matrix::zeros(bag.len(), self.w.cols());
        let w = self.w.as_slice();
        for (i, &dsi) in ds.iter().enumerate() {
            let u = cache.hidden.row(i);
            for (j, d) in dpre.row_mut(i).iter_mut().enumerate() {
                *d = dsi * w[j] * (1.0 - u[j] * u[j]);
            }
        }
        grads.v.add_t_matmul(&bag.embeddings, &dpre)?;
        Ok(grads)
    }
}

impl Params for AttnMil {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut t = vec![("attn_v", &self.v), ("attn_w", &self.w)];
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = vec![&mut self.v, &mut self.w];
        t.extend(self.head.tensors_mut());
        t
    }
}

fn check_bag(bag: &Bag, dim: usize) -> Result<()> {
    if bag.is_empty() {
        return Err(Error::EmptyBag);
    }
    if bag.dim() != dim {
        return Err(Error::Shape {
            op: "baseline forward",
            expected: format!("{dim} dims"),
            got: format!("{} dims", bag.dim()),
        });
    }
    Ok(())
}
