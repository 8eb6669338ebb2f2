use crate::bagstore::{shuffle_coords, Bag};
use crate::error::{Error, Result};
use crate::head::uniform_init;
use crate::numkit::{dot, norm, Matrix, Params, RngStream};
use crate::topostream::{build_knn_graph, SpatialGraph};

/// Two-layer GCN with biases, global mean pooling and a linear residual head.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w_topo: Matrix,
    pub b_topo: Matrix,
    /// Dropout probability applied after each ReLU while training.
    pub dropout: f64,
}

fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl GcnParams {
    pub fn new(input: usize, hidden: usize, classes: usize, dropout: f64, rng: &mut RngStream) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(GcnParams {
            w1: glorot(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: glorot(hidden, hidden, rng),
            b2: Matrix::zeros(1, hidden),
            w_topo: uniform_init(hidden, classes, hidden, rng),
            b_topo: uniform_init(1, classes, hidden, rng),
            dropout,
        })
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize, dropout: f64) -> Self {
        GcnParams {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, hidden),
            b2: Matrix::zeros(1, hidden),
            w_topo: Matrix::zeros(hidden, classes),
            b_topo: Matrix::zeros(1, classes),
            dropout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        GcnParams::zeros(self.input_dim(), self.hidden_dim(), self.classes(), self.dropout)
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w_topo.cols()
    }

    /// Zeroes the residual head so the stream starts as an additive identity.
    pub fn zero_head(&mut self) {
        self.w_topo.fill(0.0);
        self.b_topo.fill(0.0);
    }
}

impl Params for GcnParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("gcn_w1", &self.w1),
            ("gcn_b1", &self.b1),
            ("gcn_w2", &self.w2),
            ("gcn_b2", &self.b2),
            ("w_topo", &self.w_topo),
            ("b_topo", &self.b_topo),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w_topo,
            &mut self.b_topo,
        ]
    }
}

/// Inverted-dropout multipliers (0 or `1/(1-p)`) for both hidden layers.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    pub layer1: Matrix,
    pub layer2: Matrix,
}

impl DropoutMasks {
    pub fn draw(n: usize, hidden: usize, p: f64, rng: &mut RngStream) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut layer = || {
            let data = (0..n * hidden).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect();
            Matrix::from_vec(n, hidden, data).expect("sized")
        };
        let layer1 = layer();
        let layer2 = layer();
        DropoutMasks { layer1, layer2 }
    }
}

/// Forward intermediates for [`gcn_backward`].
#[derive(Clone, Debug)]
pub struct GcnCache {
    pub graph: SpatialGraph,
    pub ah0: Matrix,
    pub pre1: Matrix,
    pub h1: Matrix,
    pub ah1: Matrix,
    pub pre2: Matrix,
    pub h2: Matrix,
    pub z_topo: Vec<f64>,
    pub masks: Option<DropoutMasks>,
}

#[derive(Clone, Debug)]
pub struct GcnOutput {
    pub z_topo: Vec<f64>,
    pub f_topo: Vec<f64>,
}

fn relu_masked(pre: &Matrix, mask: Option<&Matrix>) -> Matrix {
    let mut out = pre.clone();
    match mask {
        Some(m) => {
            for (o, &k) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *o = if *o > 0.0 { *o * k } else { 0.0 };
            }
        }
        None => out.as_mut_slice().iter_mut().for_each(|o| {
            if *o <= 0.0 {
                *o = 0.0
            }
        }),
    }
    out
}

/// `H1 = drop(ReLU(Â H0 W1 + b1))`, `H2 = drop(ReLU(Â H1 W2 + b2))`,
/// `z = mean_i H2_i`, `f = z W_topo + b_topo`. Pass `None` for evaluation.
pub fn gcn_forward(
    h0: &Matrix,
    graph: &SpatialGraph,
    params: &GcnParams,
    masks: Option<&DropoutMasks>,
) -> Result<(GcnOutput, GcnCache)> {
    if h0.rows() != graph.n() || h0.cols() != params.input_dim() {
        return Err(Error::Shape {
            op: "gcn_forward",
            expected: format!("{} x {}", graph.n(), params.input_dim()),
            got: format!("{:?}", h0.shape()),
        });
    }
    if let Some(m) = masks {
        if m.layer1.shape() != (graph.n(), params.hidden_dim()) || m.layer2.shape() != m.layer1.shape() {
            return Err(Error::Shape {
                op: "gcn_forward masks",
                expected: format!("{} x {}", graph.n(), params.hidden_dim()),
                got: format!("{:?}", m.layer1.shape()),
            });
        }
    }
    let ah0 = graph.propagate(h0)?;
    let mut pre1 = ah0.matmul(&params.w1)?;
    pre1.add_row_broadcast(params.b1.as_slice())?;
    let h1 = relu_masked(&pre1, masks.map(|m| &m.layer1));
    let ah1 = graph.propagate(&h1)?;
    let mut pre2 = ah1.matmul(&params.w2)?;
    pre2.add_row_broadcast(params.b2.as_slice())?;
    let h2 = relu_masked(&pre2, masks.map(|m| &m.layer2));
    let z_topo = h2.column_mean();
    let mut f_topo = params.w_topo.vec_mul(&z_topo)?;
    for (f, b) in f_topo.iter_mut().zip(params.b_topo.as_slice()) {
        *f += b;
    }
    let out = GcnOutput {
        z_topo: z_topo.clone(),
        f_topo,
    };
    Ok((
        out,
        GcnCache {
            graph: graph.clone(),
            ah0,
            pre1,
            h1,
            ah1,
            pre2,
            h2,
            z_topo,
            masks: masks.cloned(),
        },
    ))
}

/// Graph-level representation of the bag with every coordinate permuted,
/// computed under the same dropout draw as the clean pass.
pub fn shuffled_forward(
    bag: &Bag,
    params: &GcnParams,
    k_knn: usize,
    masks: Option<&DropoutMasks>,
    rng: &mut RngStream,
) -> Result<(GcnOutput, GcnCache)> {
    let shuffled = shuffle_coords(bag, 1.0, rng);
    let graph = build_knn_graph(&shuffled.coords, k_knn)?;
    gcn_forward(&shuffled.embeddings, &graph, params, masks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureLoss {
    pub loss: f64,
    pub similarity: f64,
    /// Set when either representation has (near) zero norm and the cosine is taken as 0.
    pub degenerate: bool,
    pub grad_clean: Vec<f64>,
    pub grad_shuffled: Vec<f64>,
}

/// Margin hinge `max(0, m - (1 - sim))` on a given cosine similarity.
pub fn texture_hinge(similarity: f64, margin: f64) -> f64 {
    (margin - (1.0 - similarity)).max(0.0)
}

/// Texture loss between clean and shuffled graph representations, with its
/// gradients with respect to both.
pub fn texture_loss(z: &[f64], z_shuffled: &[f64], margin: f64) -> TextureLoss {
    let (nz, ns) = (norm(z), norm(z_shuffled));
    if nz < 1e-12 || ns < 1e-12 {
        return TextureLoss {
            loss: texture_hinge(0.0, margin),
            similarity: 0.0,
            degenerate: true,
            grad_clean: vec![0.0; z.len()],
            grad_shuffled: vec![0.0; z_shuffled.len()],
        };
    }
    let sim = dot(z, z_shuffled) / (nz * ns);
    let loss = texture_hinge(sim, margin);
    let (grad_clean, grad_shuffled) = if loss > 0.0 {
        let gz = z
            .iter()
            .zip(z_shuffled)
            .map(|(&a, &b)| b / (nz * ns) - sim * a / (nz * nz))
            .collect();
        let gs = z
            .iter()
            .zip(z_shuffled)
            .map(|(&a, &b)| a / (nz * ns) - sim * b / (ns * ns))
            .collect();
        (gz, gs)
    } else {
        (vec![0.0; z.len()], vec![0.0; z_shuffled.len()])
    };
    TextureLoss {
        loss,
        similarity: sim,
        degenerate: false,
        grad_clean,
        grad_shuffled,
    }
}

/// Accumulates into `grads` the parameter gradient of
/// `df · f_topo + dz · z_topo` for one cached forward pass. `Â` is data.
pub fn gcn_backward(
    params: &GcnParams,
    cache: &GcnCache,
    df: &[f64],
    dz_extra: Option<&[f64]>,
    grads: &mut GcnParams,
) -> Result<()> {
    if df.len() != params.classes() {
        return Err(Error::Shape {
            op: "gcn_backward",
            expected: format!("{} logits", params.classes()),
            got: format!("{} logits", df.len()),
        });
    }
    grads.w_topo.add_outer(&cache.z_topo, df)?;
    for (g, d) in grads.b_topo.as_mut_slice().iter_mut().zip(df) {
        *g += d;
    }
    let mut dz = params.w_topo.mul_vec(df)?;
    if let Some(extra) = dz_extra {
        for (a, b) in dz.iter_mut().zip(extra) {
            *a += b;
        }
    }
    if dz.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let n = cache.graph.n();
    let inv_n = 1.0 / n as f64;
    let hidden = params.hidden_dim();

    let mut dpre2 = Matrix::zeros(n, hidden);
    for i in 0..n {
        let pre = cache.pre2.row(i);
        let mask = cache.masks.as_ref().map(|m| m.layer2.row(i));
        for (j, d) in dpre2.row_mut(i).iter_mut().enumerate() {
            if pre[j] > 0.0 {
                *d = dz[j] * inv_n * mask.map_or(1.0, |m| m[j]);
            }
        }
    }
    grads.w2.add_t_matmul(&cache.ah1, &dpre2)?;
    for (g, s) in grads.b2.as_mut_slice().iter_mut().zip(dpre2.column_sum()) {
        *g += s;
    }
    let dah1 = dpre2.matmul_t(&params.w2)?;
    // Â is symmetric, so Âᵀ · dah1 = Â · dah1.
    let mut dpre1 = cache.graph.propagate(&dah1)?;
    let m1 = cache.masks.as_ref().map(|m| &m.layer1);
    for (idx, (d, &pre)) in dpre1
        .as_mut_slice()
        .iter_mut()
        .zip(cache.pre1.as_slice())
        .enumerate()
    {
        *d = if pre > 0.0 { *d * m1.map_or(1.0, |m| m.as_slice()[idx]) } else { 0.0 };
    }
    grads.w1.add_t_matmul(&cache.ah0, &dpre1)?;
    for (g, s) in grads.b1.as_mut_slice().iter_mut().zip(dpre1.column_sum()) {
        *g += s;
    }
    Ok(())
}

/// Raw per-instance localization scores `H2_i · w` for a weight column `w`.
pub fn node_scores(cache: &GcnCache, weight: &[f64]) -> Vec<f64> {
    (0..cache.h2.rows()).map(|i| dot(cache.h2.row(i), weight)).collect()
}
