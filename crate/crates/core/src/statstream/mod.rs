//! Permutation-invariant statistical stream.
//!
//! Each instance is softly assigned to `K` learnable prototypes with
//! `a_ik ∝ exp(-‖h_i - c_k‖² / τ)`; the bag is summarized by the mean
//! assignment (a soft prototype histogram) and classified by an MLP. The
//! temperature is stored as `log τ` so it stays positive under updates.

mod kmeans;

pub use kmeans::{minibatch_kmeans, KMeansConfig};

use crate::bagstore::Bag;
use crate::error::{Error, Result};
use crate::head::{MlpCache, MlpHead};
use crate::numkit::{softmax, Matrix, Params, RngStream};
use kmeans::sq_dist;

pub type StatHead = MlpHead;

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    /// `K x d` prototype matrix.
    pub prototypes: Matrix,
    /// `1 x 1` holding `log τ`.
    pub log_tau: Matrix,
}

impl Codebook {
    pub fn new(prototypes: Matrix, tau: f64) -> Result<Self> {
        if prototypes.rows() == 0 {
            return Err(Error::InvalidArgument("codebook needs K >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
        }
        Ok(Codebook {
            prototypes,
            log_tau: Matrix::from_vec(1, 1, vec![tau.ln()])?,
        })
    }

    pub fn k(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.get(0, 0).exp()
    }
}

/// Codebook from minibatch k-means over a sample of instance embeddings, τ = 1.
pub fn init_codebook(sample: &Matrix, k: usize, rng: &mut RngStream) -> Result<Codebook> {
    init_codebook_with(sample, k, KMeansConfig::default(), rng)
}

pub fn init_codebook_with(sample: &Matrix, k: usize, cfg: KMeansConfig, rng: &mut RngStream) -> Result<Codebook> {
    Codebook::new(minibatch_kmeans(sample, k, cfg, rng)?, 1.0)
}

fn neg_scaled_distances(h: &[f64], cb: &Codebook) -> (Vec<f64>, Vec<f64>) {
    let inv_tau = 1.0 / cb.tau();
    let d2: Vec<f64> = (0..cb.k()).map(|k| sq_dist(h, cb.prototypes.row(k))).collect();
    let logits = d2.iter().map(|d| -d * inv_tau).collect();
    (d2, logits)
}

/// Soft assignment of one embedding to the prototypes.
pub fn soft_assign(h: &[f64], cb: &Codebook) -> Result<Vec<f64>> {
    if h.len() != cb.dim() {
        return Err(Error::Shape {
            op: "soft_assign",
            expected: format!("{} dims", cb.dim()),
            got: format!("{} dims", h.len()),
        });
    }
    Ok(softmax(&neg_scaled_distances(h, cb).1))
}

/// Sums rows in a content-defined order so the result does not depend on
/// instance order at all.
fn canonical_mean(rows: &Matrix) -> Vec<f64> {
    let mut order: Vec<usize> = (0..rows.rows()).collect();
    order.sort_by(|&a, &b| {
        rows.row(a)
            .iter()
            .zip(rows.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut z = vec![0.0; rows.cols()];
    for &r in &order {
        for (zv, &a) in z.iter_mut().zip(rows.row(r)) {
            *zv += a;
        }
    }
    let inv = 1.0 / rows.rows() as f64;
    z.iter_mut().for_each(|v| *v *= inv);
    z
}

/// Forward intermediates needed by [`stat_backward`].
#[derive(Clone, Debug)]
pub struct StatCache {
    pub sq_dists: Matrix,
    pub assignments: Matrix,
    pub z_stat: Vec<f64>,
    pub head: MlpCache,
}

fn assignments(bag: &Bag, cb: &Codebook) -> Result<(Matrix, Matrix)> {
    if bag.is_empty() {
        return Err(Error::EmptyBag);
    }
    if bag.dim() != cb.dim() {
        return Err(Error::Shape {
            op: "bag_histogram",
            expected: format!("{} dims", cb.dim()),
            got: format!("{} dims", bag.dim()),
        });
    }
    let (n, k) = (bag.len(), cb.k());
    let mut d2 = Matrix::zeros(n, k);
    let mut a = Matrix::zeros(n, k);
    for i in 0..n {
        let (d, logits) = neg_scaled_distances(bag.embeddings.row(i), cb);
        d2.row_mut(i).copy_from_slice(&d);
        a.row_mut(i).copy_from_slice(&softmax(&logits));
    }
    Ok((d2, a))
}

/// Bag-level soft prototype histogram `z_stat`.
pub fn bag_histogram(bag: &Bag, cb: &Codebook) -> Result<Vec<f64>> {
    let (_, a) = assignments(bag, cb)?;
    Ok(canonical_mean(&a))
}

/// Head logits for a histogram.
pub fn stat_forward(z_stat: &[f64], head: &StatHead) -> Result<Vec<f64>> {
    head.forward(z_stat).map(|(l, _)| l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatStream {
    pub codebook: Codebook,
    pub head: StatHead,
}

impl StatStream {
    pub fn new(codebook: Codebook, hidden: usize, classes: usize, rng: &mut RngStream) -> Self {
        let head = MlpHead::new(codebook.k(), hidden, classes, rng);
        StatStream { codebook, head }
    }

    pub fn zeros_like(&self) -> Self {
        StatStream {
            codebook: Codebook {
                prototypes: Matrix::zeros(self.codebook.k(), self.codebook.dim()),
                log_tau: Matrix::zeros(1, 1),
            },
            head: self.head.zeros_like(),
        }
    }

    pub fn forward(&self, bag: &Bag) -> Result<(Vec<f64>, StatCache)> {
        let (sq_dists, a) = assignments(bag, &self.codebook)?;
        let z_stat = canonical_mean(&a);
        let (logits, head) = self.head.forward(&z_stat)?;
        Ok((
            logits,
            StatCache {
                sq_dists,
                assignments: a,
                z_stat,
                head,
            },
        ))
    }

    pub fn logits(&self, bag: &Bag) -> Result<Vec<f64>> {
        self.forward(bag).map(|(l, _)| l)
    }
}

impl Params for StatStream {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut t = vec![
            ("prototypes", &self.codebook.prototypes),
            ("log_tau", &self.codebook.log_tau),
        ];
        t.extend(
            self.head
                .tensors()
                .into_iter()
                .map(|(n, m)| (match n { "w1" => "stat_w1", "b1" => "stat_b1", "w2" => "stat_w2", _ => "stat_b2" }, m)),
        );
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = vec![&mut self.codebook.prototypes, &mut self.codebook.log_tau];
        t.extend(self.head.tensors_mut());
        t
    }
}

/// Exact gradients of `dlogits · logits` with respect to the prototypes,
/// `log τ` and the head, through the squared-distance softmax.
pub fn stat_backward(stream: &StatStream, bag: &Bag, cache: &StatCache, dlogits: &[f64]) -> Result<StatStream> {
    let mut grads = stream.zeros_like();
    let dz = stream.head.backward(&cache.head, dlogits, &mut grads.head)?;
    let (n, k) = (bag.len(), stream.codebook.k());
    let inv_tau = 1.0 / stream.codebook.tau();
    let inv_n = 1.0 / n as f64;
    let mut dlog_tau = 0.0;
    for i in 0..n {
        let a = cache.assignments.row(i);
        // d/ds of softmax with upstream dz / N.
        let mean: f64 = a.iter().zip(&dz).map(|(ai, g)| ai * g).sum::<f64>() * inv_n;
        let h = bag.embeddings.row(i);
        for c in 0..k {
            let ds = a[c] * (dz[c] * inv_n - mean);
            if ds == 0.0 {
                continue;
            }
            // s_ic = -‖h - c‖² / τ: ds/dc = 2 (h - c) / τ and ds/dlogτ = ‖h - c‖² / τ.
            dlog_tau += ds * cache.sq_dists.get(i, c) * inv_tau;
            let scale = 2.0 * ds * inv_tau;
            let proto = stream.codebook.prototypes.row(c);
            let diff: Vec<f64> = h.iter().zip(proto).map(|(x, p)| scale * (x - p)).collect();
            for (g, d) in grads.codebook.prototypes.row_mut(c).iter_mut().zip(diff) {
                *g += d;
            }
        }
    }
    grads.codebook.log_tau.set(0, 0, dlog_tau);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagstore::Label;
    use crate::numkit::{cross_entropy, finite_diff_grad, max_rel_error};

    fn random_bag(n: usize, d: usize, rng: &mut RngStream) -> Bag {
        let emb = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
        let coords = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.uniform()).collect()).unwrap();
        Bag::new(0, emb, coords, Label::Class(0)).unwrap()
    }

    fn random_stream(k: usize, d: usize, rng: &mut RngStream) -> StatStream {
        let protos = Matrix::from_vec(k, d, (0..k * d).map(|_| rng.normal()).collect()).unwrap();
        let cb = Codebook::new(protos, 0.5 + rng.uniform() * 2.0).unwrap();
        StatStream::new(cb, 6, 3, rng)
    }

    #[test]
    fn single_prototype_assigns_everything() {
        let cb = Codebook::new(Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), 1.0).unwrap();
        assert_eq!(soft_assign(&[4.0, -1.0], &cb).unwrap(), vec![1.0]);
    }

    #[test]
    fn equidistant_point_is_uniform() {
        let cb = Codebook::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap(), 1.0).unwrap();
        for v in soft_assign(&[0.0, 0.0], &cb).unwrap() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn one_dimensional_assignment_oracle() {
        // Distances² {0.25, 2.25}; softmax([-0.25, -2.25]) = [1, e^-2] / (1 + e^-2),
        // 40-digit reference: 0.8807970779778824440597291413023967952063,
        // 0.1192029220221175559402708586976032047937.
        let cb = Codebook::new(Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap(), 1.0).unwrap();
        let a = soft_assign(&[0.5], &cb).unwrap();
        assert!((a[0] - 0.880_797_077_977_882_44).abs() < 1e-15);
        assert!((a[1] - 0.119_202_922_022_117_56).abs() < 1e-15);

        let emb = Matrix::from_rows(&[vec![0.5], vec![1.5]]).unwrap();
        let bag = Bag::new(0, emb, Matrix::zeros(2, 2), Label::Class(0)).unwrap();
        let z = bag_histogram(&bag, &cb).unwrap();
        // 1.5 mirrors 0.5 around 1, so its assignment is the reversed vector.
        assert!((z[0] - 0.5).abs() < 1e-15 && (z[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_instances_give_their_assignment() {
        let mut rng = RngStream::new(4);
        let s = random_stream(5, 3, &mut rng);
        let row = vec![0.3, -0.2, 1.1];
        let emb = Matrix::from_rows(&vec![row.clone(); 7]).unwrap();
        let bag = Bag::new(0, emb, Matrix::zeros(7, 2), Label::Class(0)).unwrap();
        let z = bag_histogram(&bag, &s.codebook).unwrap();
        let a = soft_assign(&row, &s.codebook).unwrap();
        for (x, y) in z.iter().zip(&a) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn histogram_is_order_free_and_normalized() {
        let mut rng = RngStream::new(5);
        let s = random_stream(8, 4, &mut rng);
        let bag = random_bag(30, 4, &mut rng);
        let z = bag_histogram(&bag, &s.codebook).unwrap();
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mut order: Vec<usize> = (0..30).collect();
        rng.shuffle(&mut order);
        let z2 = bag_histogram(&bag.reordered(&order), &s.codebook).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn distance_shift_leaves_assignment_unchanged() {
        // Adding a constant to every squared distance: append a coordinate in
        // which the point is offset and all prototypes share one value.
        let mut rng = RngStream::new(6);
        let s = random_stream(6, 3, &mut rng);
        let h: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let mut protos = Matrix::zeros(6, 4);
        for k in 0..6 {
            protos.row_mut(k)[..3].copy_from_slice(s.codebook.prototypes.row(k));
            protos.set(k, 3, 0.7);
        }
        let shifted = Codebook::new(protos, s.codebook.tau()).unwrap();
        let mut h2 = h.clone();
        h2.push(-1.3);
        let a = soft_assign(&h, &s.codebook).unwrap();
        let b = soft_assign(&h2, &shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_head_and_degenerate_identity_head() {
        let z = vec![0.2, 0.5, 0.3];
        assert_eq!(stat_forward(&z, &MlpHead::zeros(3, 4, 2)).unwrap(), vec![0.0, 0.0]);
        let mut head = MlpHead::zeros(3, 3, 2);
        head.w1 = Matrix::identity(3);
        head.w2.set(0, 0, 1.0);
        head.w2.set(1, 1, 1.0);
        assert_eq!(stat_forward(&z, &head).unwrap(), vec![0.2, 0.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngStream::new(7);
        let s = random_stream(4, 3, &mut rng);
        let bag = random_bag(5, 3, &mut rng);
        let (_, cache) = s.forward(&bag).unwrap();
        let g = stat_backward(&s, &bag, &cache, &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for trial in 0..5 {
            let mut rng = RngStream::new(100 + trial);
            let s = random_stream(4, 3, &mut rng);
            let bag = random_bag(6, 3, &mut rng);
            let (logits, cache) = s.forward(&bag).unwrap();
            let (_, dl) = cross_entropy(&logits, 1).unwrap();
            let g = stat_backward(&s, &bag, &cache, &dl).unwrap();
            let fd = finite_diff_grad(
                |p| {
                    let mut t = s.clone();
                    t.assign_flat(p);
                    cross_entropy(&t.logits(&bag).unwrap(), 1).unwrap().0
                },
                &s.flatten(),
                1e-5,
            )
            .unwrap();
            let err = max_rel_error(&g.flatten(), &fd, 1e-7);
            assert!(err < 1e-5, "trial {trial}: {err}");
        }
    }

    #[test]
    fn sharper_assignments_push_log_tau_down() {
        // Two well-separated prototypes; each instance sits on one of them and
        // the head rewards mass on prototype 0 for the "0" instances. A lower τ
        // sharpens the histogram toward the truth, so the loss rises with log τ.
        let protos = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let cb = Codebook::new(protos, 1.0).unwrap();
        let mut head = MlpHead::zeros(2, 2, 2);
        head.w1 = Matrix::identity(2);
        head.w2 = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let s = StatStream { codebook: cb, head };
        let emb = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        let bag = Bag::new(0, emb, Matrix::zeros(3, 2), Label::Class(0)).unwrap();
        let (logits, cache) = s.forward(&bag).unwrap();
        let (_, dl) = cross_entropy(&logits, 0).unwrap();
        let g = stat_backward(&s, &bag, &cache, &dl).unwrap();
        let fd = finite_diff_grad(
            |lt| {
                let mut t = s.clone();
                t.codebook.log_tau.set(0, 0, lt[0]);
                cross_entropy(&t.logits(&bag).unwrap(), 0).unwrap().0
            },
            &[0.0],
            1e-5,
        )
        .unwrap();
        let analytic = g.codebook.log_tau.get(0, 0);
        assert!(analytic > 0.0 && fd[0] > 0.0);
        assert!((analytic - fd[0]).abs() / fd[0].abs() < 1e-6);
    }
}
