//! Minibatch k-means (k-means++ seeding, per-center learning rates) used to
//! initialize the prototype codebook.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            batch_size: 1024,
            iterations: 50,
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct(points: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = (0..points.rows())
        .map(|r| points.row(r).iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut RngStream) -> Matrix {
    let n = points.rows();
    let mut centers = Matrix::zeros(k, points.cols());
    let first = rng.below(n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.uniform() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if target < w {
                pick = i;
                break;
            }
            target -= w;
            pick = i;
        }
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

/// Runs minibatch k-means over the rows of `points` and returns `k` centers.
pub fn minibatch_kmeans(points: &Matrix, k: usize, cfg: KMeansConfig, rng: &mut RngStream) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::TooFewDistinct { needed: k, found: distinct });
    }
    let n = points.rows();
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut counts = vec![0usize; k];
    let batch = cfg.batch_size.min(n).max(1);
    for _ in 0..cfg.iterations {
        let idx = rng.sample_indices(n, batch);
        let assigned: Vec<usize> = idx.iter().map(|&i| nearest(points.row(i), &centers).0).collect();
        for (&i, &c) in idx.iter().zip(&assigned) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            for (cv, &pv) in centers.row_mut(c).iter_mut().zip(points.row(i)) {
                *cv += eta * (pv - *cv);
            }
        }
    }
    Ok(centers)
}
