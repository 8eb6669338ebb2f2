use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Symmetrized KNN graph over instance coordinates together with its
/// normalized adjacency `Â = D̃^{-1/2} (A + I) D̃^{-1/2}` in compressed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    n: usize,
    neighbors: Vec<Vec<u32>>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

/// Links every node to its `min(k, N-1)` nearest neighbors (ties broken by
/// the smaller index), symmetrizes by edge union and normalizes with self-loops.
pub fn build_knn_graph(coords: &Matrix, k: usize) -> Result<SpatialGraph> {
    if coords.cols() != 2 {
        return Err(Error::Shape {
            op: "build_knn_graph",
            expected: "N x 2 coordinates".into(),
            got: format!("{:?}", coords.shape()),
        });
    }
    let n = coords.rows();
    let kk = k.min(n.saturating_sub(1));
    let mut adj = vec![vec![false; n]; n];
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(coords.row(i), coords.row(j)), j)));
        if kk < cand.len() {
            cand.select_nth_unstable_by(kk, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, j) in &cand[..kk] {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    let neighbors: Vec<Vec<u32>> = adj
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j as u32).collect())
        .collect();
    Ok(SpatialGraph::from_neighbors(neighbors))
}

impl SpatialGraph {
    /// Builds the normalized adjacency from symmetric, sorted neighbor lists.
    pub fn from_neighbors(neighbors: Vec<Vec<u32>>) -> SpatialGraph {
        let n = neighbors.len();
        let deg: Vec<f64> = neighbors.iter().map(|nb| (nb.len() + 1) as f64).collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, nb) in neighbors.iter().enumerate() {
            let mut row: Vec<u32> = nb.clone();
            row.push(i as u32);
            row.sort_unstable();
            for j in row {
                cols.push(j);
                // Symmetric by construction since the product commutes.
                vals.push(1.0 / (deg[i] * deg[j as usize]).sqrt());
            }
            row_ptr.push(cols.len());
        }
        SpatialGraph {
            n,
            neighbors,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut e = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                if (i as u32) < j {
                    e.push((i as u32, j));
                }
            }
        }
        e
    }

    /// Nonzeros of row `i` of `Â` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().zip(&self.vals[s..e]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `Â · h`.
    pub fn propagate(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.n {
            return Err(Error::Shape {
                op: "SpatialGraph::propagate",
                expected: format!("{} rows", self.n),
                got: format!("{} rows", h.rows()),
            });
        }
        let mut out = Matrix::zeros(self.n, h.cols());
        for i in 0..self.n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let dst = out.row_mut(i);
            for (&c, &v) in self.cols[s..e].iter().zip(&self.vals[s..e]) {
                for (d, &x) in dst.iter_mut().zip(h.row(c as usize)) {
                    *d += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Connected components of the subgraph induced by `active`, as a label
    /// per node (`None` for inactive nodes) plus the component count.
    pub fn components(&self, active: &[bool]) -> (Vec<Option<usize>>, usize) {
        let mut label = vec![None; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if !active[s] || label[s].is_some() {
                continue;
            }
            label[s] = Some(count);
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    let v = v as usize;
                    if active[v] && label[v].is_none() {
                        label[v] = Some(count);
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;
    use proptest::prelude::*;

    #[test]
    fn single_node_is_a_self_loop() {
        let g = build_knn_graph(&Matrix::from_rows(&[vec![0.3, 0.4]]).unwrap(), 8).unwrap();
        assert_eq!(g.dense().as_slice(), &[1.0]);
    }

    #[test]
    fn two_nodes_average() {
        let g = build_knn_graph(&Matrix::from_rows(&[vec![0.0, 0.0], vec![0.9, 0.1]]).unwrap(), 3).unwrap();
        assert_eq!(g.dense().as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn collinear_points_use_index_tie_break() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.25, 0.5]).collect();
        let g = build_knn_graph(&Matrix::from_rows(&pts).unwrap(), 2).unwrap();
        // Brute-force directed lists (distance, then index):
        // 0 -> {1,2}, 1 -> {0,2}, 2 -> {1,3}, 3 -> {2,4}, 4 -> {2,3}; union:
        let want: Vec<Vec<u32>> = vec![vec![1, 2], vec![0, 2], vec![0, 1, 3, 4], vec![2, 4], vec![2, 3]];
        for (i, w) in want.iter().enumerate() {
            assert_eq!(g.neighbors(i), w.as_slice(), "node {i}");
        }
    }

    fn brute_force_normalized(g: &SpatialGraph) -> Matrix {
        let n = g.n();
        let mut a = Matrix::identity(n);
        for (i, j) in g.edges() {
            a.set(i as usize, j as usize, 1.0);
            a.set(j as usize, i as usize, 1.0);
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
            }
        }
        out
    }

    proptest! {
        #[test]
        fn normalization_matches_dense_formula(n in 1usize..=20, k in 1usize..10, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let coords = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.uniform()).collect()).unwrap();
            let g = build_knn_graph(&coords, k).unwrap();
            let dense = g.dense();
            let want = brute_force_normalized(&g);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((dense.get(i, j) - want.get(i, j)).abs() < 1e-12);
                    prop_assert!((dense.get(i, j) - dense.get(j, i)).abs() < 1e-12);
                }
                for (_, v) in g.row(i) {
                    prop_assert!(v > 0.0 && v <= 1.0);
                }
                prop_assert!(g.degree(i) >= k.min(n - 1));
            }
        }

        #[test]
        fn components_agree_with_flood_fill(n in 1usize..=50, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let coords = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.uniform()).collect()).unwrap();
            let g = build_knn_graph(&coords, 3).unwrap();
            let active: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            let (labels, count) = g.components(&active);
            // Oracle: repeated relaxation over the dense edge set.
            let mut rep: Vec<usize> = (0..n).collect();
            let edges = g.edges();
            loop {
                let mut changed = false;
                for &(a, b) in &edges {
                    let (a, b) = (a as usize, b as usize);
                    if active[a] && active[b] {
                        let m = rep[a].min(rep[b]);
                        if rep[a] != m || rep[b] != m {
                            rep[a] = m;
                            rep[b] = m;
                            changed = true;
                        }
                    }
                }
                if !changed { break; }
            }
            let mut roots: Vec<usize> = (0..n).filter(|&i| active[i]).map(|i| rep[i]).collect();
            roots.sort_unstable();
            roots.dedup();
            prop_assert_eq!(roots.len(), count);
            for a in 0..n {
                for b in 0..n {
                    if active[a] && active[b] {
                        prop_assert_eq!(labels[a] == labels[b], rep[a] == rep[b]);
                    }
                }
            }
        }
    }
}
