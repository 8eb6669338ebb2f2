//! Builds the KNN spatial graph of a point cloud, propagates features with
//! the symmetric normalized adjacency and checks rigid-motion invariance.
//!
//! Run: `cargo run --release --example knn_graph`

use restopo::numkit::{Matrix, RngStream};
use restopo::topostream::build_knn_graph;

fn main() -> restopo::Result<()> {
    let mut rng = RngStream::new(1);
    let n = 12;
    let coords = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.uniform()).collect())?;
    let graph = build_knn_graph(&coords, 3)?;
    println!("{} nodes, {} directed edges", graph.n(), graph.edges().len());
    for i in 0..4 {
        println!("node {i}: neighbors {:?}, row {:?}", graph.neighbors(i), graph.row(i).collect::<Vec<_>>());
    }

    // One propagation step of a constant signal stays close to constant.
    let ones = Matrix::from_vec(n, 1, vec![1.0; n])?;
    let smoothed = graph.propagate(&ones)?;
    println!("A_hat * 1 = {:?}", &smoothed.as_slice()[..4]);

    // Components of the subgraph induced by the left half of the square.
    let active: Vec<bool> = (0..n).map(|i| coords.get(i, 0) < 0.5).collect();
    let (labels, count) = graph.components(&active);
    println!("{count} components among left-half nodes: {labels:?}");

    // Rotating, scaling and translating the cloud keeps the graph.
    let (c, s) = (0.6f64, 0.8f64);
    let moved: Vec<f64> = (0..n)
        .flat_map(|i| {
            let (x, y) = (coords.get(i, 0), coords.get(i, 1));
            [3.0 * (c * x - s * y) + 5.0, 3.0 * (s * x + c * y) - 2.0]
        })
        .collect();
    let moved = build_knn_graph(&Matrix::from_vec(n, 2, moved)?, 3)?;
    println!("edge sets equal after a rigid motion: {}", moved.edges() == graph.edges());
    Ok(())
}
