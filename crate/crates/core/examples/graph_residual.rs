//! Runs the two-layer GCN residual on a bag, builds the coordinate-shuffled
//! view and evaluates the texture hinge between the two representations.
//!
//! Run: `cargo run --release --example graph_residual`

use restopo::numkit::RngStream;
use restopo::topostream::{
    build_knn_graph, gcn_forward, node_scores, shuffled_forward, texture_hinge, texture_loss, GcnParams,
};
use restopo::synthbench::{generate, Bench, BenchConfig};

fn main() -> restopo::Result<()> {
    let cfg = BenchConfig {
        n_train: 4,
        n_val: 1,
        n_test: 1,
        seed: 11,
        ..BenchConfig::default()
    };
    let ds = generate(Bench::B, &cfg)?;
    let bag = &ds.bags[0];
    let mut rng = RngStream::new(2);
    let params = GcnParams::new(ds.dim, 32, 2, 0.25, &mut rng)?;
    let graph = build_knn_graph(&bag.coords, 8)?;
    let (clean, cache) = gcn_forward(&bag.embeddings, &graph, &params, None)?;
    let (shuffled, _) = shuffled_forward(bag, &params, 8, None, &mut rng)?;
    println!("f_topo clean {:?}, shuffled {:?}", clean.f_topo, shuffled.f_topo);

    let tex = texture_loss(&clean.z_topo, &shuffled.z_topo, 0.3);
    println!("cosine(clean, shuffled) = {:.4}, texture loss {:.4}", tex.similarity, tex.loss);
    for sim in [1.0, 0.85, 0.7, 0.0, -1.0] {
        println!("  hinge at similarity {sim:>5}: {}", texture_hinge(sim, 0.3));
    }

    let direction: Vec<f64> = (0..32).map(|r| params.w_topo.get(r, 1) - params.w_topo.get(r, 0)).collect();
    let scores = node_scores(&cache, &direction);
    println!("first node scores {:?}", &scores[..5]);
    Ok(())
}
