//! Seeds prototypes with minibatch k-means and computes the soft prototype
//! histogram that summarizes a bag's composition.
//!
//! Run: `cargo run --release --example prototype_histogram`

use restopo::numkit::{Matrix, RngStream};
use restopo::statstream::{bag_histogram, minibatch_kmeans, soft_assign, Codebook, KMeansConfig, StatStream};
use restopo::synthbench::{generate, Bench, BenchConfig};

fn main() -> restopo::Result<()> {
    let cfg = BenchConfig {
        n_train: 60,
        n_val: 10,
        n_test: 10,
        seed: 3,
        ..BenchConfig::default()
    };
    let ds = generate(Bench::A, &cfg)?;
    let rows: Vec<f64> = ds.bags.iter().take(40).flat_map(|b| b.embeddings.as_slice().to_vec()).collect();
    let sample = Matrix::from_vec(rows.len() / ds.dim, ds.dim, rows)?;
    let mut rng = RngStream::new(5);
    let protos = minibatch_kmeans(&sample, 10, KMeansConfig::default(), &mut rng)?;
    let codebook = Codebook::new(protos, 1.0)?;
    println!("{} prototypes of dim {}, tau {}", codebook.k(), codebook.dim(), codebook.tau());

    let bag = &ds.bags[0];
    let a = soft_assign(bag.embeddings.row(0), &codebook)?;
    println!("first instance assignment sums to {:.6}", a.iter().sum::<f64>());
    let hist = bag_histogram(bag, &codebook)?;
    let shown: Vec<String> = hist.iter().map(|v| format!("{v:.3}")).collect();
    println!("bag {} histogram: [{}]", bag.id, shown.join(", "));

    // The histogram ignores instance order, so the whole stream does too.
    let stream = StatStream::new(codebook, 32, 2, &mut rng);
    let mut order: Vec<usize> = (0..bag.len()).collect();
    order.reverse();
    println!(
        "logits {:?} vs reversed bag {:?}",
        stream.logits(bag)?,
        stream.logits(&bag.reordered(&order))?
    );
    Ok(())
}
