//! The coordinate-free baselines: mean pooling and ungated attention MIL.
//! Both read only embeddings, so a full coordinate shuffle leaves their
//! logits bit-for-bit unchanged.
//!
//! Run: `cargo run --release --example attention_pooling`

use restopo::bagstore::shuffle_coords;
use restopo::baselines::{AttnMil, MeanPool};
use restopo::numkit::RngStream;
use restopo::synthbench::{generate, Bench, BenchConfig};

fn main() -> restopo::Result<()> {
    let cfg = BenchConfig {
        n_train: 4,
        n_val: 1,
        n_test: 1,
        seed: 5,
        ..BenchConfig::default()
    };
    let ds = generate(Bench::B, &cfg)?;
    let bag = &ds.bags[0];
    let mut rng = RngStream::new(9);
    let attn = AttnMil::new(ds.dim, 64, 2, &mut rng);
    let mean = MeanPool::new(ds.dim, 64, 2, &mut rng);

    let (logits, cache) = attn.forward(bag)?;
    let mut top: Vec<(usize, f64)> = cache.attention.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("attention logits {logits:?}; top weights {:?}", &top[..3]);
    println!("mean-pool logits {:?}", mean.logits(bag)?);

    let shuffled = shuffle_coords(bag, 1.0, &mut rng);
    println!(
        "unchanged under a full shuffle: attention {}, mean-pool {}",
        attn.logits(&shuffled)? == logits,
        mean.logits(&shuffled)? == mean.logits(bag)?
    );
    Ok(())
}
