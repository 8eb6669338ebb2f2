//! Saves a trained model as an RTMC checkpoint, reloads it, and confirms the
//! reloaded model predicts identical logits. Damaged files are rejected.
//!
//! Run: `cargo run --release --example checkpoint_roundtrip`

use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::trainer::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, train_variant, TrainConfig, Variant};

fn main() -> restopo::Result<()> {
    let bench = BenchConfig {
        n_train: 40,
        n_val: 10,
        n_test: 10,
        seed: 2,
        ..BenchConfig::default()
    };
    let parts = partition(&generate(Bench::B, &bench)?, &bench);
    let cfg = TrainConfig {
        variant: Variant::TwoStage,
        stage1_epochs: 1,
        stage2_epochs: Some(1),
        hidden: 32,
        topo_hidden: Some(16),
        prototypes: 8,
        kmeans_sample: 1000,
        ..TrainConfig::default()
    };
    let (model, _) = train_variant(&parts.train, None, &cfg)?;
    let path = std::env::temp_dir().join("restopo_example.rtmc");
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path)?;
    let same = model.predict(&parts.test.bags)? == back.predict(&parts.test.bags)?;
    println!(
        "{} bytes, variant {}, identical test logits: {same}",
        std::fs::metadata(&path)?.len(),
        back.variant
    );

    let bytes = encode_checkpoint(&model)?;
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let truncated = &bytes[..bytes.len() - 3];
    for (what, candidate) in [("bad magic", &bad_magic[..]), ("truncated", truncated)] {
        match decode_checkpoint(candidate) {
            Ok(_) => println!("{what}: accepted"),
            Err(e) => println!("{what}: rejected ({e})"),
        }
    }
    Ok(())
}
