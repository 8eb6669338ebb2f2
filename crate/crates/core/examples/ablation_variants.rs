//! Trains every registered variant on the same small topology benchmark and
//! prints its test AUC.
//!
//! Run: `cargo run --release --example ablation_variants`

use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::trainer::{evaluate, train_variant, TrainConfig, Variant};

fn main() -> restopo::Result<()> {
    let bench = BenchConfig {
        n_train: 1000,
        n_val: 100,
        n_test: 200,
        seed: 3,
        ..BenchConfig::default()
    };
    let parts = partition(&generate(Bench::B, &bench)?, &bench);
    for variant in Variant::ALL {
        let cfg = TrainConfig {
            variant,
            stage1_epochs: 4,
            stage2_epochs: Some(20),
            topo_hidden: Some(64),
            ..TrainConfig::default()
        };
        let (model, log) = train_variant(&parts.train, Some(&parts.val), &cfg)?;
        println!(
            "{:<10} {:>4} steps  test AUC {:.3}  ({})",
            variant.name(),
            log.steps.len(),
            evaluate(&model, &parts.test)?,
            variant.description()
        );
    }
    Ok(())
}
