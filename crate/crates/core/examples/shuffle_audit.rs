//! Shuffle audit: evaluates a spatial model and a coordinate-free baseline
//! while an increasing fraction of coordinates is permuted in every bag.
//!
//! Run: `cargo run --release --example shuffle_audit`

use restopo::diagnostics::{audit_svg, shuffle_audit, DEFAULT_FRACTIONS};
use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::trainer::{train_variant, TrainConfig, Variant};

fn main() -> restopo::Result<()> {
    let bench = BenchConfig {
        n_train: 1000,
        n_val: 100,
        n_test: 200,
        seed: 7,
        ..BenchConfig::default()
    };
    let parts = partition(&generate(Bench::B, &bench)?, &bench);
    let mut curves = Vec::new();
    for variant in [Variant::TwoStage, Variant::MeanPool] {
        let cfg = TrainConfig {
            variant,
            stage1_epochs: 4,
            stage2_epochs: Some(20),
            topo_hidden: Some(64),
            ..TrainConfig::default()
        };
        let (model, _) = train_variant(&parts.train, Some(&parts.val), &cfg)?;
        let curve = shuffle_audit(&model, &parts.test, &DEFAULT_FRACTIONS, 3, 0, variant.name())?;
        print!("{}", curve.to_csv());
        println!("{}: AUC drop from clean to fully shuffled {:.3}\n", variant.name(), curve.endpoint_drop());
        curves.push(curve);
    }
    let path = std::env::temp_dir().join("restopo_audit.svg");
    std::fs::write(&path, audit_svg(&curves))?;
    println!("audit chart written to {}", path.display());
    Ok(())
}
