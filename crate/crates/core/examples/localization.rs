//! Instance-level localization from the topological residual: picks a Dice
//! threshold on validation bags and reports Dice and FROC on test bags.
//!
//! Run: `cargo run --release --example localization`

use restopo::localize::{localize_scored, scores_csv};
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
    let cfg = TrainConfig {
        variant: Variant::TwoStage,
        stage1_epochs: 4,
        stage2_epochs: Some(20),
        topo_hidden: Some(64),
        ..TrainConfig::default()
    };
    let (model, _) = train_variant(&parts.train, Some(&parts.val), &cfg)?;
    let (report, scored) = localize_scored(&model, &parts.val.bags, &parts.test.bags, 1)?;
    println!(
        "{} validation bags, {} test bags, threshold {:.2}",
        report.validation_bags, report.test_bags, report.threshold
    );
    println!("mean Dice {:.3}, FROC average {:.3}", report.dice_mean, report.froc.average);
    for (p, s) in report.froc.points.iter().zip(&report.froc.sensitivities) {
        println!("  sensitivity at {p:>5} FP per bag: {s:.3}");
    }
    println!(
        "mean normalized score: key {:.3}, background {:.3}",
        report.mean_key_score, report.mean_background_score
    );
    let csv = scores_csv(&scored[..1]);
    print!("{}", csv.lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
