//! Trains the two-stage model on a small topology benchmark, then checks the
//! residual-gating inequality on every logged step and the best-so-far
//! stage-2 loss, and renders the gradient trace.
//!
//! Run: `cargo run --release --example two_stage_training`

use restopo::diagnostics::{gradient_trace_svg, verify_prop1, verify_prop2};
use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::trainer::{evaluate, train_variant, Stage, TrainConfig, Variant};

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
    let (model, log) = train_variant(&parts.train, Some(&parts.val), &cfg)?;
    for e in &log.epochs {
        println!(
            "epoch {:>2} {:<7} loss {:.4} texture {:.4} val AUC {:.3}",
            e.epoch,
            e.stage.name(),
            e.loss_cls,
            e.loss_texture,
            e.val_metric
        );
    }
    println!("test AUC {:.3}", evaluate(&model, &parts.test)?);

    let gate = verify_prop1(&log.steps)?;
    println!(
        "gating inequality: {} steps checked, {} violations",
        gate.steps_checked, gate.violations
    );
    let stage2: Vec<_> = log.epochs.iter().filter(|e| e.stage == Stage::Stage2).cloned().collect();
    let bound = verify_prop2(&stage2)?;
    println!(
        "stage-2 best-so-far nonincreasing: {}, improved: {}",
        bound.best_nonincreasing, bound.improved
    );
    let svg = gradient_trace_svg(&[("two_stage", &log)]);
    let path = std::env::temp_dir().join("restopo_gradients.svg");
    std::fs::write(&path, svg)?;
    println!("gradient trace written to {}", path.display());
    Ok(())
}
