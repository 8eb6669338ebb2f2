//! Discrete-time survival: the interval-censored head loss, and two-stage
//! training on the survival benchmark scored by C-index.
//!
//! Run: `cargo run --release --example survival`

use restopo::bagstore::Label;
use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::trainer::{evaluate, survival_loss, survival_risk, train_variant, TrainConfig, Variant};

fn main() -> restopo::Result<()> {
    let logits = [-1.0, 0.0, 0.5, 1.0];
    for interval in 0..4u8 {
        let (event, _) = survival_loss(&logits, interval, true)?;
        let (censored, _) = survival_loss(&logits, interval, false)?;
        println!("interval {interval}: event loss {event:.4}, censored loss {censored:.4}");
    }
    println!("risk of these logits {:.4}", survival_risk(&logits));

    let bench = BenchConfig {
        n_train: 1000,
        n_val: 100,
        n_test: 200,
        seed: 5,
        ..BenchConfig::default()
    };
    let parts = partition(&generate(Bench::Survival, &bench)?, &bench);
    let censored = parts
        .train
        .bags
        .iter()
        .filter(|b| matches!(b.label, Label::Survival { event_observed: false, .. }))
        .count();
    println!("{} training bags, {censored} censored", parts.train.len());
    let cfg = TrainConfig {
        variant: Variant::TwoStage,
        stage1_epochs: 4,
        stage2_epochs: Some(20),
        topo_hidden: Some(64),
        ..TrainConfig::default()
    };
    let (model, _) = train_variant(&parts.train, Some(&parts.val), &cfg)?;
    println!("test C-index {:.3}", evaluate(&model, &parts.test)?);
    Ok(())
}
