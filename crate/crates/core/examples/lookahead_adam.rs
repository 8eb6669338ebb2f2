//! Minimizes an ill-conditioned quadratic with Lookahead(AdamW) under the
//! cosine learning-rate schedule.
//!
//! Run: `cargo run --release --example lookahead_adam`

use restopo::numkit::{adam_lookahead_step, cosine_lr, AdamConfig, Matrix, OptimizerState};

fn main() -> restopo::Result<()> {
    let curvature = [1.0, 10.0, 100.0];
    let mut x = Matrix::row_vector(&[3.0, -2.0, 1.0]);
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    let mut state = OptimizerState::new(cfg, &[&x]);
    let total = 400;
    for step in 0..total {
        let grad: Vec<f64> = x.as_slice().iter().zip(curvature).map(|(v, c)| c * v).collect();
        let g = Matrix::row_vector(&grad);
        let lr = cosine_lr(step, total, 0.05)?;
        adam_lookahead_step(&mut [&mut x], &[&g], &mut state, lr)?;
        if step % 80 == 0 || step == total - 1 {
            let loss: f64 = x.as_slice().iter().zip(curvature).map(|(v, c)| 0.5 * c * v * v).sum();
            println!("step {step:>3}  lr {lr:.5}  loss {loss:.3e}");
        }
    }
    println!("final x {:?}, optimizer steps {}", x.as_slice(), state.step_count());
    Ok(())
}
