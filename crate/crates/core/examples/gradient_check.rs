//! Compares analytic gradients against central finite differences for the
//! survival head loss and the texture hinge.
//!
//! Run: `cargo run --release --example gradient_check`

use restopo::numkit::{finite_diff_grad, max_rel_error, RngStream};
use restopo::topostream::texture_loss;
use restopo::trainer::survival_loss;

fn main() -> restopo::Result<()> {
    let mut rng = RngStream::new(4);
    let logits: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
    for (interval, observed) in [(0u8, true), (2, true), (2, false), (3, false)] {
        let (_, analytic) = survival_loss(&logits, interval, observed)?;
        let numeric = finite_diff_grad(|x| survival_loss(x, interval, observed).map(|r| r.0).unwrap_or(f64::NAN), &logits, 1e-5)?;
        println!(
            "survival interval {interval}, event {observed:>5}: max relative error {:.2e}",
            max_rel_error(&analytic, &numeric, 1e-3)
        );
    }

    // Keep the two representations close so the hinge is active.
    let z: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
    let zs: Vec<f64> = z.iter().map(|v| v + 0.2 * rng.normal()).collect();
    let tex = texture_loss(&z, &zs, 0.3);
    let numeric = finite_diff_grad(|x| texture_loss(x, &zs, 0.3).loss, &z, 1e-6)?;
    println!(
        "texture loss {:.4} at similarity {:.4}: max relative error {:.2e}",
        tex.loss,
        tex.similarity,
        max_rel_error(&tex.grad_clean, &numeric, 1e-3)
    );
    Ok(())
}
