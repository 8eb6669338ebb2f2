//! Drives the command layer in-process: generates a benchmark, trains a
//! model, evaluates it, and repeats the whole run to show that every output
//! file hashes identically.
//!
//! Run: `cargo run --release --example reproducible_cli`

use std::path::Path;

use restopo::cli::{run_from, RunManifest};

fn pipeline(root: &Path) -> restopo::Result<Vec<RunManifest>> {
    let dir = |name: &str| root.join(name).display().to_string();
    let data = dir("data");
    let train = dir("train");
    let small = ["n_train=60", "n_val=20", "n_test=20"];
    let mut out = vec![run_from(["restopo", "gen", "--bench", "b", "--out", &data].into_iter().chain(small))?];
    let file = |s: &str| format!("{data}/b_{s}.rtmb");
    out.push(run_from([
        "restopo", "train", "--train", &file("train"), "--val", &file("val"), "--test", &file("test"),
        "--out", &train, "stage1_epochs=1", "stage2_epochs=1", "hidden=32", "topo_hidden=16",
        "prototypes=8", "kmeans_sample=1000",
    ])?);
    out.push(run_from([
        "restopo", "eval", "--model", &format!("{train}/model.rtmc"), "--data", &file("test"), "--out", &dir("eval"),
    ])?);
    Ok(out)
}

fn main() -> restopo::Result<()> {
    let base = std::env::temp_dir().join("restopo_cli_example");
    let first = pipeline(&base.join("first"))?;
    let second = pipeline(&base.join("second"))?;
    for (a, b) in first.iter().zip(&second) {
        let hashes = |m: &RunManifest| m.outputs.iter().map(|f| f.sha256.clone()).collect::<Vec<_>>();
        println!(
            "{:<6} {} outputs, identical hashes across runs: {}",
            a.command,
            a.outputs.len(),
            hashes(a) == hashes(b)
        );
    }
    Ok(())
}
