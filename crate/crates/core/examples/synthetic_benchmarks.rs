//! Generates the composition benchmark (A), the topology benchmark (B) and
//! the survival variant, writes them as RTMB files and reads one back.
//!
//! Run: `cargo run --release --example synthetic_benchmarks`

use restopo::bagstore::{load_dataset, save_dataset};
use restopo::synthbench::{generate, motif_risk, partition, Bench, BenchConfig};

fn main() -> restopo::Result<()> {
    let cfg = BenchConfig {
        n_train: 200,
        n_val: 50,
        n_test: 50,
        seed: 7,
        ..BenchConfig::default()
    };
    let dir = std::env::temp_dir().join("restopo_benchmarks");
    std::fs::create_dir_all(&dir)?;
    for bench in [Bench::A, Bench::B, Bench::Survival] {
        let ds = generate(bench, &cfg)?;
        let parts = partition(&ds, &cfg);
        let path = dir.join(format!("{}_train.rtmb", bench.name()));
        save_dataset(&parts.train, &path)?;
        // Values are stored as f32, so the reload differs by rounding only.
        let back = load_dataset(&path)?;
        let narrowing = back
            .bags
            .iter()
            .zip(&parts.train.bags)
            .flat_map(|(x, y)| {
                let emb = x.embeddings.as_slice().iter().zip(y.embeddings.as_slice());
                emb.chain(x.coords.as_slice().iter().zip(y.coords.as_slice()))
            })
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let labels_kept = back.bags.iter().zip(&parts.train.bags).all(|(x, y)| x.label == y.label);
        println!(
            "{:>8}: {} bags of {} instances, dim {}, {:?} task; reload labels kept {}, max f32 rounding {:.1e}",
            bench.name(),
            ds.len(),
            cfg.bag_size,
            ds.dim,
            ds.task,
            labels_kept,
            narrowing
        );
    }
    // In B every bag holds the same digits; only the spatial spread of the
    // five key instances separates the classes.
    let b = generate(Bench::B, &cfg)?;
    let spread = |class: usize| {
        let r: Vec<f64> = b.bags.iter().filter(|x| x.label.class() == Some(class)).map(motif_risk).collect();
        -r.iter().sum::<f64>() / r.len() as f64
    };
    println!("B mean key-instance distance: positive {:.3}, negative {:.3}", spread(1), spread(0));
    print!("{}", cfg.manifest(Bench::B));
    Ok(())
}
