//! The evaluation metrics on hand-sized inputs: AUC with ties, C-index with
//! censoring, Dice and the FROC sweep over a KNN graph.
//!
//! Run: `cargo run --release --example metrics`

use restopo::diagnostics::{accuracy, auc, c_index, macro_f1};
use restopo::localize::{dice, froc, ScoredBag, FROC_POINTS};
use restopo::numkit::Matrix;
use restopo::topostream::build_knn_graph;

fn main() -> restopo::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.3, 0.2];
    let labels = [true, true, false, false, true];
    println!("AUC {:.4}", auc(&scores, &labels)?);

    let risks = [2.0, 1.0, 0.5, 0.1];
    let times = [1.0, 2.0, 3.0, 4.0];
    let events = [true, false, true, true];
    println!("C-index {:.4}", c_index(&risks, &times, &events)?);

    let preds = [0, 1, 2, 2, 1];
    let truth = [0, 1, 2, 1, 1];
    println!("accuracy {:.2}, macro F1 {:.4}", accuracy(&preds, &truth)?, macro_f1(&preds, &truth, 3)?);

    // Eight points on a line; the two ends are separate truth regions.
    let coords = Matrix::from_vec(8, 2, (0..8).flat_map(|i| [i as f64, 0.0]).collect())?;
    let graph = build_knn_graph(&coords, 2)?;
    let raw = vec![0.9, 0.8, 0.1, 0.6, 0.2, 0.1, 0.7, 0.95];
    let mask = vec![true, true, false, false, false, false, true, true];
    let bag = ScoredBag::new(0, raw, Some(mask), graph);
    println!("Dice at 0.5: {:.4}", dice(&bag, 0.5)?);
    // Lesions are truth components and candidates are components of the
    // above-threshold subgraph, so lowering the threshold can merge a false
    // positive into a lesion or two lesions into one candidate. The curve is
    // therefore not monotone; the last point has everything in one component.
    let f = froc(std::slice::from_ref(&bag), &FROC_POINTS)?;
    println!("FROC average {:.4}", f.average);
    for (fp, sens) in &f.curve {
        println!("  {fp:.2} FP per bag -> sensitivity {sens:.2}");
    }
    Ok(())
}
