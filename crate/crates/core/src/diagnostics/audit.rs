use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagstore::{shuffle_coords, Bag, BagDataset, Label};
use crate::error::{Error, Result};
use crate::numkit::RngStream;
use crate::trainer::{primary_metric, ModelState};

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const INVARIANCE_TOLERANCE: f64 = 1e-10;

/// Metric under progressively larger coordinate shuffles, over several
/// shuffle seeds. `std` is the sample standard deviation (0 for one seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCurve {
    pub tag: String,
    pub fractions: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `per_seed[f][s]`: metric at fraction `f` under shuffle seed `s`.
    pub per_seed: Vec<Vec<f64>>,
}

impl AuditCurve {
    /// Mean metric at fraction 0 minus mean metric at fraction 1.
    pub fn endpoint_drop(&self) -> f64 {
        self.mean[0] - self.mean[self.mean.len() - 1]
    }

    /// Each step may rise by at most the pooled std of its two endpoints.
    pub fn is_nonincreasing_within_std(&self) -> bool {
        (1..self.mean.len()).all(|i| {
            let pooled = ((self.std[i - 1].powi(2) + self.std[i].powi(2)) / 2.0).sqrt();
            self.mean[i] <= self.mean[i - 1] + pooled
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,fraction,mean,std\n");
        for i in 0..self.fractions.len() {
            out.push_str(&format!("{},{},{},{}\n", self.tag, self.fractions[i], self.mean[i], self.std[i]));
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Every bag passed through `shuffle_coords(bag, fraction)` with a stream
/// derived from `(seed, bag index)`.
pub fn shuffled_dataset(data: &BagDataset, fraction: f64, seed: u64) -> BagDataset {
    let root = RngStream::new(seed);
    let bags = data
        .bags
        .par_iter()
        .enumerate()
        .map(|(i, b)| shuffle_coords(b, fraction, &mut root.derive(i as u64)))
        .collect();
    BagDataset {
        bags,
        dim: data.dim,
        task: data.task,
        provenance: data.provenance.clone(),
    }
}

/// Shuffle audit over the `(fraction, seed)` grid. Fraction 0 leaves every
/// bag untouched, so that column equals plain evaluation bit for bit.
pub fn shuffle_audit(
    model: &ModelState,
    data: &BagDataset,
    fractions: &[f64],
    n_seeds: usize,
    seed: u64,
    tag: &str,
) -> Result<AuditCurve> {
    if fractions.is_empty() || n_seeds == 0 {
        return Err(Error::InvalidArgument("audit needs fractions and seeds".into()));
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument("audit fractions must increase within [0, 1]".into()));
    }
    let labels: Vec<Label> = data.bags.iter().map(|b| b.label).collect();
    let root = RngStream::new(seed);
    let mut per_seed = Vec::with_capacity(fractions.len());
    for (fi, &f) in fractions.iter().enumerate() {
        let mut row = Vec::with_capacity(n_seeds);
        for s in 0..n_seeds {
            let cell_seed = root.derive(((fi as u64) << 32) | s as u64).seed();
            let shuffled = shuffled_dataset(data, f, cell_seed);
            let logits = model.predict(&shuffled.bags)?;
            row.push(primary_metric(model.task, model.classes, &logits, &labels)?);
        }
        per_seed.push(row);
    }
    let (mean, std) = per_seed.iter().map(|r| mean_std(r)).unzip();
    Ok(AuditCurve {
        tag: tag.to_string(),
        fractions: fractions.to_vec(),
        mean,
        std,
        per_seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub trials: usize,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub passes: bool,
}

fn max_deviation<F>(logits: &F, bag: &Bag, perturbed: impl Iterator<Item = Bag>) -> Result<f64>
where
    F: Fn(&Bag) -> Result<Vec<f64>>,
{
    let base = logits(bag)?;
    let mut worst = 0.0f64;
    for b in perturbed {
        for (x, y) in base.iter().zip(logits(&b)?) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Evaluates `logits` under `n_trials` random reorderings of the instances
/// (coordinates travel with their embeddings) and passes when no logit moves
/// by more than 1e-10.
pub fn certify_permutation_invariance<F>(logits: F, bag: &Bag, n_trials: usize, rng: &mut RngStream) -> Result<InvarianceReport>
where
    F: Fn(&Bag) -> Result<Vec<f64>>,
{
    let orders: Vec<Vec<usize>> = (0..n_trials)
        .map(|_| {
            let mut o: Vec<usize> = (0..bag.len()).collect();
            rng.shuffle(&mut o);
            o
        })
        .collect();
    let worst = max_deviation(&logits, bag, orders.iter().map(|o| bag.reordered(o)))?;
    Ok(InvarianceReport {
        trials: n_trials,
        max_abs_deviation: worst,
        tolerance: INVARIANCE_TOLERANCE,
        passes: worst <= INVARIANCE_TOLERANCE,
    })
}

/// Same report for full coordinate shuffles, where embeddings stay in place
/// and only positions move. A spatially sensitive model is expected to fail.
pub fn certify_shuffle_invariance<F>(logits: F, bag: &Bag, n_trials: usize, rng: &mut RngStream) -> Result<InvarianceReport>
where
    F: Fn(&Bag) -> Result<Vec<f64>>,
{
    let shuffled: Vec<Bag> = (0..n_trials).map(|_| shuffle_coords(bag, 1.0, rng)).collect();
    let worst = max_deviation(&logits, bag, shuffled.into_iter())?;
    Ok(InvarianceReport {
        trials: n_trials,
        max_abs_deviation: worst,
        tolerance: INVARIANCE_TOLERANCE,
        passes: worst <= INVARIANCE_TOLERANCE,
    })
}
