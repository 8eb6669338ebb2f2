use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bagstore::{Bag, BagDataset};
use crate::error::{Error, Result};
use crate::numkit::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratify: bool,
    pub group_by_patient: bool,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train,
            val,
            test,
            seed,
            stratify: true,
            group_by_patient: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be positive, got {fr:?}"
            )));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {fr:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: BagDataset,
    pub val: BagDataset,
    pub test: BagDataset,
}

/// Deterministic train/val/test partition.
///
/// Units are bags, or patients when `group_by_patient` is set (bags without a
/// patient id are their own unit). Units are sorted by id, shuffled within
/// each stratum, and the strata are interleaved proportionally before the
/// ordered list is cut at the rounded global targets. This keeps every
/// partition close to the global class balance.
pub fn split(dataset: &BagDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut units: BTreeMap<(u8, u32), Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..dataset.bags.len()).collect();
    order.sort_by_key(|&i| dataset.bags[i].id);
    for &i in &order {
        let b = &dataset.bags[i];
        let key = match (spec.group_by_patient, b.patient_id) {
            (true, Some(p)) => (0, p),
            _ => (1, b.id),
        };
        units.entry(key).or_default().push(i);
    }
    let units: Vec<Vec<usize>> = units.into_values().collect();

    let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (u, members) in units.iter().enumerate() {
        let key = if spec.stratify {
            dataset.bags[members[0]].label.stratum()
        } else {
            0
        };
        strata.entry(key).or_default().push(u);
    }
    if spec.stratify {
        if let (Some(&lo), Some(&hi)) = (strata.keys().next(), strata.keys().next_back()) {
            if let Some(missing) = (lo..=hi).find(|s| !strata.contains_key(s)) {
                return Err(Error::EmptyStratum(format!("label {missing}")));
            }
        }
    }

    let rng = RngStream::new(spec.seed);
    let mut keyed: Vec<(f64, u32, usize)> = Vec::with_capacity(units.len());
    for (&stratum, members) in strata.iter_mut() {
        let mut srng = rng.derive(stratum as u64);
        srng.shuffle(members);
        let n = members.len() as f64;
        for (rank, &u) in members.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, stratum, u));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let total = keyed.len();
    let n_train = (spec.train * total as f64).round() as usize;
    let n_val = ((spec.val * total as f64).round() as usize).min(total - n_train.min(total));
    let n_train = n_train.min(total);

    let mut parts: [Vec<Bag>; 3] = Default::default();
    for (pos, &(_, _, u)) in keyed.iter().enumerate() {
        let part = if pos < n_train {
            0
        } else if pos < n_train + n_val {
            1
        } else {
            2
        };
        for &i in &units[u] {
            parts[part].push(dataset.bags[i].clone());
        }
    }
    for (p, name) in parts.iter().zip(["train", "val", "test"]) {
        if p.is_empty() {
            return Err(Error::EmptyPartition(name));
        }
    }
    let [train, val, test] = parts.map(|mut bags| {
        bags.sort_by_key(|b| b.id);
        BagDataset {
            bags,
            dim: dataset.dim,
            task: dataset.task,
            provenance: dataset.provenance.clone(),
        }
    });
    Ok(Splits { train, val, test })
}
