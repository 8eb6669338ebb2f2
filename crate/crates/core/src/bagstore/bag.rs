use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const SURVIVAL_INTERVALS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Classification,
    Survival,
}

impl TaskKind {
    pub fn code(self) -> u8 {
        match self {
            TaskKind::Classification => 0,
            TaskKind::Survival => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TaskKind::Classification),
            1 => Some(TaskKind::Survival),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(u32),
    Survival {
        interval: u8,
        event_observed: bool,
        time: f64,
    },
}

impl Label {
    pub fn task(&self) -> TaskKind {
        match self {
            Label::Class(_) => TaskKind::Classification,
            Label::Survival { .. } => TaskKind::Survival,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match *self {
            Label::Class(c) => Some(c as usize),
            Label::Survival { .. } => None,
        }
    }

    /// Key used for stratified splitting.
    pub fn stratum(&self) -> u32 {
        match *self {
            Label::Class(c) => c,
            Label::Survival { interval, .. } => interval as u32,
        }
    }
}

/// One weakly labelled sample: instance embeddings and their 2-D coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub id: u32,
    pub embeddings: Matrix,
    pub coords: Matrix,
    pub label: Label,
    /// Instances that carry the label evidence, when known.
    pub key_indices: Option<Vec<u32>>,
    pub patient_id: Option<u32>,
}

impl Bag {
    pub fn new(id: u32, embeddings: Matrix, coords: Matrix, label: Label) -> Result<Self> {
        let bag = Bag {
            id,
            embeddings,
            coords,
            label,
            key_indices: None,
            patient_id: None,
        };
        bag.validate()?;
        Ok(bag)
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.embeddings.rows();
        if n == 0 {
            return Err(Error::EmptyBag);
        }
        if self.coords.rows() != n || self.coords.cols() != 2 {
            return Err(Error::Shape {
                op: "Bag",
                expected: format!("{n}x2 coordinates"),
                got: format!("{:?}", self.coords.shape()),
            });
        }
        if let Some(keys) = &self.key_indices {
            let mut seen = vec![false; n];
            for &k in keys {
                let k = k as usize;
                if k >= n || seen[k] {
                    return Err(Error::InvalidArgument(format!(
                        "bag {}: key index {k} out of range or repeated",
                        self.id
                    )));
                }
                seen[k] = true;
            }
        }
        if let Label::Survival { interval, .. } = self.label {
            if interval as usize >= SURVIVAL_INTERVALS {
                return Err(Error::InvalidArgument(format!(
                    "bag {}: survival interval {interval} >= {SURVIVAL_INTERVALS}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Truth mask over instances built from `key_indices` (all false if absent).
    pub fn key_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &k in self.key_indices.iter().flatten() {
            mask[k as usize] = true;
        }
        mask
    }

    /// The same bag with instances listed in `order`; keys follow their instances.
    pub fn reordered(&self, order: &[usize]) -> Bag {
        let mut inverse = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new as u32;
        }
        Bag {
            id: self.id,
            embeddings: self.embeddings.select_rows(order),
            coords: self.coords.select_rows(order),
            label: self.label,
            key_indices: self
                .key_indices
                .as_ref()
                .map(|k| k.iter().map(|&i| inverse[i as usize]).collect()),
            patient_id: self.patient_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagDataset {
    pub bags: Vec<Bag>,
    pub dim: usize,
    pub task: TaskKind,
    /// Free-form origin note; lives in the run manifest, not in the binary file.
    pub provenance: String,
}

impl BagDataset {
    pub fn new(bags: Vec<Bag>, dim: usize, task: TaskKind, provenance: impl Into<String>) -> Result<Self> {
        let ds = BagDataset {
            bags,
            dim,
            task,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.bags.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate bag ids".into()));
        }
        for b in &self.bags {
            b.validate()?;
            if b.dim() != self.dim {
                return Err(Error::Shape {
                    op: "BagDataset",
                    expected: format!("dimension {}", self.dim),
                    got: format!("bag {} with dimension {}", b.id, b.dim()),
                });
            }
            if b.label.task() != self.task {
                return Err(Error::InvalidArgument(format!(
                    "bag {} label does not match task {:?}",
                    b.id, self.task
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Number of classes implied by the labels (4 intervals for survival).
    pub fn n_classes(&self) -> usize {
        match self.task {
            TaskKind::Survival => SURVIVAL_INTERVALS,
            TaskKind::Classification => self
                .bags
                .iter()
                .filter_map(|b| b.label.class())
                .max()
                .map_or(0, |m| m + 1)
                .max(2),
        }
    }

    /// Copy holding only the bags accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&Bag) -> bool) -> BagDataset {
        BagDataset {
            bags: self.bags.iter().filter(|b| keep(b)).cloned().collect(),
            dim: self.dim,
            task: self.task,
            provenance: self.provenance.clone(),
        }
    }

    /// CSV with one row per bag: `id,label,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label,n\n");
        for b in &self.bags {
            let label = match b.label {
                Label::Class(c) => c.to_string(),
                Label::Survival {
                    interval,
                    event_observed,
                    time,
                } => format!("interval={interval};event={};time={time}", event_observed as u8),
            };
            out.push_str(&format!("{},{},{}\n", b.id, label, b.len()));
        }
        out
    }
}
