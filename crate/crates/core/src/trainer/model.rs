use rayon::prelude::*;

use crate::bagstore::{Bag, BagDataset, Label, TaskKind};
use crate::baselines::{AttnCache, AttnMil, MeanPool};
use crate::diagnostics::{auc, c_index};
use crate::error::{Error, Result};
use crate::head::MlpCache;
use crate::numkit::{softmax, Matrix, OptimizerState, Params};
use crate::statstream::{stat_backward, StatCache, StatStream};
use crate::topostream::{build_knn_graph, gcn_forward, GcnCache, GcnOutput, GcnParams};
use crate::trainer::{survival_risk, Variant};

/// The coordinate-free slot of a model: the statistical stream or one of
/// the composition-only baselines.
#[derive(Clone, Debug, PartialEq)]
pub enum Composition {
    Stat(StatStream),
    MeanPool(MeanPool),
    AttnMil(AttnMil),
}

#[derive(Clone, Debug)]
pub enum CompCache {
    Stat(StatCache),
    MeanPool(MlpCache),
    AttnMil(AttnCache),
}

impl Composition {
    pub fn kind(&self) -> &'static str {
        match self {
            Composition::Stat(_) => "stat",
            Composition::MeanPool(_) => "meanpool",
            Composition::AttnMil(_) => "abmil",
        }
    }

    pub fn forward(&self, bag: &Bag) -> Result<(Vec<f64>, CompCache)> {
        Ok(match self {
            Composition::Stat(s) => {
                let (l, c) = s.forward(bag)?;
                (l, CompCache::Stat(c))
            }
            Composition::MeanPool(m) => {
                let (l, c) = m.forward(bag)?;
                (l, CompCache::MeanPool(c))
            }
            Composition::AttnMil(a) => {
                let (l, c) = a.forward(bag)?;
                (l, CompCache::AttnMil(c))
            }
        })
    }

    pub fn logits(&self, bag: &Bag) -> Result<Vec<f64>> {
        self.forward(bag).map(|(l, _)| l)
    }

    /// Parameter gradients of `dlogits · logits`.
    pub fn backward(&self, bag: &Bag, cache: &CompCache, dlogits: &[f64]) -> Result<Composition> {
        Ok(match (self, cache) {
            (Composition::Stat(s), CompCache::Stat(c)) => Composition::Stat(stat_backward(s, bag, c, dlogits)?),
            (Composition::MeanPool(m), CompCache::MeanPool(c)) => Composition::MeanPool(m.backward(c, dlogits)?),
            (Composition::AttnMil(a), CompCache::AttnMil(c)) => Composition::AttnMil(a.backward(bag, c, dlogits)?),
            _ => return Err(Error::InvalidArgument("composition cache does not match the model".into())),
        })
    }

    pub fn zeros_like(&self) -> Composition {
        match self {
            Composition::Stat(s) => Composition::Stat(s.zeros_like()),
            Composition::MeanPool(m) => Composition::MeanPool(m.zeros_like()),
            Composition::AttnMil(a) => Composition::AttnMil(a.zeros_like()),
        }
    }

    pub fn as_stat(&self) -> Option<&StatStream> {
        match self {
            Composition::Stat(s) => Some(s),
            _ => None,
        }
    }
}

impl Params for Composition {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            Composition::Stat(s) => s.tensors(),
            Composition::MeanPool(m) => m.tensors(),
            Composition::AttnMil(a) => a.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Composition::Stat(s) => s.tensors_mut(),
            Composition::MeanPool(m) => m.tensors_mut(),
            Composition::AttnMil(a) => a.tensors_mut(),
        }
    }
}

/// Trained parameters plus freeze flags and per-stream optimizer state.
/// Logits are `f_comp + f_topo`, either term absent when its stream is.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub variant: Variant,
    pub task: TaskKind,
    pub classes: usize,
    pub k_knn: usize,
    pub comp: Option<Composition>,
    pub topo: Option<GcnParams>,
    pub comp_frozen: bool,
    pub topo_frozen: bool,
    pub comp_opt: Option<OptimizerState>,
    pub topo_opt: Option<OptimizerState>,
}

impl ModelState {
    pub fn stat(&self) -> Option<&StatStream> {
        self.comp.as_ref().and_then(Composition::as_stat)
    }

    /// Evaluation-mode topological forward (dropout off).
    pub fn topo_forward(&self, bag: &Bag) -> Result<Option<(GcnOutput, GcnCache)>> {
        match &self.topo {
            Some(p) => {
                let g = build_knn_graph(&bag.coords, self.k_knn)?;
                Ok(Some(gcn_forward(&bag.embeddings, &g, p, None)?))
            }
            None => Ok(None),
        }
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, bag: &Bag) -> Result<Vec<f64>> {
        let mut out = match &self.comp {
            Some(c) => c.logits(bag)?,
            None => vec![0.0; self.classes],
        };
        if let Some((t, _)) = self.topo_forward(bag)? {
            for (o, f) in out.iter_mut().zip(&t.f_topo) {
                *o += f;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model logits"));
        }
        Ok(out)
    }

    /// Logits for every bag, evaluated in parallel, in dataset order.
    pub fn predict(&self, bags: &[Bag]) -> Result<Vec<Vec<f64>>> {
        bags.par_iter().map(|b| self.logits(b)).collect()
    }

    pub fn comp_fingerprint(&self) -> u64 {
        self.comp.as_ref().map_or(0, Params::fingerprint)
    }

    pub fn topo_fingerprint(&self) -> u64 {
        self.topo.as_ref().map_or(0, Params::fingerprint)
    }
}

/// Ranking score for binary tasks: the logit margin of class 1 over class 0.
/// It orders bags exactly like the positive-class probability without
/// saturating.
pub fn binary_score(logits: &[f64]) -> f64 {
    logits[1] - logits[0]
}

/// The headline metric of a set of predictions: AUC for binary labels,
/// macro one-vs-rest AUC for more classes, C-index for survival records.
pub fn primary_metric(task: TaskKind, classes: usize, logits: &[Vec<f64>], labels: &[Label]) -> Result<f64> {
    match task {
        TaskKind::Survival => {
            let risks: Vec<f64> = logits.iter().map(|l| survival_risk(l)).collect();
            let mut times = Vec::with_capacity(labels.len());
            let mut events = Vec::with_capacity(labels.len());
            for l in labels {
                match *l {
                    Label::Survival {
                        time, event_observed, ..
                    } => {
                        times.push(time);
                        events.push(event_observed);
                    }
                    Label::Class(_) => return Err(Error::Metric("class label in survival evaluation".into())),
                }
            }
            c_index(&risks, &times, &events)
        }
        TaskKind::Classification => {
            let ys: Vec<usize> = labels
                .iter()
                .map(|l| l.class().ok_or_else(|| Error::Metric("survival label in classification".into())))
                .collect::<Result<_>>()?;
            if classes == 2 {
                let s: Vec<f64> = logits.iter().map(|l| binary_score(l)).collect();
                let y: Vec<bool> = ys.iter().map(|&c| c == 1).collect();
                return auc(&s, &y);
            }
            let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
            let mut total = 0.0;
            for c in 0..classes {
                let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let y: Vec<bool> = ys.iter().map(|&v| v == c).collect();
                total += auc(&s, &y)?;
            }
            Ok(total / classes as f64)
        }
    }
}

/// Predicts a dataset and reports its primary metric.
pub fn evaluate(state: &ModelState, data: &BagDataset) -> Result<f64> {
    let logits = state.predict(&data.bags)?;
    let labels: Vec<Label> = data.bags.iter().map(|b| b.label).collect();
    primary_metric(state.task, state.classes, &logits, &labels)
}
