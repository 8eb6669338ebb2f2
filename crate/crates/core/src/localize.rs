//! Instance-level evidence from the topological residual: per-bag min-max
//! normalized patch scores, Dice at a validation-selected threshold, and
//! FROC over connected components of the bag's KNN graph.
//!
//! A lesion is a connected component of truth instances in the KNN graph.
//! At a threshold, each connected component of the above-threshold nodes is
//! one candidate, located at its highest-scoring member (ties go to the
//! lower index). A candidate is a true positive when that member is a truth
//! instance, and it detects the lesion containing it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagstore::{Bag, TaskKind};
use crate::error::{Error, Result};
use crate::topostream::{node_scores, SpatialGraph};
use crate::trainer::ModelState;

/// False positives per bag at which sensitivity is read.
pub const FROC_POINTS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBag {
    pub bag_id: u32,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub truth: Option<Vec<bool>>,
    pub graph: SpatialGraph,
}

/// Min-max normalization; a constant vector maps to all 0.5.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

impl ScoredBag {
    pub fn new(bag_id: u32, raw: Vec<f64>, truth: Option<Vec<bool>>, graph: SpatialGraph) -> Self {
        ScoredBag {
            bag_id,
            normalized: min_max_normalize(&raw),
            raw,
            truth,
            graph,
        }
    }

    fn truth(&self) -> Result<&[bool]> {
        self.truth
            .as_deref()
            .ok_or_else(|| Error::NoTruth(format!("bag {} has no key instances recorded", self.bag_id)))
    }
}

/// Weight column that turns final node embeddings into evidence for
/// `target`. With two classes it is the margin direction `W[:,1] - W[:,0]`,
/// which is what a single sigmoid output would use.
fn evidence_direction(model: &ModelState, target: usize) -> Result<Vec<f64>> {
    let topo = model.topo.as_ref().ok_or_else(|| {
        Error::NoPatchScores(format!("variant {} has no topological stream", model.variant))
    })?;
    if model.task != TaskKind::Classification || target >= model.classes {
        return Err(Error::LabelOutOfRange {
            label: target,
            classes: model.classes,
        });
    }
    let w = &topo.w_topo;
    Ok((0..w.rows())
        .map(|r| {
            if model.classes == 2 {
                w.get(r, 1) - w.get(r, 0)
            } else {
                w.get(r, target)
            }
        })
        .collect())
}

/// Raw score `w_yᵀ H2_i` for every instance of `bag`, then per-bag normalization.
pub fn patch_scores(model: &ModelState, bag: &Bag, target: usize) -> Result<ScoredBag> {
    let direction = evidence_direction(model, target)?;
    let (_, cache) = model
        .topo_forward(bag)?
        .ok_or_else(|| Error::NoPatchScores(format!("variant {} has no topological stream", model.variant)))?;
    let raw = node_scores(&cache, &direction);
    let truth = bag.key_indices.as_ref().map(|_| bag.key_mask());
    Ok(ScoredBag::new(bag.id, raw, truth, cache.graph))
}

pub fn score_bags(model: &ModelState, bags: &[Bag], target: usize) -> Result<Vec<ScoredBag>> {
    bags.par_iter().map(|b| patch_scores(model, b, target)).collect()
}

/// `2|P ∩ T| / (|P| + |T|)` with `P = {i : normalized_i >= threshold}`;
/// 1 when both sets are empty.
pub fn dice(scored: &ScoredBag, threshold: f64) -> Result<f64> {
    let truth = scored.truth()?;
    let mut inter = 0usize;
    let mut pred = 0usize;
    let mut tru = 0usize;
    for (&s, &t) in scored.normalized.iter().zip(truth) {
        let p = s >= threshold;
        pred += p as usize;
        tru += t as usize;
        inter += (p && t) as usize;
    }
    if pred + tru == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (pred + tru) as f64)
}

pub fn mean_dice(bags: &[ScoredBag], threshold: f64) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::NoTruth("no bags to score".into()));
    }
    let mut total = 0.0;
    for b in bags {
        total += dice(b, threshold)?;
    }
    Ok(total / bags.len() as f64)
}

/// Thresholds 0.05, 0.10, ..., 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

/// Grid threshold with the highest mean validation Dice; the first one wins ties.
pub fn select_threshold(validation: &[ScoredBag]) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in threshold_grid() {
        let d = mean_dice(validation, t)?;
        if d > best.0 {
            best = (d, t);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocResult {
    pub points: Vec<f64>,
    pub sensitivities: Vec<f64>,
    pub average: f64,
    /// `(false positives per bag, sensitivity)` after each distinct threshold,
    /// starting from `(0, 0)`.
    pub curve: Vec<(f64, f64)>,
}

/// Sensitivity read from the curve at each operating point: the point with
/// the largest false-positive rate not above it, preferring the higher
/// sensitivity among equal rates.
fn read_curve(curve: &[(f64, f64)], points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|&p| {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &(fp, s) in curve {
                if fp <= p && (fp > best.0 || (fp == best.0 && s > best.1)) {
                    best = (fp, s);
                }
            }
            best.1
        })
        .collect()
}

fn lesion_labels(bags: &[ScoredBag]) -> Result<(Vec<Vec<Option<usize>>>, usize)> {
    let mut labels = Vec::with_capacity(bags.len());
    let mut total = 0;
    for b in bags {
        let (l, count) = b.graph.components(b.truth()?);
        labels.push(l.into_iter().map(|x| x.map(|c| c + total)).collect());
        total += count;
    }
    if total == 0 {
        return Err(Error::NoTruth("no truth instances in any bag".into()));
    }
    Ok((labels, total))
}

fn distinct_thresholds(bags: &[ScoredBag]) -> Vec<f64> {
    let mut t: Vec<f64> = bags.iter().flat_map(|b| b.normalized.iter().copied()).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn finish(points: &[f64], curve: Vec<(f64, f64)>) -> FrocResult {
    let sensitivities = read_curve(&curve, points);
    let average = sensitivities.iter().sum::<f64>() / points.len() as f64;
    FrocResult {
        points: points.to_vec(),
        sensitivities,
        average,
        curve,
    }
}

struct Forest {
    parent: Vec<usize>,
    /// Highest-scoring member of each root.
    top: Vec<usize>,
}

impl Forest {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Threshold sweep with incremental union-find: nodes enter in order of
/// decreasing score and candidate bookkeeping is updated on every merge.
pub fn froc(bags: &[ScoredBag], points: &[f64]) -> Result<FrocResult> {
    let (lesion, total_lesions) = lesion_labels(bags)?;
    let n_bags = bags.len() as f64;
    let offsets: Vec<usize> = bags
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b.normalized.len();
            Some(o)
        })
        .collect();
    let total_nodes: usize = bags.iter().map(|b| b.normalized.len()).sum();
    let mut nodes: Vec<(usize, usize)> = Vec::with_capacity(total_nodes);
    for (b, bag) in bags.iter().enumerate() {
        nodes.extend((0..bag.normalized.len()).map(|i| (b, i)));
    }
    let score = |&(b, i): &(usize, usize)| bags[b].normalized[i];
    // Higher score first; ties by lower instance index so the first node of
    // a component is also its representative.
    nodes.sort_by(|x, y| score(y).total_cmp(&score(x)).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let better = |b: usize, i: usize, j: usize| {
        let (si, sj) = (bags[b].normalized[i], bags[b].normalized[j]);
        si > sj || (si == sj && i < j)
    };
    let mut forest = Forest {
        parent: (0..total_nodes).collect(),
        top: (0..total_nodes).collect(),
    };
    let mut active = vec![false; total_nodes];
    let mut hits = vec![0usize; total_lesions];
    let mut detected = 0usize;
    let mut fps = 0usize;
    let is_truth = |b: usize, i: usize| bags[b].truth.as_ref().is_some_and(|t| t[i]);
    let mut curve = vec![(0.0, 0.0)];
    let mut k = 0;
    while k < nodes.len() {
        let level = score(&nodes[k]);
        while k < nodes.len() && score(&nodes[k]) == level {
            let (b, i) = nodes[k];
            let gi = offsets[b] + i;
            active[gi] = true;
            // A new singleton candidate.
            if let Some(l) = lesion[b][i] {
                hits[l] += 1;
                detected += (hits[l] == 1) as usize;
            } else {
                fps += 1;
            }
            for &nb in bags[b].graph.neighbors(i) {
                let gj = offsets[b] + nb as usize;
                if !active[gj] {
                    continue;
                }
                let (ra, rb) = (forest.find(gi), forest.find(gj));
                if ra == rb {
                    continue;
                }
                let (ta, tb) = (forest.top[ra] - offsets[b], forest.top[rb] - offsets[b]);
                let (keep, drop) = if better(b, ta, tb) { (ta, tb) } else { (tb, ta) };
                // The merged candidate keeps `keep`; the one located at `drop` disappears.
                if is_truth(b, drop) {
                    let l = lesion[b][drop].expect("truth node has a lesion");
                    hits[l] -= 1;
                    detected -= (hits[l] == 0) as usize;
                } else {
                    fps -= 1;
                }
                forest.parent[rb] = ra;
                forest.top[ra] = keep + offsets[b];
            }
            k += 1;
        }
        curve.push((fps as f64 / n_bags, detected as f64 / total_lesions as f64));
    }
    Ok(finish(points, curve))
}

/// Exhaustive reference: recomputes every candidate set from scratch at
/// each distinct threshold.
pub fn froc_bruteforce(bags: &[ScoredBag], points: &[f64]) -> Result<FrocResult> {
    let (lesion, total_lesions) = lesion_labels(bags)?;
    let n_bags = bags.len() as f64;
    let mut curve = vec![(0.0, 0.0)];
    for t in distinct_thresholds(bags) {
        let mut fps = 0usize;
        let mut found = vec![false; total_lesions];
        for (b, bag) in bags.iter().enumerate() {
            let active: Vec<bool> = bag.normalized.iter().map(|&s| s >= t).collect();
            let (labels, count) = bag.graph.components(&active);
            let mut top: Vec<Option<usize>> = vec![None; count];
            for (i, l) in labels.iter().enumerate() {
                if let Some(c) = *l {
                    top[c] = match top[c] {
                        Some(j) if bag.normalized[j] >= bag.normalized[i] => Some(j),
                        _ => Some(i),
                    };
                }
            }
            for i in top.into_iter().flatten() {
                match lesion[b][i] {
                    Some(l) => found[l] = true,
                    None => fps += 1,
                }
            }
        }
        let detected = found.iter().filter(|&&f| f).count();
        curve.push((fps as f64 / n_bags, detected as f64 / total_lesions as f64));
    }
    Ok(finish(points, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub target_class: usize,
    pub validation_bags: usize,
    pub test_bags: usize,
    pub threshold: f64,
    pub dice_mean: f64,
    pub froc: FrocResult,
    /// Mean normalized score over truth instances and over the rest.
    pub mean_key_score: f64,
    pub mean_background_score: f64,
    pub froc_interpolation: String,
}

fn mean_scores(bags: &[ScoredBag]) -> Result<(f64, f64)> {
    let (mut ks, mut kn, mut bs, mut bn) = (0.0, 0usize, 0.0, 0usize);
    for b in bags {
        for (&s, &t) in b.normalized.iter().zip(b.truth()?) {
            if t {
                ks += s;
                kn += 1;
            } else {
                bs += s;
                bn += 1;
            }
        }
    }
    Ok((ks / kn.max(1) as f64, bs / bn.max(1) as f64))
}

/// Full protocol: threshold chosen on validation bags, then Dice and FROC
/// on test bags. Only bags labelled `target` carry lesions and are scored.
pub fn localize(model: &ModelState, validation: &[Bag], test: &[Bag], target: usize) -> Result<LocalizationReport> {
    localize_scored(model, validation, test, target).map(|(r, _)| r)
}

/// [`localize`] plus the scored test bags it was computed from.
pub fn localize_scored(
    model: &ModelState,
    validation: &[Bag],
    test: &[Bag],
    target: usize,
) -> Result<(LocalizationReport, Vec<ScoredBag>)> {
    let pick = |bags: &[Bag]| -> Vec<Bag> {
        bags.iter()
            .filter(|b| b.label.class() == Some(target) && b.key_indices.is_some())
            .cloned()
            .collect()
    };
    let (val, tst) = (pick(validation), pick(test));
    if val.is_empty() || tst.is_empty() {
        return Err(Error::NoTruth(format!("no class-{target} bags with key instances")));
    }
    let val_scored = score_bags(model, &val, target)?;
    let test_scored = score_bags(model, &tst, target)?;
    let threshold = select_threshold(&val_scored)?;
    let (mean_key_score, mean_background_score) = mean_scores(&test_scored)?;
    let report = LocalizationReport {
        target_class: target,
        validation_bags: val.len(),
        test_bags: tst.len(),
        threshold,
        dice_mean: mean_dice(&test_scored, threshold)?,
        froc: froc(&test_scored, &FROC_POINTS)?,
        mean_key_score,
        mean_background_score,
        froc_interpolation: "step: sensitivity at the largest false-positive rate not above each point".into(),
    };
    Ok((report, test_scored))
}

/// Per-instance rows: bag id, instance index, raw score, normalized score, truth flag.
pub fn scores_csv(bags: &[ScoredBag]) -> String {
    let mut out = String::from("bag_id,instance,raw,normalized,truth\n");
    for b in bags {
        for i in 0..b.raw.len() {
            let t = b.truth.as_ref().map_or("", |t| if t[i] { "1" } else { "0" });
            let _ = writeln!(out, "{},{},{},{},{}", b.bag_id, i, b.raw[i], b.normalized[i], t);
        }
    }
    out
}
