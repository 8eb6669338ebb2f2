use crate::error::{Error, Result};

/// Average 1-based ranks, tied values sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve in the Mann–Whitney form; tied pairs count 0.5.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auc scores"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("auc needs both classes".into()));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Metric(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1. A class with no true or predicted
/// members scores 0.
pub fn macro_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() || n_classes == 0 {
        return Err(Error::Metric(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut total = 0.0;
    for c in 0..n_classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / n_classes as f64)
}

/// Harrell's concordance index. A pair is comparable when the earlier time
/// is an observed event; equal risks score 0.5.
pub fn c_index(risks: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    let n = risks.len();
    if times.len() != n || events.len() != n {
        return Err(Error::Metric("c_index inputs differ in length".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut comparable = 0.0;
    let mut concordant = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        for &j in &order[pos + 1..] {
            if times[j] <= times[i] {
                continue;
            }
            comparable += 1.0;
            if risks[i] > risks[j] {
                concordant += 1.0;
            } else if risks[i] == risks[j] {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0.0 {
        return Err(Error::Metric("c_index has no comparable pairs".into()));
    }
    Ok(concordant / comparable)
}
