use crate::bagstore::{Label, SURVIVAL_INTERVALS};
use crate::error::{Error, Result};
use crate::numkit::{cross_entropy, log_sigmoid, sigmoid};

/// Discrete-time hazard negative log-likelihood over four intervals and its
/// gradient. An event in interval `t` costs `-log h_t - Σ_{j<t} log(1-h_j)`;
/// censoring in `t` costs `-Σ_{j<=t} log(1-h_j)`, with `h_j = sigmoid(f_j)`.
pub fn survival_loss(logits: &[f64], interval: u8, event_observed: bool) -> Result<(f64, Vec<f64>)> {
    if logits.len() != SURVIVAL_INTERVALS {
        return Err(Error::Shape {
            op: "survival_loss",
            expected: format!("{SURVIVAL_INTERVALS} logits"),
            got: format!("{} logits", logits.len()),
        });
    }
    let t = interval as usize;
    if t >= SURVIVAL_INTERVALS {
        return Err(Error::LabelOutOfRange {
            label: t,
            classes: SURVIVAL_INTERVALS,
        });
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("survival_loss logits"));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; SURVIVAL_INTERVALS];
    for j in 0..t {
        // -log(1 - sigmoid(f)) = -log sigmoid(-f)
        loss -= log_sigmoid(-logits[j]);
        grad[j] = sigmoid(logits[j]);
    }
    if event_observed {
        loss -= log_sigmoid(logits[t]);
        grad[t] = sigmoid(logits[t]) - 1.0;
    } else {
        loss -= log_sigmoid(-logits[t]);
        grad[t] = sigmoid(logits[t]);
    }
    Ok((loss, grad))
}

/// Risk score used for concordance: the summed interval hazards.
pub fn survival_risk(logits: &[f64]) -> f64 {
    logits.iter().map(|&f| sigmoid(f)).sum()
}

/// Loss and logit gradient for any supported label.
pub fn task_loss(logits: &[f64], label: &Label) -> Result<(f64, Vec<f64>)> {
    match *label {
        Label::Class(c) => cross_entropy(logits, c as usize),
        Label::Survival {
            interval,
            event_observed,
            ..
        } => survival_loss(logits, interval, event_observed),
    }
}
