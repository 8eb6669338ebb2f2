use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{EpochRecord, GateForm, Stage, StepRecord};

/// Relative slack allowed on the residual-gating bound.
pub const GATE_SLACK: f64 = 1e-9;
const GATE_FLOOR: f64 = 1e-12;

/// Per-step check of `‖∇θ_t L_cls‖ <= E[(p̂-y)²]^{1/2} · E[‖∇θ_t f_topo‖²]^{1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    /// Steps that carried gate terms.
    pub steps_checked: usize,
    /// Steps whose terms use the multi-logit extension rather than the binary form.
    pub extension_steps: usize,
    pub violations: usize,
    /// Largest `(lhs - rhs) / rhs` seen; negative when every step has room.
    pub max_relative_violation: f64,
    pub holds: Vec<bool>,
    pub passes: bool,
}

pub fn gate_holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + GATE_SLACK) + GATE_FLOOR
}

pub fn verify_prop1(steps: &[StepRecord]) -> Result<GateReport> {
    let gated: Vec<&StepRecord> = steps.iter().filter(|s| s.gate_form != GateForm::None).collect();
    if gated.is_empty() {
        return Err(Error::Metric("log carries no gate terms".into()));
    }
    let mut holds = Vec::with_capacity(gated.len());
    let mut worst = f64::NEG_INFINITY;
    for s in &gated {
        if !(s.gate_lhs.is_finite() && s.gate_rhs.is_finite()) {
            return Err(Error::NonFinite("gate terms"));
        }
        holds.push(gate_holds(s.gate_lhs, s.gate_rhs));
        if s.gate_rhs > 0.0 {
            worst = worst.max((s.gate_lhs - s.gate_rhs) / s.gate_rhs);
        }
    }
    let violations = holds.iter().filter(|&&h| !h).count();
    Ok(GateReport {
        steps_checked: gated.len(),
        extension_steps: gated.iter().filter(|s| s.gate_form == GateForm::Extension).count(),
        violations,
        max_relative_violation: worst,
        holds,
        passes: violations == 0,
    })
}

/// Stage-2 training loss per epoch and its running best. The running best
/// is the monotone bound proxy; `raw_monotone` says whether the raw epoch
/// losses already decrease without the running minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epoch_loss: Vec<f64>,
    pub best_so_far: Vec<f64>,
    pub best_nonincreasing: bool,
    pub raw_monotone: bool,
    /// Final stage-2 loss below the first stage-2 epoch.
    pub improved: bool,
}

pub fn verify_prop2(epochs: &[EpochRecord]) -> Result<BoundReport> {
    let loss: Vec<f64> = epochs
        .iter()
        .filter(|e| e.stage == Stage::Stage2)
        .map(|e| e.loss_cls)
        .collect();
    if loss.is_empty() {
        return Err(Error::Metric("log has no stage-2 epochs".into()));
    }
    let mut best = Vec::with_capacity(loss.len());
    let mut b = f64::INFINITY;
    for &l in &loss {
        b = b.min(l);
        best.push(b);
    }
    Ok(BoundReport {
        best_nonincreasing: best.windows(2).all(|w| w[1] <= w[0]),
        raw_monotone: loss.windows(2).all(|w| w[1] <= w[0]),
        improved: loss[loss.len() - 1] < loss[0],
        epoch_loss: loss,
        best_so_far: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(lhs: f64, rhs: f64) -> StepRecord {
        StepRecord {
            step: 0,
            epoch: 0,
            stage: Stage::Stage2,
            lr: 0.0,
            loss_cls: 0.0,
            loss_texture: 0.0,
            grad_stat: 0.0,
            grad_topo: 0.0,
            residual_rms: 0.0,
            gate_lhs: lhs,
            gate_rhs: rhs,
            gate_form: GateForm::Binary,
            degenerate: 0,
        }
    }

    #[test]
    fn zero_residual_step_holds() {
        let r = verify_prop1(&[step(0.0, 0.0), step(1e-13, 0.0)]).unwrap();
        assert!(r.passes);
    }

    #[test]
    fn inflated_lhs_is_flagged() {
        let r = verify_prop1(&[step(1.0, 1.0), step(1.01, 1.0)]).unwrap();
        assert_eq!(r.violations, 1);
        assert!((r.max_relative_violation - 0.01).abs() < 1e-12);
        assert!(!r.passes);
    }

    #[test]
    fn empty_log_is_an_error() {
        let mut s = step(0.0, 0.0);
        s.gate_form = GateForm::None;
        assert!(verify_prop1(&[s]).is_err());
    }

    #[test]
    fn running_best_never_rises() {
        let e = |l: f64| EpochRecord {
            epoch: 0,
            stage: Stage::Stage2,
            loss_cls: l,
            loss_texture: 0.0,
            val_metric: f64::NAN,
        };
        let r = verify_prop2(&[e(0.7), e(0.5), e(0.6), e(0.4)]).unwrap();
        assert_eq!(r.best_so_far, vec![0.7, 0.5, 0.5, 0.4]);
        assert!(r.best_nonincreasing && !r.raw_monotone && r.improved);
    }
}
