use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Stage1,
    Stage2,
    /// Single-phase variants (joint, single-stream, baselines).
    Single,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Stage::Stage1),
            "stage2" => Ok(Stage::Stage2),
            "single" => Ok(Stage::Single),
            _ => Err(Error::Corrupt(format!("unknown stage {s:?}"))),
        }
    }
}

/// How the residual-gating terms of a step were formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateForm {
    /// No trainable topological stream on this step.
    None,
    /// Scalar residual `p̂ - y` against the gradient of the logit margin.
    Binary,
    /// Residual vector norm against the summed per-logit gradient norms.
    Extension,
}

impl GateForm {
    pub fn name(self) -> &'static str {
        match self {
            GateForm::None => "none",
            GateForm::Binary => "binary",
            GateForm::Extension => "extension",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GateForm::None),
            "binary" => Ok(GateForm::Binary),
            "extension" => Ok(GateForm::Extension),
            _ => Err(Error::Corrupt(format!("unknown gate form {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub stage: Stage,
    pub lr: f64,
    pub loss_cls: f64,
    pub loss_texture: f64,
    /// Frobenius norm of the statistical-stream gradient of the full loss.
    pub grad_stat: f64,
    /// Frobenius norm of the topological-stream gradient of the full loss.
    pub grad_topo: f64,
    /// `E[(p̂ - y)²]^{1/2}` over the batch.
    pub residual_rms: f64,
    /// `‖∇θ_t L_cls‖`.
    pub gate_lhs: f64,
    /// `E[(p̂ - y)²]^{1/2} · E[‖∇θ_t f_topo‖²]^{1/2}`.
    pub gate_rhs: f64,
    pub gate_form: GateForm,
    pub degenerate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub loss_cls: f64,
    pub loss_texture: f64,
    /// Validation AUC (C-index for survival); NaN without a validation split.
    pub val_metric: f64,
}

/// Step and epoch traces of one training run. Epoch indices run across
/// stages, so stage 2 of a default run starts at epoch 10.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const STEP_COLUMNS: &str =
    "step,epoch,stage,lr,loss_cls,loss_texture,grad_stat,grad_topo,residual_rms,gate_lhs,gate_rhs,gate_form,degenerate";
pub const EPOCH_COLUMNS: &str = "epoch,stage,loss_cls,loss_texture,val_metric";

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, what: &str) -> Result<T> {
    parts
        .get(i)
        .ok_or_else(|| Error::Corrupt(format!("missing column {what}")))?
        .parse()
        .map_err(|_| Error::Corrupt(format!("bad value in column {what}")))
}

fn check_header(csv: &str, expected: &str) -> Result<()> {
    match csv.lines().next() {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(Error::Corrupt(format!("unexpected columns {h:?}"))),
        None => Err(Error::Corrupt("empty log".into())),
    }
}

impl TrainLog {
    pub fn next_step(&self) -> usize {
        self.steps.last().map_or(0, |s| s.step + 1)
    }

    pub fn next_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch + 1)
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.steps.extend(other.steps);
        self.epochs.extend(other.epochs);
    }

    pub fn steps_in(&self, stage: Stage) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |s| s.stage == stage)
    }

    /// One row per step; floats use the shortest round-trip representation.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from(STEP_COLUMNS);
        out.push('\n');
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.step,
                s.epoch,
                s.stage.name(),
                s.lr,
                s.loss_cls,
                s.loss_texture,
                s.grad_stat,
                s.grad_topo,
                s.residual_rms,
                s.gate_lhs,
                s.gate_rhs,
                s.gate_form.name(),
                s.degenerate
            );
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from(EPOCH_COLUMNS);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                e.stage.name(),
                e.loss_cls,
                e.loss_texture,
                e.val_metric
            );
        }
        out
    }

    pub fn parse_steps_csv(csv: &str) -> Result<Vec<StepRecord>> {
        check_header(csv, STEP_COLUMNS)?;
        csv.lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|line| {
                let p: Vec<&str> = line.split(',').collect();
                Ok(StepRecord {
                    step: field(&p, 0, "step")?,
                    epoch: field(&p, 1, "epoch")?,
                    stage: Stage::parse(p.get(2).copied().unwrap_or(""))?,
                    lr: field(&p, 3, "lr")?,
                    loss_cls: field(&p, 4, "loss_cls")?,
                    loss_texture: field(&p, 5, "loss_texture")?,
                    grad_stat: field(&p, 6, "grad_stat")?,
                    grad_topo: field(&p, 7, "grad_topo")?,
                    residual_rms: field(&p, 8, "residual_rms")?,
                    gate_lhs: field(&p, 9, "gate_lhs")?,
                    gate_rhs: field(&p, 10, "gate_rhs")?,
                    gate_form: GateForm::parse(p.get(11).copied().unwrap_or(""))?,
                    degenerate: field(&p, 12, "degenerate")?,
                })
            })
            .collect()
    }

    pub fn parse_epochs_csv(csv: &str) -> Result<Vec<EpochRecord>> {
        check_header(csv, EPOCH_COLUMNS)?;
        csv.lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|line| {
                let p: Vec<&str> = line.split(',').collect();
                Ok(EpochRecord {
                    epoch: field(&p, 0, "epoch")?,
                    stage: Stage::parse(p.get(1).copied().unwrap_or(""))?,
                    loss_cls: field(&p, 2, "loss_cls")?,
                    loss_texture: field(&p, 3, "loss_texture")?,
                    val_metric: field(&p, 4, "val_metric")?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let log = TrainLog {
            steps: vec![StepRecord {
                step: 0,
                epoch: 0,
                stage: Stage::Stage2,
                lr: 2e-4,
                loss_cls: 0.1 + 0.2,
                loss_texture: 0.3,
                grad_stat: 0.0,
                grad_topo: 1.5e-7,
                residual_rms: 0.25,
                gate_lhs: 1.0,
                gate_rhs: 1.0000000001,
                gate_form: GateForm::Binary,
                degenerate: 1,
            }],
            epochs: vec![EpochRecord {
                epoch: 0,
                stage: Stage::Stage2,
                loss_cls: 0.5,
                loss_texture: 0.0,
                val_metric: f64::NAN,
            }],
        };
        assert_eq!(TrainLog::parse_steps_csv(&log.steps_csv()).unwrap(), log.steps);
        let e = TrainLog::parse_epochs_csv(&log.epochs_csv()).unwrap();
        assert!(e[0].val_metric.is_nan());
        assert!(TrainLog::parse_steps_csv("step,epoch\n").is_err());
    }
}
