//! Metrics, the coordinate-shuffle audit, invariance certificates, checks
//! of the residual-gating bound and the stage-2 loss bound, and report
//! rendering (CSV, JSON, SVG).

mod audit;
mod metrics;
mod report;
mod verify;

pub use audit::{
    certify_permutation_invariance, certify_shuffle_invariance, shuffle_audit, shuffled_dataset, AuditCurve,
    InvarianceReport, DEFAULT_FRACTIONS, INVARIANCE_TOLERANCE,
};
pub use metrics::{accuracy, auc, c_index, macro_f1};
pub use report::{audit_svg, epoch_gradient_means, gradient_trace_svg, line_chart_svg, EpochGradients, Series};
pub use verify::{gate_holds, verify_prop1, verify_prop2, BoundReport, GateReport, GATE_SLACK};
