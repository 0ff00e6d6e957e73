//! Validation of identified models: relative phasor error against a known
//! system, and trajectory NRMSE on a fresh scenario.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::identify::{stack_blocks, IdentifiedModel};
use crate::linalg::spectral_norm;
use crate::periodic::PeriodicMatrix;
use crate::simulate::{simulate, simulate_sampled, InputSignal, Integrator, SampledTrajectory, SamplingGrid};
use crate::{CMatrix, Error, RMatrix, RVector, Result};

/// `[A_p … A_{−p}, B_p … B_{−p}]` as one `n × (n+m)(2p+1)` block row.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorStack {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub matrix: CMatrix,
}

impl PhasorStack {
    pub fn from_matrices(a: &PeriodicMatrix, b: Option<&PeriodicMatrix>, p: usize) -> Self {
        let n = a.rows();
        let sa = stack_blocks(a, p);
        let (m, matrix) = match b {
            Some(b) => {
                let sb = stack_blocks(b, p);
                let mut out = CMatrix::zeros(n, sa.ncols() + sb.ncols());
                out.columns_mut(0, sa.ncols()).copy_from(&sa);
                out.columns_mut(sa.ncols(), sb.ncols()).copy_from(&sb);
                (b.cols(), out)
            }
            None => (0, sa),
        };
        Self { p, n, m, matrix }
    }

    pub fn from_model(model: &IdentifiedModel) -> Self {
        Self::from_matrices(&model.a, model.b.as_ref(), model.p)
    }

    fn block(&self, k: i64, of_b: bool) -> CMatrix {
        let width = if of_b { self.m } else { self.n };
        if k.unsigned_abs() as usize > self.p {
            return DMatrix::zeros(self.n, width);
        }
        let c = (self.p as i64 - k) as usize;
        let offset = if of_b { self.n * (2 * self.p + 1) } else { 0 };
        self.matrix.columns(offset + c * width, width).into_owned()
    }

    fn rebuild(&self, p: usize, keep: impl Fn(i64) -> bool) -> Self {
        let h = 2 * p + 1;
        let mut matrix = CMatrix::zeros(self.n, (self.n + self.m) * h);
        for c in 0..h {
            let k = p as i64 - c as i64;
            if !keep(k) {
                continue;
            }
            matrix.columns_mut(c * self.n, self.n).copy_from(&self.block(k, false));
            if self.m > 0 {
                matrix
                    .columns_mut(self.n * h + c * self.m, self.m)
                    .copy_from(&self.block(k, true));
            }
        }
        Self {
            p,
            n: self.n,
            m: self.m,
            matrix,
        }
    }

    /// Zero-pads (or truncates) to order `p`.
    pub fn with_order(&self, p: usize) -> Self {
        self.rebuild(p, |_| true)
    }

    /// Keeps harmonics `|k| ≤ q` (and the order `q`).
    pub fn restrict(&self, q: usize) -> Self {
        self.rebuild(q, |k| k.unsigned_abs() as usize <= q)
    }
}

/// `100 · ‖P_th − P_est‖₂ / ‖P_th‖₂` (spectral norms) on raw stacks of equal
/// shape.
pub fn relative_error(p_th: &CMatrix, p_est: &CMatrix) -> Result<f64> {
    if p_th.shape() != p_est.shape() {
        return Err(Error::DimensionMismatch(format!(
            "stacks are {}x{} and {}x{}",
            p_th.nrows(),
            p_th.ncols(),
            p_est.nrows(),
            p_est.ncols()
        )));
    }
    let denom = spectral_norm(p_th);
    if denom == 0.0 {
        return Err(Error::InvalidArgument("reference phasor stack is zero".into()));
    }
    Ok(100.0 * spectral_norm(&(p_th - p_est)) / denom)
}

/// Relative phasor error in percent after zero-padding both stacks to the
/// larger order.
pub fn relative_phasor_error(p_th: &PhasorStack, p_est: &PhasorStack) -> Result<f64> {
    if (p_th.n, p_th.m) != (p_est.n, p_est.m) {
        return Err(Error::DimensionMismatch(format!(
            "(n, m) = ({}, {}) vs ({}, {})",
            p_th.n, p_th.m, p_est.n, p_est.m
        )));
    }
    let p = p_th.p.max(p_est.p);
    relative_error(&p_th.with_order(p).matrix, &p_est.with_order(p).matrix)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    PhasorError,
    TrajectoryNrmse,
}

/// Fresh experiment used to compare a model against the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub description: String,
    pub x0: RVector,
    pub input: InputSignal,
    pub grid: SamplingGrid,
    pub integrator: Integrator,
}

pub enum Truth<'a> {
    Phasors {
        a: &'a PeriodicMatrix,
        b: Option<&'a PeriodicMatrix>,
    },
    /// Recorded trajectory. The model is replayed from its first state with
    /// the recorded input samples (Crank–Nicolson); only the scenario
    /// description is used.
    Recorded(&'a SampledTrajectory),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub phasor_error_pct: Option<f64>,
    pub trajectory_nrmse_pct: Option<Vec<f64>>,
    pub aggregate_nrmse_pct: Option<f64>,
    pub criterion: Criterion,
    pub threshold_pct: f64,
    pub accepted: bool,
    pub scenario: String,
    pub failure: Option<String>,
}

impl ValidationReport {
    pub fn criterion_value(&self) -> Option<f64> {
        match self.criterion {
            Criterion::PhasorError => self.phasor_error_pct,
            Criterion::TrajectoryNrmse => self.aggregate_nrmse_pct,
        }
    }
}

pub fn accepts(value: Option<f64>, threshold_pct: f64) -> bool {
    value.is_some_and(|v| v <= threshold_pct)
}

/// Per-row and aggregate `100 · ‖x_true − x_est‖₂ / ‖x_true‖₂`.
pub fn nrmse(truth: &RMatrix, estimate: &RMatrix) -> (Vec<f64>, f64) {
    let per = truth
        .row_iter()
        .zip(estimate.row_iter())
        .map(|(t, e)| 100.0 * (t - e).norm() / t.norm())
        .collect();
    (per, 100.0 * (truth - estimate).norm() / truth.norm())
}

/// Output of [`validate_on_fresh_trajectory`]; trajectories are kept for
/// overlays.
#[derive(Clone, Debug)]
pub struct Validation {
    pub report: ValidationReport,
    pub truth: Option<SampledTrajectory>,
    pub estimate: Option<SampledTrajectory>,
}

/// Simulates the model (and the true system when matrices are given) under
/// `scenario` and grades it by `criterion` against `threshold_pct`.
/// Simulation failures are reported, not returned as errors.
pub fn validate_on_fresh_trajectory(
    model: &IdentifiedModel,
    truth: Truth<'_>,
    scenario: &Scenario,
    criterion: Criterion,
    threshold_pct: f64,
) -> Validation {
    let mut failure = None;
    let mut phasor_error_pct = None;
    let recorded = matches!(truth, Truth::Recorded(_));
    let truth_traj = match truth {
        Truth::Phasors { a, b } => {
            phasor_error_pct = relative_phasor_error(&PhasorStack::from_matrices(a, b, a.degree()), &PhasorStack::from_model(model))
                .map_err(|e| failure = Some(e.to_string()))
                .ok();
            simulate(a, b, &scenario.input, &scenario.x0, &scenario.grid, scenario.integrator)
                .map_err(|e| failure = Some(format!("true system: {e}")))
                .ok()
        }
        Truth::Recorded(tr) => Some(tr.clone()),
    };
    let estimate = match &truth_traj {
        Some(tr) if recorded => simulate_sampled(
            &model.a,
            model.b.as_ref(),
            &tr.inputs,
            &tr.states.column(0).into_owned(),
            &tr.grid,
        ),
        _ => simulate(
            &model.a,
            model.b.as_ref(),
            &scenario.input,
            &scenario.x0,
            &scenario.grid,
            scenario.integrator,
        ),
    }
    .map_err(|e| failure = Some(format!("identified model: {e}")))
    .ok();
    let (per, aggregate) = match (&truth_traj, &estimate) {
        (Some(t), Some(e)) if t.states.shape() == e.states.shape() => {
            let (per, agg) = nrmse(&t.states, &e.states);
            (Some(per), Some(agg))
        }
        (Some(_), Some(_)) => {
            failure = Some("recorded and simulated trajectories differ in shape".into());
            (None, None)
        }
        _ => (None, None),
    };
    let mut report = ValidationReport {
        phasor_error_pct,
        trajectory_nrmse_pct: per,
        aggregate_nrmse_pct: aggregate,
        criterion,
        threshold_pct,
        accepted: false,
        scenario: scenario.description.clone(),
        failure,
    };
    report.accepted = accepts(report.criterion_value(), threshold_pct);
    Validation {
        report,
        truth: truth_traj,
        estimate,
    }
}
