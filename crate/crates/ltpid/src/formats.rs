//! On-disk formats: phasor-family JSON, identified-model JSON, trajectory and
//! frame CSV, validation reports and overlays.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ltpid_core::validate::{Criterion, ValidationReport};
use ltpid_core::{CMatrix, IdentifiedModel, PeriodicMatrix, PhasorFrame, RMatrix, SampledTrajectory, SamplingGrid, C64};

/// Phasor family with only `k ≥ 0` stored; negative harmonics are restored
/// by conjugation on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasorFile {
    pub period: f64,
    pub rows: usize,
    pub cols: usize,
    pub phasors: Vec<PhasorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasorEntry {
    pub k: i64,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl PhasorFile {
    pub fn from_matrix(matrix: &PeriodicMatrix) -> Self {
        let phasors = matrix
            .phasors()
            .filter(|(k, _)| *k >= 0)
            .map(|(k, m)| PhasorEntry {
                k,
                re: rows_of(m, |z| z.re),
                im: rows_of(m, |z| z.im),
            })
            .collect();
        Self {
            period: matrix.period(),
            rows: matrix.rows(),
            cols: matrix.cols(),
            phasors,
        }
    }

    pub fn to_matrix(&self) -> anyhow::Result<PeriodicMatrix> {
        let mut map = BTreeMap::new();
        for e in &self.phasors {
            ensure!(e.k >= 0, "negative harmonic {} in file (only k >= 0 is stored)", e.k);
            ensure!(!map.contains_key(&e.k), "harmonic {} listed twice", e.k);
            let shape_ok = |v: &Vec<Vec<f64>>| v.len() == self.rows && v.iter().all(|r| r.len() == self.cols);
            ensure!(shape_ok(&e.re) && shape_ok(&e.im), "harmonic {} is not {}x{}", e.k, self.rows, self.cols);
            let m = CMatrix::from_fn(self.rows, self.cols, |i, j| C64::new(e.re[i][j], e.im[i][j]));
            map.insert(e.k, m);
        }
        Ok(PeriodicMatrix::from_nonnegative(self.period, self.rows, self.cols, map)?)
    }
}

fn rows_of(m: &CMatrix, f: impl Fn(&C64) -> f64) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_phasor_file(path: &Path) -> anyhow::Result<PeriodicMatrix> {
    read_json::<PhasorFile>(path)?.to_matrix()
}

pub fn write_phasor_file(path: &Path, matrix: &PeriodicMatrix) -> anyhow::Result<()> {
    write_json(path, &PhasorFile::from_matrix(matrix))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub hermitian_defect: f64,
    #[serde(rename = "error_bound_M")]
    pub error_bound_m: Option<f64>,
    pub max_column_residual: f64,
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

/// Identified model on disk: the phasor families plus solve diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub a: PhasorFile,
    pub b: Option<PhasorFile>,
    pub diagnostics: Diagnostics,
}

impl ModelFile {
    pub fn from_model(model: &IdentifiedModel) -> Self {
        Self {
            p: model.p,
            a: PhasorFile::from_matrix(&model.a),
            b: model.b.as_ref().map(PhasorFile::from_matrix),
            diagnostics: Diagnostics {
                residual: model.residual,
                rank: model.numerical_rank,
                singular_values: model.singular_values.clone(),
                hermitian_defect: model.hermitian_defect,
                error_bound_m: model.error_bound_m,
                max_column_residual: model.max_column_residual,
                condition_number: model.condition_number,
                ill_conditioned: model.ill_conditioned,
            },
        }
    }

    /// Rebuilds the model; the raw `Θ̃` is replaced by the symmetrized blocks.
    pub fn to_model(&self) -> anyhow::Result<IdentifiedModel> {
        let a = self.a.to_matrix()?;
        let b = self.b.as_ref().map(PhasorFile::to_matrix).transpose()?;
        let theta = ltpid_core::PhasorStack::from_matrices(&a, b.as_ref(), self.p).matrix;
        let d = &self.diagnostics;
        Ok(IdentifiedModel {
            p: self.p,
            a,
            b,
            theta,
            residual: d.residual,
            max_column_residual: d.max_column_residual,
            numerical_rank: d.rank,
            singular_values: d.singular_values.clone(),
            condition_number: d.condition_number,
            ill_conditioned: d.ill_conditioned,
            hermitian_defect: d.hermitian_defect,
            error_bound_m: d.error_bound_m,
        })
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with header `t,x1..xn,u1..um`, one row per grid time.
pub fn write_trajectory(path: &Path, traj: &SampledTrajectory) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=traj.n()).map(|i| format!("x{i}")))
        .chain((1..=traj.m()).map(|i| format!("u{i}")))
        .collect();
    w.write_record(&header)?;
    for j in 0..traj.grid.count {
        let row: Vec<String> = std::iter::once(traj.grid.time(j))
            .chain(traj.states.column(j).iter().copied())
            .chain(traj.inputs.column(j).iter().copied())
            .map(num)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV. The grid is rebuilt from the time column, which
/// must be uniform with `period/dt` an integer.
pub fn read_trajectory(path: &Path, period: f64) -> anyhow::Result<SampledTrajectory> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    ensure!(headers.get(0) == Some("t"), "first column must be t");
    let n = headers.iter().filter(|h| h.starts_with('x')).count();
    let m = headers.iter().filter(|h| h.starts_with('u')).count();
    ensure!(headers.len() == 1 + n + m, "unexpected columns in {}", path.display());
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: Vec<f64> = rec.iter().map(str::parse).collect::<Result<_, _>>()?;
        times.push(row[0]);
        values.push(row[1..].to_vec());
    }
    ensure!(times.len() >= 2, "trajectory needs at least two rows");
    let dt = times[1] - times[0];
    let big_n = (period / dt).round();
    if !(big_n >= 2.0) || ((period / big_n) - dt).abs() > 1e-9 * dt {
        bail!("sampling step {dt} does not divide the period {period}");
    }
    let grid = SamplingGrid::new(times[0], period, big_n as usize, times.len())?;
    for (j, &t) in times.iter().enumerate() {
        ensure!((t - grid.time(j)).abs() <= 1e-9 * period.max(t.abs()), "non-uniform time at row {j}");
    }
    let states = RMatrix::from_fn(n, times.len(), |i, j| values[j][i]);
    let inputs = RMatrix::from_fn(m, times.len(), |i, j| values[j][n + i]);
    Ok(SampledTrajectory::new(grid, states, inputs)?)
}

/// Debug dump: `t, M`, then `Re`/`Im` of every state and input phasor.
pub fn write_frames(path: &Path, frames: &[PhasorFrame]) -> anyhow::Result<()> {
    let Some(first) = frames.first() else {
        bail!("no frames to write");
    };
    let (n, m, p) = (first.n(), first.m(), first.p as i64);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "M".to_string()];
    for (name, count) in [("X", n), ("U", m)] {
        for k in -p..=p {
            for i in 1..=count {
                header.push(format!("re_{name}{i}_{k}"));
                header.push(format!("im_{name}{i}_{k}"));
            }
        }
    }
    w.write_record(&header)?;
    for f in frames {
        let mut row = vec![num(f.t), num(f.window_norm)];
        for z in f.x_phasors.iter().chain(f.u_phasors.iter()) {
            row.push(num(z.re));
            row.push(num(z.im));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub phasor_error_pct: Option<f64>,
    pub trajectory_nrmse_pct: Option<Vec<f64>>,
    pub aggregate_nrmse_pct: Option<f64>,
    pub criterion: String,
    /// Value compared against the threshold.
    pub value_pct: Option<f64>,
    pub threshold_pct: f64,
    pub accepted: bool,
    pub scenario: String,
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

impl ReportFile {
    pub fn from_report(report: &ValidationReport) -> Self {
        Self {
            phasor_error_pct: report.phasor_error_pct,
            trajectory_nrmse_pct: report.trajectory_nrmse_pct.clone(),
            aggregate_nrmse_pct: report.aggregate_nrmse_pct,
            criterion: match report.criterion {
                Criterion::PhasorError => "phasor_error".into(),
                Criterion::TrajectoryNrmse => "trajectory_nrmse".into(),
            },
            value_pct: report.criterion_value(),
            threshold_pct: report.threshold_pct,
            accepted: report.accepted,
            scenario: report.scenario.clone(),
            failure: report.failure.clone(),
            notices: Vec::new(),
        }
    }
}

/// `t, true_x1.., est_x1..` over the validation horizon.
pub fn write_overlay(path: &Path, truth: &SampledTrajectory, estimate: &SampledTrajectory) -> anyhow::Result<()> {
    ensure!(truth.states.shape() == estimate.states.shape(), "overlay trajectories differ in shape");
    let mut w = csv::Writer::from_path(path)?;
    let n = truth.n();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("true_x{i}")))
        .chain((1..=n).map(|i| format!("est_x{i}")))
        .collect();
    w.write_record(&header)?;
    for j in 0..truth.grid.count {
        let row: Vec<String> = std::iter::once(truth.grid.time(j))
            .chain(truth.states.column(j).iter().copied())
            .chain(estimate.states.column(j).iter().copied())
            .map(num)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
