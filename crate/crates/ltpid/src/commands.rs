//! Implementations of the CLI verbs. Each returns a summary value so it can
//! be driven from tests as well as from `main`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ltpid_core::identify::{informativity, solve, sweep_p, Sweep, SWEEP_THRESHOLD};
use ltpid_core::validate::{validate_on_fresh_trajectory, Criterion, Scenario, Truth};
use ltpid_core::{Error as CoreError, IdentifiedModel, SampledTrajectory};

use crate::config::ExperimentConfig;
use crate::experiment::{
    convergence_table, fresh_excitation, generate, inversions, phasor_error, regression, run_batch, trial_seed,
    BatchReport, ConvergenceRow, System,
};
use crate::formats::{self, ModelFile, ReportFile};

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialFiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFiles {
    pub trial: usize,
    pub seed: u64,
    /// Measured (possibly noisy) trajectories.
    pub trajectories: Vec<PathBuf>,
    /// Noise-free trajectories, written only when noise is enabled.
    pub clean: Vec<PathBuf>,
}

/// Writes `trial_XXX/traj_YY.csv` for every trial and a `manifest.json`.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Manifest> {
    ensure_dir(out)?;
    let system = System::from_config(&config.system)?;
    let mut trials = Vec::new();
    for trial in 0..config.trials {
        let seed = trial_seed(config.seed, trial);
        let data = generate(config, &system, seed)?;
        let dir = out.join(format!("trial_{trial:03}"));
        ensure_dir(&dir)?;
        let mut files = TrialFiles {
            trial,
            seed,
            trajectories: Vec::new(),
            clean: Vec::new(),
        };
        for (i, tr) in data.measured.iter().enumerate() {
            let name = PathBuf::from(format!("trial_{trial:03}/traj_{i:02}.csv"));
            formats::write_trajectory(&out.join(&name), tr)?;
            files.trajectories.push(name);
        }
        if config.is_noisy() {
            for (i, tr) in data.clean.iter().enumerate() {
                let name = PathBuf::from(format!("trial_{trial:03}/clean_{i:02}.csv"));
                formats::write_trajectory(&out.join(&name), tr)?;
                files.clean.push(name);
            }
        }
        trials.push(files);
    }
    let manifest = Manifest {
        config: config.clone(),
        trials,
    };
    formats::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifySummary {
    pub columns: usize,
    pub rank: usize,
    pub required: usize,
    pub informative: bool,
    pub condition_number: f64,
    /// Available when the true system is known.
    pub phasor_error_pct: Option<f64>,
    pub threshold_pct: f64,
    pub model_path: PathBuf,
}

/// Runs the pipeline on trial 0 of the config, or on the given trajectory
/// files. Fails when the data are not informative.
pub fn cmd_identify(
    config: &ExperimentConfig,
    trajectories: &[PathBuf],
    out: &Path,
) -> anyhow::Result<(IdentifySummary, IdentifiedModel)> {
    ensure_dir(out)?;
    let system = System::from_config(&config.system);
    let data: Vec<SampledTrajectory> = if trajectories.is_empty() {
        let system = system.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
        generate(config, system, trial_seed(config.seed, 0))?.measured
    } else {
        let period = match &system {
            Ok(s) => s.period(),
            Err(_) => 1.0,
        };
        trajectories
            .iter()
            .map(|p| formats::read_trajectory(p, period))
            .collect::<anyhow::Result<_>>()?
    };
    let (frames, reg) = regression(config, &data, config.p)?;
    if let Some(first) = frames.first() {
        formats::write_frames(&out.join("frames_00.csv"), first)?;
    }
    let info = informativity(&reg);
    let model = match solve(&reg) {
        Ok(m) => m,
        Err(CoreError::NotInformative { rank, required, columns }) => bail!(
            "data not informative: rank {rank} of {required} (deficit {}); at least L = (n+m)(2p+1) = {required} \
             well-excited columns are needed, {columns} supplied",
            required - rank
        ),
        Err(e) => return Err(e.into()),
    };
    let model = match model.clone().with_error_bound(&reg) {
        Ok(m) => m,
        Err(_) => model,
    };
    let phasor_error_pct = match &system {
        Ok(s) => Some(phasor_error(s, &model, config.error_harmonics)?),
        Err(_) => None,
    };
    let model_path = out.join("model.json");
    formats::write_json(&model_path, &ModelFile::from_model(&model))?;
    let summary = IdentifySummary {
        columns: reg.columns(),
        rank: info.rank,
        required: info.required,
        informative: info.informative,
        condition_number: info.condition_number,
        phasor_error_pct,
        threshold_pct: config.threshold_pct(),
        model_path,
    };
    formats::write_json(&out.join("identify.json"), &summary)?;
    Ok((summary, model))
}

/// Validates a stored model. With a known system the criterion comes from
/// the config; with only a recorded trajectory, trajectory NRMSE is used.
pub fn cmd_validate(
    model_path: &Path,
    config: &ExperimentConfig,
    recorded: Option<&Path>,
    out: &Path,
) -> anyhow::Result<ReportFile> {
    ensure_dir(out)?;
    let model = formats::read_json::<ModelFile>(model_path)?.to_model()?;
    let system = System::from_config(&config.system);
    let mut notices = Vec::new();
    let wants_phasor = !config.validation.use_nrmse;

    let recorded_traj = recorded
        .map(|p| formats::read_trajectory(p, model.a.period()))
        .transpose()?;
    let validation = match (&system, &recorded_traj) {
        (Ok(s), None) => {
            let (x0, input, grid) = fresh_excitation(config, s, 0)?;
            let scenario = Scenario {
                description: format!(
                    "fresh trajectory: seed {}, x0 {:?}, {} periods",
                    trial_seed(config.seed, 0),
                    x0.as_slice(),
                    config.validation.horizon_periods
                ),
                x0,
                input,
                grid,
                integrator: config.grid.integrator(),
            };
            let (criterion, threshold) = if wants_phasor {
                (Criterion::PhasorError, config.threshold_pct())
            } else {
                (Criterion::TrajectoryNrmse, config.validation.nrmse_threshold_pct)
            };
            let truth = Truth::Phasors {
                a: &s.a,
                b: s.b.as_ref(),
            };
            validate_on_fresh_trajectory(&model, truth, &scenario, criterion, threshold)
        }
        (_, Some(tr)) => {
            if wants_phasor {
                notices.push("no true phasors for a recorded trajectory; falling back to trajectory NRMSE".into());
            }
            let scenario = Scenario {
                description: format!("recorded trajectory {}", recorded.unwrap_or(Path::new("")).display()),
                x0: tr.states.column(0).into_owned(),
                input: ltpid_core::InputSignal::Zero { m: tr.m() },
                grid: tr.grid,
                integrator: ltpid_core::Integrator::CrankNicolson,
            };
            validate_on_fresh_trajectory(
                &model,
                Truth::Recorded(tr),
                &scenario,
                Criterion::TrajectoryNrmse,
                config.validation.nrmse_threshold_pct,
            )
        }
        (Err(e), None) => bail!("no truth available: {e:#}"),
    };
    if let (Some(t), Some(e)) = (&validation.truth, &validation.estimate) {
        formats::write_overlay(&out.join("overlay.csv"), t, e)?;
    }
    let mut report = ReportFile::from_report(&validation.report);
    report.notices = notices;
    formats::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub report: BatchReport,
    pub convergence: Option<Vec<ConvergenceRow>>,
    pub convergence_inversions: Option<usize>,
}

pub fn cmd_batch(
    config: &ExperimentConfig,
    workers: Option<usize>,
    convergence: Option<&[usize]>,
    out: &Path,
) -> anyhow::Result<BatchOutput> {
    ensure_dir(out)?;
    let report = run_batch(config, workers)?;
    let (table, inv) = match convergence {
        Some(mults) => {
            let table = convergence_table(config, mults, workers)?;
            let inv = inversions(&table);
            (Some(table), Some(inv))
        }
        None => (None, None),
    };
    let output = BatchOutput {
        report,
        convergence: table,
        convergence_inversions: inv,
    };
    formats::write_json(&out.join("batch.json"), &output)?;
    Ok(output)
}

/// Sweeps `p = 1..=p_max` on the trajectories of trial 0. Orders whose
/// sampling rate is too low for `N ≥ 4p` are skipped.
pub fn cmd_sweep(config: &ExperimentConfig, p_max: usize, out: &Path) -> anyhow::Result<Sweep> {
    ensure_dir(out)?;
    let system = System::from_config(&config.system)?;
    let data = generate(config, &system, trial_seed(config.seed, 0))?.measured;
    let n_max = config.grid.samples_per_period / 4;
    let orders = 1..=p_max.min(n_max.max(1));
    let sweep = sweep_p(orders, SWEEP_THRESHOLD, |p| {
        let mut c = config.clone();
        c.p = p;
        c.trajectories.columns = None;
        regression(&c, &data, p)
            .map(|(_, reg)| reg)
            .map_err(|e| CoreError::InvalidArgument(format!("{e:#}")))
    })?;
    formats::write_json(&out.join("sweep.json"), &SweepFile::from(&sweep))?;
    Ok(sweep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub rows: Vec<SweepRow>,
    pub chosen: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub top_norm: f64,
    pub max_norm: f64,
    pub decayed: bool,
    pub residual: f64,
}

impl From<&Sweep> for SweepFile {
    fn from(s: &Sweep) -> Self {
        Self {
            rows: s
                .entries
                .iter()
                .map(|e| SweepRow {
                    p: e.p,
                    top_norm: e.top_norm,
                    max_norm: e.max_norm,
                    decayed: e.decayed,
                    residual: e.residual,
                })
                .collect(),
            chosen: s.chosen,
        }
    }
}
