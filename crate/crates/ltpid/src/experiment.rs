//! Trial pipeline (simulate → phasors → regression → solve → score) and the
//! parallel batch runner.

use anyhow::Context;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ltpid_core::harmonic::sliding_phasors;
use ltpid_core::identify::{informativity, solve, RegressionData};
use ltpid_core::periodic::example_b_system;
use ltpid_core::rng::{derive_seed, stream};
use ltpid_core::simulate::{add_state_noise, piecewise_periodic_input, simulate};
use ltpid_core::validate::{relative_phasor_error, PhasorStack};
use ltpid_core::{
    IdentifiedModel, InputSignal, PeriodicMatrix, PhasorFrame, RVector, SampledTrajectory, SamplingGrid,
};

use crate::config::{ExperimentConfig, SystemConfig};
use crate::formats;

/// True system of an experiment.
#[derive(Clone, Debug)]
pub struct System {
    pub a: PeriodicMatrix,
    pub b: Option<PeriodicMatrix>,
}

impl System {
    pub fn from_config(config: &SystemConfig) -> anyhow::Result<Self> {
        Ok(match config {
            SystemConfig::Random {
                n,
                m,
                degree,
                scale,
                input_scale,
                seed,
                period,
            } => {
                let a = PeriodicMatrix::random(*n, *n, *degree, derive_seed(*seed, 0), *scale, *period)?;
                let b = if *m > 0 {
                    Some(PeriodicMatrix::random(
                        *n,
                        *m,
                        *degree,
                        derive_seed(*seed, 1),
                        input_scale.unwrap_or(*scale),
                        *period,
                    )?)
                } else {
                    None
                };
                Self { a, b }
            }
            SystemConfig::ExampleB { k_sim } => {
                let (a, b) = example_b_system(*k_sim)?;
                Self { a, b: Some(b) }
            }
            SystemConfig::File { a, b } => Self {
                a: formats::read_phasor_file(a)?,
                b: b.as_deref().map(formats::read_phasor_file).transpose()?,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.cols())
    }

    pub fn period(&self) -> f64 {
        self.a.period()
    }
}

/// Seed of trial `trial` under root `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, trial as u64)
}

/// Stream tags inside a trial.
const X0_TAG: u64 = 1 << 32;
const INPUT_TAG: u64 = 2 << 32;
const NOISE_TAG: u64 = 3 << 32;
const FRESH_TAG: u64 = 4 << 32;

/// Random initial state and input of trajectory `index` of a trial.
pub fn excitation(
    config: &ExperimentConfig,
    system: &System,
    trial_seed: u64,
    index: u64,
    length: usize,
) -> anyhow::Result<(RVector, InputSignal)> {
    let mut r = stream(derive_seed(trial_seed, X0_TAG + index));
    let range = config.trajectories.x0_range;
    let x0 = RVector::from_fn(system.n(), |_, _| r.random_range(-range..=range));
    let input = &config.trajectories.input;
    let period = system.period();
    let span_periods = length.div_ceil(config.grid.samples_per_period);
    let segments = span_periods.div_ceil(input.segment_periods).max(1);
    let u = piecewise_periodic_input(
        system.m(),
        input.degree,
        period,
        segments,
        (segments * input.segment_periods) as f64 * period,
        derive_seed(trial_seed, INPUT_TAG + index),
        input.amplitude,
    )?;
    Ok((x0, u))
}

/// Clean and measured trajectories of one trial.
pub struct TrialData {
    pub clean: Vec<SampledTrajectory>,
    pub measured: Vec<SampledTrajectory>,
}

pub fn generate(config: &ExperimentConfig, system: &System, trial_seed: u64) -> anyhow::Result<TrialData> {
    let grid = SamplingGrid::new(
        0.0,
        system.period(),
        config.grid.samples_per_period,
        config.trajectories.length,
    )?;
    let mut clean = Vec::new();
    let mut measured = Vec::new();
    for i in 0..config.trajectories.count as u64 {
        let (x0, u) = excitation(config, system, trial_seed, i, grid.count)?;
        let tr = simulate(&system.a, system.b.as_ref(), &u, &x0, &grid, config.grid.integrator())
            .with_context(|| format!("simulating trajectory {i}"))?;
        let noisy = add_state_noise(
            &tr,
            config.noise.ratio,
            derive_seed(derive_seed(config.noise.seed, trial_seed), NOISE_TAG + i),
        )?;
        clean.push(tr);
        measured.push(noisy);
    }
    Ok(TrialData { clean, measured })
}

/// Phasor frames and the (column-limited) regression data.
pub fn regression(
    config: &ExperimentConfig,
    trajectories: &[SampledTrajectory],
    p: usize,
) -> anyhow::Result<(Vec<Vec<PhasorFrame>>, RegressionData)> {
    let frames = trajectories
        .iter()
        .map(|t| sliding_phasors(t, p, config.grid.quadrature()))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[PhasorFrame]> = frames.iter().map(|f| f.as_slice()).collect();
    let mut data = RegressionData::assemble(&refs, config.trajectories.stride)?;
    if let Some(l) = config.trajectories.columns {
        data = data.first(l);
    }
    Ok((frames, data))
}

/// Phasor error of a model against the true system, optionally restricted
/// to `|k| ≤ q`.
pub fn phasor_error(system: &System, model: &IdentifiedModel, harmonics: Option<usize>) -> anyhow::Result<f64> {
    let truth = PhasorStack::from_matrices(&system.a, system.b.as_ref(), system.a.degree().max(model.p));
    let est = PhasorStack::from_model(model);
    Ok(match harmonics {
        Some(q) => relative_phasor_error(&truth.restrict(q), &est.restrict(q))?,
        None => relative_phasor_error(&truth, &est)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub columns: usize,
    pub rank: usize,
    pub required: usize,
    pub condition_number: f64,
    pub residual: Option<f64>,
    pub hermitian_defect: Option<f64>,
    pub error_pct: Option<f64>,
    pub failure: Option<String>,
}

/// Identification outcome of one trial.
pub struct TrialOutcome {
    pub result: TrialResult,
    pub model: Option<IdentifiedModel>,
    pub data: Option<TrialData>,
}

pub fn run_trial(config: &ExperimentConfig, system: &System, trial: usize) -> TrialOutcome {
    let seed = trial_seed(config.seed, trial);
    let mut result = TrialResult {
        trial,
        seed,
        columns: 0,
        rank: 0,
        required: (system.n() + system.m()) * (2 * config.p + 1),
        condition_number: f64::NAN,
        residual: None,
        hermitian_defect: None,
        error_pct: None,
        failure: None,
    };
    let data = match generate(config, system, seed) {
        Ok(d) => d,
        Err(e) => {
            result.failure = Some(format!("{e:#}"));
            return TrialOutcome {
                result,
                model: None,
                data: None,
            };
        }
    };
    let model = (|| -> anyhow::Result<IdentifiedModel> {
        let (_, reg) = regression(config, &data.measured, config.p)?;
        result.columns = reg.columns();
        let info = informativity(&reg);
        result.rank = info.rank;
        result.condition_number = info.condition_number;
        let model = solve(&reg)?;
        result.residual = Some(model.residual);
        result.hermitian_defect = Some(model.hermitian_defect);
        result.error_pct = Some(phasor_error(system, &model, config.error_harmonics)?);
        Ok(model)
    })();
    let model = model.map_err(|e| result.failure = Some(format!("{e:#}"))).ok();
    TrialOutcome {
        result,
        model,
        data: Some(data),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub failures: usize,
    pub min_pct: Option<f64>,
    pub median_pct: Option<f64>,
    pub max_pct: Option<f64>,
    pub mean_pct: Option<f64>,
}

/// Median of an unsorted sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

pub fn aggregate(results: &[TrialResult]) -> Aggregate {
    let errors: Vec<f64> = results.iter().filter_map(|r| r.error_pct).collect();
    let fold = |f: fn(f64, f64) -> f64| errors.iter().copied().reduce(f);
    Aggregate {
        trials: results.len(),
        failures: results.len() - errors.len(),
        min_pct: fold(f64::min),
        median_pct: median(&errors),
        max_pct: fold(f64::max),
        mean_pct: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
    pub threshold_pct: f64,
    pub passed: usize,
}

fn pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    Ok(builder.build()?)
}

/// Runs all trials of `config` on up to `workers` threads. Results are in
/// trial order regardless of scheduling.
pub fn run_batch(config: &ExperimentConfig, workers: Option<usize>) -> anyhow::Result<BatchReport> {
    let system = System::from_config(&config.system)?;
    let trials: Vec<TrialResult> = pool(workers)?.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &system, t).result)
            .collect()
    });
    let threshold_pct = config.threshold_pct();
    let passed = trials
        .iter()
        .filter(|r| r.error_pct.is_some_and(|e| e <= threshold_pct))
        .count();
    Ok(BatchReport {
        config: config.clone(),
        aggregate: aggregate(&trials),
        trials,
        threshold_pct,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub multiplier: usize,
    pub columns: usize,
    pub aggregate: Aggregate,
}

/// Median error for `L = multiplier·(n+m)(2p+1)`, one batch per multiplier.
pub fn convergence_table(
    config: &ExperimentConfig,
    multipliers: &[usize],
    workers: Option<usize>,
) -> anyhow::Result<Vec<ConvergenceRow>> {
    let system = System::from_config(&config.system)?;
    let required = (system.n() + system.m()) * (2 * config.p + 1);
    multipliers
        .iter()
        .map(|&k| {
            let c = config.with_columns(k * required);
            let report = run_batch(&c, workers)?;
            Ok(ConvergenceRow {
                multiplier: k,
                columns: k * required,
                aggregate: report.aggregate,
            })
        })
        .collect()
}

/// Counts strict increases of the median along the table.
pub fn inversions(rows: &[ConvergenceRow]) -> usize {
    let medians: Vec<f64> = rows.iter().map(|r| r.aggregate.median_pct.unwrap_or(f64::INFINITY)).collect();
    medians.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Initial state and input of the fresh validation trajectory of a trial.
pub fn fresh_excitation(
    config: &ExperimentConfig,
    system: &System,
    trial: usize,
) -> anyhow::Result<(RVector, InputSignal, SamplingGrid)> {
    let seed = derive_seed(trial_seed(config.seed, trial), FRESH_TAG);
    let count = (config.validation.horizon_periods.max(2)) * config.grid.samples_per_period;
    let grid = SamplingGrid::new(0.0, system.period(), config.grid.samples_per_period, count)?;
    let (x0, u) = excitation(config, system, seed, 0, count)?;
    Ok((x0, u, grid))
}
