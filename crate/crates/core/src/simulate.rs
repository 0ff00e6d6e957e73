//! Sampling grids, input signals, fixed-step integration of
//! `ẋ = A(t)x + B(t)u`, and proportional measurement noise.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::LU;
#[allow(unused_imports)] // float math under no_std
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::periodic::PeriodicMatrix;
use crate::{rng, Error, RMatrix, RVector, Result};

/// States whose magnitude exceeds this are treated as a blow-up.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Uniform grid `t_i = t0 + i·dt`, `dt = T/N`, `i = 0..count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingGrid {
    pub t0: f64,
    pub period: f64,
    pub samples_per_period: usize,
    pub count: usize,
}

impl SamplingGrid {
    pub fn new(t0: f64, period: f64, samples_per_period: usize, count: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) || !t0.is_finite() {
            return Err(Error::InvalidArgument(format!("bad grid origin/period ({t0}, {period})")));
        }
        if samples_per_period < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples per period, got {samples_per_period}"
            )));
        }
        if count < 2 * samples_per_period {
            return Err(Error::TooShort {
                available: count,
                required: 2 * samples_per_period,
                reason: "grid must span two periods",
            });
        }
        Ok(Self {
            t0,
            period,
            samples_per_period,
            count,
        })
    }

    pub fn dt(&self) -> f64 {
        self.period / self.samples_per_period as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.time(i))
    }
}

/// States `n × count` and inputs `m × count` recorded on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    pub grid: SamplingGrid,
    pub states: RMatrix,
    pub inputs: RMatrix,
}

impl SampledTrajectory {
    pub fn new(grid: SamplingGrid, states: RMatrix, inputs: RMatrix) -> Result<Self> {
        if states.ncols() != grid.count || inputs.ncols() != grid.count {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} samples, states {} and inputs {}",
                grid.count,
                states.ncols(),
                inputs.ncols()
            )));
        }
        if let Some(index) = first_bad_column(&states).or_else(|| first_bad_column(&inputs)) {
            return Err(Error::BlowUp { index });
        }
        Ok(Self { grid, states, inputs })
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn m(&self) -> usize {
        self.inputs.nrows()
    }
}

fn first_bad_column(m: &RMatrix) -> Option<usize> {
    m.column_iter()
        .position(|c| c.iter().any(|v| !v.is_finite()))
}

/// Exogenous input `u(t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSignal {
    /// `m` identically-zero channels (`m = 0` for autonomous systems).
    Zero { m: usize },
    /// Independent T-periodic `m × 1` phasor families on consecutive segments
    /// of `segment_periods` whole periods starting at `t = 0`. The last
    /// segment extends to infinity and the first one backwards.
    PiecewisePeriodic {
        segment_periods: usize,
        segments: Vec<PeriodicMatrix>,
    },
}

impl InputSignal {
    pub fn m(&self) -> usize {
        match self {
            Self::Zero { m } => *m,
            Self::PiecewisePeriodic { segments, .. } => segments[0].rows(),
        }
    }

    /// Segment active at `t` (right-continuous at boundaries).
    pub fn segment_at(&self, t: f64) -> usize {
        match self {
            Self::Zero { .. } => 0,
            Self::PiecewisePeriodic {
                segment_periods,
                segments,
            } => {
                let length = *segment_periods as f64 * segments[0].period();
                let pos = (t / length + 1e-9).floor();
                if pos <= 0.0 {
                    0
                } else {
                    (pos as usize).min(segments.len() - 1)
                }
            }
        }
    }

    /// `u(t)` using the phasors of `segment`.
    pub fn evaluate_in(&self, segment: usize, t: f64) -> RVector {
        match self {
            Self::Zero { m } => RVector::zeros(*m),
            Self::PiecewisePeriodic { segments, .. } => segments[segment].evaluate(t).column(0).into_owned(),
        }
    }

    pub fn evaluate(&self, t: f64) -> RVector {
        self.evaluate_in(self.segment_at(t), t)
    }
}

/// Random piecewise-periodic input: `segment_count` segments, each
/// `⌊horizon / (segment_count·T)⌋` periods long, each an independent random
/// phasor family of the given degree with `Σ‖U_k‖₂ = amplitude`.
pub fn piecewise_periodic_input(
    m: usize,
    degree: usize,
    period: f64,
    segment_count: usize,
    horizon: f64,
    seed: u64,
    amplitude: f64,
) -> Result<InputSignal> {
    if segment_count == 0 {
        return Err(Error::InvalidArgument("segment_count must be at least 1".into()));
    }
    if m == 0 {
        return Ok(InputSignal::Zero { m: 0 });
    }
    let segment_periods = (horizon / (segment_count as f64 * period) + 1e-9).floor();
    if !(segment_periods >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is shorter than {segment_count} segment(s) of one period {period}"
        )));
    }
    let segments = (0..segment_count as u64)
        .map(|i| PeriodicMatrix::random(m, 1, degree, rng::derive_seed(seed, i), amplitude, period))
        .collect::<Result<Vec<_>>>()?;
    Ok(InputSignal::PiecewisePeriodic {
        segment_periods: segment_periods as usize,
        segments,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta with `substeps` steps per sample.
    Rk4 { substeps: usize },
    /// Implicit trapezoidal rule with one step per sample. Its samples satisfy
    /// the discrete central-strip identity exactly under trapezoidal phasor
    /// quadrature.
    CrankNicolson,
}

impl Default for Integrator {
    fn default() -> Self {
        Self::Rk4 { substeps: 8 }
    }
}

fn same_period(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Integrates from `x0` at `grid.t0` and records states and inputs at every
/// grid time.
pub fn simulate(
    a: &PeriodicMatrix,
    b: Option<&PeriodicMatrix>,
    u: &InputSignal,
    x0: &RVector,
    grid: &SamplingGrid,
    integrator: Integrator,
) -> Result<SampledTrajectory> {
    let m = u.m();
    check_system(a, b, m, x0, grid)?;
    if let InputSignal::PiecewisePeriodic { segments, .. } = u {
        if segments.iter().any(|s| !same_period(s.period(), grid.period)) {
            return Err(Error::InvalidArgument("input and grid periods differ".into()));
        }
    }
    let n = a.rows();

    let mut inputs = RMatrix::zeros(m, grid.count);
    for (i, t) in grid.times().enumerate() {
        inputs.set_column(i, &u.evaluate(t));
    }
    let mut states = RMatrix::zeros(n, grid.count);
    states.set_column(0, x0);
    check_state(x0, 0)?;
    match integrator {
        Integrator::Rk4 { substeps } => rk4(a, b, u, grid, substeps.max(1), &mut states)?,
        Integrator::CrankNicolson => crank_nicolson(a, b, grid, &inputs, &mut states)?,
    }
    Ok(SampledTrajectory { grid: *grid, states, inputs })
}

fn check_system(a: &PeriodicMatrix, b: Option<&PeriodicMatrix>, m: usize, x0: &RVector, grid: &SamplingGrid) -> Result<()> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!("A is {}x{}", a.rows(), a.cols())));
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries, A is {n}x{n}", x0.len())));
    }
    match b {
        Some(b) if b.rows() != n || b.cols() != m => {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{}, expected {n}x{m}",
                b.rows(),
                b.cols()
            )))
        }
        None if m != 0 => {
            return Err(Error::DimensionMismatch(format!("input has {m} channels but B is absent")))
        }
        _ => {}
    }
    if !same_period(a.period(), grid.period) || b.is_some_and(|b| !same_period(b.period(), grid.period)) {
        return Err(Error::InvalidArgument("A, B and grid periods differ".into()));
    }
    Ok(())
}

/// Crank–Nicolson run driven by input samples on the grid (`m × count`),
/// for replaying recorded experiments whose continuous input is unknown.
pub fn simulate_sampled(
    a: &PeriodicMatrix,
    b: Option<&PeriodicMatrix>,
    inputs: &RMatrix,
    x0: &RVector,
    grid: &SamplingGrid,
) -> Result<SampledTrajectory> {
    check_system(a, b, inputs.nrows(), x0, grid)?;
    if inputs.ncols() != grid.count {
        return Err(Error::DimensionMismatch(format!(
            "{} input samples for a grid of {}",
            inputs.ncols(),
            grid.count
        )));
    }
    let mut states = RMatrix::zeros(a.rows(), grid.count);
    states.set_column(0, x0);
    check_state(x0, 0)?;
    crank_nicolson(a, b, grid, inputs, &mut states)?;
    Ok(SampledTrajectory {
        grid: *grid,
        states,
        inputs: inputs.clone(),
    })
}

fn check_state(x: &RVector, index: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= BLOW_UP_LIMIT) {
        Ok(())
    } else {
        Err(Error::BlowUp { index })
    }
}

/// `A` and `B` sampled at `t0 + r·step`, `r = 0..len`, one period's worth.
struct PeriodicCache {
    a: Vec<RMatrix>,
    b: Vec<Option<RMatrix>>,
}

impl PeriodicCache {
    fn new(a: &PeriodicMatrix, b: Option<&PeriodicMatrix>, t0: f64, step: f64, len: usize) -> Self {
        let times = (0..len).map(|r| t0 + r as f64 * step);
        Self {
            a: times.clone().map(|t| a.evaluate(t)).collect(),
            b: times.map(|t| b.map(|b| b.evaluate(t))).collect(),
        }
    }

    fn rhs(&self, r: usize, x: &RVector, u: &RVector) -> RVector {
        let r = r % self.a.len();
        let mut dx = &self.a[r] * x;
        if let Some(b) = &self.b[r] {
            dx.gemv(1.0, b, u, 1.0);
        }
        dx
    }
}

fn rk4(
    a: &PeriodicMatrix,
    b: Option<&PeriodicMatrix>,
    u: &InputSignal,
    grid: &SamplingGrid,
    substeps: usize,
    states: &mut RMatrix,
) -> Result<()> {
    let h = grid.dt() / substeps as f64;
    // stage times fall on a half-step lattice; one period of it is cached
    let per_period = 2 * grid.samples_per_period * substeps;
    let cache = PeriodicCache::new(a, b, grid.t0, h / 2.0, per_period);
    let mut x: RVector = states.column(0).into_owned();
    for i in 0..grid.count - 1 {
        for s in 0..substeps {
            let r = 2 * (i * substeps + s);
            let t = grid.time(i) + s as f64 * h;
            let seg = u.segment_at(t + h / 2.0);
            let u0 = u.evaluate_in(seg, t);
            let u1 = u.evaluate_in(seg, t + h / 2.0);
            let u2 = u.evaluate_in(seg, t + h);
            let k1 = cache.rhs(r, &x, &u0);
            let k2 = cache.rhs(r + 1, &(&x + &k1 * (h / 2.0)), &u1);
            let k3 = cache.rhs(r + 1, &(&x + &k2 * (h / 2.0)), &u1);
            let k4 = cache.rhs(r + 2, &(&x + &k3 * h), &u2);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        check_state(&x, i + 1)?;
        states.set_column(i + 1, &x);
    }
    Ok(())
}

fn crank_nicolson(
    a: &PeriodicMatrix,
    b: Option<&PeriodicMatrix>,
    grid: &SamplingGrid,
    inputs: &RMatrix,
    states: &mut RMatrix,
) -> Result<()> {
    let n = a.rows();
    let dt = grid.dt();
    let big_n = grid.samples_per_period;
    let cache = PeriodicCache::new(a, b, grid.t0, dt, big_n);
    let identity = RMatrix::identity(n, n);
    let solvers: Vec<LU<f64, _, _>> = cache.a.iter().map(|a| (&identity - a * (dt / 2.0)).lu()).collect();
    let mut x: RVector = states.column(0).into_owned();
    for i in 0..grid.count - 1 {
        let u0 = inputs.column(i).into_owned();
        let u1 = inputs.column(i + 1).into_owned();
        let mut rhs = cache.rhs(i, &x, &u0) * (dt / 2.0) + &x;
        if let Some(b1) = &cache.b[(i + 1) % big_n] {
            rhs.gemv(dt / 2.0, b1, &u1, 1.0);
        }
        x = solvers[(i + 1) % big_n]
            .solve(&rhs)
            .ok_or(Error::BlowUp { index: i + 1 })?;
        check_state(&x, i + 1)?;
        states.set_column(i + 1, &x);
    }
    Ok(())
}

/// Adds independent `N(0, σ²)` noise with `σ = ratio·|x_i(t)|/3` to every
/// state sample; inputs are left untouched.
pub fn add_state_noise(traj: &SampledTrajectory, ratio: f64, seed: u64) -> Result<SampledTrajectory> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise ratio must be non-negative, got {ratio}")));
    }
    let mut out = traj.clone();
    if ratio == 0.0 {
        return Ok(out);
    }
    let mut stream = rng::stream(seed);
    for v in out.states.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut stream);
        *v += z * ratio * v.abs() / 3.0;
    }
    Ok(out)
}
