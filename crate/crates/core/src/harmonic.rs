//! Sliding Fourier phasors over the trailing window `[t − T, t]`:
//!
//! ```text
//! X_k(t) = (1/T) ∫_{t−T}^{t} x(τ) e^{−jωkτ} dτ,     Ẋ₀(t) = (x(t) − x(t−T)) / T
//! M(t)   = ( (1/T) ∫_{t−T}^{t} ‖x‖² + ‖u‖² dτ )^{1/2}
//! ```
//!
//! Frames are produced at every grid time with a full window behind it.
//! Phasor stacks are block-major in increasing harmonic order: entry
//! `(k + p)·n + i` holds `X_k` of component `i`.

use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::{DVector, Normed};
#[allow(unused_imports)] // float math under no_std
use num_traits::Float;

use crate::simulate::SampledTrajectory;
use crate::{CMatrix, Error, RMatrix, RVector, Result, C64};

/// Windows with `M(t)` below this are rejected as all-zero.
pub const DEGENERATE_NORM: f64 = 1e-300;

/// Discretization of the window integrals on the `N + 1` grid points of a
/// window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    /// Half weights on both window ends.
    #[default]
    Trapezoidal,
    /// Unit weights on the `N` points `t − T + i·dt`, `i = 1..N` (a windowed
    /// DFT with absolute phase).
    RightEndpoint,
}

/// Harmonic data at one grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorFrame {
    /// Grid index of the window end.
    pub index: usize,
    pub t: f64,
    pub p: usize,
    pub period: f64,
    /// `n(2p+1)` stack of `X_k(t)`, unnormalized.
    pub x_phasors: DVector<C64>,
    /// `m(2p+1)` stack of `U_k(t)`, unnormalized.
    pub u_phasors: DVector<C64>,
    pub xdot0: RVector,
    pub window_norm: f64,
}

impl PhasorFrame {
    pub fn n(&self) -> usize {
        self.xdot0.len()
    }

    pub fn m(&self) -> usize {
        self.u_phasors.len() / (2 * self.p + 1)
    }

    /// `X_k(t)` as an `n`-vector, `|k| ≤ p`.
    pub fn x_harmonic(&self, k: i64) -> DVector<C64> {
        block(&self.x_phasors, self.n(), self.p, k)
    }

    pub fn u_harmonic(&self, k: i64) -> DVector<C64> {
        block(&self.u_phasors, self.m(), self.p, k)
    }

    pub fn normalized_x_phasors(&self) -> DVector<C64> {
        &self.x_phasors / C64::new(self.window_norm, 0.0)
    }

    pub fn normalized_u_phasors(&self) -> DVector<C64> {
        &self.u_phasors / C64::new(self.window_norm, 0.0)
    }

    pub fn normalized_xdot0(&self) -> RVector {
        &self.xdot0 / self.window_norm
    }
}

fn block(stack: &DVector<C64>, width: usize, p: usize, k: i64) -> DVector<C64> {
    assert!(k.unsigned_abs() as usize <= p, "harmonic {k} outside |k| <= {p}");
    let start = (k + p as i64) as usize * width;
    stack.rows(start, width).into_owned()
}

/// Smallest accepted samples-per-period for truncation order `p`.
pub fn required_samples_per_period(p: usize) -> usize {
    (4 * p).max(2 * p + 1).max(2)
}

fn check_window(traj: &SampledTrajectory, index: usize) -> Result<()> {
    let big_n = traj.grid.samples_per_period;
    if index < big_n || index >= traj.grid.count {
        return Err(Error::InvalidArgument(format!(
            "sample {index} has no full window (need {big_n} <= index < {})",
            traj.grid.count
        )));
    }
    Ok(())
}

/// `Ẋ₀` at the window ending on sample `index`.
pub fn dot_x0(traj: &SampledTrajectory, index: usize) -> Result<RVector> {
    check_window(traj, index)?;
    Ok(window_difference(&traj.states, index, traj.grid.samples_per_period, traj.grid.period))
}

fn window_difference(data: &RMatrix, index: usize, big_n: usize, period: f64) -> RVector {
    (data.column(index) - data.column(index - big_n)) / period
}

fn weight(quadrature: Quadrature, offset: usize, big_n: usize) -> f64 {
    match quadrature {
        Quadrature::Trapezoidal if offset == 0 || offset == big_n => 0.5,
        Quadrature::RightEndpoint if offset == 0 => 0.0,
        _ => 1.0,
    }
}

/// `M(t)` at the window ending on sample `index`.
pub fn window_norm(traj: &SampledTrajectory, index: usize, quadrature: Quadrature) -> Result<f64> {
    check_window(traj, index)?;
    let big_n = traj.grid.samples_per_period;
    let mut acc = 0.0;
    for offset in 0..=big_n {
        let w = weight(quadrature, offset, big_n);
        let j = index - big_n + offset;
        acc += w * (traj.states.column(j).norm_squared() + traj.inputs.column(j).norm_squared());
    }
    let norm = (acc / big_n as f64).sqrt();
    if norm < DEGENERATE_NORM {
        return Err(Error::DegenerateWindow { index });
    }
    Ok(norm)
}

/// `e^{−j2πkr/N}` for `k = 0..=p`, `r = 0..N`.
struct Twiddles {
    big_n: usize,
    table: Vec<C64>,
}

impl Twiddles {
    fn new(p: usize, big_n: usize) -> Self {
        let mut table = Vec::with_capacity((p + 1) * big_n);
        for k in 0..=p {
            for r in 0..big_n {
                // reduce k·r mod N first so the angle stays accurate
                let (s, c) = (-2.0 * PI * ((k * r) % big_n) as f64 / big_n as f64).sin_cos();
                table.push(C64::new(c, s));
            }
        }
        Self { big_n, table }
    }

    fn get(&self, k: usize, r: usize) -> C64 {
        self.table[k * self.big_n + r % self.big_n]
    }
}

/// Phasors `k = 0..=p` of every row of `data` over the window ending at
/// `index`; returns a `(p+1) × rows` table (harmonic-major).
fn window_phasors(
    data: &RMatrix,
    index: usize,
    p: usize,
    big_n: usize,
    phase0: &[C64],
    twiddles: &Twiddles,
    quadrature: Quadrature,
) -> Vec<C64> {
    let rows = data.nrows();
    let mut out = alloc::vec![C64::new(0.0, 0.0); (p + 1) * rows];
    let start = index - big_n;
    for offset in 0..=big_n {
        let w = weight(quadrature, offset, big_n);
        if w == 0.0 {
            continue;
        }
        let j = start + offset;
        let col = data.column(j);
        for k in 0..=p {
            let tw = twiddles.get(k, j) * w;
            let slot = &mut out[k * rows..(k + 1) * rows];
            for (o, &v) in slot.iter_mut().zip(col.iter()) {
                *o += tw * v;
            }
        }
    }
    let scale = 1.0 / big_n as f64;
    for k in 0..=p {
        for o in &mut out[k * rows..(k + 1) * rows] {
            *o *= phase0[k] * scale;
        }
    }
    out
}

/// Expands a `k = 0..=p` table into the full Hermitian `k = −p..=p` stack.
fn full_stack(half: &[C64], rows: usize, p: usize) -> DVector<C64> {
    let mut stack = DVector::from_element(rows * (2 * p + 1), C64::new(0.0, 0.0));
    for k in 0..=p {
        for i in 0..rows {
            let z = half[k * rows + i];
            stack[(p + k) * rows + i] = if k == 0 { C64::new(z.re, 0.0) } else { z };
            stack[(p - k) * rows + i] = if k == 0 { C64::new(z.re, 0.0) } else { z.conj() };
        }
    }
    stack
}

/// One frame per grid time `t ∈ [t0 + T, t_end]`.
pub fn sliding_phasors(traj: &SampledTrajectory, p: usize, quadrature: Quadrature) -> Result<Vec<PhasorFrame>> {
    let grid = &traj.grid;
    let big_n = grid.samples_per_period;
    let required = required_samples_per_period(p);
    if big_n < required {
        return Err(Error::BelowNyquist {
            samples_per_period: big_n,
            p,
            required,
        });
    }
    if grid.count < big_n + 1 {
        return Err(Error::TooShort {
            available: grid.count,
            required: big_n + 1,
            reason: "one full window",
        });
    }
    frames_unchecked(traj, p, quadrature)
}

/// Frame computation without the sampling-rate precondition.
fn frames_unchecked(traj: &SampledTrajectory, p: usize, quadrature: Quadrature) -> Result<Vec<PhasorFrame>> {
    let grid = &traj.grid;
    let big_n = grid.samples_per_period;
    let twiddles = Twiddles::new(p, big_n);
    let omega = 2.0 * PI / grid.period;
    // e^{−jωk t0}; sample j sits at t0 + j·dt
    let phase0: Vec<C64> = (0..=p)
        .map(|k| {
            let (s, c) = (-omega * k as f64 * grid.t0).sin_cos();
            C64::new(c, s)
        })
        .collect();
    let (n, m) = (traj.n(), traj.m());
    let mut frames = Vec::with_capacity(grid.count - big_n);
    for index in big_n..grid.count {
        let xdot0 = window_difference(&traj.states, index, big_n, grid.period);
        let window_norm = window_norm(traj, index, quadrature)?;
        let xh = window_phasors(&traj.states, index, p, big_n, &phase0, &twiddles, quadrature);
        let uh = window_phasors(&traj.inputs, index, p, big_n, &phase0, &twiddles, quadrature);
        frames.push(PhasorFrame {
            index,
            t: grid.time(index),
            p,
            period: grid.period,
            x_phasors: full_stack(&xh, n, p),
            u_phasors: full_stack(&uh, m, p),
            xdot0,
            window_norm,
        });
    }
    Ok(frames)
}

/// `x(t) ≈ Σ_{|k|≤p} X_k(t) e^{jωkt} + (T/2) Ẋ₀(t)` for every frame;
/// returns an `n × frames` matrix.
pub fn reconstruct(frames: &[PhasorFrame]) -> RMatrix {
    let Some(first) = frames.first() else {
        return RMatrix::zeros(0, 0);
    };
    let n = first.n();
    let p = first.p as i64;
    let mut out = RMatrix::zeros(n, frames.len());
    for (c, f) in frames.iter().enumerate() {
        let omega = 2.0 * PI / f.period;
        let mut acc = DVector::from_element(n, C64::new(0.0, 0.0));
        for k in -p..=p {
            let (s, co) = (omega * k as f64 * f.t).sin_cos();
            acc += f.x_harmonic(k) * C64::new(co, s);
        }
        let scale = acc.iter().map(|z| z.norm()).fold(1.0, f64::max);
        debug_assert!(acc.iter().all(|z| z.im.abs() <= 1e-10 * scale));
        for i in 0..n {
            out[(i, c)] = acc[i].re + 0.5 * f.period * f.xdot0[i];
        }
    }
    out
}

/// Debug view of one frame's phasors as a `rows × (2p+1)` matrix.
pub fn as_matrix(stack: &DVector<C64>, rows: usize, p: usize) -> CMatrix {
    CMatrix::from_fn(rows, 2 * p + 1, |i, c| stack[c * rows + i])
}
