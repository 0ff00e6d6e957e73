//! T-periodic matrix functions represented by their phasor families
//! `M(t) = Σ_k M_k e^{jωkt}`, `ω = 2π/T`.

use alloc::collections::BTreeMap;
use alloc::format;

use core::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{DMatrix, Normed};
#[allow(unused_imports)] // float math under no_std
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{spectral_norm, spectral_norm_real};
use crate::{rng, CMatrix, Error, RMatrix, Result, C64};

/// Relative tolerance for Hermitian pairing and realness checks.
pub const REALNESS_TOL: f64 = 1e-12;

/// Whether a phasor family is exactly the function, or a truncation of an
/// infinite Fourier series kept for simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    Finite,
    Truncated { k_sim: usize },
}

/// A real T-periodic `rows × cols` matrix function stored as a sparse,
/// Hermitian-paired phasor map (`M_{-k} = conj(M_k)`, `M_0` real).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicMatrix {
    period: f64,
    rows: usize,
    cols: usize,
    phasors: BTreeMap<i64, CMatrix>,
    kind: SeriesKind,
}

/// Output of [`PeriodicMatrix::from_raw_phasors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Symmetrized {
    pub matrix: PeriodicMatrix,
    /// `max_k ‖raw_k − conj(raw_{-k})‖_F` over the raw family.
    pub defect: f64,
}

fn check_period(period: f64) -> Result<()> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    Ok(())
}

fn check_shape(k: i64, m: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "phasor {k} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn max_modulus(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn is_zero(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

impl PeriodicMatrix {
    /// Validates and stores a phasor family. Zero phasors are dropped.
    pub fn new(period: f64, rows: usize, cols: usize, phasors: BTreeMap<i64, CMatrix>) -> Result<Self> {
        check_period(period)?;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!("empty shape {rows}x{cols}")));
        }
        let mut largest = 0.0f64;
        for (&k, m) in &phasors {
            check_shape(k, m, rows, cols)?;
            largest = largest.max(max_modulus(m));
        }
        let tol = REALNESS_TOL * largest;
        let zero = CMatrix::zeros(rows, cols);
        for (&k, m) in &phasors {
            let mirror = phasors.get(&-k).unwrap_or(&zero);
            let defect = m
                .iter()
                .zip(mirror.iter())
                .map(|(a, b)| (b - a.conj()).norm())
                .fold(0.0, f64::max);
            if defect > tol {
                return Err(Error::NotHermitian { k, defect });
            }
        }
        let phasors = phasors.into_iter().filter(|(_, m)| !is_zero(m)).collect();
        Ok(Self {
            period,
            rows,
            cols,
            phasors,
            kind: SeriesKind::Finite,
        })
    }

    pub fn zeros(period: f64, rows: usize, cols: usize) -> Result<Self> {
        Self::new(period, rows, cols, BTreeMap::new())
    }

    /// Constant function `M(t) = m`.
    pub fn constant(period: f64, m: &RMatrix) -> Result<Self> {
        let mut map = BTreeMap::new();
        map.insert(0, m.map(|v| C64::new(v, 0.0)));
        Self::new(period, m.nrows(), m.ncols(), map)
    }

    /// Builds a family from its non-negative harmonics; negative ones are
    /// filled in by conjugation. `M_0` must be real.
    pub fn from_nonnegative(
        period: f64,
        rows: usize,
        cols: usize,
        nonnegative: BTreeMap<i64, CMatrix>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, m) in nonnegative {
            if k < 0 {
                return Err(Error::InvalidArgument(format!("negative harmonic {k} in half spectrum")));
            }
            if k > 0 {
                map.insert(-k, m.map(|z| z.conj()));
            }
            map.insert(k, m);
        }
        Self::new(period, rows, cols, map)
    }

    /// Projects an arbitrary complex family (e.g. a least-squares estimate)
    /// onto the Hermitian-paired ones: `M_k ← (raw_k + conj(raw_{-k}))/2`,
    /// `M_0 ← Re(raw_0)`. Missing harmonics count as zero.
    pub fn from_raw_phasors(
        period: f64,
        rows: usize,
        cols: usize,
        raw: &BTreeMap<i64, CMatrix>,
    ) -> Result<Symmetrized> {
        check_period(period)?;
        for (&k, m) in raw {
            check_shape(k, m, rows, cols)?;
        }
        let zero = CMatrix::zeros(rows, cols);
        let mut defect = 0.0f64;
        let mut map = BTreeMap::new();
        for (&k, m) in raw {
            let mirror = raw.get(&-k).unwrap_or(&zero);
            let diff = m - mirror.map(|z| z.conj());
            defect = defect.max(diff.norm());
            let sym = if k == 0 {
                m.map(|z| C64::new(z.re, 0.0))
            } else {
                (m + mirror.map(|z| z.conj())).map(|z| z * 0.5)
            };
            map.insert(k, sym);
            if k != 0 && !raw.contains_key(&-k) {
                map.insert(-k, map[&k].map(|z| z.conj()));
            }
        }
        let matrix = Self::new(period, rows, cols, map)?;
        Ok(Symmetrized { matrix, defect })
    }

    /// Random family of the given degree: standard-normal real and imaginary
    /// parts, real `M_0`, Hermitian completion, then rescaled so that
    /// `Σ_k ‖M_k‖₂ = scale`.
    pub fn random(rows: usize, cols: usize, degree: usize, seed: u64, scale: f64, period: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        let mut rng = rng::stream(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut map = BTreeMap::new();
        map.insert(0i64, DMatrix::from_fn(rows, cols, |_, _| C64::new(draw(), 0.0)));
        for k in 1..=degree as i64 {
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                let re = draw();
                C64::new(re, draw())
            });
            map.insert(-k, m.map(|z| z.conj()));
            map.insert(k, m);
        }
        let total: f64 = map.values().map(spectral_norm).sum();
        let factor = C64::new(scale / total, 0.0);
        for m in map.values_mut() {
            *m *= factor;
        }
        Self::new(period, rows, cols, map)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: SeriesKind) -> Self {
        self.kind = kind;
        self
    }

    /// Largest `|k|` with a nonzero phasor.
    pub fn degree(&self) -> usize {
        self.phasors.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn phasor(&self, k: i64) -> Option<&CMatrix> {
        self.phasors.get(&k)
    }

    pub fn phasor_or_zero(&self, k: i64) -> CMatrix {
        self.phasors
            .get(&k)
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.rows, self.cols))
    }

    /// Stored (nonzero) phasors in increasing harmonic order.
    pub fn phasors(&self) -> impl Iterator<Item = (i64, &CMatrix)> {
        self.phasors.iter().map(|(&k, m)| (k, m))
    }

    /// `Σ_k ‖M_k‖₂` over all stored harmonics.
    pub fn norm_sum(&self) -> f64 {
        self.phasors.values().map(spectral_norm).sum()
    }

    /// Keeps harmonics `|k| ≤ p`.
    pub fn truncate(&self, p: usize) -> Self {
        let p = p as i64;
        Self {
            period: self.period,
            rows: self.rows,
            cols: self.cols,
            phasors: self
                .phasors
                .iter()
                .filter(|(&k, _)| k.abs() <= p)
                .map(|(&k, m)| (k, m.clone()))
                .collect(),
            kind: SeriesKind::Finite,
        }
    }

    /// `M(t)`, accumulated as `M_0 + Σ_{k>0} 2 Re(M_k e^{jωkt})`.
    pub fn evaluate(&self, t: f64) -> RMatrix {
        let mut out = RMatrix::zeros(self.rows, self.cols);
        self.accumulate(t, 0, &mut out);
        out
    }

    /// Adds the harmonics with `|k| > skip` of `M(t)` into `out`.
    fn accumulate(&self, t: f64, skip: usize, out: &mut RMatrix) {
        let omega = self.omega();
        for (&k, m) in self.phasors.range(0..) {
            if (k as usize) < skip || (skip > 0 && k as usize == skip) {
                continue;
            }
            if k == 0 {
                out.zip_apply(m, |o, z| *o += z.re);
            } else {
                let (s, c) = (omega * k as f64 * t).sin_cos();
                out.zip_apply(m, |o, z| *o += 2.0 * (z.re * c - z.im * s));
            }
        }
    }

    /// Full complex sum over every stored harmonic (both signs). Its
    /// imaginary part vanishes up to roundoff for Hermitian families.
    pub fn evaluate_complex(&self, t: f64) -> CMatrix {
        let omega = self.omega();
        let mut out = CMatrix::zeros(self.rows, self.cols);
        for (&k, m) in &self.phasors {
            let (s, c) = (omega * k as f64 * t).sin_cos();
            out += m * C64::new(c, s);
        }
        out
    }

    /// Empirical `sup_t ‖M(t) − M|_p(t)‖₂` over a uniform grid of at least
    /// 1024 points per period.
    pub fn truncation_tail_estimate(&self, p: usize) -> f64 {
        if p >= self.degree() {
            return 0.0;
        }
        let points = 1024.max(8 * self.degree());
        let dt = self.period / points as f64;
        let mut worst = 0.0f64;
        let mut tail = RMatrix::zeros(self.rows, self.cols);
        for i in 0..points {
            tail.fill(0.0);
            self.accumulate(i as f64 * dt, p, &mut tail);
            worst = worst.max(spectral_norm_real(&tail));
        }
        worst
    }
}

/// Reference system with infinitely many phasors, truncated at `|k| ≤ k_sim`
/// (`T = 1`, `ω = 2π`):
///
/// ```text
/// a11 = 1 + (4/π) Σ_{k≥0} sin(ω(2k+1)t)/(2k+1)
/// a12 = 2 + (16/π²) Σ_{k≥0} cos(ω(2k+1)t)/(2k+1)²
/// a21 = −1 + (2/π) Σ_{k≥1} (−1)^k/k · sin(ωkt + π/4)
/// a22 = 1 − 2 sin(ωt) − 2 sin(3ωt) + 2 cos(3ωt) + 2 cos(5ωt)
/// b11 = 1 + 2 cos(2ωt) + 4 sin(3ωt),   b21 = 0
/// ```
pub fn example_b_system(k_sim: usize) -> Result<(PeriodicMatrix, PeriodicMatrix)> {
    if k_sim < 5 {
        return Err(Error::InvalidArgument(format!(
            "k_sim = {k_sim} would drop exact terms of a22/b11 (need >= 5)"
        )));
    }
    let mut a: BTreeMap<i64, CMatrix> = BTreeMap::new();
    let mut b: BTreeMap<i64, CMatrix> = BTreeMap::new();
    // coefficient of e^{jωkt}; the conjugate goes to -k
    let put = |map: &mut BTreeMap<i64, CMatrix>, rows: usize, cols: usize, i: usize, j: usize, k: i64, z: C64| {
        let entry = map.entry(k).or_insert_with(|| CMatrix::zeros(rows, cols));
        entry[(i, j)] += z;
        if k != 0 {
            let entry = map.entry(-k).or_insert_with(|| CMatrix::zeros(rows, cols));
            entry[(i, j)] += z.conj();
        }
    };
    let sin_coef = |c: f64| C64::new(0.0, -c / 2.0);
    let cos_coef = |c: f64| C64::new(c / 2.0, 0.0);

    put(&mut a, 2, 2, 0, 0, 0, C64::new(1.0, 0.0));
    put(&mut a, 2, 2, 0, 1, 0, C64::new(2.0, 0.0));
    put(&mut a, 2, 2, 1, 0, 0, C64::new(-1.0, 0.0));
    put(&mut a, 2, 2, 1, 1, 0, C64::new(1.0, 0.0));
    let mut h = 1usize;
    while h <= k_sim {
        let hf = h as f64;
        put(&mut a, 2, 2, 0, 0, h as i64, sin_coef(4.0 / (PI * hf)));
        put(&mut a, 2, 2, 0, 1, h as i64, cos_coef(16.0 / (PI * PI * hf * hf)));
        h += 2;
    }
    let shift = C64::new(FRAC_PI_4.cos(), FRAC_PI_4.sin());
    for k in 1..=k_sim {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let c = 2.0 * sign / (PI * k as f64);
        put(&mut a, 2, 2, 1, 0, k as i64, sin_coef(c) * shift);
    }
    put(&mut a, 2, 2, 1, 1, 0, C64::new(0.0, 0.0));
    put(&mut a, 2, 2, 1, 1, 1, sin_coef(-2.0));
    put(&mut a, 2, 2, 1, 1, 3, sin_coef(-2.0));
    put(&mut a, 2, 2, 1, 1, 3, cos_coef(2.0));
    put(&mut a, 2, 2, 1, 1, 5, cos_coef(2.0));

    put(&mut b, 2, 1, 0, 0, 0, C64::new(1.0, 0.0));
    put(&mut b, 2, 1, 0, 0, 2, cos_coef(2.0));
    put(&mut b, 2, 1, 0, 0, 3, sin_coef(4.0));

    let a = PeriodicMatrix::new(1.0, 2, 2, a)?.with_kind(SeriesKind::Truncated { k_sim });
    let b = PeriodicMatrix::new(1.0, 2, 1, b)?;
    Ok((a, b))
}
