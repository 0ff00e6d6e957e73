//! Central-strip least squares.
//!
//! With `Φ = [X₀; U₀]` the regression reads `X₁ = Θ Φ`, where
//! `Θ = [A_p … A_{−p}, B_p … B_{−p}]` and every column is normalized by its
//! window norm. Row block `c` of `X₀` (resp. `U₀`) holds `X_{c−p}` (resp.
//! `U_{c−p}`) and multiplies the unknown `A_{p−c}` (resp. `B_{p−c}`), which
//! realizes the pairing `Ẋ₀ = Σ A_k X_{−k} + Σ B_k U_{−k}`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::harmonic::PhasorFrame;
use crate::linalg::{greedy_independent_columns, rank_tolerance, ThinSvd};
use crate::periodic::PeriodicMatrix;
use crate::{CMatrix, Error, RMatrix, Result, C64};

/// Condition numbers above this set [`IdentifiedModel::ill_conditioned`].
pub const ILL_CONDITIONED: f64 = 1e12;

/// Harmonic of the phasors stored in row block `c`.
pub fn data_harmonic(p: usize, c: usize) -> i64 {
    c as i64 - p as i64
}

/// Harmonic of the unknown stored in column block `c` of `Θ`.
pub fn unknown_harmonic(p: usize, c: usize) -> i64 {
    p as i64 - c as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnSource {
    pub trajectory: usize,
    pub index: usize,
}

/// Normalized regression matrices, possibly pooled over several trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionData {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub period: f64,
    /// `n × L`, normalized `Ẋ₀` columns.
    pub x1: RMatrix,
    /// `n(2p+1) × L`.
    pub x0: CMatrix,
    /// `m(2p+1) × L`.
    pub u0: CMatrix,
    pub source: Vec<ColumnSource>,
}

impl RegressionData {
    /// Stacks every `stride`-th frame of each trajectory.
    pub fn assemble(frame_sets: &[&[PhasorFrame]], stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let first = frame_sets
            .iter()
            .find_map(|s| s.first())
            .ok_or_else(|| Error::InvalidArgument("no frames to assemble".into()))?;
        let (p, n, m, period) = (first.p, first.n(), first.m(), first.period);
        let picked: Vec<(usize, &PhasorFrame)> = frame_sets
            .iter()
            .enumerate()
            .flat_map(|(tr, s)| s.iter().step_by(stride).map(move |f| (tr, f)))
            .collect();
        for (_, f) in &picked {
            if f.p != p || f.n() != n || f.m() != m {
                return Err(Error::DimensionMismatch(format!(
                    "frame shapes differ: (p, n, m) = ({}, {}, {}) vs ({p}, {n}, {m})",
                    f.p,
                    f.n(),
                    f.m()
                )));
            }
            if (f.period - period).abs() > 1e-12 * period {
                return Err(Error::InvalidArgument(format!("periods differ: {} vs {period}", f.period)));
            }
        }
        let l = picked.len();
        let h = 2 * p + 1;
        let mut x1 = RMatrix::zeros(n, l);
        let mut x0 = CMatrix::zeros(n * h, l);
        let mut u0 = CMatrix::zeros(m * h, l);
        let mut source = Vec::with_capacity(l);
        for (j, (tr, f)) in picked.into_iter().enumerate() {
            if !(f.window_norm > 0.0) {
                return Err(Error::DegenerateWindow { index: f.index });
            }
            debug_assert_eq!(data_harmonic(p, 0), -(p as i64));
            x1.set_column(j, &f.normalized_xdot0());
            x0.set_column(j, &f.normalized_x_phasors());
            u0.set_column(j, &f.normalized_u_phasors());
            source.push(ColumnSource {
                trajectory: tr,
                index: f.index,
            });
        }
        Ok(Self {
            p,
            n,
            m,
            period,
            x1,
            x0,
            u0,
            source,
        })
    }

    /// Builds data directly from matrices (e.g. synthetic phasor-space data).
    pub fn from_parts(p: usize, period: f64, x1: RMatrix, x0: CMatrix, u0: CMatrix) -> Result<Self> {
        let h = 2 * p + 1;
        let n = x1.nrows();
        let l = x1.ncols();
        if x0.nrows() != n * h || u0.nrows() % h != 0 || x0.ncols() != l || u0.ncols() != l {
            return Err(Error::DimensionMismatch(format!(
                "X1 {}x{}, X0 {}x{}, U0 {}x{} for p = {p}",
                x1.nrows(),
                x1.ncols(),
                x0.nrows(),
                x0.ncols(),
                u0.nrows(),
                u0.ncols()
            )));
        }
        let m = u0.nrows() / h;
        let source = (0..l).map(|index| ColumnSource { trajectory: 0, index }).collect();
        Ok(Self {
            p,
            n,
            m,
            period,
            x1,
            x0,
            u0,
            source,
        })
    }

    pub fn columns(&self) -> usize {
        self.x1.ncols()
    }

    /// `(n+m)(2p+1)`, the number of unknowns per state equation.
    pub fn required_rank(&self) -> usize {
        (self.n + self.m) * (2 * self.p + 1)
    }

    /// `[X₀; U₀]`.
    pub fn stacked(&self) -> CMatrix {
        let (a, b) = (self.x0.nrows(), self.u0.nrows());
        let mut phi = CMatrix::zeros(a + b, self.columns());
        phi.rows_mut(0, a).copy_from(&self.x0);
        phi.rows_mut(a, b).copy_from(&self.u0);
        phi
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            x1: self.x1.select_columns(columns),
            x0: self.x0.select_columns(columns),
            u0: self.u0.select_columns(columns),
            source: columns.iter().map(|&j| self.source[j]).collect(),
            ..self.clone()
        }
    }

    /// Keeps the first `l` columns.
    pub fn first(&self, l: usize) -> Self {
        let l = l.min(self.columns());
        self.select(&(0..l).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Informativity {
    pub rank: usize,
    pub required: usize,
    pub informative: bool,
    /// `σ_max / σ_min` over the `min(rows, L)` singular values.
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
}

fn diagnose(svd: &ThinSvd, rows: usize, cols: usize, required: usize) -> Informativity {
    let rank = svd.rank(rows, cols);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smallest = sv.last().copied().unwrap_or(0.0);
    let condition_number = if smallest > 0.0 {
        svd.sigma_max() / smallest
    } else {
        f64::INFINITY
    };
    Informativity {
        rank,
        required,
        informative: rank == required,
        condition_number,
        singular_values: sv,
    }
}

/// Rank test of `[X₀; U₀]` against `(n+m)(2p+1)`.
pub fn informativity(data: &RegressionData) -> Informativity {
    let phi = data.stacked();
    let svd = ThinSvd::new(&phi);
    diagnose(&svd, phi.nrows(), phi.ncols(), data.required_rank())
}

/// Estimated phasor families with solve diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedModel {
    pub p: usize,
    pub a: PeriodicMatrix,
    pub b: Option<PeriodicMatrix>,
    /// Raw least-squares `Θ̃` before symmetrization.
    pub theta: CMatrix,
    /// `‖X₁ − Θ̃Φ‖_F²`.
    pub residual: f64,
    /// `max_j ‖X₁[:, j] − Θ̃Φ[:, j]‖₂`.
    pub max_column_residual: f64,
    pub numerical_rank: usize,
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
    pub ill_conditioned: bool,
    pub hermitian_defect: f64,
    pub error_bound_m: Option<f64>,
}

/// Column residual norms of `X₁ − ΘΦ`.
pub fn column_residuals(data: &RegressionData, theta: &CMatrix) -> Vec<f64> {
    let r = data.x1.map(|v| C64::new(v, 0.0)) - theta * data.stacked();
    r.column_iter().map(|c| c.norm()).collect()
}

/// `Θ̃ = X₁ Φ⁺` through a rank-revealing factorization, then Hermitian
/// symmetrization of the phasor blocks.
pub fn solve(data: &RegressionData) -> Result<IdentifiedModel> {
    let phi = data.stacked();
    let svd = ThinSvd::new(&phi);
    let diag = diagnose(&svd, phi.nrows(), phi.ncols(), data.required_rank());
    if !diag.informative {
        return Err(Error::NotInformative {
            rank: diag.rank,
            required: diag.required,
            columns: data.columns(),
        });
    }
    let theta = svd.right_solve(&data.x1, diag.rank);
    let r = data.x1.map(|v| C64::new(v, 0.0)) - &theta * &phi;
    let residual = r.norm_squared();
    let max_column_residual = r.column_iter().map(|c| c.norm()).fold(0.0, f64::max);

    let (a, b, hermitian_defect) = split_theta(&theta, data.n, data.m, data.p, data.period)?;
    Ok(IdentifiedModel {
        p: data.p,
        a,
        b,
        theta,
        residual,
        max_column_residual,
        numerical_rank: diag.rank,
        singular_values: diag.singular_values,
        condition_number: diag.condition_number,
        ill_conditioned: diag.condition_number > ILL_CONDITIONED,
        hermitian_defect,
        error_bound_m: None,
    })
}

/// Splits `[A_p … A_{−p}, B_p … B_{−p}]` into symmetrized phasor families.
pub fn split_theta(
    theta: &CMatrix,
    n: usize,
    m: usize,
    p: usize,
    period: f64,
) -> Result<(PeriodicMatrix, Option<PeriodicMatrix>, f64)> {
    let h = 2 * p + 1;
    if theta.shape() != (n, (n + m) * h) {
        return Err(Error::DimensionMismatch(format!(
            "theta is {}x{}, expected {n}x{}",
            theta.nrows(),
            theta.ncols(),
            (n + m) * h
        )));
    }
    let blocks = |offset: usize, width: usize| -> BTreeMap<i64, CMatrix> {
        (0..h)
            .map(|c| {
                debug_assert_eq!(unknown_harmonic(p, c), -data_harmonic(p, c));
                (unknown_harmonic(p, c), theta.columns(offset + c * width, width).into_owned())
            })
            .collect()
    };
    let a = PeriodicMatrix::from_raw_phasors(period, n, n, &blocks(0, n))?;
    let mut defect = a.defect;
    let b = if m > 0 {
        let b = PeriodicMatrix::from_raw_phasors(period, n, m, &blocks(n * h, m))?;
        defect = defect.max(b.defect);
        Some(b.matrix)
    } else {
        None
    };
    Ok((a.matrix, b, defect))
}

/// `(n+m)(2p+1)·‖V⁻¹‖₂` for the square column submatrix `V` of `[X₀; U₀]`.
pub fn error_bound_constant(data: &RegressionData, subset: &[usize]) -> Result<f64> {
    let required = data.required_rank();
    if subset.len() != required {
        return Err(Error::InvalidArgument(format!(
            "subset has {} columns, need exactly {required}",
            subset.len()
        )));
    }
    if let Some(&bad) = subset.iter().find(|&&j| j >= data.columns()) {
        return Err(Error::InvalidArgument(format!("column {bad} out of range")));
    }
    let v = data.stacked().select_columns(subset);
    let sv = v.singular_values();
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if !(smallest > rank_tolerance(required, required, largest)) {
        return Err(Error::SingularSubset);
    }
    Ok(required as f64 / smallest)
}

/// Greedy pivoted choice of `(n+m)(2p+1)` well-conditioned columns.
pub fn greedy_subset(data: &RegressionData) -> Result<Vec<usize>> {
    let picked = greedy_independent_columns(&data.stacked(), data.required_rank());
    if picked.len() < data.required_rank() {
        return Err(Error::SingularSubset);
    }
    Ok(picked)
}

impl IdentifiedModel {
    /// Fills [`Self::error_bound_m`] from a greedy column subset of `data`.
    pub fn with_error_bound(mut self, data: &RegressionData) -> Result<Self> {
        let subset = greedy_subset(data)?;
        self.error_bound_m = Some(error_bound_constant(data, &subset)?);
        Ok(self)
    }
}

/// One row of a truncation-order sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub p: usize,
    /// `max(‖A_p‖₂, ‖B_p‖₂)` of the estimate.
    pub top_norm: f64,
    /// Largest phasor norm of the estimate.
    pub max_norm: f64,
    pub decayed: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub entries: Vec<SweepEntry>,
    /// First order whose top phasors fell below the threshold.
    pub chosen: Option<usize>,
}

/// Default relative threshold on top-order phasor norms.
pub const SWEEP_THRESHOLD: f64 = 1e-3;

/// Solves for each `p` in `orders` (ascending) until the top-order phasors
/// drop below `threshold · max phasor norm`. `data_for` builds the regression
/// data at a given order.
pub fn sweep_p(
    orders: impl IntoIterator<Item = usize>,
    threshold: f64,
    mut data_for: impl FnMut(usize) -> Result<RegressionData>,
) -> Result<Sweep> {
    let mut entries = Vec::new();
    let mut chosen = None;
    for p in orders {
        let model = solve(&data_for(p)?)?;
        let norm = |m: &PeriodicMatrix, k: i64| m.phasor(k).map(crate::linalg::spectral_norm).unwrap_or(0.0);
        let families: Vec<&PeriodicMatrix> = core::iter::once(&model.a).chain(model.b.as_ref()).collect();
        let top_norm = families.iter().map(|f| norm(f, p as i64)).fold(0.0, f64::max);
        let max_norm = families
            .iter()
            .flat_map(|f| f.phasors().map(|(_, m)| crate::linalg::spectral_norm(m)))
            .fold(0.0, f64::max);
        let decayed = p > 0 && top_norm <= threshold * max_norm;
        entries.push(SweepEntry {
            p,
            top_norm,
            max_norm,
            decayed,
            residual: model.residual,
        });
        if decayed {
            chosen = Some(p);
            break;
        }
    }
    Ok(Sweep { entries, chosen })
}

/// Stacks `[M_p … M_{−p}]` horizontally.
pub fn stack_blocks(matrix: &PeriodicMatrix, p: usize) -> CMatrix {
    let (r, c) = (matrix.rows(), matrix.cols());
    let mut out = DMatrix::zeros(r, c * (2 * p + 1));
    for blk in 0..2 * p + 1 {
        if let Some(m) = matrix.phasor(unknown_harmonic(p, blk)) {
            out.columns_mut(blk * c, c).copy_from(m);
        }
    }
    out
}
