//! Dense helpers on top of nalgebra: spectral norms, a rank-revealing
//! factorization for wide regression matrices, and greedy column selection.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SVD};
#[allow(unused_imports)] // float math under no_std
use num_traits::Float;

use crate::{CMatrix, RMatrix, C64};

/// Largest singular value of a complex matrix (0 for empty matrices).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0, |acc, &s| acc.max(s))
}

/// Largest singular value of a real matrix (0 for empty matrices).
pub fn spectral_norm_real(m: &RMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0, |acc, &s| acc.max(s))
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Thin factorization `Φ = U diag(σ) Wᴴ` of an `r × L` matrix, with `U`
/// of size `r × q`, `W` of size `L × q`, `q = min(r, L)`, and `σ` sorted in
/// decreasing order.
///
/// Wide inputs (`L ≥ r`) go through a QR of `Φᴴ` first so the SVD only
/// ever runs on an `r × r` triangle.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: CMatrix,
    pub singular_values: DVector<f64>,
    pub w: CMatrix,
}

impl ThinSvd {
    pub fn new(phi: &CMatrix) -> Self {
        let (r, l) = phi.shape();
        let (u, s, w) = if l >= r && r > 0 {
            let qr = phi.adjoint().qr();
            let q = qr.q();
            let tri = qr.r();
            let svd = SVD::new(tri, true, true);
            let u_r = svd.u.expect("requested U");
            let v_r_t = svd.v_t.expect("requested V");
            // Φᴴ = Q U_R Σ V_Rᴴ  ⇒  Φ = V_R Σ (Q U_R)ᴴ
            (v_r_t.adjoint(), svd.singular_values, q * u_r)
        } else {
            let svd = SVD::new(phi.clone(), true, true);
            let u = svd.u.expect("requested U");
            let v_t = svd.v_t.expect("requested V");
            (u, svd.singular_values, v_t.adjoint())
        };
        sorted(u, s, w)
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    /// Numerical rank with threshold `max(r, L) · ε · σ_max`.
    pub fn rank(&self, rows: usize, cols: usize) -> usize {
        let tol = rank_tolerance(rows, cols, self.sigma_max());
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    /// `Y · Φ⁺` for a real left factor `Y` (`n × L`), keeping the first `rank`
    /// singular triplets.
    pub fn right_solve(&self, y: &RMatrix, rank: usize) -> CMatrix {
        let yc = to_complex(y);
        let mut yw = &yc * self.w.columns(0, rank);
        for (j, mut col) in yw.column_iter_mut().enumerate() {
            col /= C64::new(self.singular_values[j], 0.0);
        }
        yw * self.u.columns(0, rank).adjoint()
    }
}

pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

fn sorted(u: CMatrix, s: DVector<f64>, w: CMatrix) -> ThinSvd {
    let q = s.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(core::cmp::Ordering::Equal));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return ThinSvd {
            u,
            singular_values: s,
            w,
        };
    }
    let u2 = DMatrix::from_fn(u.nrows(), q, |i, j| u[(i, order[j])]);
    let w2 = DMatrix::from_fn(w.nrows(), q, |i, j| w[(i, order[j])]);
    let s2 = DVector::from_fn(q, |j, _| s[order[j]]);
    ThinSvd {
        u: u2,
        singular_values: s2,
        w: w2,
    }
}

/// Greedy column selection by pivoted Gram–Schmidt: repeatedly picks the
/// column with the largest component orthogonal to the ones already chosen.
/// Returns at most `count` indices (fewer if the matrix runs out of rank).
pub fn greedy_independent_columns(m: &CMatrix, count: usize) -> Vec<usize> {
    let (rows, cols) = m.shape();
    let mut residual = m.clone();
    let mut norms: Vec<f64> = (0..cols).map(|j| residual.column(j).norm_squared()).collect();
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let tol = (rows.max(cols) as f64) * f64::EPSILON * scale;
    let mut chosen = Vec::with_capacity(count);
    let mut used = alloc::vec![false; cols];
    for _ in 0..count.min(cols) {
        let mut best = None;
        let mut best_norm = tol;
        for j in 0..cols {
            if !used[j] && norms[j] > best_norm {
                best_norm = norms[j];
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        used[j] = true;
        chosen.push(j);
        let q = residual.column(j) / C64::new(best_norm.sqrt(), 0.0);
        for k in 0..cols {
            if used[k] {
                continue;
            }
            let proj = q.dotc(&residual.column(k));
            let update = &q * proj;
            let mut col = residual.column_mut(k);
            col -= update;
            norms[k] = col.norm_squared();
        }
    }
    chosen
}
