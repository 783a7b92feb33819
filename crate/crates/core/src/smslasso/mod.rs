//! Sparse multi-site Lasso.
//!
//! Estimates a `k × p` coefficient matrix `B` (row `i` = site `i`) by
//! minimizing `Σᵢ‖yᵢ − Xᵢβᵢ‖² + λΛ(B)` with the columnwise penalty
//! `Λ(B) = α Σⱼ‖βʲ‖₁ + (1−α)√k Σⱼ‖βʲ‖₂`. `α = 1` gives independent Lassos,
//! `α = 0` the multi-task group Lasso.

mod path;
mod solver;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use path::{default_lambda_grid, solution_path, CvCurve, CvOptions, SolutionPath};
pub use solver::{fit, fit_from, lambda_max, objective, FitOptions, LassoFit};

/// Site-by-feature coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(pub DMatrix<f64>);

impl CoefficientMatrix {
    pub fn zeros(k: usize, p: usize) -> Self {
        Self(DMatrix::zeros(k, p))
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Coefficients of one site.
    pub fn site(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn support_stats(&self, tol: f64) -> SupportStats {
        support_stats(self, tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub alpha: f64,
}

impl PenaltySpec {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { lambda, alpha })
    }
}

/// `Λ(B)` without the `λ` factor.
pub fn penalty(b: &DMatrix<f64>, alpha: f64) -> f64 {
    let k = b.nrows() as f64;
    b.column_iter()
        .map(|c| alpha * c.lp_norm(1) + (1.0 - alpha) * k.sqrt() * c.norm())
        .sum()
}

/// Proximal map of `t1‖·‖₁ + t2‖·‖₂`: soft-threshold, then shrink the group.
pub fn composite_prox(v: &[f64], t1: f64, t2: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    composite_prox_in_place(&mut out, t1, t2);
    out
}

pub(crate) fn composite_prox_in_place(v: &mut [f64], t1: f64, t2: f64) {
    let mut sq = 0.0;
    for x in v.iter_mut() {
        let a = x.abs() - t1;
        *x = if a > 0.0 { a.copysign(*x) } else { 0.0 };
        sq += *x * *x;
    }
    let norm = sq.sqrt();
    if norm <= t2 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else if t2 > 0.0 {
        let scale = 1.0 - t2 / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

/// `α̃ = α/((1−α)√k + α)`.
pub fn corrected_alpha(alpha: f64, k: usize) -> f64 {
    let d = (1.0 - alpha) * (k as f64).sqrt() + alpha;
    if d == 0.0 {
        0.0
    } else {
        alpha / d
    }
}

/// `λ̃ = ((1−α)√k + α)λ`.
pub fn corrected_lambda(lambda: f64, alpha: f64, k: usize) -> f64 {
    ((1.0 - alpha) * (k as f64).sqrt() + alpha) * lambda
}

/// Inverse of the `(α, λ) → (α̃, λ̃)` map.
pub fn uncorrected(alpha_tilde: f64, lambda_tilde: f64, k: usize) -> (f64, f64) {
    let sk = (k as f64).sqrt();
    let alpha = alpha_tilde * sk / (1.0 + alpha_tilde * (sk - 1.0));
    let lambda = lambda_tilde / ((1.0 - alpha) * sk + alpha);
    (alpha, lambda)
}

/// Support bookkeeping of a coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportStats {
    pub site_active: Vec<BTreeSet<usize>>,
    pub always_active: BTreeSet<usize>,
    /// Total active entries over sites.
    pub s_h: usize,
    /// Size of the union of site supports.
    pub s_p: usize,
    /// `s_h / s_p`, zero when nothing is active.
    pub r: f64,
}

pub const DEFAULT_SUPPORT_TOL: f64 = 1e-8;

pub fn support_stats(b: &CoefficientMatrix, tol: f64) -> SupportStats {
    let m = b.as_matrix();
    let site_active: Vec<BTreeSet<usize>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)].abs() > tol).collect())
        .collect();
    let union: BTreeSet<usize> = site_active.iter().flatten().copied().collect();
    let always_active: BTreeSet<usize> = match site_active.split_first() {
        Some((first, rest)) => first
            .iter()
            .copied()
            .filter(|j| rest.iter().all(|s| s.contains(j)))
            .collect(),
        None => BTreeSet::new(),
    };
    let s_h = site_active.iter().map(|s| s.len()).sum();
    let s_p = union.len();
    SupportStats {
        site_active,
        always_active,
        s_h,
        s_p,
        r: if s_p == 0 { 0.0 } else { s_h as f64 / s_p as f64 },
    }
}
