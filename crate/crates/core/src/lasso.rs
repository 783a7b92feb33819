//! Single-site Lasso by cyclic coordinate descent, with cross-validated λ.
//!
//! Minimizes `‖y − Xβ‖² + λ‖β‖₁` (unnormalized loss, the same scale as the
//! sparse multi-site Lasso at `α = 1`).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{select_entries, select_rows};
use crate::sim::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Stop when the largest change in fitted values over a sweep falls
    /// below `tol · ‖y‖`.
    pub tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            tol: 1e-10,
        }
    }
}

/// `2‖Xᵀy‖∞`, the smallest λ with an all-zero solution.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    2.0 * x.tr_mul(y).amax()
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct CdState<'a> {
    x: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    y_norm: f64,
}

impl<'a> CdState<'a> {
    fn new(x: &'a DMatrix<f64>, y: &DVector<f64>) -> Self {
        Self {
            x,
            col_sq: x.column_iter().map(|c| c.norm_squared()).collect(),
            y_norm: y.norm().max(f64::MIN_POSITIVE),
        }
    }

    /// One pass over `cols`; returns the largest fitted-value change.
    fn sweep(&self, cols: impl Iterator<Item = usize>, beta: &mut DVector<f64>, r: &mut DVector<f64>, lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for j in cols {
            let c = self.col_sq[j];
            if c == 0.0 {
                continue;
            }
            let xj = self.x.column(j);
            let old = beta[j];
            let rho = xj.dot(r) + c * old;
            let new = soft(rho, 0.5 * lambda) / c;
            if new != old {
                r.axpy(old - new, &xj, 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs() * c.sqrt());
            }
        }
        max_change
    }

    fn solve(&self, y: &DVector<f64>, lambda: f64, beta: &mut DVector<f64>, opts: &CdOptions) -> bool {
        let p = self.x.ncols();
        let mut r = y - self.x * &*beta;
        let mut sweeps = 0;
        loop {
            let change = self.sweep(0..p, beta, &mut r, lambda);
            sweeps += 1;
            if change <= opts.tol * self.y_norm {
                return true;
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            loop {
                let change = self.sweep(active.iter().copied(), beta, &mut r, lambda);
                sweeps += 1;
                if change <= opts.tol * self.y_norm || sweeps >= opts.max_sweeps {
                    break;
                }
            }
            if sweeps >= opts.max_sweeps {
                return false;
            }
        }
    }
}

/// Lasso fit at one λ, optionally warm-started.
pub fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    init: Option<&DVector<f64>>,
    opts: &CdOptions,
) -> DVector<f64> {
    let mut beta = init.cloned().unwrap_or_else(|| DVector::zeros(x.ncols()));
    let state = CdState::new(x, y);
    if !state.solve(y, lambda, &mut beta, opts) {
        log::warn!("coordinate descent hit the sweep cap at lambda = {lambda:.4e}");
    }
    beta
}

/// Warm-started fits along a decreasing grid.
pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    opts: &CdOptions,
) -> Vec<DVector<f64>> {
    let state = CdState::new(x, y);
    let mut beta = DVector::zeros(x.ncols());
    lambdas
        .iter()
        .map(|&l| {
            state.solve(y, l, &mut beta, opts);
            beta.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoCvOptions {
    pub folds: usize,
    pub n_lambdas: usize,
    /// Smallest grid value as a fraction of `λ_max`.
    pub lambda_min_ratio: f64,
    pub seed: u64,
}

impl Default for LassoCvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            n_lambdas: 50,
            lambda_min_ratio: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCv {
    pub lambdas: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub best_index: usize,
    pub best_lambda: f64,
    /// Fit on all rows at `best_lambda`.
    pub coef: DVector<f64>,
}

/// K-fold cross-validated Lasso. Fold fits use λ scaled by the training
/// share of rows so that the grid refers to the full-data loss.
pub fn lasso_cv(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoCvOptions) -> Result<LassoCv> {
    let n = y.len();
    if opts.folds < 2 || n < opts.folds {
        return Err(Error::InvalidArgument(format!(
            "{}-fold cross-validation needs at least {} rows, got {n}",
            opts.folds, opts.folds
        )));
    }
    let cd = CdOptions::default();
    let lmax = lasso_lambda_max(x, y);
    if lmax == 0.0 {
        return Ok(LassoCv {
            lambdas: vec![0.0],
            mean: vec![y.norm_squared() / n as f64],
            se: vec![0.0],
            best_index: 0,
            best_lambda: 0.0,
            coef: DVector::zeros(x.ncols()),
        });
    }
    let lambdas = crate::smslasso::default_lambda_grid(lmax, opts.n_lambdas, opts.lambda_min_ratio);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(opts.seed, 0x1A550));
    let mut labels = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        labels[row] = pos % opts.folds;
    }
    let mut errs = vec![vec![0.0; lambdas.len()]; opts.folds];
    for (f, fold_err) in errs.iter_mut().enumerate() {
        let tr: Vec<usize> = (0..n).filter(|&r| labels[r] != f).collect();
        let te: Vec<usize> = (0..n).filter(|&r| labels[r] == f).collect();
        let (xtr, ytr) = (select_rows(x, &tr), select_entries(y, &tr));
        let (xte, yte) = (select_rows(x, &te), select_entries(y, &te));
        let share = tr.len() as f64 / n as f64;
        let scaled: Vec<f64> = lambdas.iter().map(|l| l * share).collect();
        for (l, b) in lasso_path(&xtr, &ytr, &scaled, &cd).iter().enumerate() {
            fold_err[l] = (&yte - &xte * b).norm_squared() / te.len() as f64;
        }
    }
    let k = opts.folds as f64;
    let mean: Vec<f64> = (0..lambdas.len())
        .map(|l| errs.iter().map(|e| e[l]).sum::<f64>() / k)
        .collect();
    let se: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let v = errs.iter().map(|e| (e[l] - mean[l]).powi(2)).sum::<f64>() / (k - 1.0);
            (v / k).sqrt()
        })
        .collect();
    let best_index = mean
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < mean[b] { i } else { b });
    let path = lasso_path(x, y, &lambdas[..=best_index], &cd);
    Ok(LassoCv {
        best_lambda: lambdas[best_index],
        coef: path.into_iter().last().unwrap_or_else(|| DVector::zeros(x.ncols())),
        lambdas,
        mean,
        se,
        best_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_design_soft_thresholds() {
        // XᵀX = 4I, so β = S(Xᵀy, λ/2)/4.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, 1.0, -1.0, -2.0]);
        let xty = x.tr_mul(&y);
        let lambda = 2.0;
        let b = lasso_cd(&x, &y, lambda, None, &CdOptions::default());
        for j in 0..2 {
            assert!((b[j] - soft(xty[j], 1.0) / 4.0).abs() < 1e-12);
        }
        let zero = lasso_cd(&x, &y, lasso_lambda_max(&x, &y), None, &CdOptions::default());
        assert!(zero.iter().all(|v| *v == 0.0));
    }
}
