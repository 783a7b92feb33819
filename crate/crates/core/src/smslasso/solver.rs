//! Accelerated proximal gradient with objective-based and gradient-based
//! momentum restarts.

use nalgebra::{DMatrix, DVector};

use super::{composite_prox_in_place, penalty, CoefficientMatrix, PenaltySpec};
use crate::error::{Error, Result};
use crate::linalg::{max_gram_eigenvalue, select_columns};
use crate::regress::SiteDataset;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative objective decrease below which convergence is checked.
    pub rel_tol: f64,
    /// Bound on `‖B − T(B)‖_F / max(1, ‖B‖_F)` with `T` one prox-gradient step.
    pub resid_tol: f64,
    /// Scale each site's columns to unit root-mean-square before fitting.
    pub standardize: bool,
    /// Fit an unpenalized intercept per site.
    pub intercept: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            rel_tol: 1e-10,
            resid_tol: 1e-7,
            standardize: false,
            intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: CoefficientMatrix,
    /// Per-site intercepts when requested.
    pub intercepts: Option<Vec<f64>>,
    /// Objective of the problem actually solved (after centering/scaling).
    pub objective: f64,
    pub iterations: usize,
    /// `false` when the iteration cap was hit; `coef` is then the best iterate.
    pub converged: bool,
    pub residual: f64,
}

impl LassoFit {
    /// Predictions for site `i` on new rows.
    pub fn predict(&self, i: usize, x: &DMatrix<f64>) -> DVector<f64> {
        let beta = DVector::from_iterator(self.coef.p(), self.coef.as_matrix().row(i).iter().copied());
        let mut out = x * beta;
        if let Some(b0) = &self.intercepts {
            out.add_scalar_mut(b0[i]);
        }
        out
    }
}

/// Per-site data after optional centering and scaling.
pub(crate) struct Problem {
    pub xs: Vec<DMatrix<f64>>,
    pub ys: Vec<DVector<f64>>,
    x_means: Vec<DVector<f64>>,
    y_means: Vec<f64>,
    scales: Vec<DVector<f64>>,
    pub lipschitz: f64,
    centered: bool,
}

impl Problem {
    pub fn new(datasets: &[SiteDataset], opts: &FitOptions) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no sites given".into()))?;
        let p = first.p();
        if let Some(d) = datasets.iter().find(|d| d.p() != p) {
            return Err(Error::IncompatibleSummaries(format!(
                "site {} has {} features, expected {p}",
                d.site_id,
                d.p()
            )));
        }
        let mut xs = Vec::with_capacity(datasets.len());
        let mut ys = Vec::with_capacity(datasets.len());
        let mut x_means = Vec::new();
        let mut y_means = Vec::new();
        let mut scales = Vec::new();
        for d in datasets {
            let n = d.n().max(1) as f64;
            let mut x = d.x.clone();
            let mut y = d.y.clone();
            let (xm, ym) = if opts.intercept {
                let xm = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / n));
                let ym = y.sum() / n;
                for (j, mut c) in x.column_iter_mut().enumerate() {
                    c.add_scalar_mut(-xm[j]);
                }
                y.add_scalar_mut(-ym);
                (xm, ym)
            } else {
                (DVector::zeros(p), 0.0)
            };
            let sc = if opts.standardize {
                let s = DVector::from_iterator(
                    p,
                    x.column_iter().map(|c| {
                        let rms = (c.norm_squared() / n).sqrt();
                        if rms > 0.0 {
                            rms
                        } else {
                            1.0
                        }
                    }),
                );
                for (j, mut c) in x.column_iter_mut().enumerate() {
                    c /= s[j];
                }
                s
            } else {
                DVector::from_element(p, 1.0)
            };
            xs.push(x);
            ys.push(y);
            x_means.push(xm);
            y_means.push(ym);
            scales.push(sc);
        }
        let lipschitz = 2.0
            * xs
                .iter()
                .map(max_gram_eigenvalue)
                .fold(0.0f64, f64::max)
            * (1.0 + 1e-9);
        Ok(Self {
            xs,
            ys,
            x_means,
            y_means,
            scales,
            lipschitz,
            centered: opts.intercept,
        })
    }

    pub fn k(&self) -> usize {
        self.xs.len()
    }

    pub fn p(&self) -> usize {
        self.xs[0].ncols()
    }

    /// Maps coefficients on the original scale into the solver's scale.
    fn to_internal(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.k(), self.p(), |i, j| b[(i, j)] * self.scales[i][j])
    }

    fn to_external(&self, b: &DMatrix<f64>) -> (DMatrix<f64>, Option<Vec<f64>>) {
        let out = DMatrix::from_fn(self.k(), self.p(), |i, j| b[(i, j)] / self.scales[i][j]);
        let intercepts = self.centered.then(|| {
            (0..self.k())
                .map(|i| {
                    let row: f64 = (0..self.p()).map(|j| out[(i, j)] * self.x_means[i][j]).sum();
                    self.y_means[i] - row
                })
                .collect()
        });
        (out, intercepts)
    }

    fn predict_site(&self, i: usize, b: &DMatrix<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let x = &self.xs[i];
        for j in 0..x.ncols() {
            let c = b[(i, j)];
            if c != 0.0 {
                out.axpy(c, &x.column(j), 1.0);
            }
        }
    }

    fn loss_from_predictions(&self, preds: &[DVector<f64>]) -> f64 {
        self.ys
            .iter()
            .zip(preds)
            .map(|(y, f)| (y - f).norm_squared())
            .sum()
    }

    /// Gradient of `Σᵢ‖yᵢ − Xᵢβᵢ‖²` given the current predictions.
    fn gradient(&self, preds: &[DVector<f64>], grad: &mut DMatrix<f64>) {
        for i in 0..self.k() {
            let r = &self.ys[i] - &preds[i];
            let g = self.xs[i].tr_mul(&r);
            for (j, v) in g.iter().enumerate() {
                grad[(i, j)] = -2.0 * v;
            }
        }
    }

    /// Smallest λ with an all-zero solution, by bisection on the zero
    /// condition `‖S(gʲ, λα)‖₂ ≤ λ(1−α)√k` for each column gradient `gʲ`.
    pub fn lambda_max(&self, alpha: f64) -> f64 {
        let k = self.k();
        let zero_preds: Vec<DVector<f64>> = self.ys.iter().map(|y| DVector::zeros(y.len())).collect();
        let mut grad = DMatrix::zeros(k, self.p());
        self.gradient(&zero_preds, &mut grad);
        grad.column_iter()
            .map(|g| {
                let g: Vec<f64> = g.iter().copied().collect();
                column_lambda_max(&g, alpha)
            })
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, b_internal: &DMatrix<f64>, spec: &PenaltySpec) -> f64 {
        let preds: Vec<DVector<f64>> = (0..self.k())
            .map(|i| {
                let mut f = DVector::zeros(self.ys[i].len());
                self.predict_site(i, b_internal, &mut f);
                f
            })
            .collect();
        self.loss_from_predictions(&preds) + spec.lambda * penalty(b_internal, spec.alpha)
    }

    fn prox_step(
        &self,
        point: &DMatrix<f64>,
        grad: &DMatrix<f64>,
        spec: &PenaltySpec,
        out: &mut DMatrix<f64>,
    ) {
        let l = self.lipschitz;
        let k = self.k();
        let t1 = spec.lambda * spec.alpha / l;
        let t2 = spec.lambda * (1.0 - spec.alpha) * (k as f64).sqrt() / l;
        let mut col = vec![0.0; k];
        for j in 0..self.p() {
            for i in 0..k {
                col[i] = point[(i, j)] - grad[(i, j)] / l;
            }
            composite_prox_in_place(&mut col, t1, t2);
            for i in 0..k {
                out[(i, j)] = col[i];
            }
        }
    }

    /// Scaled fixed-point residual of one prox-gradient step at `b`.
    pub fn fixed_point_residual(&self, b: &DMatrix<f64>, spec: &PenaltySpec) -> f64 {
        let preds: Vec<DVector<f64>> = (0..self.k())
            .map(|i| {
                let mut f = DVector::zeros(self.ys[i].len());
                self.predict_site(i, b, &mut f);
                f
            })
            .collect();
        let mut grad = DMatrix::zeros(self.k(), self.p());
        self.gradient(&preds, &mut grad);
        let mut t = DMatrix::zeros(self.k(), self.p());
        self.prox_step(b, &grad, spec, &mut t);
        (b - t).norm() / b.norm().max(1.0)
    }

    /// The same problem on a subset of columns, in internal coordinates.
    fn restrict(&self, cols: &[usize]) -> Problem {
        let xs: Vec<DMatrix<f64>> = self.xs.iter().map(|x| select_columns(x, cols)).collect();
        let lipschitz = 2.0 * xs.iter().map(max_gram_eigenvalue).fold(0.0f64, f64::max) * (1.0 + 1e-9);
        let m = cols.len();
        Problem {
            xs,
            ys: self.ys.clone(),
            x_means: vec![DVector::zeros(m); self.k()],
            y_means: vec![0.0; self.k()],
            scales: vec![DVector::from_element(m, 1.0); self.k()],
            lipschitz: lipschitz.max(f64::MIN_POSITIVE),
            centered: false,
        }
    }

    /// Per-column amount by which the zero-coefficient optimality
    /// condition fails at `b`: `λ_max` of the column gradient over `λ`.
    fn column_scores(&self, b: &DMatrix<f64>, alpha: f64) -> Vec<f64> {
        let preds: Vec<DVector<f64>> = (0..self.k())
            .map(|i| {
                let mut f = DVector::zeros(self.ys[i].len());
                self.predict_site(i, b, &mut f);
                f
            })
            .collect();
        let mut grad = DMatrix::zeros(self.k(), self.p());
        self.gradient(&preds, &mut grad);
        grad.column_iter()
            .map(|g| {
                let g: Vec<f64> = g.iter().copied().collect();
                column_lambda_max(&g, alpha)
            })
            .collect()
    }

    pub fn solve(
        &self,
        spec: &PenaltySpec,
        opts: &FitOptions,
        init: Option<&CoefficientMatrix>,
    ) -> Result<LassoFit> {
        let k = self.k();
        let p = self.p();
        if let Some(b) = init {
            if b.k() != k || b.p() != p {
                return Err(Error::InvalidArgument(format!(
                    "warm start is {}×{}, problem is {k}×{p}",
                    b.k(),
                    b.p()
                )));
            }
        }
        if spec.lambda > 0.0 && spec.lambda >= self.lambda_max(spec.alpha) {
            let zero = DMatrix::zeros(k, p);
            let objective = self.objective(&zero, spec);
            let (coef, intercepts) = self.to_external(&zero);
            return Ok(LassoFit {
                coef: CoefficientMatrix(coef),
                intercepts,
                objective,
                iterations: 0,
                converged: true,
                residual: 0.0,
            });
        }
        let x0 = match init {
            Some(b) => self.to_internal(b.as_matrix()),
            None => DMatrix::zeros(k, p),
        };
        let inner = if p <= WORKING_SET_MIN_P || spec.lambda == 0.0 {
            self.fista(spec, opts, x0, opts.max_iter)
        } else {
            self.working_set(spec, opts, x0)
        };
        if !inner.converged {
            log::warn!(
                "sparse multi-site Lasso stopped after {} iterations (residual {:.2e})",
                inner.iterations,
                inner.residual
            );
        }
        let (coef, intercepts) = self.to_external(&inner.x);
        Ok(LassoFit {
            coef: CoefficientMatrix(coef),
            intercepts,
            objective: inner.objective,
            iterations: inner.iterations,
            converged: inner.converged,
            residual: inner.residual,
        })
    }

    /// Solves on a growing set of columns: the current support plus the
    /// columns whose zero-optimality condition fails, until no column
    /// outside the set fails and the full fixed-point residual is small.
    fn working_set(&self, spec: &PenaltySpec, opts: &FitOptions, x0: DMatrix<f64>) -> Inner {
        let p = self.p();
        let mut x = x0;
        let mut in_set = vec![false; p];
        for j in 0..p {
            in_set[j] = x.column(j).iter().any(|v| *v != 0.0);
        }
        let mut iterations = 0;
        loop {
            let scores = self.column_scores(&x, spec.alpha);
            let mut violators: Vec<usize> = (0..p)
                .filter(|&j| !in_set[j] && scores[j] > spec.lambda)
                .collect();
            let current: Vec<usize> = (0..p).filter(|&j| in_set[j]).collect();
            if violators.is_empty() && iterations > 0 {
                let residual = self.fixed_point_residual(&x, spec);
                if residual <= opts.resid_tol {
                    return Inner {
                        objective: self.objective(&x, spec),
                        x,
                        iterations,
                        converged: true,
                        residual,
                    };
                }
                // Inner solves were not accurate enough; finish on all columns.
                let rest = opts.max_iter.saturating_sub(iterations);
                let mut out = self.fista(spec, opts, x, rest.max(1));
                out.iterations += iterations;
                return out;
            }
            violators.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            violators.truncate(current.len().max(WORKING_SET_GROWTH));
            for &j in &violators {
                in_set[j] = true;
            }
            let cols: Vec<usize> = (0..p).filter(|&j| in_set[j]).collect();
            let sub = self.restrict(&cols);
            let start = select_columns(&x, &cols);
            let rest = opts.max_iter.saturating_sub(iterations);
            if rest == 0 {
                let residual = self.fixed_point_residual(&x, spec);
                return Inner {
                    objective: self.objective(&x, spec),
                    x,
                    iterations,
                    converged: residual <= opts.resid_tol,
                    residual,
                };
            }
            let out = sub.fista(spec, opts, start, rest);
            iterations += out.iterations.max(1);
            x.fill(0.0);
            for (c, &j) in cols.iter().enumerate() {
                x.set_column(j, &out.x.column(c));
            }
        }
    }

    /// Accelerated proximal gradient from `x0` in internal coordinates.
    fn fista(&self, spec: &PenaltySpec, opts: &FitOptions, x0: DMatrix<f64>, max_iter: usize) -> Inner {
        let k = self.k();
        let p = self.p();
        let mut x = x0;
        let sizes: Vec<usize> = self.ys.iter().map(|y| y.len()).collect();
        let mut x_pred: Vec<DVector<f64>> = sizes.iter().map(|&n| DVector::zeros(n)).collect();
        for i in 0..k {
            self.predict_site(i, &x, &mut x_pred[i]);
        }
        let mut fx = self.loss_from_predictions(&x_pred) + spec.lambda * penalty(&x, spec.alpha);

        let mut y = x.clone();
        let mut y_pred = x_pred.clone();
        let mut momentum_active = false;
        let mut t = 1.0f64;
        let mut grad = DMatrix::zeros(k, p);
        let mut x_new = DMatrix::zeros(k, p);
        let mut new_pred: Vec<DVector<f64>> = sizes.iter().map(|&n| DVector::zeros(n)).collect();

        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            self.gradient(&y_pred, &mut grad);
            self.prox_step(&y, &grad, spec, &mut x_new);
            for i in 0..k {
                self.predict_site(i, &x_new, &mut new_pred[i]);
            }
            let f_new = self.loss_from_predictions(&new_pred) + spec.lambda * penalty(&x_new, spec.alpha);

            if f_new > fx {
                if momentum_active {
                    // Restart from the best iterate without momentum.
                    y.copy_from(&x);
                    for i in 0..k {
                        y_pred[i].copy_from(&x_pred[i]);
                    }
                    t = 1.0;
                    momentum_active = false;
                    continue;
                }
                // A plain step cannot make progress: we are at rounding level.
                residual = self.fixed_point_residual(&x, spec);
                converged = residual <= opts.resid_tol;
                break;
            }

            let rel_dec = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mut beta = (t - 1.0) / t_next;
            // Gradient restart: drop momentum when the step and the
            // extrapolation direction disagree.
            let mut dot = 0.0;
            for ((yv, xn), xo) in y.iter().zip(x_new.iter()).zip(x.iter()) {
                dot += (yv - xn) * (xn - xo);
            }
            let mut t_used = t_next;
            if dot > 0.0 {
                beta = 0.0;
                t_used = 1.0;
            }
            // y = x_new + β(x_new − x)
            for ((yv, xn), xo) in y.iter_mut().zip(x_new.iter()).zip(x.iter()) {
                *yv = xn + beta * (xn - xo);
            }
            for i in 0..k {
                for ((yp, np), xp) in y_pred[i].iter_mut().zip(new_pred[i].iter()).zip(x_pred[i].iter()) {
                    *yp = np + beta * (np - xp);
                }
            }
            momentum_active = beta != 0.0;
            t = t_used;
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut x_pred, &mut new_pred);
            fx = f_new;

            if rel_dec < opts.rel_tol {
                residual = self.fixed_point_residual(&x, spec);
                if residual <= opts.resid_tol {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            if residual.is_infinite() {
                residual = self.fixed_point_residual(&x, spec);
            }
            converged = residual <= opts.resid_tol;
        }
        Inner {
            x,
            objective: fx,
            iterations,
            converged,
            residual,
        }
    }
}

struct Inner {
    x: DMatrix<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
}

/// Below this many columns the working-set strategy is not worth it.
const WORKING_SET_MIN_P: usize = 50;
/// Minimum number of columns added per working-set round.
const WORKING_SET_GROWTH: usize = 10;

/// Smallest `λ` for which the composite prox of gradient column `g` at zero is zero.
pub(crate) fn column_lambda_max(g: &[f64], alpha: f64) -> f64 {
    let k = g.len() as f64;
    let amax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if amax == 0.0 {
        return 0.0;
    }
    let group = (1.0 - alpha) * k.sqrt();
    let mut hi = f64::INFINITY;
    if alpha > 0.0 {
        hi = hi.min(amax / alpha);
    }
    if group > 0.0 {
        hi = hi.min(norm / group);
    }
    if alpha == 0.0 || alpha == 1.0 {
        return hi;
    }
    let zero_ok = |lambda: f64| {
        let t1 = lambda * alpha;
        let s: f64 = g
            .iter()
            .map(|v| {
                let a = v.abs() - t1;
                if a > 0.0 {
                    a * a
                } else {
                    0.0
                }
            })
            .sum();
        s.sqrt() <= lambda * group
    };
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if zero_ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Fits the sparse multi-site Lasso from a zero start.
pub fn fit(datasets: &[SiteDataset], spec: &PenaltySpec, opts: &FitOptions) -> Result<LassoFit> {
    fit_from(datasets, spec, opts, None)
}

/// Fits from a warm start given on the original coefficient scale.
pub fn fit_from(
    datasets: &[SiteDataset],
    spec: &PenaltySpec,
    opts: &FitOptions,
    init: Option<&CoefficientMatrix>,
) -> Result<LassoFit> {
    Problem::new(datasets, opts)?.solve(spec, opts, init)
}

pub fn lambda_max(datasets: &[SiteDataset], alpha: f64, opts: &FitOptions) -> Result<f64> {
    Ok(Problem::new(datasets, opts)?.lambda_max(alpha))
}

/// `Σᵢ‖yᵢ − Xᵢβᵢ‖² + λΛ(B)` on the raw data (no centering or scaling).
pub fn objective(datasets: &[SiteDataset], b: &CoefficientMatrix, spec: &PenaltySpec) -> f64 {
    let loss: f64 = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let beta = DVector::from_iterator(b.p(), b.as_matrix().row(i).iter().copied());
            (&d.y - &d.x * beta).norm_squared()
        })
        .sum();
    loss + spec.lambda * penalty(b.as_matrix(), spec.alpha)
}
