//! Warm-started solution paths and site-stratified cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{FitOptions, Problem};
use super::{CoefficientMatrix, PenaltySpec};
use crate::error::{Error, Result};
use crate::regress::SiteDataset;
use crate::sim::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { folds: 10, seed: 0 }
    }
}

/// Per-λ cross-validated mean squared prediction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub folds: usize,
    pub mean: Vec<f64>,
    /// Standard error of the mean across folds.
    pub se: Vec<f64>,
    pub best_index: usize,
}

impl CvCurve {
    pub fn best_error(&self) -> f64 {
        self.mean[self.best_index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    pub fits: Vec<CoefficientMatrix>,
    pub objectives: Vec<f64>,
    pub converged: Vec<bool>,
    pub cv: Option<CvCurve>,
}

impl SolutionPath {
    pub fn best_lambda(&self) -> Option<f64> {
        self.cv.as_ref().map(|c| self.lambdas[c.best_index])
    }
}

/// `points` log-spaced values from `lambda_max` down to `ratio · lambda_max`.
pub fn default_lambda_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![lambda_max];
    }
    let lo = ratio.ln();
    (0..points)
        .map(|i| lambda_max * (lo * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("lambda grid must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn run_path(
    problem: &Problem,
    alpha: f64,
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<Vec<super::LassoFit>> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<CoefficientMatrix> = None;
    for &lambda in lambdas {
        let spec = PenaltySpec::new(lambda, alpha)?;
        let f = problem.solve(&spec, opts, warm.as_ref())?;
        warm = Some(f.coef.clone());
        out.push(f);
    }
    Ok(out)
}

/// Fold label of every row, per site. Each site is shuffled and dealt
/// round-robin into folds independently.
pub(crate) fn stratified_folds(sizes: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut substream(seed, 0xF01D_0000 + i as u64));
            let mut labels = vec![0; n];
            for (pos, &row) in perm.iter().enumerate() {
                labels[row] = pos % folds;
            }
            labels
        })
        .collect()
}

/// Warm-started fits along a decreasing λ grid, optionally with
/// cross-validation. The default grid is 100 log-spaced points from
/// `λ_max` to `10⁻³·λ_max`.
pub fn solution_path(
    datasets: &[SiteDataset],
    alpha: f64,
    lambda_grid: Option<Vec<f64>>,
    cv: Option<CvOptions>,
    opts: &FitOptions,
) -> Result<SolutionPath> {
    PenaltySpec::new(0.0, alpha)?;
    let problem = Problem::new(datasets, opts)?;
    let lambdas = match lambda_grid {
        Some(g) => g,
        None => default_lambda_grid(problem.lambda_max(alpha), 100, 1e-3),
    };
    check_grid(&lambdas)?;
    let fits = run_path(&problem, alpha, &lambdas, opts)?;

    let cv = match cv {
        Some(c) => Some(cross_validate(datasets, alpha, &lambdas, c, opts)?),
        None => None,
    };
    Ok(SolutionPath {
        alpha,
        objectives: fits.iter().map(|f| f.objective).collect(),
        converged: fits.iter().map(|f| f.converged).collect(),
        fits: fits.into_iter().map(|f| f.coef).collect(),
        lambdas,
        cv,
    })
}

/// Mean squared prediction error pooled over sites. Training folds see
/// `λ` scaled by their share of the rows, since the loss is a sum.
fn cross_validate(
    datasets: &[SiteDataset],
    alpha: f64,
    lambdas: &[f64],
    cv: CvOptions,
    opts: &FitOptions,
) -> Result<CvCurve> {
    if cv.folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    let sizes: Vec<usize> = datasets.iter().map(|d| d.n()).collect();
    if sizes.iter().any(|&n| n < cv.folds) {
        return Err(Error::InvalidArgument(format!(
            "every site needs at least {} rows for {}-fold cross-validation",
            cv.folds, cv.folds
        )));
    }
    let labels = stratified_folds(&sizes, cv.folds, cv.seed);
    let total: usize = sizes.iter().sum();

    let fold_errors: Vec<Vec<f64>> = (0..cv.folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let mut train = Vec::with_capacity(datasets.len());
            let mut test = Vec::with_capacity(datasets.len());
            for (d, lab) in datasets.iter().zip(&labels) {
                let tr: Vec<usize> = (0..d.n()).filter(|&r| lab[r] != f).collect();
                let te: Vec<usize> = (0..d.n()).filter(|&r| lab[r] == f).collect();
                train.push(d.select_rows(&tr));
                test.push(d.select_rows(&te));
            }
            let n_train: usize = train.iter().map(|d| d.n()).sum();
            let n_test: usize = test.iter().map(|d| d.n()).sum();
            let share = n_train as f64 / total as f64;
            let scaled: Vec<f64> = lambdas.iter().map(|l| l * share).collect();
            let problem = Problem::new(&train, opts)?;
            let fits = run_path(&problem, alpha, &scaled, opts)?;
            Ok(fits
                .iter()
                .map(|fit| {
                    let sse: f64 = test
                        .iter()
                        .enumerate()
                        .map(|(i, d)| (&d.y - fit.predict(i, &d.x)).norm_squared())
                        .sum();
                    sse / n_test as f64
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let folds = cv.folds as f64;
    let mut mean = Vec::with_capacity(lambdas.len());
    let mut se = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let m = fold_errors.iter().map(|e| e[l]).sum::<f64>() / folds;
        let var = fold_errors.iter().map(|e| (e[l] - m).powi(2)).sum::<f64>() / (folds - 1.0);
        mean.push(m);
        se.push((var / folds).sqrt());
    }
    let best_index = mean
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < mean[b] { i } else { b });
    Ok(CvCurve {
        folds: cv.folds,
        mean,
        se,
        best_index,
    })
}
