//! Sparse eigenvalues of the stacked design, effective sparsity, and
//! empirical estimation-error rates of the sparse multi-site Lasso.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gram;
use crate::regress::SiteDataset;
use crate::sim::{generate_sparse_with, substream, SparseDesign};
use crate::smslasso::{corrected_alpha, solution_path, CvOptions, FitOptions, SupportStats};

/// Supports enumerated before falling back to the heuristic search.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 100_000;
const HEURISTIC_RESTARTS: usize = 20;

/// `diag(X₁ᵀX₁, …, XₖᵀXₖ) / max nᵢ`.
pub fn build_c(datasets: &[SiteDataset]) -> Result<DMatrix<f64>> {
    let p = datasets
        .first()
        .map(|d| d.p())
        .ok_or_else(|| Error::InvalidArgument("no datasets".into()))?;
    if datasets.iter().any(|d| d.p() != p) {
        return Err(Error::IncompatibleSummaries("datasets differ in p".into()));
    }
    let k = datasets.len();
    let n_bar = datasets.iter().map(|d| d.n()).max().unwrap_or(1) as f64;
    let mut c = DMatrix::zeros(k * p, k * p);
    for (i, d) in datasets.iter().enumerate() {
        c.view_mut((i * p, i * p), (p, p)).copy_from(&(gram(&d.x) / n_bar));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MSparseEigenReport {
    pub m: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `true` when every support of size `⌈m⌉` was enumerated.
    pub exhaustive: bool,
    pub supports_evaluated: usize,
    pub argmin: Vec<usize>,
    pub argmax: Vec<usize>,
}

fn extremes(c: &DMatrix<f64>, support: &[usize]) -> (f64, f64) {
    let s = support.len();
    let sub = DMatrix::from_fn(s, s, |a, b| c[(support[a], support[b])]);
    let eig = sub.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Next `k`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Smallest and largest eigenvalues over principal submatrices of size
/// `⌈m⌉`. Enumerates every support when there are at most `budget` of them,
/// otherwise runs a greedy search with random-restart swap refinement,
/// which yields an upper bound on `φ_min` and a lower bound on `φ_max`.
pub fn m_sparse_eigenvalues(c: &DMatrix<f64>, m: f64, budget: usize) -> Result<MSparseEigenReport> {
    m_sparse_eigenvalues_seeded(c, m, budget, 0)
}

pub fn m_sparse_eigenvalues_seeded(
    c: &DMatrix<f64>,
    m: f64,
    budget: usize,
    seed: u64,
) -> Result<MSparseEigenReport> {
    let d = c.nrows();
    if c.ncols() != d {
        return Err(Error::InvalidArgument("C must be square".into()));
    }
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    let s = m.ceil() as usize;
    if s > d {
        return Err(Error::InvalidArgument(format!("ceil(m) = {s} exceeds dim(C) = {d}")));
    }
    if binomial(d, s) <= budget as f64 {
        Ok(exhaustive(c, m, s))
    } else {
        Ok(heuristic(c, m, s, seed))
    }
}

/// Full enumeration, parallel over the first support index.
pub fn exhaustive(c: &DMatrix<f64>, m: f64, s: usize) -> MSparseEigenReport {
    let d = c.nrows();
    type Best = (f64, Vec<usize>, f64, Vec<usize>, usize);
    let per_first: Vec<Best> = (0..=d - s)
        .into_par_iter()
        .map(|first| {
            let mut best: Best = (f64::INFINITY, Vec::new(), f64::NEG_INFINITY, Vec::new(), 0);
            let mut idx: Vec<usize> = (first..first + s).collect();
            loop {
                let (lo, hi) = extremes(c, &idx);
                best.4 += 1;
                if lo < best.0 {
                    best.0 = lo;
                    best.1 = idx.clone();
                }
                if hi > best.2 {
                    best.2 = hi;
                    best.3 = idx.clone();
                }
                // Advance the tail only; it stays above `first` in lexicographic order.
                if s == 1 || !next_combination(&mut idx[1..], d) {
                    break;
                }
            }
            best
        })
        .collect();
    let mut out = MSparseEigenReport {
        m,
        phi_min: f64::INFINITY,
        phi_max: f64::NEG_INFINITY,
        exhaustive: true,
        supports_evaluated: 0,
        argmin: Vec::new(),
        argmax: Vec::new(),
    };
    for b in per_first {
        out.supports_evaluated += b.4;
        if b.0 < out.phi_min {
            out.phi_min = b.0;
            out.argmin = b.1;
        }
        if b.2 > out.phi_max {
            out.phi_max = b.2;
            out.argmax = b.3;
        }
    }
    out
}

/// Swap refinement of a support toward smaller (`minimize`) or larger
/// extreme eigenvalue.
fn refine(c: &DMatrix<f64>, support: &mut [usize], minimize: bool, evaluated: &mut usize) -> f64 {
    let d = c.nrows();
    let score = |sup: &[usize], evaluated: &mut usize| {
        *evaluated += 1;
        let (lo, hi) = extremes(c, sup);
        if minimize { lo } else { -hi }
    };
    let mut current = score(support, evaluated);
    loop {
        let mut improved = false;
        for pos in 0..support.len() {
            for cand in 0..d {
                if support.contains(&cand) {
                    continue;
                }
                let old = support[pos];
                support[pos] = cand;
                let v = score(support, evaluated);
                if v < current - 1e-14 * current.abs().max(1.0) {
                    current = v;
                    improved = true;
                } else {
                    support[pos] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    support.sort_unstable();
    if minimize { current } else { -current }
}

fn greedy_start(c: &DMatrix<f64>, s: usize, minimize: bool) -> Vec<usize> {
    let d = c.nrows();
    let first = (0..d)
        .max_by(|&a, &b| {
            let (x, y) = (c[(a, a)], c[(b, b)]);
            if minimize { y.total_cmp(&x) } else { x.total_cmp(&y) }
        })
        .unwrap_or(0);
    let mut sup = vec![first];
    while sup.len() < s {
        let mut best = (f64::INFINITY, 0);
        for cand in (0..d).filter(|j| !sup.contains(j)) {
            let mut trial = sup.clone();
            trial.push(cand);
            let (lo, hi) = extremes(c, &trial);
            let v = if minimize { lo } else { -hi };
            if v < best.0 {
                best = (v, cand);
            }
        }
        sup.push(best.1);
    }
    sup
}

fn heuristic(c: &DMatrix<f64>, m: f64, s: usize, seed: u64) -> MSparseEigenReport {
    let d = c.nrows();
    let mut evaluated = 0;
    let search = |minimize: bool, evaluated: &mut usize| {
        let mut best_sup = greedy_start(c, s, minimize);
        let mut best = refine(c, &mut best_sup, minimize, evaluated);
        for r in 0..HEURISTIC_RESTARTS {
            let stream = (r as u64) << 1 | minimize as u64;
            let mut sup = sample(&mut substream(seed, stream), d, s).into_vec();
            let v = refine(c, &mut sup, minimize, evaluated);
            if (minimize && v < best) || (!minimize && v > best) {
                best = v;
                best_sup = sup;
            }
        }
        (best, best_sup)
    };
    let (phi_min, argmin) = search(true, &mut evaluated);
    let (phi_max, argmax) = search(false, &mut evaluated);
    MSparseEigenReport {
        m,
        phi_min,
        phi_max,
        exhaustive: false,
        supports_evaluated: evaluated,
        argmin,
        argmax,
    }
}

/// `{(1−α)√s_p + α√(s_h/k)}²`, or with `corrected` the variant
/// `{(1−α̃)√(s_p/k) + α̃√(s_h/k)}²` in the reparameterized weight
/// `α̃ = α/((1−α)√k + α)`.
pub fn effective_sparsity(stats: &SupportStats, alpha: f64, k: usize, corrected: bool) -> f64 {
    effective_sparsity_counts(stats.s_h, stats.s_p, alpha, k, corrected)
}

pub fn effective_sparsity_counts(s_h: usize, s_p: usize, alpha: f64, k: usize, corrected: bool) -> f64 {
    let kf = k as f64;
    let (sh, sp) = (s_h as f64, s_p as f64);
    if corrected {
        let at = corrected_alpha(alpha, k);
        ((1.0 - at) * (sp / kf).sqrt() + at * (sh / kf).sqrt()).powi(2)
    } else {
        ((1.0 - alpha) * sp.sqrt() + alpha * (sh / kf).sqrt()).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudySpec {
    pub design: SparseDesign,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub cv_folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub fit: FitOptions,
}

impl RateStudySpec {
    pub fn new(design: SparseDesign, n_grid: Vec<usize>, seeds: Vec<u64>, alpha: f64) -> Self {
        Self {
            design,
            n_grid,
            seeds,
            alpha,
            cv_folds: 5,
            n_lambdas: 30,
            lambda_min_ratio: 1e-3,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    /// Mean over seeds of `‖B̂ − B*‖²_F / k` at the CV-selected λ.
    pub mean_error: f64,
    pub se: f64,
    /// `s̄ log(kp) / n̄` with the true support.
    pub reference: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Each mean is at most the previous one plus its standard error.
    pub monotone: bool,
    /// Largest over smallest fitted ratio.
    pub ratio_spread: f64,
}

/// Estimation error of the CV-tuned sparse multi-site Lasso across sample
/// sizes, next to the `s̄ log(kp)/n̄` envelope.
pub fn rate_report(spec: &RateStudySpec) -> Result<RateReport> {
    if spec.seeds.is_empty() || spec.n_grid.is_empty() {
        return Err(Error::InvalidArgument("need seeds and sample sizes".into()));
    }
    let mut rows = Vec::with_capacity(spec.n_grid.len());
    for &n in &spec.n_grid {
        let design = SparseDesign { n, ..spec.design };
        let errors = spec
            .seeds
            .iter()
            .map(|&seed| -> Result<(f64, f64)> {
                let draw = generate_sparse_with(&design, seed)?;
                let k = design.k as f64;
                let lmax = crate::smslasso::lambda_max(&draw.sites, spec.alpha, &spec.fit)?;
                let grid = crate::smslasso::default_lambda_grid(lmax, spec.n_lambdas, spec.lambda_min_ratio);
                let cv = CvOptions {
                    folds: spec.cv_folds,
                    seed,
                };
                let path = solution_path(&draw.sites, spec.alpha, Some(grid), Some(cv), &spec.fit)?;
                let best = path.cv.as_ref().map_or(0, |c| c.best_index);
                let err = (path.fits[best].as_matrix() - draw.b_true.as_matrix()).norm_squared() / k;
                let stats = draw.b_true.support_stats(0.0);
                let s_bar = effective_sparsity(&stats, spec.alpha, design.k, false);
                let reference = s_bar * (k * design.p as f64).ln() / n as f64;
                Ok((err, reference))
            })
            .collect::<Result<Vec<_>>>()?;
        let m = errors.len() as f64;
        let mean_error = errors.iter().map(|e| e.0).sum::<f64>() / m;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e.0 - mean_error).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let reference = errors.iter().map(|e| e.1).sum::<f64>() / m;
        rows.push(RateRow {
            n,
            mean_error,
            se: (var / m).sqrt(),
            reference,
            ratio: mean_error / reference,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].mean_error <= w[0].mean_error + w[1].se);
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    Ok(RateReport {
        rows,
        monotone,
        ratio_spread: hi / lo,
    })
}
