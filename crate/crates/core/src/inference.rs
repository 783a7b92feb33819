//! Per-site variable selection with familywise error control, choice of
//! the multi-site mixing weight `α`, and the pooling test restricted to a
//! selected support.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::lasso::{lasso_cv, LassoCvOptions};
use crate::linalg::{select_columns, select_entries, select_rows};
use crate::pooltest::{pooling_test, PoolingTestResult};
use crate::regress::{summarize, SiteDataset};
use crate::sim::substream;
use crate::smslasso::{fit_from, support_stats, CoefficientMatrix, FitOptions, PenaltySpec, DEFAULT_SUPPORT_TOL};

/// Resplits attempted per split before giving up.
pub const MAX_RESPLITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MssOptions {
    pub n_splits: usize,
    pub alpha_fwer: f64,
    /// Quantile level used to aggregate p-values across splits.
    pub gamma: f64,
    pub seed: u64,
    pub lasso: LassoCvOptions,
}

impl Default for MssOptions {
    fn default() -> Self {
        Self {
            n_splits: 50,
            alpha_fwer: 0.05,
            gamma: 0.5,
            seed: 0,
            lasso: LassoCvOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousInferenceResult {
    /// Aggregated, familywise-adjusted p-value per feature.
    pub p_values: Vec<f64>,
    pub selected: BTreeSet<usize>,
    pub alpha_fwer: f64,
    pub n_splits: usize,
    /// Bonferroni-adjusted p-values of each split, `n_splits × p`.
    pub split_p_values: Vec<Vec<f64>>,
}

/// Adjusted p-values of one split: Lasso selection on one half, OLS
/// t-tests on the other, Bonferroni over the selected set. `None` when the
/// second-half regression is degenerate.
fn one_split(x: &DMatrix<f64>, y: &DVector<f64>, order: &[usize], lasso: &LassoCvOptions) -> Result<Option<Vec<f64>>> {
    let n = y.len();
    let p = x.ncols();
    let half = n / 2;
    let (a, b) = order.split_at(half);
    let (xa, ya) = (select_rows(x, a), select_entries(y, a));
    let cv = match lasso_cv(&xa, &ya, lasso) {
        Ok(cv) => cv,
        Err(Error::InvalidArgument(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut chosen: Vec<usize> = (0..p).filter(|&j| cv.coef[j] != 0.0).collect();
    let cap = (n / 4).max(1);
    if chosen.len() > cap {
        chosen.sort_by(|&i, &j| cv.coef[j].abs().total_cmp(&cv.coef[i].abs()));
        chosen.truncate(cap);
        chosen.sort_unstable();
    }
    let mut out = vec![1.0; p];
    if chosen.is_empty() {
        return Ok(Some(out));
    }
    let xb = select_columns(&select_rows(x, b), &chosen);
    let yb = select_entries(y, b);
    let (beta, se, df) = match crate::regress::ols_with_standard_errors(&xb, &yb) {
        Ok(r) => r,
        Err(Error::RankDeficient { .. }) | Err(Error::Underdetermined { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if se.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Ok(None);
    }
    let t = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let m = chosen.len() as f64;
    for (pos, &j) in chosen.iter().enumerate() {
        let p_raw = 2.0 * t.sf((beta[pos] / se[pos]).abs());
        out[j] = (p_raw * m).min(1.0);
    }
    Ok(Some(out))
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(mut v: Vec<f64>, level: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Multi sample-splitting p-values for one site's predictors.
pub fn multi_sample_splitting(data: &SiteDataset, opts: &MssOptions) -> Result<SimultaneousInferenceResult> {
    if opts.n_splits == 0 {
        return Err(Error::InvalidArgument("at least one split is required".into()));
    }
    if !(opts.alpha_fwer > 0.0 && opts.alpha_fwer < 1.0) || !(opts.gamma > 0.0 && opts.gamma <= 1.0) {
        return Err(Error::InvalidArgument("alpha_fwer must lie in (0, 1) and gamma in (0, 1]".into()));
    }
    let n = data.n();
    let p = data.p();
    let mut split_p_values = Vec::with_capacity(opts.n_splits);
    for b in 0..opts.n_splits {
        let mut done = None;
        for attempt in 0..MAX_RESPLITS {
            let stream = (b as u64) | ((attempt as u64) << 32);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut substream(opts.seed, stream));
            if let Some(pv) = one_split(&data.x, &data.y, &order, &opts.lasso)? {
                done = Some(pv);
                break;
            }
        }
        match done {
            Some(pv) => split_p_values.push(pv),
            None => {
                return Err(Error::DegenerateSplit {
                    attempts: MAX_RESPLITS,
                    reason: format!("site {}: no usable split among {MAX_RESPLITS} attempts", data.site_id),
                })
            }
        }
    }
    let p_values: Vec<f64> = if opts.n_splits == 1 {
        split_p_values[0].clone()
    } else {
        (0..p)
            .map(|j| {
                let v = split_p_values.iter().map(|s| s[j] / opts.gamma).collect();
                quantile(v, opts.gamma).min(1.0)
            })
            .collect()
    };
    let selected = (0..p).filter(|&j| p_values[j] <= opts.alpha_fwer).collect();
    Ok(SimultaneousInferenceResult {
        p_values,
        selected,
        alpha_fwer: opts.alpha_fwer,
        n_splits: opts.n_splits,
        split_p_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimilarityVerdict {
    Similar,
    Different,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelectionOptions {
    pub mss: MssOptions,
    /// Per-site Lasso CV used to set the multi-site λ.
    pub lasso: LassoCvOptions,
    pub jaccard_threshold: f64,
    pub fit: FitOptions,
}

impl Default for AlphaSelectionOptions {
    fn default() -> Self {
        Self {
            mss: MssOptions::default(),
            lasso: LassoCvOptions::default(),
            jaccard_threshold: 0.5,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelectionReport {
    pub site_active_sets: Vec<BTreeSet<usize>>,
    pub mean_jaccard: f64,
    pub similarity_verdict: SimilarityVerdict,
    pub site_lambdas: Vec<f64>,
    pub lambda_multisite: f64,
    /// `(α, number of always-active features)` in grid order.
    pub always_active_count_by_alpha: Vec<(f64, usize)>,
    pub chosen_alpha: f64,
}

/// `{0, 0.05, …, 0.95, 0.97, 0.99, 1}`.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..20).map(|i| (5 * i) as f64 / 100.0).collect();
    g.extend([0.97, 0.99, 1.0]);
    g
}

fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Mean pairwise Jaccard index of the site sets.
pub fn mean_pairwise_jaccard(sets: &[BTreeSet<usize>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            total += jaccard(&sets[i], &sets[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        1.0
    } else {
        total / pairs as f64
    }
}

/// Choice of `α` from the per-site significant sets and the always-active
/// counts of multi-site fits along the grid.
///
/// Similar supports favor the largest `α` reaching the maximal count;
/// dissimilar supports favor the smallest `α` reaching the minimal count.
pub fn select_alpha(
    datasets: &[SiteDataset],
    alpha_grid: Option<Vec<f64>>,
    opts: &AlphaSelectionOptions,
) -> Result<AlphaSelectionReport> {
    let grid = alpha_grid.unwrap_or_else(default_alpha_grid);
    if grid.is_empty() || grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument("alpha grid must be nonempty and within [0, 1]".into()));
    }
    let site_active_sets: Vec<BTreeSet<usize>> = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mss = MssOptions {
                seed: opts.mss.seed.wrapping_add(i as u64),
                ..opts.mss
            };
            multi_sample_splitting(d, &mss).map(|r| r.selected)
        })
        .collect::<Result<_>>()?;
    if site_active_sets.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyActiveSets);
    }
    let mean_jaccard = mean_pairwise_jaccard(&site_active_sets);
    let similarity_verdict = if mean_jaccard >= opts.jaccard_threshold {
        SimilarityVerdict::Similar
    } else {
        SimilarityVerdict::Different
    };

    let site_lambdas: Vec<f64> = datasets
        .iter()
        .map(|d| lasso_cv(&d.x, &d.y, &opts.lasso).map(|cv| cv.best_lambda))
        .collect::<Result<_>>()?;
    let lambda_multisite = site_lambdas.iter().copied().fold(f64::INFINITY, f64::min);

    let mut warm: Option<CoefficientMatrix> = None;
    let mut counts = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        let spec = PenaltySpec::new(lambda_multisite, alpha)?;
        let f = fit_from(datasets, &spec, &opts.fit, warm.as_ref())?;
        counts.push((alpha, support_stats(&f.coef, DEFAULT_SUPPORT_TOL).always_active.len()));
        warm = Some(f.coef);
    }
    let chosen_alpha = choose_alpha(&counts, similarity_verdict);
    Ok(AlphaSelectionReport {
        site_active_sets,
        mean_jaccard,
        similarity_verdict,
        site_lambdas,
        lambda_multisite,
        always_active_count_by_alpha: counts,
        chosen_alpha,
    })
}

/// Extreme `α` attaining the extreme always-active count for the verdict.
pub fn choose_alpha(counts: &[(f64, usize)], verdict: SimilarityVerdict) -> f64 {
    match verdict {
        SimilarityVerdict::Similar => {
            let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
            counts
                .iter()
                .filter(|c| c.1 == best)
                .map(|c| c.0)
                .fold(f64::NEG_INFINITY, f64::max)
        }
        SimilarityVerdict::Different => {
            let best = counts.iter().map(|c| c.1).min().unwrap_or(0);
            counts
                .iter()
                .filter(|c| c.1 == best)
                .map(|c| c.0)
                .fold(f64::INFINITY, f64::min)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoolingResult {
    pub test: PoolingTestResult,
    pub selection: AlphaSelectionReport,
    /// Features tested, as column indices of the input.
    pub support: Vec<usize>,
}

/// Pooling test on the features active at every site in the multi-site fit
/// at the selected `α`.
pub fn selected_pooling_test(
    datasets: &[SiteDataset],
    significance: f64,
    opts: &AlphaSelectionOptions,
) -> Result<SelectedPoolingResult> {
    let selection = select_alpha(datasets, None, opts)?;
    selected_pooling_test_with(datasets, significance, selection, opts)
}

/// As [`selected_pooling_test`] with an already computed selection report.
pub fn selected_pooling_test_with(
    datasets: &[SiteDataset],
    significance: f64,
    selection: AlphaSelectionReport,
    opts: &AlphaSelectionOptions,
) -> Result<SelectedPoolingResult> {
    let spec = PenaltySpec::new(selection.lambda_multisite, selection.chosen_alpha)?;
    let f = fit_from(datasets, &spec, &opts.fit, None)?;
    let stats = support_stats(&f.coef, DEFAULT_SUPPORT_TOL);
    let support: Vec<usize> = stats.always_active.iter().copied().collect();
    if support.is_empty() {
        return Err(Error::EmptyActiveSets);
    }
    let margin = stats.s_p.max(5);
    let min_n = datasets.iter().map(|d| d.n()).min().unwrap_or(0);
    if min_n < support.len() + margin {
        return Err(Error::SupportTooLarge {
            support: support.len(),
            min_n,
            margin,
        });
    }
    let summaries = datasets
        .iter()
        .map(|d| summarize(&d.select_features(&support)))
        .collect::<Result<Vec<_>>>()?;
    let mut test = pooling_test(&summaries, significance, None)?;
    test.support = Some(support.clone());
    Ok(SelectedPoolingResult {
        test,
        selection,
        support,
    })
}
