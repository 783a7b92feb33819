//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test -p poolcheck-cli --test acceptance -- 6 7`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use poolcheck::diagnostics::{m_sparse_eigenvalues, m_sparse_eigenvalues_seeded, rate_report, RateStudySpec};
use poolcheck::distributions::NoncentralChiSquare;
use poolcheck::inference::SimilarityVerdict;
use poolcheck::io::write_csv;
use poolcheck::lasso::{lasso_cd, CdOptions};
use poolcheck::pooltest::{build_g, noncentrality, pooled_estimate, pooling_test, Decision};
use poolcheck::regress::summarize;
use poolcheck::sim::{
    generate_shared_beta, run_lasso_paths, run_power_study, LassoStudyOptions, PowerRow, Scenario, ScenarioSpec,
    SparseDesign, SparsePattern,
};
use poolcheck::smslasso::{composite_prox, fit, lambda_max, objective, CoefficientMatrix, FitOptions, PenaltySpec};
use poolcheck::{PoolingTestResult, SiteDataset};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

const fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(60 * m))
}

const fn seconds(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "optimal site weight", budget: minutes(1), run: optimal_weight },
    Criterion { id: 2, name: "pooled vs single MSE, shared design", budget: minutes(2), run: shared_mse },
    Criterion { id: 3, name: "acceptance curve, shared design", budget: minutes(2), run: shared_acceptance },
    Criterion { id: 4, name: "MSE and acceptance, confounded design", budget: minutes(3), run: confounded },
    Criterion { id: 5, name: "type-I control at ncp = 1", budget: None, run: type_one },
    Criterion { id: 6, name: "noncentral chi-square oracle", budget: seconds(30), run: chi_square_oracle },
    Criterion { id: 7, name: "composite prox oracle", budget: seconds(30), run: prox_oracle },
    Criterion { id: 8, name: "lasso and group-lasso reductions", budget: minutes(2), run: reductions },
    Criterion { id: 9, name: "alpha selection on sparse designs", budget: minutes(10), run: alpha_selection },
    Criterion { id: 10, name: "estimation error decreases in n", budget: minutes(10), run: rate },
    Criterion { id: 11, name: "m-sparse heuristic bracket", budget: minutes(1), run: msparse_bracket },
    Criterion { id: 12, name: "summary-file pooling test", budget: None, run: privacy_path },
];

fn main() -> ExitCode {
    poolcheck::sim::configure_threads_from_env();
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let mut out = (c.run)();
        let took = start.elapsed();
        if let Some(b) = c.budget {
            if took > b {
                out.pass = false;
                out.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {:>2} ({}): {} [{:.1}s]", c.id, c.name, out.detail, took.as_secs_f64());
        if !out.pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

/// Monte Carlo variance of the pooled estimator's error across a grid of
/// second-site weights, with equal coefficients and common random numbers
/// across weights. Coefficients are redrawn per replicate, so the variance is
/// taken of `β̂ − β`.
fn optimal_weight() -> Outcome {
    let (n, reps) = (32, 2000);
    let grid: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
    let p = 3;
    let mut sum = vec![DVector::<f64>::zeros(p); grid.len()];
    let mut sumsq = vec![DVector::<f64>::zeros(p); grid.len()];
    for r in 0..reps {
        let draw = generate_shared_beta(n, 10_000 + r).unwrap();
        let [s1, s2] = draw.sites;
        let shift = &draw.beta[1] - &draw.beta[0];
        let s2 = SiteDataset {
            y: &s2.y - &s2.x * shift,
            ..s2
        };
        let sites = [s1, s2];
        for (g, &t) in grid.iter().enumerate() {
            let e = pooled_estimate(&sites, &[1.0, t]).unwrap() - &draw.beta[0];
            sum[g] += &e;
            sumsq[g] += e.component_mul(&e);
        }
    }
    let m = reps as f64;
    let var: Vec<f64> = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, q)| (q - s.component_mul(s) / m).sum() / (m - 1.0))
        .collect();
    let best = (0..grid.len()).min_by(|&a, &b| var[a].total_cmp(&var[b])).unwrap();
    let target = 3f64.sqrt() / 0.5f64.sqrt();
    Outcome::new(
        (grid[best] - target).abs() <= 0.25 + 1e-12,
        format!(
            "variance minimized at tau2 = {:.2} (optimum {target:.3}, grid step 0.25); variance there {:.4e}",
            grid[best], var[best]
        ),
    )
}

fn power_study(scenario: Scenario) -> Vec<PowerRow> {
    let spec = ScenarioSpec::new(scenario, 1);
    assert_eq!(spec.replicates, 100);
    run_power_study(&spec).unwrap().rows
}

/// Pooled MSE below single-site MSE at the smallest `n`, within 10% at the
/// largest.
fn mse_check(rows: &[PowerRow]) -> (bool, String) {
    let first = &rows[0];
    let last = rows.last().unwrap();
    let rel = (last.mse_pooled - last.mse_single).abs() / last.mse_single;
    let pass = first.mse_pooled < first.mse_single && rel <= 0.10;
    let detail = format!(
        "n={}: pooled {:.4e} vs single {:.4e}; n={}: pooled {:.4e} vs single {:.4e} (relative gap {:.1}%, pool-if-accepted {:.4e})",
        first.n,
        first.mse_pooled,
        first.mse_single,
        last.n,
        last.mse_pooled,
        last.mse_single,
        100.0 * rel,
        last.mse_gated
    );
    (pass, detail)
}

/// Acceptance at least 0.8 at the smallest `n`, at most 0.1 at the largest,
/// and no increase between neighbours beyond two standard errors of the
/// difference.
fn acceptance_check(rows: &[PowerRow]) -> (bool, String) {
    let first = rows[0].acceptance_rate;
    let last = rows.last().unwrap().acceptance_rate;
    let mut monotone = true;
    for w in rows.windows(2) {
        let (a, b) = (w[0].acceptance_rate, w[1].acceptance_rate);
        let se = (a * (1.0 - a) / w[0].replicates as f64 + b * (1.0 - b) / w[1].replicates as f64).sqrt();
        monotone &= b <= a + 2.0 * se;
    }
    let curve: Vec<String> = rows.iter().map(|r| format!("{}:{:.2}", r.n, r.acceptance_rate)).collect();
    (
        first >= 0.8 && last <= 0.1 && monotone,
        format!("acceptance {} (monotone within MC error: {monotone})", curve.join(" ")),
    )
}

fn shared_mse() -> Outcome {
    let (pass, detail) = mse_check(&power_study(Scenario::SharedBeta));
    Outcome::new(pass, detail)
}

fn shared_acceptance() -> Outcome {
    let (pass, detail) = acceptance_check(&power_study(Scenario::SharedBeta));
    Outcome::new(pass, detail)
}

fn confounded() -> Outcome {
    let rows = power_study(Scenario::ConfoundedBeta);
    let (p1, d1) = mse_check(&rows);
    let (p2, d2) = acceptance_check(&rows);
    Outcome::new(p1 && p2, format!("{d1}; {d2}"))
}

/// Shared-design replicates whose coefficient difference is rescaled so the
/// true noncentrality, at the realized designs and true weights, is exactly 1.
fn type_one() -> Outcome {
    let (n, reps) = (200, 1000);
    let sd = [3f64.sqrt(), 0.5f64.sqrt()];
    let tau = [1.0, sd[0] / sd[1]];
    let mut rejected = 0;
    for r in 0..reps {
        let draw = generate_shared_beta(n, 20_000 + r).unwrap();
        let [s1, s2] = draw.sites;
        let old = [summarize(&s1).unwrap(), summarize(&s2).unwrap()];
        let g = build_g(&old, &tau).unwrap();
        let shift = &draw.beta[1] - &draw.beta[0];
        let scale = noncentrality(&g, &shift, sd[0]).unwrap().sqrt();
        let delta = &shift / scale;
        assert!((noncentrality(&g, &delta, sd[0]).unwrap() - 1.0).abs() < 1e-9);
        let s2 = SiteDataset {
            y: &s2.y + &s2.x * (&delta - &shift),
            ..s2
        };
        let summaries = [summarize(&s1).unwrap(), summarize(&s2).unwrap()];
        let test = pooling_test(&summaries, 0.05, None).unwrap();
        rejected += usize::from(test.decision == Decision::RejectPooling);
    }
    let rate = rejected as f64 / reps as f64;
    let bound = 0.05 + 2.0 * (0.05f64 * 0.95 / reps as f64).sqrt();
    Outcome::new(
        rate <= bound,
        format!("rejection rate {rate:.3} over {reps} replicates (bound {bound:.4})"),
    )
}

fn chi_square_oracle() -> Outcome {
    let grid = common::oracle_grid();
    let mut cdf_err = 0.0f64;
    let mut q_err = 0.0f64;
    for &(x, df, ncp) in &grid {
        let law = NoncentralChiSquare::new(df, ncp).unwrap();
        cdf_err = cdf_err.max((law.cdf(x).unwrap() - common::ncx2_cdf_quadrature(x, df, ncp)).abs());
        for &p in &[0.01, 0.05, 0.5, 0.95, 0.99] {
            let q = law.quantile(p).unwrap();
            q_err = q_err.max((law.cdf(q).unwrap() - p).abs());
        }
    }
    Outcome::new(
        grid.len() == 50 && cdf_err <= 1e-8 && q_err <= 1e-6,
        format!(
            "{} grid points: max CDF error {cdf_err:.2e}, max quantile round-trip error {q_err:.2e}",
            grid.len()
        ),
    )
}

fn prox_oracle() -> Outcome {
    let mut rng = common::rng(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t1 = rng.random_range(0.0..1.5);
        let t2 = rng.random_range(0.0..2.5);
        let got = composite_prox(&v, t1, t2);
        let want = common::prox_admm(&v, t1, t2);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    Outcome::new(worst <= 1e-6, format!("1000 instances: max deviation {worst:.2e}"))
}

fn tight() -> FitOptions {
    FitOptions {
        resid_tol: 1e-10,
        rel_tol: 1e-14,
        max_iter: 200_000,
        ..FitOptions::default()
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn reductions() -> Outcome {
    let cd = CdOptions {
        tol: 1e-14,
        ..CdOptions::default()
    };
    let mut lasso_gap = 0.0f64;
    let mut group_gap = 0.0f64;
    for seed in 0..10 {
        let data = common::multi_site_instance(seed, 3, 30, 20);
        let lam = 0.2 * lambda_max(&data, 1.0, &FitOptions::default()).unwrap();
        let spec = PenaltySpec::new(lam, 1.0).unwrap();
        let f = fit(&data, &spec, &tight()).unwrap();
        let mut b = DMatrix::zeros(3, 20);
        for (i, d) in data.iter().enumerate() {
            b.row_mut(i).copy_from(&lasso_cd(&d.x, &d.y, lam, None, &cd).transpose());
        }
        let oracle = objective(&data, &CoefficientMatrix(b), &spec);
        lasso_gap = lasso_gap.max(rel_gap(objective(&data, &f.coef, &spec), oracle));

        let data = common::multi_site_instance(100 + seed, 3, 30, 20);
        let lam = 0.2 * lambda_max(&data, 0.0, &FitOptions::default()).unwrap();
        let spec = PenaltySpec::new(lam, 0.0).unwrap();
        let f = fit(&data, &spec, &tight()).unwrap();
        let xs: Vec<_> = data.iter().map(|d| d.x.clone()).collect();
        let ys: Vec<_> = data.iter().map(|d| d.y.clone()).collect();
        let b = common::group_lasso_bcd(&xs, &ys, lam * 3f64.sqrt(), 100_000);
        let oracle = objective(&data, &CoefficientMatrix(b), &spec);
        group_gap = group_gap.max(rel_gap(objective(&data, &f.coef, &spec), oracle));
    }
    Outcome::new(
        lasso_gap <= 1e-5 && group_gap <= 1e-5,
        format!("max relative objective gap: alpha=1 {lasso_gap:.2e}, alpha=0 {group_gap:.2e} (10 instances each)"),
    )
}

/// 10-fold CV on a 50-point λ grid down to `10⁻³ λ_max`.
fn alpha_selection() -> Outcome {
    let opts = LassoStudyOptions {
        n_lambdas: 50,
        ..LassoStudyOptions::default()
    };
    assert_eq!((opts.cv_folds, opts.lambda_min_ratio), (10, 1e-3));
    let comparators = [0.0, 0.05, 0.95, 1.0];
    let mut pass = true;
    let mut parts = Vec::new();
    for (pattern, want) in [
        (SparsePattern::FewShared, SimilarityVerdict::Different),
        (SparsePattern::MostShared, SimilarityVerdict::Similar),
    ] {
        let study = run_lasso_paths(pattern, &comparators, 1, &opts).unwrap();
        let chosen = study.chosen();
        let verdict = study.selection.similarity_verdict;
        let beaten: Vec<f64> = study
            .rows
            .iter()
            .filter(|r| !r.chosen && chosen.min_cv_error > r.min_cv_error + chosen.se_at_min)
            .map(|r| r.alpha)
            .collect();
        pass &= verdict == want && beaten.is_empty();
        let errors: Vec<String> = study
            .rows
            .iter()
            .map(|r| format!("{}{}:{:.3}", r.alpha, if r.chosen { "*" } else { "" }, r.min_cv_error))
            .collect();
        parts.push(format!(
            "{pattern:?}: verdict {verdict:?} (want {want:?}, mean Jaccard {:.3}), alpha {}, min CV error {} (SE {:.3}), beaten by {beaten:?}",
            study.selection.mean_jaccard,
            chosen.alpha,
            errors.join(" "),
            chosen.se_at_min
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn rate() -> Outcome {
    let design = SparseDesign::new(SparsePattern::MostShared);
    let spec = RateStudySpec::new(design, vec![50, 100, 150, 300], (0..20).collect(), 0.25);
    let report = rate_report(&spec).unwrap();
    let curve: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}:{:.3}±{:.3}", r.n, r.mean_error, r.se))
        .collect();
    Outcome::new(
        report.monotone,
        format!("MostShared, alpha 0.25, 20 seeds: error/k {}", curve.join(" ")),
    )
}

fn msparse_bracket() -> Outcome {
    let mut outside = Vec::new();
    for seed in 0..50 {
        let c = common::random_gram(1000 + seed, 12);
        let exact = m_sparse_eigenvalues(&c, 3.0, 1_000_000).unwrap();
        let approx = m_sparse_eigenvalues_seeded(&c, 3.0, 0, seed).unwrap();
        assert!(exact.exhaustive && !approx.exhaustive);
        if approx.phi_min < exact.phi_min - 1e-12 || approx.phi_max > exact.phi_max + 1e-12 {
            outside.push(seed);
        }
    }
    Outcome::new(
        outside.is_empty(),
        format!("50 matrices of dimension 12, m = 3: bounds outside the exhaustive values for seeds {outside:?}"),
    )
}

fn privacy_path() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let draw = generate_shared_beta(64, 3).unwrap();
    let bin = env!("CARGO_BIN_EXE_poolcheck");
    let mut summaries = Vec::new();
    for s in &draw.sites {
        let csv = dir.path().join(format!("{}.csv", s.site_id));
        let json = dir.path().join(format!("{}.json", s.site_id));
        write_csv(s, &csv, "y").unwrap();
        let out = Command::new(bin)
            .args(["fit-site", csv.to_str().unwrap(), "--out", json.to_str().unwrap()])
            .output()
            .unwrap();
        if !out.status.success() {
            return Outcome::new(false, format!("fit-site exited with {}", out.status));
        }
        summaries.push(json);
    }
    let out = Command::new(bin)
        .args(["--json", "pool-test", summaries[0].to_str().unwrap(), summaries[1].to_str().unwrap()])
        .output()
        .unwrap();
    if !out.status.success() {
        return Outcome::new(false, format!("pool-test exited with {}", out.status));
    }
    let got: PoolingTestResult = serde_json::from_slice(&out.stdout).unwrap();
    let in_memory: Vec<_> = draw.sites.iter().map(|s| summarize(s).unwrap()).collect();
    let want = pooling_test(&in_memory, 0.05, None).unwrap();
    let same = got == want && serde_json::to_string(&got).unwrap() == serde_json::to_string(&want).unwrap();
    Outcome::new(
        same,
        format!(
            "statistic {:.17e} from files vs {:.17e} in memory, decision {:?}",
            got.statistic, want.statistic, got.decision
        ),
    )
}
