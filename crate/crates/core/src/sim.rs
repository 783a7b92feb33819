//! Seeded data generators and the Monte Carlo harness.
//!
//! Every replicate draws from its own ChaCha8 stream, addressed by
//! `(seed, stream)`, so results do not depend on scheduling or worker count.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{select_alpha, AlphaSelectionOptions, AlphaSelectionReport};
use crate::linalg::spd_inverse;
use crate::pooltest::{build_g, noncentrality, pooled_estimate, pooling_test, Decision, DEFAULT_SIGNIFICANCE};
use crate::regress::{default_names, summarize, SiteDataset};
use crate::smslasso::{solution_path, support_stats, CoefficientMatrix, CvOptions, FitOptions, DEFAULT_SUPPORT_TOL};

/// Independent, reproducible random stream `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the global rayon pool with at most `POOLCHECK_THREADS` workers
/// when that variable is set. Has no effect once the pool exists.
pub fn configure_threads_from_env() {
    if let Some(n) = std::env::var("POOLCHECK_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Rows from `N(0, (1 − ρ)I + ρE)`, drawn as `√(1−ρ)·z + √ρ·w·1`.
fn equicorrelated(rng: &mut impl Rng, n: usize, p: usize, rho: f64) -> DMatrix<f64> {
    let a = (1.0 - rho).sqrt();
    let b = rho.sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = a * z + b * w;
        }
    }
    x
}

fn noise(rng: &mut impl Rng, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Two sites sharing equicorrelated designs, with `β₂ = β₁ + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSiteDesign {
    pub p: usize,
    /// Off-diagonal correlation of the predictors.
    pub rho: f64,
    pub noise_sd: [f64; 2],
    /// Added to every coordinate of `β₁` to get `β₂`.
    pub shift: f64,
    /// `β₁` has independent `U(0, beta_upper)` coordinates.
    pub beta_upper: f64,
}

impl TwoSiteDesign {
    /// Three predictors with `Σ = 0.5(I + E)`, noise variances 3 and 0.5,
    /// and a shift of 0.1.
    pub fn shared_beta() -> Self {
        Self {
            p: 3,
            rho: 0.5,
            noise_sd: [3f64.sqrt(), 0.5f64.sqrt()],
            shift: 0.1,
            beta_upper: 4.0,
        }
    }

    /// Population covariance of the predictors.
    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| if i == j { 1.0 } else { self.rho })
    }
}

/// Confound coefficients of the first site in the confounded design.
pub const CONFOUND_GAMMA_1: [f64; 5] = [1.0, 1.0, 2.0, 2.0, 2.0];
/// Confound coefficients of the second site in the confounded design.
pub const CONFOUND_GAMMA_2: [f64; 5] = [2.0, 2.0, 2.0, 1.0, 1.0];

/// Joint covariance of `(X, Z)` in the confounded design: `0.5(I+E)` on the
/// three predictors, `0.8I + 0.2E` on the five confounds, `0.2` across.
pub fn confounded_covariance() -> DMatrix<f64> {
    DMatrix::from_fn(8, 8, |i, j| match (i < 3, j < 3) {
        _ if i == j => 1.0,
        (true, true) => 0.5,
        _ => 0.2,
    })
}

/// Simulated sites with the coefficients that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteDraw {
    pub sites: [SiteDataset; 2],
    pub beta: [DVector<f64>; 2],
    pub gamma: Option<[DVector<f64>; 2]>,
    pub noise_sd: [f64; 2],
}

fn draw_beta(rng: &mut impl Rng, design: &TwoSiteDesign) -> [DVector<f64>; 2] {
    let u = Uniform::new(0.0, design.beta_upper).expect("positive upper bound");
    let b1 = DVector::from_fn(design.p, |_, _| u.sample(rng));
    let b2 = b1.add_scalar(design.shift);
    [b1, b2]
}

fn two_site_from(
    beta_rng: &mut impl Rng,
    data_rng: &mut impl Rng,
    n: usize,
    design: &TwoSiteDesign,
) -> Result<TwoSiteDraw> {
    let beta = draw_beta(beta_rng, design);
    let names = default_names("x", design.p);
    let mut sites = Vec::with_capacity(2);
    for i in 0..2 {
        let x = equicorrelated(data_rng, n, design.p, design.rho);
        let y = &x * &beta[i] + noise(data_rng, n, design.noise_sd[i]);
        sites.push(SiteDataset::new(format!("site{}", i + 1), x, None, y, names.clone(), Vec::new())?);
    }
    let [a, b]: [SiteDataset; 2] = sites.try_into().expect("two sites");
    Ok(TwoSiteDraw {
        sites: [a, b],
        beta,
        gamma: None,
        noise_sd: design.noise_sd,
    })
}

fn confounded_from(beta_rng: &mut impl Rng, data_rng: &mut impl Rng, n: usize) -> Result<TwoSiteDraw> {
    let design = TwoSiteDesign::shared_beta();
    let beta = draw_beta(beta_rng, &design);
    let chol = confounded_covariance()
        .cholesky()
        .expect("confounded covariance is positive definite");
    let gamma = [
        DVector::from_row_slice(&CONFOUND_GAMMA_1),
        DVector::from_row_slice(&CONFOUND_GAMMA_2),
    ];
    let names = default_names("x", 3);
    let znames = default_names("z", 5);
    let mut sites = Vec::with_capacity(2);
    for i in 0..2 {
        let xz = normal_matrix(data_rng, n, 8) * chol.l().transpose();
        let x = xz.columns(0, 3).into_owned();
        let z = xz.columns(3, 5).into_owned();
        let y = &x * &beta[i] + &z * &gamma[i] + noise(data_rng, n, design.noise_sd[i]);
        sites.push(SiteDataset::new(
            format!("site{}", i + 1),
            x,
            Some(z),
            y,
            names.clone(),
            znames.clone(),
        )?);
    }
    let [a, b]: [SiteDataset; 2] = sites.try_into().expect("two sites");
    Ok(TwoSiteDraw {
        sites: [a, b],
        beta,
        gamma: Some(gamma),
        noise_sd: design.noise_sd,
    })
}

fn check_min_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidArgument(format!("need n >= {min}, got {n}")));
    }
    Ok(())
}

/// Two sites with `Σ = 0.5(I + E)`, `β₁ ~ U(0, 4)³`, `β₂ = β₁ + 0.1`, and
/// noise variances 3 and 0.5.
pub fn generate_shared_beta(n: usize, seed: u64) -> Result<TwoSiteDraw> {
    generate_two_site(n, &TwoSiteDesign::shared_beta(), seed)
}

pub fn generate_two_site(n: usize, design: &TwoSiteDesign, seed: u64) -> Result<TwoSiteDraw> {
    check_min_n(n, design.p + 1)?;
    let mut rng = substream(seed, 0);
    let mut data = substream(seed, 1);
    two_site_from(&mut rng, &mut data, n, design)
}

/// The shared-β design with five correlated confounds per site and
/// site-specific confound coefficients.
pub fn generate_confounded(n: usize, seed: u64) -> Result<TwoSiteDraw> {
    check_min_n(n, 9)?;
    let mut rng = substream(seed, 0);
    let mut data = substream(seed, 1);
    confounded_from(&mut rng, &mut data, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SparsePattern {
    /// 6 shared and 14 site-specific active features.
    FewShared,
    /// 16 shared and 4 site-specific active features.
    MostShared,
}

impl SparsePattern {
    fn counts(self) -> (usize, usize) {
        match self {
            SparsePattern::FewShared => (6, 14),
            SparsePattern::MostShared => (16, 4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseDesign {
    pub pattern: SparsePattern,
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub noise_sd: f64,
}

impl SparseDesign {
    /// Four sites, 150 rows each, 400 features, unit noise.
    pub fn new(pattern: SparsePattern) -> Self {
        Self {
            pattern,
            k: 4,
            n: 150,
            p: 400,
            noise_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDraw {
    pub sites: Vec<SiteDataset>,
    pub b_true: CoefficientMatrix,
    pub shared: BTreeSet<usize>,
    pub specific: Vec<BTreeSet<usize>>,
}

/// Sparse multi-site data with `Σ = 0.8I + 0.2E`. In the few-shared
/// pattern the shared coefficients are `U(0, 4)` at the first two sites and
/// `U(0, 0.5)` elsewhere; all other active coefficients are `U(0, 4)`.
pub fn generate_sparse(pattern: SparsePattern, seed: u64) -> Result<SparseDraw> {
    generate_sparse_with(&SparseDesign::new(pattern), seed)
}

pub fn generate_sparse_with(design: &SparseDesign, seed: u64) -> Result<SparseDraw> {
    let (n_shared, n_specific) = design.pattern.counts();
    let needed = n_shared + design.k * n_specific;
    if design.p < needed {
        return Err(Error::InvalidArgument(format!(
            "p = {} cannot hold {needed} active features",
            design.p
        )));
    }
    if design.k < 1 || design.n < 2 {
        return Err(Error::InvalidArgument("need k >= 1 and n >= 2".into()));
    }
    let mut rng = substream(seed, 0);
    let picked = sample(&mut rng, design.p, needed).into_vec();
    let shared: BTreeSet<usize> = picked[..n_shared].iter().copied().collect();
    let specific: Vec<BTreeSet<usize>> = (0..design.k)
        .map(|i| {
            let start = n_shared + i * n_specific;
            picked[start..start + n_specific].iter().copied().collect()
        })
        .collect();
    let wide = Uniform::new(0.0, 4.0).expect("valid range");
    let narrow = Uniform::new(0.0, 0.5).expect("valid range");
    let mut b = DMatrix::zeros(design.k, design.p);
    for i in 0..design.k {
        for &j in &shared {
            let law = match design.pattern {
                SparsePattern::FewShared if i >= 2 => &narrow,
                _ => &wide,
            };
            b[(i, j)] = law.sample(&mut rng);
        }
        for &j in &specific[i] {
            b[(i, j)] = wide.sample(&mut rng);
        }
    }
    let names = default_names("x", design.p);
    let sites = (0..design.k)
        .map(|i| {
            let mut data = substream(seed, 1 + i as u64);
            let x = equicorrelated(&mut data, design.n, design.p, 0.2);
            let beta = b.row(i).transpose();
            let y = &x * beta + noise(&mut data, design.n, design.noise_sd);
            SiteDataset::new(format!("site{}", i + 1), x, None, y, names.clone(), Vec::new())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseDraw {
        sites,
        b_true: CoefficientMatrix(b),
        shared,
        specific,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    SharedBeta,
    ConfoundedBeta,
    FewShared,
    MostShared,
    /// User-configured two-site design; a synthetic demo, not one of the
    /// reference experiments.
    Custom,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::SharedBeta => "shared-beta",
            Scenario::ConfoundedBeta => "confounded",
            Scenario::FewShared => "few-shared",
            Scenario::MostShared => "most-shared",
            Scenario::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "shared-beta" => Scenario::SharedBeta,
            "confounded" | "confounded-beta" => Scenario::ConfoundedBeta,
            "few-shared" => Scenario::FewShared,
            "most-shared" => Scenario::MostShared,
            "custom" => Scenario::Custom,
            other => return Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        })
    }
}

/// Sample sizes `2⁴, 2⁵, …, 2¹²`.
pub fn default_n_grid() -> Vec<usize> {
    (4..=12).map(|b| 1usize << b).collect()
}

/// Configuration of a two-site power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub significance: f64,
    /// Design used by [`Scenario::Custom`].
    pub custom: Option<TwoSiteDesign>,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, base_seed: u64) -> Self {
        Self {
            scenario,
            n_grid: default_n_grid(),
            replicates: 100,
            base_seed,
            significance: DEFAULT_SIGNIFICANCE,
            custom: None,
        }
    }
}

/// Per-sample-size summary over replicates. MSEs are of `β̂` against the
/// first site's true coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n: usize,
    pub replicates: usize,
    pub mse_single: f64,
    pub mse_single_se: f64,
    pub mse_pooled: f64,
    pub mse_pooled_se: f64,
    /// MSE of the estimator that pools only when the test accepts.
    pub mse_gated: f64,
    pub acceptance_rate: f64,
    /// Mean of the estimated condition value `√statistic`.
    pub condition_value_mean: f64,
    /// Mean of the condition value computed from the true `Δβ`, `τ`, `σ₁`.
    pub true_condition_mean: f64,
    /// Rejection rate among replicates with true non-centrality ≤ 1.
    pub type1: Option<f64>,
    pub type1_count: usize,
    /// Rejection rate among replicates where the single-site estimator has
    /// the smaller conditional MSE.
    pub power: Option<f64>,
    pub power_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub base_seed: u64,
    pub replicates: usize,
    pub significance: f64,
    pub rows: Vec<PowerRow>,
    /// Seconds spent; excluded from serialization so reports compare equal.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SimulationReport {
    pub const CSV_HEADER: &'static str = "n,replicates,mse_single,mse_single_se,mse_pooled,mse_pooled_se,mse_gated,acceptance_rate,condition_value_mean,true_condition_mean,type1,type1_count,power,power_count";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.16e}"));
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}\n",
                r.n,
                r.replicates,
                r.mse_single,
                r.mse_single_se,
                r.mse_pooled,
                r.mse_pooled_se,
                r.mse_gated,
                r.acceptance_rate,
                r.condition_value_mean,
                r.true_condition_mean,
                opt(r.type1),
                r.type1_count,
                opt(r.power),
                r.power_count
            ));
        }
        out
    }
}

struct ReplicateOutcome {
    err_single: f64,
    err_pooled: f64,
    accepted: bool,
    condition_hat: f64,
    true_ncp: f64,
    single_better: bool,
}

/// Conditional (given the designs) MSEs of the single-site and the pooled
/// estimator at the true weights.
fn conditional_mses(
    scatter: [&DMatrix<f64>; 2],
    delta: &DVector<f64>,
    sigma: [f64; 2],
    tau2: f64,
) -> Result<(f64, f64)> {
    let a1_inv = spd_inverse(scatter[0])
        .ok_or_else(|| Error::SingularSiteCovariance("site 1 scatter".into()))?;
    let single = sigma[0].powi(2) * a1_inv.trace();
    let m = spd_inverse(&(scatter[0] + scatter[1] * tau2))
        .ok_or_else(|| Error::SingularSiteCovariance("pooled scatter".into()))?;
    let bias = &m * (scatter[1] * delta) * tau2;
    let inner = scatter[0] * sigma[0].powi(2) + scatter[1] * (tau2 * tau2 * sigma[1].powi(2));
    let var = (&m * inner * &m).trace();
    Ok((single, bias.norm_squared() + var))
}

fn run_replicate(draw: &TwoSiteDraw, significance: f64) -> Result<ReplicateOutcome> {
    let summaries = [summarize(&draw.sites[0])?, summarize(&draw.sites[1])?];
    let test = pooling_test(&summaries, significance, None)?;
    let pooled = pooled_estimate(&draw.sites, &test.tau)?;
    let single = &summaries[0].beta_hat;
    let truth = &draw.beta[0];

    let tau2 = draw.noise_sd[0] / draw.noise_sd[1];
    let delta = &draw.beta[1] - &draw.beta[0];
    let g = build_g(&summaries, &[1.0, tau2])?;
    let true_ncp = noncentrality(&g, &delta, draw.noise_sd[0])?;
    let (mse_single, mse_pooled) = conditional_mses(
        [&summaries[0].scatter(), &summaries[1].scatter()],
        &delta,
        draw.noise_sd,
        tau2 * tau2,
    )?;
    Ok(ReplicateOutcome {
        err_single: (single - truth).norm_squared(),
        err_pooled: (&pooled - truth).norm_squared(),
        accepted: test.decision == Decision::AcceptPooling,
        condition_hat: test.condition_value_hat,
        true_ncp,
        single_better: mse_single < mse_pooled,
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn rate(flags: impl Iterator<Item = bool>) -> (Option<f64>, usize) {
    let (mut hits, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hits += f as usize;
    }
    if total == 0 {
        (None, 0)
    } else {
        (Some(hits as f64 / total as f64), total)
    }
}

fn summarize_row(n: usize, out: &[ReplicateOutcome]) -> PowerRow {
    let single: Vec<f64> = out.iter().map(|o| o.err_single).collect();
    let pooled: Vec<f64> = out.iter().map(|o| o.err_pooled).collect();
    let gated: Vec<f64> = out
        .iter()
        .map(|o| if o.accepted { o.err_pooled } else { o.err_single })
        .collect();
    let (mse_single, mse_single_se) = mean_se(&single);
    let (mse_pooled, mse_pooled_se) = mean_se(&pooled);
    let reps = out.len() as f64;
    let (type1, type1_count) = rate(out.iter().filter(|o| o.true_ncp <= 1.0).map(|o| !o.accepted));
    let (power, power_count) = rate(out.iter().filter(|o| o.single_better).map(|o| !o.accepted));
    PowerRow {
        n,
        replicates: out.len(),
        mse_single,
        mse_single_se,
        mse_pooled,
        mse_pooled_se,
        mse_gated: mean_se(&gated).0,
        acceptance_rate: out.iter().filter(|o| o.accepted).count() as f64 / reps,
        condition_value_mean: out.iter().map(|o| o.condition_hat).sum::<f64>() / reps,
        true_condition_mean: out.iter().map(|o| o.true_ncp.sqrt()).sum::<f64>() / reps,
        type1,
        type1_count,
        power,
        power_count,
    }
}

/// Replicate `r` at sample size `n`: coefficients come from stream `r`
/// (shared across sample sizes), data from a stream keyed by `(n, r)`.
fn replicate_draw(spec: &ScenarioSpec, n: usize, r: usize) -> Result<TwoSiteDraw> {
    let mut beta_rng = substream(spec.base_seed, r as u64);
    let mut data_rng = substream(spec.base_seed, ((n as u64) << 32) | r as u64);
    match spec.scenario {
        Scenario::SharedBeta => two_site_from(&mut beta_rng, &mut data_rng, n, &TwoSiteDesign::shared_beta()),
        Scenario::ConfoundedBeta => confounded_from(&mut beta_rng, &mut data_rng, n),
        Scenario::Custom => {
            let design = spec.custom.ok_or_else(|| {
                Error::InvalidArgument("custom scenario needs a two-site design".into())
            })?;
            two_site_from(&mut beta_rng, &mut data_rng, n, &design)
        }
        Scenario::FewShared | Scenario::MostShared => Err(Error::InvalidArgument(
            "power studies run on two-site scenarios only".into(),
        )),
    }
}

/// MSE, acceptance, power and type-I rates across the sample-size grid.
pub fn run_power_study(spec: &ScenarioSpec) -> Result<SimulationReport> {
    if spec.replicates == 0 || spec.n_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one replicate and one sample size".into()));
    }
    let start = Instant::now();
    let mut rows = Vec::with_capacity(spec.n_grid.len());
    for &n in &spec.n_grid {
        let outcomes = (0..spec.replicates)
            .into_par_iter()
            .map(|r| replicate_draw(spec, n, r).and_then(|d| run_replicate(&d, spec.significance)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize_row(n, &outcomes));
    }
    Ok(SimulationReport {
        scenario: spec.scenario,
        base_seed: spec.base_seed,
        replicates: spec.replicates,
        significance: spec.significance,
        rows,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoStudyOptions {
    pub selection: AlphaSelectionOptions,
    pub cv_folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub fit: FitOptions,
}

impl Default for LassoStudyOptions {
    fn default() -> Self {
        Self {
            selection: AlphaSelectionOptions::default(),
            cv_folds: 10,
            n_lambdas: 100,
            lambda_min_ratio: 1e-3,
            fit: FitOptions::default(),
        }
    }
}

/// Cross-validation curve and support recovery for one `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPathRow {
    pub alpha: f64,
    pub chosen: bool,
    pub lambdas: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub best_lambda: f64,
    pub min_cv_error: f64,
    pub se_at_min: f64,
    /// Always-active features of the fit at `best_lambda`.
    pub always_active_discovered: usize,
    /// Of those, how many are truly shared.
    pub true_always_active_discovered: usize,
    /// Share of discovered site-level active entries that are truly active.
    pub precision: f64,
    pub s_h: usize,
    pub s_p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathStudy {
    pub pattern: SparsePattern,
    pub seed: u64,
    pub selection: AlphaSelectionReport,
    pub rows: Vec<AlphaPathRow>,
}

impl LassoPathStudy {
    pub fn chosen(&self) -> &AlphaPathRow {
        self.rows.iter().find(|r| r.chosen).expect("chosen row present")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,chosen,lambda,cv_mean,cv_se\n");
        for r in &self.rows {
            for ((l, m), s) in r.lambdas.iter().zip(&r.cv_mean).zip(&r.cv_se) {
                out.push_str(&format!("{:.16e},{},{l:.16e},{m:.16e},{s:.16e}\n", r.alpha, r.chosen));
            }
        }
        out
    }
}

/// Selects `α` on a sparse draw, then cross-validates a path at the chosen
/// value and at each comparator.
pub fn run_lasso_paths(
    pattern: SparsePattern,
    comparators: &[f64],
    seed: u64,
    opts: &LassoStudyOptions,
) -> Result<LassoPathStudy> {
    let draw = generate_sparse(pattern, seed)?;
    lasso_paths_on(&draw, pattern, comparators, seed, opts)
}

pub fn lasso_paths_on(
    draw: &SparseDraw,
    pattern: SparsePattern,
    comparators: &[f64],
    seed: u64,
    opts: &LassoStudyOptions,
) -> Result<LassoPathStudy> {
    let mut sel_opts = opts.selection.clone();
    sel_opts.mss.seed = seed;
    sel_opts.lasso.seed = seed;
    let selection = select_alpha(&draw.sites, None, &sel_opts)?;
    let mut alphas: Vec<(f64, bool)> = comparators.iter().map(|&a| (a, false)).collect();
    alphas.push((selection.chosen_alpha, true));
    alphas.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let truth = support_stats(&draw.b_true, 0.0);
    let rows = alphas
        .iter()
        .map(|&(alpha, chosen)| -> Result<AlphaPathRow> {
            let lmax = crate::smslasso::lambda_max(&draw.sites, alpha, &opts.fit)?;
            let grid = crate::smslasso::default_lambda_grid(lmax, opts.n_lambdas, opts.lambda_min_ratio);
            let cv = CvOptions {
                folds: opts.cv_folds,
                seed,
            };
            let path = solution_path(&draw.sites, alpha, Some(grid), Some(cv), &opts.fit)?;
            let curve = path.cv.as_ref().expect("cross-validation requested");
            let best = curve.best_index;
            let stats = support_stats(&path.fits[best], DEFAULT_SUPPORT_TOL);
            let discovered: usize = stats.s_h;
            let correct: usize = stats
                .site_active
                .iter()
                .zip(&truth.site_active)
                .map(|(found, real)| found.intersection(real).count())
                .sum();
            Ok(AlphaPathRow {
                alpha,
                chosen,
                best_lambda: path.lambdas[best],
                min_cv_error: curve.mean[best],
                se_at_min: curve.se[best],
                cv_mean: curve.mean.clone(),
                cv_se: curve.se.clone(),
                lambdas: path.lambdas.clone(),
                always_active_discovered: stats.always_active.len(),
                true_always_active_discovered: stats.always_active.intersection(&draw.shared).count(),
                precision: if discovered == 0 { 0.0 } else { correct as f64 / discovered as f64 },
                s_h: stats.s_h,
                s_p: stats.s_p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LassoPathStudy {
        pattern,
        seed,
        selection,
        rows,
    })
}
