//! The pooling test: decide from per-site summaries whether fitting one
//! shared coefficient vector across sites lowers the reference site's MSE.
//!
//! Site 1 (the first summary) is the reference. With `Δβ̂` the stacked
//! differences `β̂ᵢ − β̂₁` and `G` their covariance, the statistic
//! `‖G^{-1/2}Δβ̂‖²/σ̂₁²` is compared against the non-central χ² law with
//! `(k−1)p` degrees of freedom at the boundary non-centrality `1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::NoncentralChiSquare;
use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, spd_inverse, sym_inv_sqrt, symmetrize};
use crate::regress::{self, SiteDataset};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
/// Eigenvalue floor, relative to the largest eigenvalue, for `G^{-1/2}`.
pub const G_EIGEN_FLOOR: f64 = 1e-12;
/// Non-centrality at the boundary of the sufficient condition.
pub const BOUNDARY_NCP: f64 = 1.0;

/// Sufficient statistics one site shares with the others.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSummary {
    pub site_id: String,
    pub n: usize,
    pub beta_hat: DVector<f64>,
    pub sigma_hat: f64,
    /// `Σ̂ᵢ` (or `Σ̃ᵢ` when fitted with confounds), `p × p`.
    pub sigma_matrix: DMatrix<f64>,
    pub used_conditional: bool,
    pub feature_names: Vec<String>,
}

impl SiteSummary {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    /// `nᵢ Σ̂ᵢ`, i.e. the Gram matrix the site's fit was built on.
    pub fn scatter(&self) -> DMatrix<f64> {
        &self.sigma_matrix * self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    AcceptPooling,
    RejectPooling,
}

/// Bias bound factor and variance reduction of the pooled estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceBounds {
    /// Multiplies `‖G^{-1/2}Δβ‖²` to bound the squared bias increase.
    pub bias_bound_factor: f64,
    /// Reduction in total variance of `β̂` from pooling.
    pub var_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingTestResult {
    pub statistic: f64,
    pub df: usize,
    pub threshold: f64,
    pub p_value: f64,
    pub condition_value_hat: f64,
    pub decision: Decision,
    pub significance: f64,
    pub tau: Vec<f64>,
    pub diagnostics: BiasVarianceBounds,
    pub used_conditional: bool,
    pub site_ids: Vec<String>,
    /// Feature names the test was run on.
    pub features: Vec<String>,
    /// Column indices into the original design, set when the test follows
    /// variable selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

fn check_significance(significance: f64) -> Result<()> {
    if significance > 0.0 && significance < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "significance must lie in (0, 1), got {significance}"
        )))
    }
}

/// Checks that summaries can enter one test together.
pub fn check_compatible(summaries: &[SiteSummary]) -> Result<()> {
    if summaries.len() < 2 {
        return Err(Error::IncompatibleSummaries(format!(
            "need at least two sites, got {}",
            summaries.len()
        )));
    }
    let first = &summaries[0];
    let p = first.p();
    for s in summaries {
        if s.p() != p || s.sigma_matrix.nrows() != p || s.sigma_matrix.ncols() != p {
            return Err(Error::IncompatibleSummaries(format!(
                "site {} has dimension {} but reference site {} has {}",
                s.site_id,
                s.p(),
                first.site_id,
                p
            )));
        }
        if s.feature_names != first.feature_names {
            return Err(Error::IncompatibleSummaries(format!(
                "feature names of site {} differ from reference site {}",
                s.site_id, first.site_id
            )));
        }
        if s.used_conditional != first.used_conditional {
            return Err(Error::IncompatibleSummaries(
                "mixing conditional and unconditional covariances".into(),
            ));
        }
        if s.n == 0 {
            return Err(Error::IncompatibleSummaries(format!("site {} has n = 0", s.site_id)));
        }
    }
    Ok(())
}

/// Moves summary `reference` to the front, keeping the others in order.
pub fn rereference(summaries: &[SiteSummary], reference: usize) -> Result<Vec<SiteSummary>> {
    if reference >= summaries.len() {
        return Err(Error::InvalidArgument(format!(
            "reference index {reference} out of range for {} sites",
            summaries.len()
        )));
    }
    let mut out = Vec::with_capacity(summaries.len());
    out.push(summaries[reference].clone());
    out.extend(
        summaries
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != reference)
            .map(|(_, s)| s.clone()),
    );
    Ok(out)
}

/// Noise-optimal site weights `τᵢ = σ̂₁/σ̂ᵢ`.
pub fn estimate_tau(summaries: &[SiteSummary]) -> Result<Vec<f64>> {
    if summaries.len() < 2 {
        return Err(Error::IncompatibleSummaries(
            "need at least two sites to estimate weights".into(),
        ));
    }
    if let Some(i) = summaries.iter().position(|s| !(s.sigma_hat > 0.0)) {
        return Err(Error::ZeroNoise { site: i });
    }
    let s1 = summaries[0].sigma_hat;
    Ok(summaries.iter().map(|s| s1 / s.sigma_hat).collect())
}

fn check_tau(tau: &[f64], k: usize) -> Result<()> {
    if tau.len() != k {
        return Err(Error::InvalidArgument(format!(
            "tau has {} entries for {k} sites",
            tau.len()
        )));
    }
    if tau[0] != 1.0 {
        return Err(Error::InvalidArgument(
            "tau of the reference site must be 1".into(),
        ));
    }
    if tau.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("tau entries must be finite and nonnegative".into()));
    }
    Ok(())
}

fn weighted_scatter_inverse(s: &SiteSummary, weight: f64) -> Result<DMatrix<f64>> {
    let m = s.scatter() * weight;
    spd_inverse(&m).ok_or_else(|| {
        Error::SingularSiteCovariance(format!("n·τ²·Σ̂ of site {} is not invertible", s.site_id))
    })
}

/// Covariance of the stacked coefficient differences, in units of `σ₁²`.
pub fn build_g(summaries: &[SiteSummary], tau: &[f64]) -> Result<DMatrix<f64>> {
    check_compatible(summaries)?;
    check_tau(tau, summaries.len())?;
    let p = summaries[0].p();
    let k = summaries.len();
    let ref_inv = weighted_scatter_inverse(&summaries[0], 1.0)?;
    let dim = (k - 1) * p;
    let mut g = DMatrix::zeros(dim, dim);
    for a in 0..k - 1 {
        for b in 0..k - 1 {
            g.view_mut((a * p, b * p), (p, p)).copy_from(&ref_inv);
        }
        let own = weighted_scatter_inverse(&summaries[a + 1], tau[a + 1].powi(2))?;
        let mut block = g.view_mut((a * p, a * p), (p, p));
        block += own;
    }
    symmetrize(&mut g);
    Ok(g)
}

fn stacked_differences(summaries: &[SiteSummary]) -> DVector<f64> {
    let p = summaries[0].p();
    let k = summaries.len();
    let mut d = DVector::zeros((k - 1) * p);
    for (a, s) in summaries.iter().skip(1).enumerate() {
        d.rows_mut(a * p, p)
            .copy_from(&(&s.beta_hat - &summaries[0].beta_hat));
    }
    d
}

/// `‖G^{-1/2}Δ‖²/σ²` for stacked differences `Δ`.
pub fn noncentrality(g: &DMatrix<f64>, delta: &DVector<f64>, sigma1: f64) -> Result<f64> {
    let root = sym_inv_sqrt(g, G_EIGEN_FLOOR).ok_or_else(|| {
        Error::SingularSiteCovariance("G has an eigenvalue below the floor".into())
    })?;
    Ok((root * delta).norm_squared() / (sigma1 * sigma1))
}

/// Runs the pooling test with site 1 as the reference. `tau` defaults to
/// [`estimate_tau`].
pub fn pooling_test(
    summaries: &[SiteSummary],
    significance: f64,
    tau: Option<&[f64]>,
) -> Result<PoolingTestResult> {
    check_significance(significance)?;
    check_compatible(summaries)?;
    let tau = match tau {
        Some(t) => t.to_vec(),
        None => estimate_tau(summaries)?,
    };
    let sigma1 = summaries[0].sigma_hat;
    if !(sigma1 > 0.0) {
        return Err(Error::ZeroNoise { site: 0 });
    }
    let g = build_g(summaries, &tau)?;
    let delta = stacked_differences(summaries);
    let statistic = noncentrality(&g, &delta, sigma1)?;
    let diagnostics = bias_variance_diagnostics(summaries, &tau)?;
    finish(summaries, statistic, significance, tau, diagnostics)
}

fn finish(
    summaries: &[SiteSummary],
    statistic: f64,
    significance: f64,
    tau: Vec<f64>,
    diagnostics: BiasVarianceBounds,
) -> Result<PoolingTestResult> {
    let k = summaries.len();
    let p = summaries[0].p();
    let df = (k - 1) * p;
    let law = NoncentralChiSquare::new(df as f64, BOUNDARY_NCP)?;
    let threshold = law.quantile(1.0 - significance)?;
    let p_value = law.sf(statistic)?;
    let decision = if statistic <= threshold {
        Decision::AcceptPooling
    } else {
        Decision::RejectPooling
    };
    Ok(PoolingTestResult {
        statistic,
        df,
        threshold,
        p_value,
        condition_value_hat: statistic.sqrt(),
        decision,
        significance,
        tau,
        diagnostics,
        used_conditional: summaries[0].used_conditional,
        site_ids: summaries.iter().map(|s| s.site_id.clone()).collect(),
        features: summaries[0].feature_names.clone(),
        support: None,
    })
}

/// Two-site test through the Mahalanobis form
/// `Δβᵀ((n₁Σ̂₁)⁻¹ + (n₂τ₂²Σ̂₂)⁻¹)⁻¹Δβ / σ̂₁²`, solved by Cholesky rather than
/// through `G^{-1/2}`.
pub fn two_site_test(
    s1: &SiteSummary,
    s2: &SiteSummary,
    significance: f64,
    tau2: Option<f64>,
) -> Result<PoolingTestResult> {
    check_significance(significance)?;
    let pair = [s1.clone(), s2.clone()];
    check_compatible(&pair)?;
    let tau = match tau2 {
        Some(t) => vec![1.0, t],
        None => estimate_tau(&pair)?,
    };
    check_tau(&tau, 2)?;
    if !(s1.sigma_hat > 0.0) {
        return Err(Error::ZeroNoise { site: 0 });
    }
    let m = weighted_scatter_inverse(s1, 1.0)? + weighted_scatter_inverse(s2, tau[1].powi(2))?;
    let chol = m.cholesky().ok_or_else(|| {
        Error::SingularSiteCovariance("Mahalanobis covariance is not positive definite".into())
    })?;
    let delta = &s2.beta_hat - &s1.beta_hat;
    let solved = chol.solve(&delta);
    let statistic = delta.dot(&solved) / (s1.sigma_hat * s1.sigma_hat);
    let diagnostics = bias_variance_diagnostics(&pair, &tau)?;
    finish(&pair, statistic.max(0.0), significance, tau, diagnostics)
}

/// Bias bound factor and variance reduction for the pooled estimator.
pub fn bias_variance_diagnostics(summaries: &[SiteSummary], tau: &[f64]) -> Result<BiasVarianceBounds> {
    check_compatible(summaries)?;
    check_tau(tau, summaries.len())?;
    let p = summaries[0].p();
    let ref_scatter = summaries[0].scatter();
    let ref_inv = weighted_scatter_inverse(&summaries[0], 1.0)?;
    let mut others = DMatrix::zeros(p, p);
    for (s, t) in summaries.iter().zip(tau).skip(1) {
        others += s.scatter() * (t * t);
    }
    let total = &ref_scatter + &others;
    let total_inv = spd_inverse(&total).ok_or_else(|| {
        Error::SingularSiteCovariance("pooled scatter matrix is not invertible".into())
    })?;
    let bias_core = &others * &ref_inv * &others + &others;
    let bias_mat = &total_inv * &total_inv * bias_core;
    let sigma1 = summaries[0].sigma_hat;
    let mut var_mat = &ref_inv - &total_inv;
    symmetrize(&mut var_mat);
    Ok(BiasVarianceBounds {
        bias_bound_factor: nuclear_norm(&bias_mat),
        var_reduction: sigma1 * sigma1 * nuclear_norm(&var_mat),
    })
}

/// Pooling test on shared coefficients when every site carries confounds.
/// Each site is fitted jointly on `[X Z]` and reports the conditional
/// covariance of `X` given `Z`.
pub fn subset_pooling_test(datasets: &[SiteDataset], significance: f64) -> Result<PoolingTestResult> {
    if let Some(d) = datasets.iter().find(|d| d.z.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "site {} has no confounds; subset mode needs Z at every site",
            d.site_id
        )));
    }
    let summaries = datasets
        .iter()
        .map(regress::summarize)
        .collect::<Result<Vec<_>>>()?;
    pooling_test(&summaries, significance, None)
}

/// The shared-coefficient estimator minimizing `Σᵢ τᵢ²‖yᵢ − Xᵢβ − Zᵢγᵢ‖²`.
/// Confounds are profiled out per site before the weighted normal equations
/// are solved.
pub fn pooled_estimate(datasets: &[SiteDataset], tau: &[f64]) -> Result<DVector<f64>> {
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("no datasets".into()));
    }
    if tau.len() != datasets.len() {
        return Err(Error::InvalidArgument("one weight per site required".into()));
    }
    let p = datasets[0].p();
    let mut lhs = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (d, t) in datasets.iter().zip(tau) {
        if d.p() != p {
            return Err(Error::IncompatibleSummaries("datasets differ in p".into()));
        }
        let (x, y) = match &d.z {
            Some(z) if z.ncols() > 0 => {
                let q = z.clone().qr().q();
                (&d.x - &q * q.tr_mul(&d.x), &d.y - &q * q.tr_mul(&d.y))
            }
            _ => (d.x.clone(), d.y.clone()),
        };
        let w = t * t;
        lhs += x.tr_mul(&x) * w;
        rhs += x.tr_mul(&y) * w;
    }
    symmetrize(&mut lhs);
    let chol = lhs.cholesky().ok_or_else(|| {
        Error::SingularSiteCovariance("pooled normal equations are singular".into())
    })?;
    Ok(chol.solve(&rhs))
}
