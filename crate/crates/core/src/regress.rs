//! Per-site ordinary least squares.
//!
//! Covariances use the uncentered `1/n` normalization, so `n·Σ̂ = XᵀX`
//! holds exactly. No intercept column is added implicitly; use
//! [`SiteDataset::with_intercept`] when one is wanted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, gram, symmetrize};
use crate::pooltest::SiteSummary;

/// Default cap on the condition number of the fitted design.
pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

/// Raw observations held by one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDataset {
    pub site_id: String,
    /// Shared predictors, `n × p`.
    pub x: DMatrix<f64>,
    /// Site-specific confounds, `n × q`.
    pub z: Option<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
    pub confound_names: Vec<String>,
}

impl SiteDataset {
    pub fn new(
        site_id: impl Into<String>,
        x: DMatrix<f64>,
        z: Option<DMatrix<f64>>,
        y: DVector<f64>,
        feature_names: Vec<String>,
        confound_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::InvalidDataset(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                n
            )));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} predictor columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        match &z {
            Some(z) => {
                if z.nrows() != n {
                    return Err(Error::InvalidDataset(format!(
                        "Z has {} rows but y has {} entries",
                        z.nrows(),
                        n
                    )));
                }
                if confound_names.len() != z.ncols() {
                    return Err(Error::InvalidDataset(format!(
                        "{} confound names for {} confound columns",
                        confound_names.len(),
                        z.ncols()
                    )));
                }
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDataset("non-finite entry in Z".into()));
                }
            }
            None => {
                if !confound_names.is_empty() {
                    return Err(Error::InvalidDataset(
                        "confound names given without a confound matrix".into(),
                    ));
                }
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry in X or y".into()));
        }
        Ok(Self {
            site_id: site_id.into(),
            x,
            z,
            y,
            feature_names,
            confound_names,
        })
    }

    /// Dataset with generated feature names `x1, x2, …` and no confounds.
    pub fn from_xy(site_id: impl Into<String>, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = default_names("x", x.ncols());
        Self::new(site_id, x, None, y, names, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.ncols())
    }

    /// Appends a column of ones named `intercept` to the predictors.
    pub fn with_intercept(mut self) -> Self {
        let n = self.n();
        let p = self.p();
        self.x = self.x.insert_column(p, 1.0);
        debug_assert_eq!(self.x.nrows(), n);
        self.feature_names.push("intercept".into());
        self
    }

    /// Subset of rows, keeping names.
    pub fn select_rows(&self, idx: &[usize]) -> SiteDataset {
        SiteDataset {
            site_id: self.site_id.clone(),
            x: crate::linalg::select_rows(&self.x, idx),
            z: self.z.as_ref().map(|z| crate::linalg::select_rows(z, idx)),
            y: crate::linalg::select_entries(&self.y, idx),
            feature_names: self.feature_names.clone(),
            confound_names: self.confound_names.clone(),
        }
    }

    /// Subset of predictor columns, keeping confounds.
    pub fn select_features(&self, idx: &[usize]) -> SiteDataset {
        SiteDataset {
            site_id: self.site_id.clone(),
            x: crate::linalg::select_columns(&self.x, idx),
            z: self.z.clone(),
            y: self.y.clone(),
            feature_names: idx.iter().map(|&j| self.feature_names[j].clone()).collect(),
            confound_names: self.confound_names.clone(),
        }
    }
}

pub(crate) fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Result of a per-site least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFit {
    pub beta_hat: DVector<f64>,
    pub gamma_hat: Option<DVector<f64>>,
    /// Residual noise standard deviation, `RSS/(n − p − q)` under the root.
    pub sigma_hat: f64,
    /// `XᵀX/n`, or the conditional covariance when confounds are present.
    pub sigma_matrix: DMatrix<f64>,
    pub n: usize,
    pub used_conditional: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct OlsOptions {
    pub condition_cap: f64,
}

impl Default for OlsOptions {
    fn default() -> Self {
        Self {
            condition_cap: DEFAULT_CONDITION_CAP,
        }
    }
}

pub fn ols_fit(data: &SiteDataset) -> Result<SiteFit> {
    ols_fit_with(data, &OlsOptions::default())
}

/// Least squares on `[X Z]` by Householder QR.
pub fn ols_fit_with(data: &SiteDataset, opts: &OlsOptions) -> Result<SiteFit> {
    let n = data.n();
    let p = data.p();
    let q = data.q();
    let cols = p + q;
    if n < cols {
        return Err(Error::Underdetermined { n, columns: cols });
    }

    let (design, sigma_matrix) = match &data.z {
        Some(z) => {
            let cond = conditional_covariance_with(data, opts)?;
            let mut d = DMatrix::zeros(n, cols);
            d.columns_mut(0, p).copy_from(&data.x);
            d.columns_mut(p, q).copy_from(z);
            (d, cond)
        }
        None => {
            let mut s = gram(&data.x);
            s /= n as f64;
            (data.x.clone(), s)
        }
    };

    let coef = solve_least_squares(&design, &data.y, opts.condition_cap)?;
    let beta_hat = coef.rows(0, p).into_owned();
    let gamma_hat = data.z.as_ref().map(|_| coef.rows(p, q).into_owned());

    let df = n - cols;
    if df == 0 {
        return Err(Error::DegenerateDf {
            beta_hat: beta_hat.iter().copied().collect(),
        });
    }
    let resid = &data.y - &design * &coef;
    let sigma_hat = (resid.norm_squared() / df as f64).sqrt();

    Ok(SiteFit {
        beta_hat,
        gamma_hat,
        sigma_hat,
        sigma_matrix,
        n,
        used_conditional: data.z.is_some(),
    })
}

/// QR least-squares solve with a condition-number guard on `R`.
pub(crate) fn solve_least_squares(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    condition_cap: f64,
) -> Result<DVector<f64>> {
    let m = design.ncols();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let condition = condition_number(&r);
    if !(condition <= condition_cap) {
        return Err(Error::RankDeficient { condition });
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { condition })
}

/// OLS coefficients with their classical standard errors and residual df.
pub fn ols_with_standard_errors(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    let n = x.nrows();
    let p = x.ncols();
    if n <= p {
        return Err(Error::Underdetermined { n, columns: p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let condition = condition_number(&r);
    if !(condition <= DEFAULT_CONDITION_CAP) {
        return Err(Error::RankDeficient { condition });
    }
    let qty = qr.q().tr_mul(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { condition })?;
    let df = n - p;
    let s2 = (y - x * &beta).norm_squared() / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient { condition })?;
    // (XᵀX)^{-1} = R^{-1} R^{-T}; diagonal = squared row norms of R^{-1}.
    let se = DVector::from_iterator(p, (0..p).map(|i| (r_inv.row(i).norm_squared() * s2).sqrt()));
    Ok((beta, se, df))
}

pub fn conditional_covariance(data: &SiteDataset) -> Result<DMatrix<f64>> {
    conditional_covariance_with(data, &OlsOptions::default())
}

/// `Σ̂_xx − Σ̂_xz Σ̂_zz⁻¹ Σ̂_zx`, computed as `X̃ᵀX̃/n` where `X̃` is `X` with
/// its projection onto the column space of `Z` removed.
pub fn conditional_covariance_with(data: &SiteDataset, opts: &OlsOptions) -> Result<DMatrix<f64>> {
    let z = data
        .z
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("conditional covariance needs confounds Z".into()))?;
    let n = data.n();
    if z.ncols() == 0 {
        let mut s = gram(&data.x);
        s /= n as f64;
        return Ok(s);
    }
    if n < z.ncols() {
        return Err(Error::SingularConfoundCovariance {
            condition: f64::INFINITY,
        });
    }
    let qr = z.clone().qr();
    let condition = condition_number(&qr.r());
    if !(condition <= opts.condition_cap) {
        return Err(Error::SingularConfoundCovariance { condition });
    }
    let qz = qr.q();
    let x_resid = &data.x - &qz * qz.tr_mul(&data.x);
    let mut s = gram(&x_resid);
    s /= n as f64;
    symmetrize(&mut s);
    Ok(s)
}

/// Shareable statistics for the pooling test. No row-level data is copied.
pub fn site_summary(fit: &SiteFit, data: &SiteDataset) -> SiteSummary {
    SiteSummary {
        site_id: data.site_id.clone(),
        n: fit.n,
        beta_hat: fit.beta_hat.clone(),
        sigma_hat: fit.sigma_hat,
        sigma_matrix: fit.sigma_matrix.clone(),
        used_conditional: fit.used_conditional,
        feature_names: data.feature_names.clone(),
    }
}

/// Fit and summarize in one call.
pub fn summarize(data: &SiteDataset) -> Result<SiteSummary> {
    let fit = ols_fit(data)?;
    Ok(site_summary(&fit, data))
}
