//! Central and non-central χ² laws, the Gaussian CDF, and their inverses.
//!
//! The non-central χ² CDF is evaluated as a Poisson mixture of central χ²
//! CDFs. Summation starts at the Poisson mode `⌊ncp/2⌋` and walks outward in
//! both directions, which keeps the leading weights representable for large
//! non-centrality.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Cap on Poisson-series terms before giving up.
pub const MAX_SERIES_TERMS: usize = 1_000_000;
const SERIES_TAIL_TOL: f64 = 1e-14;

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Central χ² CDF with real degrees of freedom.
pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(0.5 * df, 0.5 * x)
}

/// Central χ² survival function `1 − CDF`.
pub fn chisq_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(0.5 * df, 0.5 * x)
}

/// Central χ² density.
pub fn chisq_pdf(x: f64, df: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = 0.5 * df;
    if x == 0.0 {
        return match k.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        };
    }
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Non-central χ² law with real degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChiSquare {
    df: f64,
    ncp: f64,
}

impl NoncentralChiSquare {
    pub fn new(df: f64, ncp: f64) -> Result<Self> {
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::InvalidArgument(format!("df must be positive, got {df}")));
        }
        if !(ncp >= 0.0 && ncp.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-centrality must be nonnegative, got {ncp}"
            )));
        }
        Ok(Self { df, ncp })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn ncp(&self) -> f64 {
        self.ncp
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x.is_infinite() {
            return Ok(1.0);
        }
        if self.ncp == 0.0 {
            return Ok(chisq_cdf(x, self.df));
        }
        self.mixture(|df| chisq_cdf(x, df)).map(|v| v.clamp(0.0, 1.0))
    }

    pub fn sf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        if x.is_infinite() {
            return Ok(0.0);
        }
        if self.ncp == 0.0 {
            return Ok(chisq_sf(x, self.df));
        }
        self.mixture(|df| chisq_sf(x, df)).map(|v| v.clamp(0.0, 1.0))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if self.ncp == 0.0 {
            return Ok(chisq_pdf(x, self.df));
        }
        self.mixture(|df| chisq_pdf(x, df))
    }

    /// `Σ_j Poisson(j; ncp/2) · term(df + 2j)` for terms bounded by one.
    fn mixture(&self, term: impl Fn(f64) -> f64) -> Result<f64> {
        let half = 0.5 * self.ncp;
        let mode = half.floor();
        let log_w0 = -half + mode * half.ln() - ln_gamma(mode + 1.0);
        let w0 = log_w0.exp();
        let mode_j = mode as usize;

        let mut total = w0 * term(self.df + 2.0 * mode);
        let mut terms = 1usize;

        // Upward: weights fall geometrically once j exceeds ncp/2.
        let mut w = w0;
        let mut j = mode_j;
        loop {
            let ratio = half / (j as f64 + 1.0);
            w *= ratio;
            j += 1;
            let t = term(self.df + 2.0 * j as f64);
            total += w * t;
            terms += 1;
            // Remaining weight mass is geometric once the ratio drops below one;
            // summands are bounded by one.
            let next_ratio = half / (j as f64 + 1.0);
            if next_ratio < 1.0 && w * next_ratio / (1.0 - next_ratio) * t.max(1.0) < SERIES_TAIL_TOL {
                break;
            }
            if terms > MAX_SERIES_TERMS {
                return Err(Error::NonConvergent(format!(
                    "non-central chi-square series exceeded {MAX_SERIES_TERMS} terms (ncp = {})",
                    self.ncp
                )));
            }
        }

        // Downward: at most `mode` terms, each weight smaller than the last.
        let mut w = w0;
        let mut j = mode_j;
        while j > 0 {
            w *= j as f64 / half;
            j -= 1;
            total += w * term(self.df + 2.0 * j as f64);
            terms += 1;
            if w * (j as f64) < SERIES_TAIL_TOL {
                break;
            }
            if terms > MAX_SERIES_TERMS {
                return Err(Error::NonConvergent(format!(
                    "non-central chi-square series exceeded {MAX_SERIES_TERMS} terms (ncp = {})",
                    self.ncp
                )));
            }
        }
        Ok(total)
    }

    /// Inverse CDF by safeguarded Newton steps inside a bisection bracket.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile probability must lie in (0, 1), got {prob}"
            )));
        }
        let mut lo = 0.0f64;
        let spread = (2.0 * (self.df + 2.0 * self.ncp)).sqrt();
        let mut hi = self.df + self.ncp + 10.0 * spread + 10.0;
        let mut expansions = 0;
        while self.cdf(hi)? < prob {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 {
                return Err(Error::NonConvergent("quantile bracket expansion".into()));
            }
        }

        let mut x = 0.5 * (lo + hi);
        for _ in 0..400 {
            let f = self.cdf(x)? - prob;
            if f.abs() <= 1e-12 {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
                return Ok(0.5 * (lo + hi));
            }
            let d = self.pdf(x)?;
            let newton = if d > 0.0 && d.is_finite() { x - f / d } else { f64::NAN };
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let fin = self.cdf(x)?;
        if (fin - prob).abs() <= 1e-9 {
            Ok(x)
        } else {
            Err(Error::NonConvergent(format!(
                "quantile search stalled at x = {x}, cdf error {:.2e}",
                fin - prob
            )))
        }
    }
}

pub fn noncentral_chisq_cdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    NoncentralChiSquare::new(df, ncp)?.cdf(x)
}

pub fn noncentral_chisq_sf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    NoncentralChiSquare::new(df, ncp)?.sf(x)
}

pub fn noncentral_chisq_pdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    NoncentralChiSquare::new(df, ncp)?.pdf(x)
}

pub fn noncentral_chisq_quantile(prob: f64, df: f64, ncp: f64) -> Result<f64> {
    NoncentralChiSquare::new(df, ncp)?.quantile(prob)
}
