//! Multi-site regression pooling.
//!
//! Two questions are answered here:
//!
//! * Classical regime (`n > p`): does fitting one coefficient vector on data
//!   pooled from several sites lower the mean squared error at a reference
//!   site? [`pooltest`] answers this from per-site summaries alone
//!   (coefficients, covariance, noise level, sample size), so no row-level
//!   data has to leave a site.
//! * High-dimensional regime (`p ≫ n`): [`smslasso`] fits the sparse
//!   multi-site Lasso, and [`inference`] picks its mixing parameter from
//!   FWER-controlled per-site selections before handing a reduced problem
//!   back to the classical test.
//!
//! Supporting modules: [`regress`] (per-site OLS), [`distributions`]
//! (non-central χ²), [`diagnostics`] (sparse eigenvalues, effective
//! sparsity, rate checks), [`sim`] (seeded generators and Monte Carlo
//! studies), and [`io`] (CSV input, summary exchange files, SVG plots).

// Negated comparisons deliberately treat NaN as failing the condition.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod plot;
pub mod pooltest;
pub mod regress;
pub mod sim;
pub mod smslasso;

pub use error::{Error, ErrorKind, Result};
pub use pooltest::{
    BiasVarianceBounds, Decision, PoolingTestResult, SiteSummary,
};
pub use regress::{SiteDataset, SiteFit};
