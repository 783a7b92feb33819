//! CSV ingestion and the site-summary exchange file.
//!
//! A summary file is one line of canonical JSON: object keys sorted,
//! floats in shortest round-trip form, no whitespace. The `checksum` field
//! is the lowercase hex SHA-256 of the canonical serialization of every
//! other field, so any edit to the payload is detected on read.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pooltest::SiteSummary;
use crate::regress::SiteDataset;

pub const SCHEMA_VERSION: &str = "1.0";
/// Relative tolerance for the symmetry and PSD checks on read.
const MATRIX_CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Predictor,
    Confound,
    Response,
    Ignore,
}

/// Column roles for [`load_csv`]. Columns not listed are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSpec {
    pub site_id: String,
    pub roles: Vec<(String, ColumnRole)>,
}

impl CsvSpec {
    pub fn new(
        site_id: impl Into<String>,
        response: &str,
        predictors: &[&str],
        confounds: &[&str],
    ) -> Self {
        let mut roles: Vec<(String, ColumnRole)> = predictors
            .iter()
            .map(|c| (c.to_string(), ColumnRole::Predictor))
            .collect();
        roles.extend(confounds.iter().map(|c| (c.to_string(), ColumnRole::Confound)));
        roles.push((response.to_string(), ColumnRole::Response));
        Self {
            site_id: site_id.into(),
            roles,
        }
    }

    /// Every column except `response` (and `ignore`) is a predictor.
    pub fn all_predictors(site_id: impl Into<String>, header: &[String], response: &str, confounds: &[String], ignore: &[String]) -> Self {
        let roles = header
            .iter()
            .map(|h| {
                let role = if h == response {
                    ColumnRole::Response
                } else if confounds.contains(h) {
                    ColumnRole::Confound
                } else if ignore.contains(h) {
                    ColumnRole::Ignore
                } else {
                    ColumnRole::Predictor
                };
                (h.clone(), role)
            })
            .collect();
        Self {
            site_id: site_id.into(),
            roles,
        }
    }
}

/// Header row of a CSV file.
pub fn read_csv_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_error)?;
    Ok(rdr.headers().map_err(csv_error)?.iter().map(|s| s.trim().to_string()).collect())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_csv(path: &Path, spec: &CsvSpec) -> Result<SiteDataset> {
    let file = fs::File::open(path)?;
    load_csv_from(file, spec)
}

/// Reads a headed CSV. Line numbers in errors count the header as line 1.
pub fn load_csv_from(reader: impl Read, spec: &CsvSpec) -> Result<SiteDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(String::from).collect();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();

    let mut predictors = Vec::new();
    let mut confounds = Vec::new();
    let mut response = None;
    for (name, role) in &spec.roles {
        let col = *index
            .get(name.as_str())
            .ok_or_else(|| Error::Schema(format!("declared column `{name}` is missing from the header")))?;
        match role {
            ColumnRole::Predictor => predictors.push((name.clone(), col)),
            ColumnRole::Confound => confounds.push((name.clone(), col)),
            ColumnRole::Response => {
                if response.replace(col).is_some() {
                    return Err(Error::Schema("more than one response column declared".into()));
                }
            }
            ColumnRole::Ignore => {}
        }
    }
    let response = response.ok_or_else(|| Error::Schema("no response column declared".into()))?;
    if predictors.is_empty() {
        return Err(Error::Schema("no predictor columns declared".into()));
    }

    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = row + 2;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{raw}` as a number", header[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{}`: non-finite value `{raw}`", header[col]),
                });
            }
            Ok(v)
        };
        for (_, c) in &predictors {
            xs.push(cell(*c)?);
        }
        for (_, c) in &confounds {
            zs.push(cell(*c)?);
        }
        ys.push(cell(response)?);
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, predictors.len(), &xs);
    let z = (!confounds.is_empty()).then(|| DMatrix::from_row_slice(n, confounds.len(), &zs));
    SiteDataset::new(
        spec.site_id.clone(),
        x,
        z,
        DVector::from_vec(ys),
        predictors.into_iter().map(|p| p.0).collect(),
        confounds.into_iter().map(|c| c.0).collect(),
    )
}

/// Writes predictors, confounds, then `response_name`, with 17 significant
/// digits so that reading back reproduces every value exactly.
pub fn write_csv(data: &SiteDataset, path: &Path, response_name: &str) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(csv_string(data, response_name).as_bytes())?;
    Ok(())
}

pub fn csv_string(data: &SiteDataset, response_name: &str) -> String {
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.extend(data.confound_names.iter().map(String::as_str));
    header.push(response_name);
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.n() {
        let mut cells: Vec<String> = data.x.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(z) = &data.z {
            cells.extend(z.row(i).iter().map(|v| format!("{v:.16e}")));
        }
        cells.push(format!("{:.16e}", data.y[i]));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryPayload {
    schema_version: String,
    site_id: String,
    n: usize,
    p: usize,
    feature_names: Vec<String>,
    beta_hat: Vec<f64>,
    sigma_hat: f64,
    /// Row-major.
    sigma_matrix: Vec<f64>,
    used_conditional: bool,
}

impl SummaryPayload {
    fn from_summary(s: &SiteSummary) -> Self {
        let p = s.p();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            site_id: s.site_id.clone(),
            n: s.n,
            p,
            feature_names: s.feature_names.clone(),
            beta_hat: s.beta_hat.iter().copied().collect(),
            sigma_hat: s.sigma_hat,
            sigma_matrix: (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| s.sigma_matrix[(i, j)]).collect(),
            used_conditional: s.used_conditional,
        }
    }

    fn into_summary(self) -> Result<SiteSummary> {
        let p = self.p;
        if self.beta_hat.len() != p || self.feature_names.len() != p || self.sigma_matrix.len() != p * p {
            return Err(Error::InvalidSummary(format!(
                "p = {p} but beta_hat has {}, feature_names {}, sigma_matrix {} entries",
                self.beta_hat.len(),
                self.feature_names.len(),
                self.sigma_matrix.len()
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidSummary("n must be positive".into()));
        }
        if !(self.sigma_hat.is_finite() && self.sigma_hat >= 0.0) {
            return Err(Error::InvalidSummary("sigma_hat must be finite and nonnegative".into()));
        }
        let m = DMatrix::from_row_slice(p, p, &self.sigma_matrix);
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if (&m - m.transpose()).amax() > MATRIX_CHECK_TOL * scale {
            return Err(Error::InvalidSummary("sigma_matrix is not symmetric".into()));
        }
        if p > 0 && m.symmetric_eigenvalues().min() < -MATRIX_CHECK_TOL * scale {
            return Err(Error::InvalidSummary("sigma_matrix is not positive semidefinite".into()));
        }
        Ok(SiteSummary {
            site_id: self.site_id,
            n: self.n,
            beta_hat: DVector::from_vec(self.beta_hat),
            sigma_hat: self.sigma_hat,
            sigma_matrix: m,
            used_conditional: self.used_conditional,
            feature_names: self.feature_names,
        })
    }
}

fn checksum(payload: &Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical.
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

/// Canonical JSON text of a summary, checksum included.
pub fn summary_to_json(summary: &SiteSummary) -> Result<String> {
    let payload = SummaryPayload::from_summary(summary);
    let finite = payload.beta_hat.iter().chain(&payload.sigma_matrix).all(|v| v.is_finite())
        && payload.sigma_hat.is_finite();
    if !finite {
        return Err(Error::InvalidSummary("summary holds non-finite values".into()));
    }
    let mut value = serde_json::to_value(&payload)?;
    let sum = checksum(&value);
    value
        .as_object_mut()
        .expect("payload serializes to an object")
        .insert("checksum".into(), Value::String(sum));
    Ok(value.to_string())
}

/// Parses and validates a summary: schema version, checksum, shapes,
/// symmetry and positive semidefiniteness of the covariance.
pub fn summary_from_json(text: &str) -> Result<SiteSummary> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::InvalidSummary("top-level JSON value is not an object".into()))?;
    match obj.get("schema_version").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(Error::SchemaVersionUnsupported(other.to_string())),
        None => return Err(Error::InvalidSummary("missing schema_version".into())),
    }
    let stored = match obj.remove("checksum") {
        Some(Value::String(s)) => s,
        _ => return Err(Error::InvalidSummary("missing checksum".into())),
    };
    let computed = checksum(&value);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let payload: SummaryPayload =
        serde_json::from_value(value).map_err(|e| Error::InvalidSummary(e.to_string()))?;
    payload.into_summary()
}

pub fn write_summary(summary: &SiteSummary, path: &Path) -> Result<()> {
    let mut text = summary_to_json(summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<SiteSummary> {
    summary_from_json(&fs::read_to_string(path)?)
}
