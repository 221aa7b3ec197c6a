//! On-disk certificate: the synthesis result plus provenance for replay.

use anyhow::{anyhow, bail, Context, Result};
use consensus_forge::lmi::SolverOptions;
use consensus_forge::{Certificate64, Matrix, Method};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::Rows;

pub const TOOL: &str = "consensus-forge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub margin_tol: f64,
    pub pos_tol: f64,
    pub gap_tol: f64,
}

impl From<&SolverOptions> for Tolerances {
    fn from(o: &SolverOptions) -> Self {
        Self {
            margin_tol: o.margin_tol,
            pos_tol: o.pos_tol,
            gap_tol: o.gap_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub tool: String,
    pub version: String,
    pub spec_hash: String,
    pub tolerances: Tolerances,
    pub method: String,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "Y")]
    pub y: Rows,
    #[serde(rename = "F")]
    pub f: Rows,
    pub pi: Vec<f64>,
    pub theta: Vec<f64>,
    pub solver_margin: f64,
    pub lmi_margins: Vec<f64>,
    pub riccati_margins: Vec<f64>,
    pub bound_constant: f64,
    pub bound_total: Option<f64>,
}

fn matrix(path: &str, rows: &Rows) -> Result<Matrix<f64>> {
    Matrix::from_rows(rows).with_context(|| format!("certificate field `{path}`"))
}

impl CertificateFile {
    pub fn new(cert: &Certificate64, spec_hash: String, tolerances: Tolerances) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            spec_hash,
            tolerances,
            method: cert.method.as_str().into(),
            k: cert.k.to_rows(),
            y: cert.y.to_rows(),
            f: cert.f.to_rows(),
            pi: cert.pi.clone(),
            theta: cert.theta.clone(),
            solver_margin: cert.solver_margin,
            lmi_margins: cert.lmi_margins.clone(),
            riccati_margins: cert.riccati_margins.clone(),
            bound_constant: cert.bound_constant,
            bound_total: cert.bound_total,
        }
    }

    pub fn certificate(&self) -> Result<Certificate64> {
        let method: Method = self
            .method
            .parse()
            .map_err(|e| anyhow!("certificate field `method`: {e}"))?;
        Ok(Certificate64 {
            method,
            k: matrix("K", &self.k)?,
            y: matrix("Y", &self.y)?,
            f: matrix("F", &self.f)?,
            pi: self.pi.clone(),
            theta: self.theta.clone(),
            solver_margin: self.solver_margin,
            lmi_margins: self.lmi_margins.clone(),
            riccati_margins: self.riccati_margins.clone(),
            bound_constant: self.bound_constant,
            bound_total: self.bound_total,
            margin_tol: self.tolerances.margin_tol,
        })
    }

    /// Fails unless the certificate was produced for `expected`.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.spec_hash != expected {
            bail!(
                "spec hash mismatch: certificate was issued for {}, config hashes to {expected}",
                self.spec_hash
            );
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("certificate field `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading certificate {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .with_context(|| format!("writing certificate {}", path.display()))
    }
}
