//! Interchange JSON for matrices, fit reports and run manifests.
//!
//! Every document carries `"schema": 1`. Complex matrices are written
//! row-major as nested rows of `[re, im]` pairs. Floats use the shortest
//! representation that parses back to the same bits.

use serde::{Deserialize, Serialize};

use crate::channels::{probability_operator, BasisLabel, ChiMatrix, OperatorBasis, ProbabilityOperator};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::mle::{FitReport, Method};
use crate::tomography::SCHEMA_VERSION;

/// How far above one λ_max(P) may sit before a loaded χ is refused
/// outright under [`UnphysicalPolicy::Warn`].
pub const MAX_P_EXCESS: f64 = 1e-3;
const P_EXCESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    Chi,
    ProbabilityOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub schema: u32,
    pub kind: MatrixKind,
    /// Hilbert-space dimension d.
    pub dim: usize,
    pub basis: String,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
    /// Operators of a custom basis, in the same entry layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_ops: Option<Vec<Vec<Vec<[f64; 2]>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

fn entries_of(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn matrix_from(entries: &[Vec<[f64; 2]>], rows: usize, cols: usize) -> Result<CMatrix> {
    if entries.len() != rows || entries.iter().any(|r| r.len() != cols) {
        return Err(Error::Representation(format!("entries do not form a {rows}x{cols} matrix")));
    }
    let data = entries.iter().flatten().map(|[re, im]| C64::new(*re, *im)).collect();
    CMatrix::from_vec(rows, cols, data)
}

impl MatrixJson {
    pub fn from_chi(chi: &ChiMatrix) -> Self {
        let m = chi.mat();
        let label = chi.basis().label();
        Self {
            schema: SCHEMA_VERSION,
            kind: MatrixKind::Chi,
            dim: chi.dim(),
            basis: label.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            entries: entries_of(m),
            basis_ops: matches!(label, BasisLabel::Custom(_))
                .then(|| chi.basis().ops().iter().map(entries_of).collect()),
            manifest: None,
        }
    }

    pub fn from_probability_operator(p: &ProbabilityOperator) -> Self {
        let m = p.mat();
        Self {
            schema: SCHEMA_VERSION,
            kind: MatrixKind::ProbabilityOperator,
            dim: m.rows(),
            basis: "computational".into(),
            rows: m.rows(),
            cols: m.cols(),
            entries: entries_of(m),
            basis_ops: None,
            manifest: None,
        }
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Representation(format!("unsupported schema {}", self.schema)));
        }
        matrix_from(&self.entries, self.rows, self.cols)
    }

    pub fn basis(&self) -> Result<OperatorBasis> {
        let label = BasisLabel::parse(&self.basis);
        match (&label, &self.basis_ops) {
            (BasisLabel::Custom(_), Some(ops)) => {
                let ops = ops
                    .iter()
                    .map(|e| matrix_from(e, self.dim, self.dim))
                    .collect::<Result<Vec<_>>>()?;
                OperatorBasis::new(label, ops)
            }
            (BasisLabel::Custom(name), None) => {
                Err(Error::InvalidBasis(format!("custom basis {name:?} has no basis_ops")))
            }
            _ => OperatorBasis::from_label(&label, self.dim),
        }
    }

    /// χ exactly as stored, without any physicality check.
    pub fn to_chi(&self) -> Result<ChiMatrix> {
        if self.kind != MatrixKind::Chi {
            return Err(Error::Representation("document does not hold a chi matrix".into()));
        }
        let basis = self.basis()?;
        let m = self.matrix()?;
        if m.rows() != basis.len() || m.cols() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: m.rows(),
            });
        }
        ChiMatrix::new(basis, m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn chi_to_json(chi: &ChiMatrix) -> Result<String> {
    MatrixJson::from_chi(chi).to_json()
}

pub fn chi_from_json(s: &str) -> Result<ChiMatrix> {
    MatrixJson::from_json(s)?.to_chi()
}

/// What to do with a loaded χ whose P has an eigenvalue above one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnphysicalPolicy {
    Error,
    /// Rescale to λ_max(P) = 1 when the excess is at most
    /// [`MAX_P_EXCESS`], refuse otherwise.
    Warn,
}

impl std::str::FromStr for UnphysicalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(UnphysicalPolicy::Error),
            "warn" => Ok(UnphysicalPolicy::Warn),
            _ => Err(Error::InvalidParameter(format!("unknown unphysical policy {s:?}"))),
        }
    }
}

/// Check a loaded χ against P ≤ I and apply `policy`. Returns the
/// (possibly rescaled) χ and the scale it was divided by.
pub fn admit_chi(chi: ChiMatrix, policy: UnphysicalPolicy) -> Result<(ChiMatrix, f64)> {
    let top = probability_operator(&chi)?.max_eigenvalue();
    let excess = top - 1.0;
    if excess <= P_EXCESS_TOL {
        return Ok((chi, 1.0));
    }
    match policy {
        UnphysicalPolicy::Warn if excess <= MAX_P_EXCESS => {
            log::warn!("loaded chi has max P eigenvalue {top:.9}; rescaling to 1");
            Ok((chi.scaled(1.0 / top), top))
        }
        _ => Err(Error::Unphysical(top)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub schema: u32,
    pub method: Method,
    pub chi: MatrixJson,
    /// Eigenvalues of P, largest first.
    pub p_eigenvalues: Vec<f64>,
    pub p_class: String,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts_used: usize,
    pub constraint_residual: Option<f64>,
    pub normalization_scale: f64,
    pub seed: u64,
    pub min_chi_eigenvalue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl ReportJson {
    pub fn new(report: &FitReport) -> Result<Self> {
        let p = probability_operator(&report.chi)?;
        Ok(Self {
            schema: SCHEMA_VERSION,
            method: report.method,
            chi: MatrixJson::from_chi(&report.chi),
            p_eigenvalues: p.eigenvalues().iter().rev().copied().collect(),
            p_class: p.classify().to_string(),
            objective: report.objective,
            iterations: report.iterations,
            evaluations: report.evaluations,
            restarts_used: report.restarts_used,
            constraint_residual: report.constraint_residual,
            normalization_scale: report.normalization_scale,
            seed: report.seed,
            min_chi_eigenvalue: report.min_chi_eigenvalue,
            fidelity: None,
            reference: None,
            manifest: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Provenance record written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
