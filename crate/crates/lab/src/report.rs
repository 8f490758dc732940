//! Versioned reports and their tabular exports.
//!
//! Reports are TOML documents whose keys are the struct field names below.
//! TOML is used rather than JSON because several reported quantities are
//! legitimately non-finite (`σ = ∞` in the bounded regime, `J` of a gated
//! saddle check) and TOML round-trips `inf` and `nan`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use smlab_core::exponents::RegularityVerdict;
use smlab_core::functional::{FunctionalValue, SaddleReport};
use smlab_core::grid::Grid;
use smlab_core::scalar_solvers::NonlinearSolveTrace;
use smlab_core::verify::{EquiIntegrabilityReport, EstimateAudit, NormSet};

use crate::config::{ExperimentConfig, Mode};

pub const FORMAT_VERSION: u32 = 1;

/// Columns of the per-rung table.
pub const TABLE_COLUMNS: [&str; 19] = [
    "n",
    "h",
    "dim",
    "theta",
    "r",
    "m",
    "regime",
    "fp_iters",
    "res_u",
    "res_psi",
    "min_u_interior",
    "norm_u_sigma",
    "norm_f_m",
    "ratio_sigma",
    "J_value",
    "saddle_left_defect",
    "saddle_right_defect",
    "audit_pass_count",
    "audit_total",
];

pub const EXPONENT_COLUMNS: [&str; 15] = [
    "dim",
    "m",
    "r",
    "theta",
    "regime",
    "r_threshold",
    "m_lower",
    "bounded",
    "sigma",
    "m_double_star",
    "sigma_candidate_double_star",
    "sigma_candidate_s",
    "gamma",
    "saddle_r_bound",
    "diagnostic",
];

pub const STUDY_COLUMNS: [&str; 5] = ["operator", "cells", "h", "max_error", "order"];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report is not valid TOML: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("report has no format_version")]
    MissingVersion,
    #[error("unsupported report format_version {found} (this build reads {FORMAT_VERSION})")]
    UnknownVersion { found: i64 },
}

/// Parses a report after checking its schema version.
pub fn read_versioned<T: DeserializeOwned>(text: &str) -> Result<T, ReportError> {
    let table: toml::Table = text.parse()?;
    match table.get("format_version").and_then(|v| v.as_integer()) {
        None => Err(ReportError::MissingVersion),
        Some(v) if v != FORMAT_VERSION as i64 => Err(ReportError::UnknownVersion { found: v }),
        Some(_) => Ok(table.try_into()?),
    }
}

fn write_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("reports contain only TOML-representable values")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub n: u32,
    pub h: f64,
    pub fp_iterations: usize,
    pub psi_increment_history: Vec<f64>,
    pub residual_u: f64,
    pub residual_psi: f64,
    pub monotonicity_defect: f64,
    pub min_u: f64,
    pub interior_min: f64,
    pub norms_u: NormSet,
    pub norm_f_m: f64,
    pub seminorm_u: f64,
    pub seminorm_psi: f64,
    /// `J_n` with the regularized data term.
    pub j_regularized: FunctionalValue,
    /// `J` with the singular data term.
    pub j_limit: FunctionalValue,
    pub tail_measures: Vec<f64>,
    pub audits: Vec<EstimateAudit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saddle: Option<SaddleReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_field: Option<String>,
    pub last_inner: NonlinearSolveTrace,
}

impl RungReport {
    pub fn pass_count(&self) -> usize {
        self.audits.iter().filter(|a| a.passed).count()
    }

    pub fn sigma_ratio(&self) -> Option<f64> {
        let s = self.norms_u.l_sigma?;
        Some(if self.norm_f_m == 0.0 && s == 0.0 { 0.0 } else { s / self.norm_f_m })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderChecks {
    pub sigma_ratios: Vec<f64>,
    pub linf_values: Vec<f64>,
    pub equiintegrability: EquiIntegrabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub format_version: u32,
    pub mode: Mode,
    pub grid: Grid,
    /// Absent for two-dimensional runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<RegularityVerdict>,
    /// `(γ, s)` of the weighted estimate chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<(f64, f64)>,
    /// Why the run stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Invariant and audit violations found in verify mode.
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderChecks>,
    pub rungs: Vec<RungReport>,
    /// The configuration that produced the run, seed included.
    pub config: ExperimentConfig,
}

impl SolveReport {
    pub fn to_toml(&self) -> String {
        write_toml(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        read_versioned(text)
    }

    pub fn table_rows(&self) -> Vec<Vec<String>> {
        let p = &self.config.problem;
        let regime = self.verdict.as_ref().map_or("n/a", |v| v.regime.as_str());
        self.rungs
            .iter()
            .map(|rung| {
                let saddle = rung.saddle.as_ref().filter(|s| s.applicable);
                vec![
                    rung.n.to_string(),
                    num(rung.h),
                    p.dim.to_string(),
                    num(p.theta),
                    num(p.r),
                    num(p.m),
                    regime.to_string(),
                    rung.fp_iterations.to_string(),
                    num(rung.residual_u),
                    num(rung.residual_psi),
                    num(rung.interior_min),
                    opt(rung.norms_u.l_sigma),
                    num(rung.norm_f_m),
                    opt(rung.sigma_ratio()),
                    num(rung.j_regularized.total),
                    opt(saddle.map(|s| s.left_defect)),
                    opt(saddle.map(|s| s.right_defect)),
                    rung.pass_count().to_string(),
                    rung.audits.len().to_string(),
                ]
            })
            .collect()
    }

    pub fn table_csv(&self) -> String {
        csv_text(&TABLE_COLUMNS, self.table_rows())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    pub dim: u32,
    pub m: f64,
    pub r: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<RegularityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<(f64, f64)>,
    pub saddle_r_bound: f64,
    pub saddle_r_bound_remark: f64,
    /// Why no verdict was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub format_version: u32,
    pub rows: Vec<ExponentRow>,
    pub config: ExperimentConfig,
}

impl ExponentReport {
    pub fn to_toml(&self) -> String {
        write_toml(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        read_versioned(text)
    }

    pub fn table_csv(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let v = row.verdict.as_ref();
                let cands = v.and_then(|v| v.candidates);
                vec![
                    row.dim.to_string(),
                    num(row.m),
                    num(row.r),
                    num(row.theta),
                    v.map_or("error".into(), |v| v.regime.as_str().to_string()),
                    opt(v.map(|v| v.r_threshold)),
                    opt(v.map(|v| v.m_lower)),
                    v.map_or(String::new(), |v| v.bounded.to_string()),
                    opt(v.and_then(|v| v.sigma)),
                    opt(v.map(|v| v.m_double_star)),
                    opt(cands.map(|c| c.0)),
                    opt(cands.map(|c| c.1)),
                    opt(row.gamma.map(|g| g.0)),
                    num(row.saddle_r_bound),
                    v.and_then(|v| v.diagnostic.clone()).or_else(|| row.error.clone()).unwrap_or_default(),
                ]
            })
            .collect();
        csv_text(&EXPONENT_COLUMNS, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub operator: String,
    pub cells: usize,
    pub h: f64,
    pub max_error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; absent on the coarsest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub format_version: u32,
    pub rows: Vec<StudyRow>,
    pub config: ExperimentConfig,
}

impl StudyReport {
    pub fn to_toml(&self) -> String {
        write_toml(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        read_versioned(text)
    }

    pub fn table_csv(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| vec![r.operator.clone(), r.cells.to_string(), num(r.h), num(r.max_error), opt(r.order)])
            .collect();
        csv_text(&STUDY_COLUMNS, rows)
    }
}

/// Shortest round-trip formatting, in exponent form away from `[1e-4, 1e7)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e7).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}
