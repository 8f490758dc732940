//! Experiment configuration.
//!
//! A config is a TOML document written with dotted keys, for example
//!
//! ```toml
//! mode = "verify"
//! problem.dim = 3
//! problem.cells = 8
//! problem.theta = 0.5
//! problem.r = 3.0
//! problem.m = 4.0
//! problem.a.preset = "constant"
//! problem.a.value = 1.0
//! problem.M.preset = "identity"
//! problem.f.preset = "singular"
//! solver.n_schedule = [1, 2, 4]
//! solver.seed = 7
//! ```
//!
//! Every key has a default; the full list is in the README. Parsing only
//! checks types and rejects unknown keys. [`ExperimentConfig::validate`]
//! does the semantic checks and reports every violation at once.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smlab_core::assembly::{CoefficientField, Sampler, Tensor};
use smlab_core::coupled::{CoupledProblem, Datum};
use smlab_core::exponents::ExponentInputs;
use smlab_core::grid::{Grid, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Solve,
    Verify,
    Exponents,
    Saddle,
    ConvergenceStudy,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Verify => "verify",
            Mode::Exponents => "exponents",
            Mode::Saddle => "saddle",
            Mode::ConvergenceStudy => "convergence_study",
        }
    }

    fn solves(&self) -> bool {
        matches!(self, Mode::Solve | Mode::Verify | Mode::Saddle)
    }
}

/// A coefficient preset with its parameters. Which parameters a preset reads
/// is listed in [`CoefficientSpec::PRESETS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    /// Absent means the slot's default preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl CoefficientSpec {
    /// `(preset, parameters it reads)`.
    pub const PRESETS: [(&'static str, &'static [&'static str]); 6] = [
        ("constant", &["value"]),
        ("checkerboard", &["low", "high", "tiles"]),
        ("identity", &[]),
        ("anisotropic", &["beta"]),
        ("diagonal", &["diagonal"]),
        ("full", &["tensor", "alpha", "beta"]),
    ];

    /// Presets allowed for the scalar diffusion `a`.
    pub const SCALAR_PRESETS: [&'static str; 2] = ["constant", "checkerboard"];

    pub fn named(preset: &str) -> Self {
        CoefficientSpec {
            preset: Some(preset.to_string()),
            value: None,
            low: None,
            high: None,
            tiles: None,
            beta: None,
            diagonal: None,
            tensor: None,
            alpha: None,
        }
    }

    fn given(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let flags = [
            ("value", self.value.is_some()),
            ("low", self.low.is_some()),
            ("high", self.high.is_some()),
            ("tiles", self.tiles.is_some()),
            ("beta", self.beta.is_some()),
            ("diagonal", self.diagonal.is_some()),
            ("tensor", self.tensor.is_some()),
            ("alpha", self.alpha.is_some()),
        ];
        for (name, set) in flags {
            if set {
                out.push(name);
            }
        }
        out
    }

    /// Preset name, `default` when unset.
    pub fn preset_or<'a>(&'a self, default: &'a str) -> &'a str {
        self.preset.as_deref().unwrap_or(default)
    }

    fn build(&self, key: &str, default: &str, dim: usize, scalar_only: bool, diags: &mut Diagnostics) -> Option<CoefficientField> {
        let preset = self.preset_or(default);
        let Some((_, params)) = Self::PRESETS.iter().find(|(name, _)| *name == preset) else {
            let names: Vec<_> = Self::PRESETS.iter().map(|(n, _)| *n).collect();
            diags.error(format!("{key}.preset"), format!("unknown preset {preset:?}, expected one of {names:?}"));
            return None;
        };
        if scalar_only && !Self::SCALAR_PRESETS.contains(&preset) {
            diags.error(
                format!("{key}.preset"),
                format!("the diffusion a is scalar; preset {preset:?} is not one of {:?}", Self::SCALAR_PRESETS),
            );
            return None;
        }
        for name in self.given() {
            if !params.contains(&name) {
                diags.warning(format!("{key}.{name}"), format!("ignored by preset {preset:?}"));
            }
        }
        let positive = |diags: &mut Diagnostics, name: &str, v: f64| {
            let ok = v.is_finite() && v > 0.0;
            if !ok {
                diags.error(format!("{key}.{name}"), format!("must be a positive finite number, got {v}"));
            }
            ok
        };
        match preset {
            "constant" => {
                let v = self.value.unwrap_or(1.0);
                positive(diags, "value", v).then(|| CoefficientField::scalar_constant(v))
            }
            "checkerboard" => {
                let (Some(low), Some(high)) = (self.low, self.high) else {
                    diags.error(format!("{key}.low"), "checkerboard needs both low and high".into());
                    return None;
                };
                let tiles = self.tiles.unwrap_or(2);
                let mut ok = positive(diags, "low", low) & positive(diags, "high", high);
                if ok && low > high {
                    diags.error(format!("{key}.high"), format!("must be >= low ({low}), got {high}"));
                    ok = false;
                }
                if tiles == 0 {
                    diags.error(format!("{key}.tiles"), "must be at least 1".into());
                    ok = false;
                }
                ok.then(|| CoefficientField::checkerboard(low, high, tiles))
            }
            "identity" => Some(CoefficientField::identity()),
            "anisotropic" => {
                let Some(beta) = self.beta else {
                    diags.error(format!("{key}.beta"), "anisotropic needs beta".into());
                    return None;
                };
                positive(diags, "beta", beta).then(|| CoefficientField::anisotropic(beta))
            }
            "diagonal" => {
                let Some(d) = &self.diagonal else {
                    diags.error(format!("{key}.diagonal"), "diagonal needs a list of entries".into());
                    return None;
                };
                if d.len() != dim {
                    diags.error(format!("{key}.diagonal"), format!("needs {dim} entries, got {}", d.len()));
                    return None;
                }
                let mut ok = true;
                for &v in d {
                    ok &= positive(diags, "diagonal", v);
                }
                if !ok {
                    return None;
                }
                let mut entries = [1.0; MAX_DIM];
                entries[..dim].copy_from_slice(d);
                Some(CoefficientField {
                    sampler: Sampler::DiagonalConstant(entries),
                    alpha: d.iter().cloned().fold(f64::INFINITY, f64::min),
                    beta: d.iter().cloned().fold(0.0, f64::max),
                })
            }
            "full" => {
                let (Some(t), Some(alpha), Some(beta)) = (&self.tensor, self.alpha, self.beta) else {
                    diags.error(format!("{key}.tensor"), "full needs tensor, alpha and beta".into());
                    return None;
                };
                if t.len() != dim || t.iter().any(|row| row.len() != dim) {
                    diags.error(format!("{key}.tensor"), format!("must be a {dim}x{dim} array"));
                    return None;
                }
                if !(positive(diags, "alpha", alpha) & positive(diags, "beta", beta)) {
                    return None;
                }
                let mut m: Tensor = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..MAX_DIM {
                    m[i][i] = 1.0;
                }
                for i in 0..dim {
                    m[i][..dim].copy_from_slice(&t[i]);
                }
                Some(CoefficientField::full_constant(m, alpha, beta))
            }
            _ => unreachable!("preset list checked above"),
        }
    }
}

/// A datum preset: `zero`, `constant` (`value`) or `singular` (`amplitude`,
/// `cap`). The singular datum is `amplitude · min(|x - x0|^{-0.9 N/m}, cap)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    /// Absent means `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl DatumSpec {
    pub const PRESETS: [&'static str; 3] = ["zero", "constant", "singular"];

    pub fn named(preset: &str) -> Self {
        DatumSpec {
            preset: Some(preset.to_string()),
            value: None,
            amplitude: None,
            cap: None,
        }
    }

    fn build(&self, key: &str, grid: &Grid, m: f64, diags: &mut Diagnostics) -> Option<Datum> {
        let preset = self.preset.as_deref().unwrap_or("constant");
        let params: &[&str] = match preset {
            "zero" => &[],
            "constant" => &["value"],
            "singular" => &["amplitude", "cap"],
            other => {
                diags.error(format!("{key}.preset"), format!("unknown preset {other:?}, expected one of {:?}", Self::PRESETS));
                return None;
            }
        };
        for (name, set) in [("value", self.value.is_some()), ("amplitude", self.amplitude.is_some()), ("cap", self.cap.is_some())] {
            if set && !params.contains(&name) {

                diags.warning(format!("{key}.{name}"), format!("ignored by preset {preset:?}"));
            }
        }
        match preset {
            "zero" => Some(Datum::Zero),
            "constant" => {
                let v = self.value.unwrap_or(1.0);
                if !(v.is_finite() && v >= 0.0) {
                    diags.error(format!("{key}.value"), format!("must be a nonnegative finite number, got {v}"));
                    return None;
                }
                Some(Datum::Constant(v))
            }
            _ => {
                let amplitude = self.amplitude.unwrap_or(1.0);
                let mut ok = true;
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    diags.error(format!("{key}.amplitude"), format!("must be a nonnegative finite number, got {amplitude}"));
                    ok = false;
                }
                if let Some(cap) = self.cap {
                    if !(cap.is_finite() && cap > 0.0) {
                        diags.error(format!("{key}.cap"), format!("must be a positive finite number, got {cap}"));
                        ok = false;
                    }
                }
                if !ok || !(m > 0.0) {
                    return None;
                }
                let mut datum = Datum::singular_for(grid, m, amplitude);
                if let (Datum::SingularPower { cap, .. }, Some(c)) = (&mut datum, self.cap) {
                    *cap = c;
                }
                Some(datum)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemBlock {
    pub dim: usize,
    pub cells: usize,
    /// Side length of the cube `[0, side]^dim`.
    pub side: f64,
    pub theta: f64,
    pub r: f64,
    pub m: f64,
    pub interior_margin: f64,
    pub a: CoefficientSpec,
    #[serde(rename = "M")]
    pub m_coeff: CoefficientSpec,
    pub f: DatumSpec,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        ProblemBlock {
            dim: 3,
            cells: 8,
            side: 1.0,
            theta: 0.5,
            r: 2.0,
            m: 4.0,
            interior_margin: 0.125,
            a: CoefficientSpec::named("constant"),
            m_coeff: CoefficientSpec::named("identity"),
            f: DatumSpec::named("constant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub n_schedule: Vec<u32>,
    pub fp_tol: f64,
    pub inner_tol: f64,
    pub max_fp_iters: usize,
    pub relaxation: f64,
    pub seed: u64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            n_schedule: vec![1, 2, 4],
            fp_tol: 1e-10,
            inner_tol: 1e-12,
            max_fp_iters: 200,
            relaxation: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleBlock {
    /// Perturbations per side.
    pub num_perturbations: usize,
    pub magnitude: f64,
}

impl Default for SaddleBlock {
    fn default() -> Self {
        SaddleBlock {
            num_perturbations: 1000,
            magnitude: 0.1,
        }
    }
}

/// Parameter grid of the `exponents` mode; an empty list falls back to the
/// matching `problem` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentGrid {
    pub dim: Vec<u32>,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyBlock {
    /// Cells per axis, one level per entry.
    pub cells: Vec<usize>,
    /// Which operators to refine: `"a"`, `"M"`.
    pub operators: Vec<String>,
}

impl Default for StudyBlock {
    fn default() -> Self {
        StudyBlock {
            cells: vec![8, 16, 32],
            operators: vec!["a".into(), "M".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsBlock {
    /// Report file, relative to the output directory.
    pub report: String,
    /// Table file, relative to the output directory.
    pub table: String,
    pub dump_fields: bool,
}

impl Default for OutputsBlock {
    fn default() -> Self {
        OutputsBlock {
            report: "report.toml".into(),
            table: "table.csv".into(),
            dump_fields: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub problem: ProblemBlock,
    pub solver: SolverBlock,
    pub saddle: SaddleBlock,
    pub exponents: ExponentGrid,
    pub study: StudyBlock,
    pub outputs: OutputsBlock,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{0}")]
    Invalid(Diagnostics),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted config key the diagnostic is about.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    fn error(&mut self, key: String, message: String) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            key,
            message,
        });
    }

    fn warning(&mut self, key: String, message: String) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            key,
            message,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.0.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter().filter(|d| d.severity == Severity::Warning)
    }

    /// The first diagnostic about `key`.
    pub fn find(&self, key: &str) -> Option<&Diagnostic> {
        self.0.iter().find(|d| d.key == key)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// All violations and warnings; empty for a well-formed config.
    pub fn validate(&self) -> Diagnostics {
        self.assemble().1
    }

    /// The coupled problem described by `problem` and `solver`.
    pub fn build_problem(&self) -> Result<CoupledProblem, ConfigError> {
        match self.assemble() {
            (Some(p), diags) if !diags.has_errors() => Ok(p),
            (_, diags) => Err(ConfigError::Invalid(diags)),
        }
    }

    /// Every `(N, m, r, θ)` of the exponent grid.
    pub fn exponent_inputs(&self) -> Vec<ExponentInputs> {
        let pick = |list: &[f64], fallback: f64| if list.is_empty() { vec![fallback] } else { list.to_vec() };
        let dims = if self.exponents.dim.is_empty() {
            vec![self.problem.dim as u32]
        } else {
            self.exponents.dim.clone()
        };
        let mut out = Vec::new();
        for &dim in &dims {
            for &m in &pick(&self.exponents.m, self.problem.m) {
                for &r in &pick(&self.exponents.r, self.problem.r) {
                    for &theta in &pick(&self.exponents.theta, self.problem.theta) {
                        out.push(ExponentInputs { dim, m, r, theta });
                    }
                }
            }
        }
        out
    }

    fn assemble(&self) -> (Option<CoupledProblem>, Diagnostics) {
        let mut d = Diagnostics::default();
        let p = &self.problem;
        let s = &self.solver;

        if !(2..=3).contains(&p.dim) {
            d.error("problem.dim".into(), format!("must be 2 or 3, got {}", p.dim));
        }
        if p.cells < 2 {
            d.error("problem.cells".into(), format!("must be at least 2, got {}", p.cells));
        }
        if !(p.side.is_finite() && p.side > 0.0) {
            d.error("problem.side".into(), format!("must be a positive finite number, got {}", p.side));
        }
        if !(p.theta > 0.0 && p.theta < 1.0) {
            d.error("problem.theta".into(), format!("must lie in the open interval (0, 1), got {}", p.theta));
        }
        if !(p.r.is_finite() && p.r > 1.0) {
            d.error("problem.r".into(), format!("must be a finite number > 1, got {}", p.r));
        }
        if !(p.m.is_finite() && p.m > 1.0) {
            d.error("problem.m".into(), format!("must be a finite number > 1, got {}", p.m));
        }
        if p.dim >= 3 && p.m == p.dim as f64 / 2.0 {
            d.warning(
                "problem.m".into(),
                format!(
                    "m = N/2 = {} lies on the boundary between the bounded and the summability regimes; \
                     both regularity statements need strict inequalities, so no exponent is predicted",
                    p.m
                ),
            );
        }
        if p.dim == 2 && self.mode.solves() {
            d.warning("problem.dim".into(), "regularity predictions are only made for dim = 3; audits tied to them are skipped".into());
        }
        if !(p.interior_margin.is_finite() && p.interior_margin >= 0.0) {
            d.error("problem.interior_margin".into(), format!("must be nonnegative, got {}", p.interior_margin));
        }

        if s.n_schedule.is_empty() {
            d.error("solver.n_schedule".into(), "must not be empty".into());
        } else if s.n_schedule[0] < 1 || s.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            d.error("solver.n_schedule".into(), format!("must be positive and strictly increasing, got {:?}", s.n_schedule));
        }
        for (key, v) in [("solver.fp_tol", s.fp_tol), ("solver.inner_tol", s.inner_tol)] {
            if !(v.is_finite() && v > 0.0) {
                d.error(key.into(), format!("must be a positive finite number, got {v}"));
            }
        }
        if s.max_fp_iters == 0 {
            d.error("solver.max_fp_iters".into(), "must be at least 1".into());
        }
        if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            d.error("solver.relaxation".into(), format!("must lie in (0, 1], got {}", s.relaxation));
        }
        if s.seed > i64::MAX as u64 {
            d.error("solver.seed".into(), format!("must not exceed {}", i64::MAX));
        }
        if self.saddle.num_perturbations == 0 {
            d.error("saddle.num_perturbations".into(), "must be at least 1".into());
        }
        if !(self.saddle.magnitude.is_finite() && self.saddle.magnitude > 0.0) {
            d.error("saddle.magnitude".into(), format!("must be a positive finite number, got {}", self.saddle.magnitude));
        }
        if self.outputs.report.is_empty() {
            d.error("outputs.report".into(), "must name a file".into());
        }
        if self.outputs.table.is_empty() {
            d.error("outputs.table".into(), "must name a file".into());
        }

        match self.mode {
            Mode::Exponents => self.check_exponent_grid(&mut d),
            Mode::ConvergenceStudy => self.check_study(&mut d),
            _ => {}
        }

        let grid = if (2..=3).contains(&p.dim) && p.cells >= 2 && p.side > 0.0 && p.side.is_finite() {
            Grid::cube(p.dim, p.cells, p.side).ok()
        } else {
            None
        };
        let Some(grid) = grid else {
            return (None, d);
        };
        let a = p.a.build("problem.a", "constant", p.dim, true, &mut d);
        let m = p.m_coeff.build("problem.M", "identity", p.dim, false, &mut d);
        let f = p.f.build("problem.f", &grid, p.m, &mut d);
        if let Some(a) = &a {
            if let Err(e) = a.validate(&grid) {
                d.error("problem.a".into(), e.to_string());
            }
        }
        if let Some(m) = &m {
            if let Err(e) = m.validate(&grid) {
                d.error("problem.M".into(), e.to_string());
            }
        }
        let (Some(a), Some(m), Some(f)) = (a, m, f) else {
            return (None, d);
        };
        if d.has_errors() {
            return (None, d);
        }
        let mut prob = CoupledProblem::new(grid, a, m, f.sample(&grid), p.theta, p.r, p.m);
        prob.n_schedule = s.n_schedule.clone();
        prob.fp_tol = s.fp_tol;
        prob.inner_tol = s.inner_tol;
        prob.max_fp_iters = s.max_fp_iters;
        prob.relaxation = s.relaxation;
        prob.interior_margin = p.interior_margin;
        if let Err(e) = prob.validate() {
            d.error("problem".into(), e.to_string());
            return (None, d);
        }
        (Some(prob), d)
    }

    fn check_exponent_grid(&self, d: &mut Diagnostics) {
        let e = &self.exponents;
        let lists: [(&str, &[f64], f64); 3] = [("m", &e.m, self.problem.m), ("r", &e.r, self.problem.r), ("theta", &e.theta, self.problem.theta)];
        for &dim in &e.dim {
            if dim < 3 {
                d.error("exponents.dim".into(), format!("entries must be >= 3, got {dim}"));
            }
        }
        if e.dim.is_empty() && self.problem.dim < 3 {
            d.error("exponents.dim".into(), "empty list falls back to problem.dim, which must then be >= 3".into());
        }
        for (name, list, _) in lists {
            for &v in list {
                let probe = match name {
                    "m" => ExponentInputs { dim: 3, m: v, r: 2.0, theta: 0.5 },
                    "r" => ExponentInputs { dim: 3, m: 2.0, r: v, theta: 0.5 },
                    _ => ExponentInputs { dim: 3, m: 2.0, r: 2.0, theta: v },
                };
                if let Err(err) = probe.validate() {
                    d.error(format!("exponents.{name}"), err.to_string());
                }
            }
        }
    }

    fn check_study(&self, d: &mut Diagnostics) {
        let st = &self.study;
        if st.cells.len() < 2 {
            d.error("study.cells".into(), "needs at least two refinement levels".into());
        }
        if st.cells.iter().any(|&c| c < 2) || st.cells.windows(2).any(|w| w[0] >= w[1]) {
            d.error("study.cells".into(), format!("must be >= 2 and strictly increasing, got {:?}", st.cells));
        }
        if st.operators.is_empty() {
            d.error("study.operators".into(), "must not be empty".into());
        }
        for (name, default, spec) in [("a", "constant", &self.problem.a), ("M", "identity", &self.problem.m_coeff)] {
            if !st.operators.iter().any(|o| o == name) {
                continue;
            }
            let preset = spec.preset_or(default);
            if !matches!(preset, "constant" | "identity" | "anisotropic" | "diagonal") {
                d.error(
                    format!("problem.{name}.preset"),
                    format!("the manufactured solution needs a constant diagonal coefficient, got {preset:?}"),
                );
            }
        }
        for op in &st.operators {
            if op != "a" && op != "M" {
                d.error("study.operators".into(), format!("unknown operator {op:?}, expected \"a\" or \"M\""));
            }
        }
    }
}
