//! Mode dispatch: solve, audit, query exponents, refine.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use smlab_core::assembly::{assemble, CoefficientField, Sampler};
use smlab_core::coupled::{CoupledSolution, CoupledSystem, RungRecord};
use smlab_core::exponents::{gamma_choice, regime_classify, saddle_r_bound, saddle_r_bound_remark};
use smlab_core::functional::{eval_j, eval_j_regularized, saddle_check, SaddleOptions, SaddleReport};
use smlab_core::grid::{h1_seminorm, lp_norm, Grid, ScalarField};
use smlab_core::scalar_solvers::MONOTONE_EPS;
use smlab_core::verify::{audit_ladder, LadderAudit, NormSet, RungAudit, DEFAULT_FRACTIONS, DEFAULT_TAIL_LEVELS};

use crate::config::{Diagnostics, ExperimentConfig, Mode};
use crate::fields;
use crate::report::{ExponentReport, ExponentRow, LadderChecks, RungReport, SolveReport, StudyReport, StudyRow, FORMAT_VERSION};

/// Largest accepted saddle defect on an eligible configuration.
pub const SADDLE_DEFECT_TOL: f64 = 1e-6;
/// Largest accepted error of the exact `φ`-side identity.
pub const SADDLE_EXACTNESS_TOL: f64 = 1e-8;
/// CG tolerance of the manufactured-solution solves.
const STUDY_CG_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    NonConvergence,
    InvalidConfig,
    AuditViolation,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::NonConvergence => 2,
            ExitStatus::InvalidConfig => 3,
            ExitStatus::AuditViolation => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub diagnostics: Diagnostics,
    /// Files written, in order.
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

/// Runs `config.mode` and writes its artifacts under `out_dir`.
///
/// Invalid configurations come back as [`ExitStatus::InvalidConfig`] with
/// the diagnostics and nothing written. I/O failures are errors.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let diagnostics = config.validate();
    let mut outcome = RunOutcome {
        status: ExitStatus::Success,
        diagnostics,
        artifacts: Vec::new(),
        summary: Vec::new(),
    };
    if outcome.diagnostics.has_errors() {
        outcome.status = ExitStatus::InvalidConfig;
        return Ok(outcome);
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    match config.mode {
        Mode::Solve | Mode::Verify | Mode::Saddle => run_solve(config, out_dir, &mut outcome)?,
        Mode::Exponents => run_exponents(config, out_dir, &mut outcome)?,
        Mode::ConvergenceStudy => run_study(config, out_dir, &mut outcome)?,
    }
    Ok(outcome)
}

fn write_artifact(out: &mut RunOutcome, path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    out.artifacts.push(path);
    Ok(())
}

fn saddle_options(config: &ExperimentConfig) -> SaddleOptions {
    SaddleOptions {
        num_perturbations: config.saddle.num_perturbations,
        magnitude: config.saddle.magnitude,
        seed: config.solver.seed,
        ..Default::default()
    }
}

fn run_solve(config: &ExperimentConfig, out_dir: &Path, out: &mut RunOutcome) -> Result<()> {
    let problem = config.build_problem()?;
    let system = CoupledSystem::new(problem)?;
    let p = system.problem();
    let mode = config.mode;

    let (solution, failure) = match system.continuation_solve() {
        Ok(sol) => (sol, None),
        Err(fail) if fail.error.is_non_convergence() => {
            let partial = CoupledSolution {
                u: fail.partial.last().map_or_else(|| ScalarField::zeros(p.grid), |r| r.u.clone()),
                psi: fail.partial.last().map_or_else(|| ScalarField::zeros(p.grid), |r| r.psi.clone()),
                rungs: fail.partial,
            };
            (partial, Some(fail.error.to_string()))
        }
        Err(fail) => return Err(anyhow!(fail)),
    };

    let verdict = p.verdict()?;
    let sigma = verdict.as_ref().and_then(|v| v.sigma);
    let audit = if mode == Mode::Verify && failure.is_none() {
        Some(audit_ladder(&system, &solution, &DEFAULT_TAIL_LEVELS, &DEFAULT_FRACTIONS)?)
    } else {
        None
    };
    let norm_f_m = lp_norm(&p.f, p.m)?;
    let opts = saddle_options(config);

    let mut rungs = Vec::with_capacity(solution.rungs.len());
    for (k, rung) in solution.rungs.iter().enumerate() {
        let rung_audit = audit.as_ref().map(|a| &a.rungs[k]);
        let wants_saddle = match mode {
            Mode::Verify => failure.is_none(),
            Mode::Saddle => failure.is_none() && k + 1 == solution.rungs.len(),
            _ => false,
        };
        let saddle = if wants_saddle {
            Some(saddle_check(&system, rung.n, &rung.u, &rung.psi, &opts)?)
        } else {
            None
        };
        let mut report = rung_report(&system, rung, rung_audit, sigma, norm_f_m, saddle)?;
        if config.outputs.dump_fields {
            for (name, field) in [("u", &rung.u), ("psi", &rung.psi)] {
                let file = format!("{name}_n{}.field", rung.n);
                let path = out_dir.join(&file);
                fields::write(&path, field)?;
                out.artifacts.push(path);
                match name {
                    "u" => report.u_field = Some(file),
                    _ => report.psi_field = Some(file),
                }
            }
        }
        out.summary.push(format!(
            "n={:<4} fp_iters={:<4} res_u={:.3e} res_psi={:.3e} min_interior={:.6e} J_n={:.9e}",
            report.n, report.fp_iterations, report.residual_u, report.residual_psi, report.interior_min, report.j_regularized.total
        ));
        rungs.push(report);
    }

    let violations = if mode == Mode::Verify {
        violations(&system, &rungs, audit.as_ref())
    } else {
        Vec::new()
    };
    let report = SolveReport {
        format_version: FORMAT_VERSION,
        mode,
        grid: p.grid,
        verdict,
        gamma: audit.as_ref().and_then(|a| a.gamma).or_else(|| gamma_choice(p.m, p.r, p.theta).ok()),
        failure: failure.clone(),
        violations: violations.clone(),
        ladder: audit.as_ref().map(|a| LadderChecks {
            sigma_ratios: a.sigma_ratios.clone(),
            linf_values: a.linf_values.clone(),
            equiintegrability: a.equiintegrability.clone(),
        }),
        rungs,
        config: config.clone(),
    };
    write_artifact(out, out_dir.join(&config.outputs.report), &report.to_toml())?;
    write_artifact(out, out_dir.join(&config.outputs.table), &report.table_csv())?;

    if let Some(msg) = failure {
        out.summary.push(format!("stopped: {msg}"));
        out.status = ExitStatus::NonConvergence;
        return Ok(());
    }
    if let Some(a) = &audit {
        let (passed, total) = a.rungs.iter().fold((0, 0), |(p, t), r| (p + r.pass_count(), t + r.audits.len()));
        out.summary.push(format!("audits: {passed}/{total} passed"));
        for (n, fail) in a.failures() {
            let kind = if fail.constant_free { "violation" } else { "finding" };
            out.summary.push(format!("  {kind} n={n}: {} lhs={:e} rhs={:e}", fail.name, fail.lhs, fail.rhs));
        }
        if !a.equiintegrability.passed {
            out.summary.push(format!("  finding: equi-integrability proxy {:?}", a.equiintegrability.sup_values));
        }
    }
    if let Some(s) = report.rungs.last().and_then(|r| r.saddle.as_ref()) {
        out.summary.push(match &s.not_applicable_reason {
            Some(why) => format!("saddle: not applicable ({why})"),
            None => format!(
                "saddle: left={:e} right={:e} exactness={:e}",
                s.left_defect, s.right_defect, s.phi_exactness_error
            ),
        });
    }
    if !violations.is_empty() {
        out.summary.extend(violations.iter().map(|v| format!("violation: {v}")));
        out.status = ExitStatus::AuditViolation;
    }
    Ok(())
}

fn rung_report(
    system: &CoupledSystem,
    rung: &RungRecord,
    audit: Option<&RungAudit>,
    sigma: Option<f64>,
    norm_f_m: f64,
    saddle: Option<SaddleReport>,
) -> Result<RungReport> {
    let p = system.problem();
    let norms_u = match audit {
        Some(a) => a.norms_u.clone(),
        None => NormSet::compute(&rung.u, p.m, p.r, p.theta, sigma)?,
    };
    Ok(RungReport {
        n: rung.n,
        h: p.grid.max_spacing(),
        fp_iterations: rung.fp_iterations,
        psi_increment_history: rung.psi_increment_history.clone(),
        residual_u: rung.residual_u,
        residual_psi: rung.residual_psi,
        monotonicity_defect: rung.monotonicity_defect,
        min_u: rung.u.min(),
        interior_min: rung.interior_min,
        norms_u,
        norm_f_m,
        seminorm_u: h1_seminorm(&rung.u),
        seminorm_psi: h1_seminorm(&rung.psi),
        j_regularized: eval_j_regularized(system, &rung.u, &rung.psi, rung.n)?,
        j_limit: eval_j(system, &rung.u, &rung.psi)?,
        tail_measures: audit.map(|a| a.tail_measures.clone()).unwrap_or_default(),
        audits: audit.map(|a| a.audits.clone()).unwrap_or_default(),
        saddle,
        u_field: None,
        psi_field: None,
        last_inner: rung.last_inner.clone(),
    })
}

/// Verify-mode violations: failed constant-free audits, broken positivity or
/// monotonicity, and saddle defects on eligible inputs. Tracked ratios and
/// the equi-integrability proxy are findings and never violations.
fn violations(system: &CoupledSystem, rungs: &[RungReport], audit: Option<&LadderAudit>) -> Vec<String> {
    let mut out = Vec::new();
    let nonzero_datum = system.problem().f.max() > 0.0;
    for r in rungs {
        if r.min_u < 0.0 {
            out.push(format!("n={}: min u = {:e} < 0", r.n, r.min_u));
        }
        if nonzero_datum && !(r.interior_min > 0.0) {
            out.push(format!("n={}: interior min {:e} is not positive", r.n, r.interior_min));
        }
        if r.monotonicity_defect > MONOTONE_EPS {
            out.push(format!("n={}: monotonicity defect {:e} > {MONOTONE_EPS:e}", r.n, r.monotonicity_defect));
        }
        if let Some(s) = r.saddle.as_ref().filter(|s| s.applicable) {
            if s.left_defect > SADDLE_DEFECT_TOL || s.right_defect > SADDLE_DEFECT_TOL {
                out.push(format!("n={}: saddle defects left={:e} right={:e}", r.n, s.left_defect, s.right_defect));
            }
            if s.phi_exactness_error > SADDLE_EXACTNESS_TOL {
                out.push(format!("n={}: phi-side identity error {:e}", r.n, s.phi_exactness_error));
            }
        }
    }
    if let Some(a) = audit {
        for (n, fail) in a.failures() {
            if fail.constant_free {
                out.push(format!("n={n}: {} lhs={:e} rhs={:e} slack={:e}", fail.name, fail.lhs, fail.rhs, fail.slack));
            }
        }
    }
    out
}

fn run_exponents(config: &ExperimentConfig, out_dir: &Path, out: &mut RunOutcome) -> Result<()> {
    let mut rows = Vec::new();
    for inputs in config.exponent_inputs() {
        let (verdict, error) = match regime_classify(inputs) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let row = ExponentRow {
            dim: inputs.dim,
            m: inputs.m,
            r: inputs.r,
            theta: inputs.theta,
            gamma: gamma_choice(inputs.m, inputs.r, inputs.theta).ok(),
            saddle_r_bound: saddle_r_bound(inputs.dim, inputs.theta),
            saddle_r_bound_remark: saddle_r_bound_remark(inputs.dim, inputs.theta),
            verdict,
            error,
        };
        out.summary.push(match &row.verdict {
            Some(v) => format!(
                "N={} m={} r={} theta={}: {} sigma={}",
                row.dim,
                row.m,
                row.r,
                row.theta,
                v.regime.as_str(),
                v.sigma.map_or("none".into(), |s| s.to_string())
            ),
            None => format!("N={} m={} r={} theta={}: {}", row.dim, row.m, row.r, row.theta, row.error.as_deref().unwrap_or("")),
        });
        rows.push(row);
    }
    let report = ExponentReport {
        format_version: FORMAT_VERSION,
        rows,
        config: config.clone(),
    };
    write_artifact(out, out_dir.join(&config.outputs.report), &report.to_toml())?;
    write_artifact(out, out_dir.join(&config.outputs.table), &report.table_csv())?;
    Ok(())
}

/// Diagonal entries of a spatially constant diagonal coefficient.
fn constant_diagonal(c: &CoefficientField) -> Option<[f64; 3]> {
    match c.sampler {
        Sampler::ScalarConstant(v) => Some([v; 3]),
        Sampler::DiagonalConstant(d) => Some(d),
        _ => None,
    }
}

/// Wave numbers of the manufactured solution along each axis. Unequal, so
/// that a diagonal coefficient changes the discrete error.
pub const STUDY_FREQUENCIES: [f64; 3] = [1.0, 2.0, 1.0];

/// Max nodal error of the discrete solve of `-div(D∇u) = F` for
/// `u = Π sin(k_i π x_i / L_i)` with `k = STUDY_FREQUENCIES`.
pub fn manufactured_error(grid: &Grid, coeff: &CoefficientField) -> Result<f64> {
    let d = constant_diagonal(coeff).context("manufactured solutions need a constant diagonal coefficient")?;
    let dim = grid.dim();
    let omega: Vec<f64> = (0..dim).map(|k| STUDY_FREQUENCIES[k] * PI / grid.side_lengths()[k]).collect();
    let exact = ScalarField::from_fn(*grid, |x| (0..dim).map(|k| (omega[k] * x[k]).sin()).product());
    let scale: f64 = (0..dim).map(|k| d[k] * omega[k] * omega[k]).sum();
    let op = assemble(grid, coeff)?;
    let u = op.solve_spd(&exact.scaled(scale), STUDY_CG_TOL)?;
    Ok(u.sub(&exact)?.max_abs())
}

fn run_study(config: &ExperimentConfig, out_dir: &Path, out: &mut RunOutcome) -> Result<()> {
    let problem = config.build_problem()?;
    let pb = &config.problem;
    let mut rows: Vec<StudyRow> = Vec::new();
    for name in &config.study.operators {
        let coeff = if name == "a" { &problem.coeff_a } else { &problem.coeff_m };
        let mut prev: Option<(f64, f64)> = None;
        for &cells in &config.study.cells {
            let grid = Grid::cube(pb.dim, cells, pb.side)?;
            let h = grid.max_spacing();
            let err = manufactured_error(&grid, coeff)?;
            let order = prev.map(|(h0, e0)| (e0 / err).ln() / (h0 / h).ln());
            prev = Some((h, err));
            out.summary.push(format!(
                "{name}: cells={cells:<4} h={h:.4e} max_error={err:.4e} order={}",
                order.map_or("-".into(), |o| format!("{o:.3}"))
            ));
            rows.push(StudyRow {
                operator: name.clone(),
                cells,
                h,
                max_error: err,
                order,
            });
        }
    }
    let report = StudyReport {
        format_version: FORMAT_VERSION,
        rows,
        config: config.clone(),
    };
    write_artifact(out, out_dir.join(&config.outputs.report), &report.to_toml())?;
    write_artifact(out, out_dir.join(&config.outputs.table), &report.table_csv())?;
    Ok(())
}
