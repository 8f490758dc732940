//! Fixed-point driver for the coupled system and the continuation ladder
//! over the regularization index `n`.
//!
//! One fixed-point step solves `S` with the current potential frozen, then
//! `T` with the new `u`, and optionally relaxes the potential update.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::assembly::{assemble, CoefficientField, DiscreteOperator, Point};
use crate::error::{Error, Result};
use crate::exponents::{regime_classify, ExponentInputs, RegularityVerdict};
use crate::grid::{h1_seminorm, interior_min, truncate_t_field, Grid, InteriorSubdomain, ScalarField, MAX_DIM};
use crate::math;
use crate::scalar_solvers::{
    monotonicity_defect, potential_residual, singular_residual, solve_potential_from, solve_singular, NewtonOptions,
    NonlinearSolveTrace, SingularEquation,
};

/// Steps of non-decreasing increments after which the iteration is
/// declared to cycle.
pub const CYCLE_WINDOW: usize = 10;

/// Preset data `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Datum {
    Zero,
    Constant(f64),
    /// `amplitude · min(|x - center|^{-exponent}, cap)`.
    SingularPower {
        amplitude: f64,
        exponent: f64,
        cap: f64,
        center: Point,
    },
}

impl Datum {
    /// The singular datum sitting just inside `L^m`: exponent `0.9 N / m`,
    /// cap `10^6`, centred slightly off the box centre so that no grid node
    /// of a dyadic family hits the singularity.
    pub fn singular_for(grid: &Grid, m: f64, amplitude: f64) -> Self {
        let dim = grid.dim();
        let mut center = [0.0; MAX_DIM];
        for k in 0..dim {
            let side = grid.side_lengths()[k];
            center[k] = side * (0.5 + 0.0137);
        }
        Datum::SingularPower {
            amplitude,
            exponent: 0.9 * dim as f64 / m,
            cap: 1e6,
            center,
        }
    }

    pub fn sample(&self, grid: &Grid) -> ScalarField {
        match *self {
            Datum::Zero => ScalarField::zeros(*grid),
            Datum::Constant(c) => ScalarField::constant(*grid, c),
            Datum::SingularPower {
                amplitude,
                exponent,
                cap,
                center,
            } => {
                let dim = grid.dim();
                ScalarField::from_fn(*grid, |x| {
                    let d2: f64 = (0..dim).map(|k| (x[k] - center[k]) * (x[k] - center[k])).sum();
                    amplitude * math::pow(d2, -0.5 * exponent).min(cap)
                })
            }
        }
    }
}

/// A coupled problem on a grid.
#[derive(Debug, Clone)]
pub struct CoupledProblem {
    pub grid: Grid,
    /// Scalar diffusion `a`.
    pub coeff_a: CoefficientField,
    pub coeff_m: CoefficientField,
    pub f: ScalarField,
    pub theta: f64,
    pub r: f64,
    /// Summability index of `f`; metadata for the audits only.
    pub m: f64,
    pub n_schedule: Vec<u32>,
    pub fp_tol: f64,
    pub inner_tol: f64,
    pub max_fp_iters: usize,
    /// Relaxation `ρ` in `ψ ← (1-ρ)ψ + ρ T(S(ψ))`.
    pub relaxation: f64,
    /// Margin of the interior subdomain used for positivity records.
    pub interior_margin: f64,
}

impl CoupledProblem {
    /// Problem with default solver settings.
    pub fn new(
        grid: Grid,
        coeff_a: CoefficientField,
        coeff_m: CoefficientField,
        f: ScalarField,
        theta: f64,
        r: f64,
        m: f64,
    ) -> Self {
        CoupledProblem {
            grid,
            coeff_a,
            coeff_m,
            f,
            theta,
            r,
            m,
            n_schedule: alloc::vec![1, 2, 4],
            fp_tol: 1e-10,
            inner_tol: 1e-12,
            max_fp_iters: 200,
            relaxation: 1.0,
            interior_margin: 0.125,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f.grid() != &self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: self.f.len(),
            });
        }
        if self.f.min() < 0.0 {
            return Err(Error::domain("datum f must be nonnegative"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::domain("theta must lie in (0, 1)"));
        }
        if !(self.r > 1.0) {
            return Err(Error::domain("r must exceed 1"));
        }
        if !(self.m >= 1.0) {
            return Err(Error::domain("m must be at least 1"));
        }
        if self.n_schedule.is_empty() || self.n_schedule[0] < 1 || self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("n_schedule must be nonempty, positive and strictly increasing"));
        }
        if !(self.fp_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::domain("tolerances must be positive"));
        }
        if self.max_fp_iters == 0 {
            return Err(Error::domain("max_fp_iters must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::domain("relaxation must lie in (0, 1]"));
        }
        if !(self.interior_margin >= 0.0) {
            return Err(Error::domain("interior margin must be nonnegative"));
        }
        Ok(())
    }

    /// Regime verdict for three-dimensional runs; `None` otherwise.
    pub fn verdict(&self) -> Result<Option<RegularityVerdict>> {
        if self.grid.dim() != 3 {
            return Ok(None);
        }
        regime_classify(ExponentInputs::new(3, self.m, self.r, self.theta)?).map(Some)
    }
}

/// Per-rung record of a continuation run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RungRecord {
    pub n: u32,
    pub fp_iterations: usize,
    pub psi_increment_history: Vec<f64>,
    /// Max-norm residual of the singular equation at `(u, ψ)`.
    pub residual_u: f64,
    /// Max-norm residual of the potential equation at `(u, ψ)`.
    pub residual_psi: f64,
    /// `max(u_prev - u, 0)` against the previous rung; zero on the first.
    pub monotonicity_defect: f64,
    pub interior_min: f64,
    /// Newton statistics of the last `S` solve.
    pub last_inner: NonlinearSolveTrace,
    pub u: ScalarField,
    pub psi: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub u: ScalarField,
    pub psi: ScalarField,
    pub rungs: Vec<RungRecord>,
}

/// A failed continuation run with the rungs completed before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} ({} rung(s) completed)", partial.len())]
pub struct ContinuationFailure {
    pub error: Error,
    pub partial: Vec<RungRecord>,
}

/// A validated problem with its two operators assembled.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    problem: CoupledProblem,
    a_op: DiscreteOperator,
    m_op: DiscreteOperator,
    interior: InteriorSubdomain,
}

impl CoupledSystem {
    pub fn new(problem: CoupledProblem) -> Result<Self> {
        problem.validate()?;
        if problem.coeff_a.kind() != crate::assembly::CoefficientKind::Scalar {
            return Err(Error::domain("the diffusion a must be scalar"));
        }
        let a_op = assemble(&problem.grid, &problem.coeff_a)?;
        let m_op = assemble(&problem.grid, &problem.coeff_m)?;
        let interior = InteriorSubdomain::new(problem.grid, problem.interior_margin)?;
        Ok(CoupledSystem {
            problem,
            a_op,
            m_op,
            interior,
        })
    }

    pub fn problem(&self) -> &CoupledProblem {
        &self.problem
    }

    pub fn a_operator(&self) -> &DiscreteOperator {
        &self.a_op
    }

    pub fn m_operator(&self) -> &DiscreteOperator {
        &self.m_op
    }

    pub fn interior(&self) -> &InteriorSubdomain {
        &self.interior
    }

    /// `f_n = T_n(f)`.
    pub fn datum_at(&self, n: u32) -> ScalarField {
        truncate_t_field(&self.problem.f, n as f64)
    }

    fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.problem.inner_tol,
            max_iterations: 200,
            linear_tol: 1e-13,
        }
    }

    fn potential_tol(&self, u: &ScalarField) -> f64 {
        // relative CG tolerance giving an absolute residual well below fp_tol
        let p = &self.problem;
        let scale = math::sqrt(u.values().iter().map(|v| math::pow(v.abs(), 2.0 * p.r)).sum());
        if scale == 0.0 {
            return p.inner_tol;
        }
        (0.1 * p.fp_tol / scale).clamp(1e-13, p.inner_tol.max(1e-13))
    }

    /// Singular equation at level `n` with absorption weight `ψ⁺`.
    pub fn singular_equation<'a>(&'a self, weight: &'a ScalarField, f_n: &'a ScalarField, n: u32) -> SingularEquation<'a> {
        SingularEquation {
            diffusion: &self.a_op,
            g: weight,
            f: f_n,
            n,
            r: self.problem.r,
            theta: self.problem.theta,
            truncation: None,
        }
    }

    /// Max-norm residuals of both equations at `(u, ψ)` for level `n`.
    pub fn residuals(&self, n: u32, u: &ScalarField, psi: &ScalarField) -> Result<(f64, f64)> {
        let f_n = self.datum_at(n);
        let weight = psi.map(|v| v.max(0.0));
        let res_u = singular_residual(&self.singular_equation(&weight, &f_n, n), u)?.max_abs();
        let res_psi = potential_residual(&self.m_op, u, psi, self.problem.r)?.max_abs();
        Ok((res_u, res_psi))
    }

    /// Re-solves `S` at the frozen potential `ψ` from the default start.
    pub fn solve_s(&self, n: u32, psi: &ScalarField, initial: Option<&ScalarField>) -> Result<(ScalarField, NonlinearSolveTrace)> {
        let f_n = self.datum_at(n);
        let weight = psi.map(|v| v.max(0.0));
        solve_singular(&self.singular_equation(&weight, &f_n, n), &self.newton_options(), initial)
    }

    pub fn solve_t(&self, u: &ScalarField, initial: Option<&ScalarField>) -> Result<ScalarField> {
        solve_potential_from(&self.m_op, u, self.problem.r, self.potential_tol(u), initial)
    }

    /// Iterates `ψ ← T(S(ψ))` at level `n` from `psi_init`.
    pub fn fixed_point_solve(&self, n: u32, psi_init: &ScalarField) -> Result<RungRecord> {
        let p = &self.problem;
        if psi_init.grid() != &p.grid {
            return Err(Error::GridMismatch {
                expected: p.grid.len(),
                found: psi_init.len(),
            });
        }
        if psi_init.min() < 0.0 {
            return Err(Error::domain("initial potential must be nonnegative"));
        }
        if n < 1 {
            return Err(Error::domain("regularization index n must be >= 1"));
        }
        let f_n = self.datum_at(n);
        let opts = self.newton_options();
        let mut psi = psi_init.clone();
        let mut u_prev: Option<ScalarField> = None;
        let mut increments: Vec<f64> = Vec::new();

        let fail = |iterations: usize, reason: String, increments: Vec<f64>| Error::FixedPointNonConvergence {
            n,
            iterations,
            reason,
            increments,
        };

        for j in 1..=p.max_fp_iters {
            let weight = psi.map(|v| v.max(0.0));
            let eq = self.singular_equation(&weight, &f_n, n);
            let (u, trace) = solve_singular(&eq, &opts, u_prev.as_ref()).map_err(|e| {
                fail(j, format!("inner S solve failed: {e}"), increments.clone())
            })?;
            let t = self
                .solve_t(&u, Some(&psi))
                .map_err(|e| fail(j, format!("inner T solve failed: {e}"), increments.clone()))?;
            let rho = p.relaxation;
            let psi_new = if rho == 1.0 {
                t
            } else {
                psi.zip_map(&t, |a, b| (1.0 - rho) * a + rho * b)?
            };
            let increment = h1_seminorm(&psi_new.sub(&psi)?);
            increments.push(increment);
            let (res_u, res_psi) = self.residuals(n, &u, &psi_new)?;
            psi = psi_new;

            if increment <= p.fp_tol && res_u <= p.fp_tol && res_psi <= p.fp_tol {
                let interior_min = interior_min(&u, &self.interior)?;
                return Ok(RungRecord {
                    n,
                    fp_iterations: j,
                    psi_increment_history: increments,
                    residual_u: res_u,
                    residual_psi: res_psi,
                    monotonicity_defect: 0.0,
                    interior_min,
                    last_inner: trace,
                    u,
                    psi,
                });
            }
            if increments.len() > CYCLE_WINDOW {
                let tail = &increments[increments.len() - CYCLE_WINDOW - 1..];
                if tail.windows(2).all(|w| w[1] >= w[0]) {
                    return Err(fail(
                        j,
                        format!("increments non-decreasing over {CYCLE_WINDOW} steps (cycling)"),
                        increments,
                    ));
                }
            }
            u_prev = Some(u);
        }
        Err(fail(p.max_fp_iters, String::from("max_fp_iters exceeded"), increments))
    }

    /// Runs the fixed point on every rung of the schedule, warm-starting
    /// the potential from the previous rung.
    pub fn continuation_solve(&self) -> core::result::Result<CoupledSolution, ContinuationFailure> {
        let mut rungs: Vec<RungRecord> = Vec::with_capacity(self.problem.n_schedule.len());
        let mut psi = ScalarField::zeros(self.problem.grid);
        for &n in &self.problem.n_schedule {
            let mut rec = match self.fixed_point_solve(n, &psi) {
                Ok(rec) => rec,
                Err(error) => return Err(ContinuationFailure { error, partial: rungs }),
            };
            if let Some(prev) = rungs.last() {
                rec.monotonicity_defect = monotonicity_defect(&prev.u, &rec.u)
                    .map_err(|error| ContinuationFailure { error, partial: rungs.clone() })?;
            }
            psi = rec.psi.clone();
            rungs.push(rec);
        }
        let last = rungs.last().expect("schedule is nonempty");
        Ok(CoupledSolution {
            u: last.u.clone(),
            psi: last.psi.clone(),
            rungs,
        })
    }
}

/// Assembles `prob` and runs one fixed point at level `n`.
pub fn fixed_point_solve(prob: &CoupledProblem, n: u32, psi_init: &ScalarField) -> Result<RungRecord> {
    CoupledSystem::new(prob.clone())?.fixed_point_solve(n, psi_init)
}

/// Assembles `prob` and runs the whole ladder.
pub fn continuation_solve(prob: &CoupledProblem) -> core::result::Result<CoupledSolution, ContinuationFailure> {
    let system = CoupledSystem::new(prob.clone()).map_err(|error| ContinuationFailure {
        error,
        partial: Vec::new(),
    })?;
    system.continuation_solve()
}
