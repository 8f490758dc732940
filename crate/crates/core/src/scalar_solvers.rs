//! The two half-problem solvers of the coupled system.
//!
//! `S` solves the regularized singular equation
//!
//! ```text
//! -div(a ∇u) + g u^{r-1} = f / (u + 1/n)^θ,   u ≥ 0,
//! ```
//!
//! for a frozen nonnegative weight `g`, and `T` solves the linear potential
//! equation `-div(M ∇ψ) = |u|^r`.
//!
//! `S` is a damped Newton iteration on the nodal residual with iterates
//! projected onto `u ≥ 0`. When backtracking stalls it takes one lagged
//! Picard step instead (denominator and absorption magnitude frozen). The
//! start is the solution of `-div(a ∇u) = f n^θ`, which dominates the
//! solution whenever the operator is an M-matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::DiscreteOperator;
use crate::error::{Error, Result};
use crate::grid::{interior_min, truncate_t_field, InteriorSubdomain, ScalarField};
use crate::math;

/// Slack used for nodal monotonicity and interior-bound checks.
pub const MONOTONE_EPS: f64 = 1e-8;

/// Data of one singular equation.
#[derive(Debug, Clone, Copy)]
pub struct SingularEquation<'a> {
    pub diffusion: &'a DiscreteOperator,
    /// Absorption weight `g ≥ 0` (the frozen potential in the coupled system).
    pub g: &'a ScalarField,
    /// Datum `f ≥ 0`, already truncated if desired.
    pub f: &'a ScalarField,
    /// Regularization index in `1/(u + 1/n)^θ`.
    pub n: u32,
    pub r: f64,
    pub theta: f64,
    /// Replace `g u^{r-1}` by `g T_k(u^{r-1})`.
    pub truncation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NewtonOptions {
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iterations: usize,
    /// Relative tolerance of the inner CG solves.
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iterations: 200,
            linear_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NonlinearSolveTrace {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual_inf: f64,
    pub damping_events: usize,
    pub picard_steps: usize,
    /// Measured nodal minimum of the absorption weight.
    pub min_weight: f64,
    /// Max of the initial supersolution `(-div(a∇))^{-1}(f n^θ)`.
    pub supersolution_max: f64,
}

impl<'a> SingularEquation<'a> {
    pub fn validate(&self) -> Result<()> {
        let grid = self.diffusion.grid();
        if self.g.grid() != grid || self.f.grid() != grid {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: self.f.len(),
            });
        }
        if self.n < 1 {
            return Err(Error::domain("regularization index n must be >= 1"));
        }
        if !(self.r > 1.0) || !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::domain("need r > 1 and 0 < theta < 1"));
        }
        if self.g.min() < 0.0 {
            return Err(Error::domain("absorption weight g must be nonnegative"));
        }
        if self.f.min() < 0.0 {
            return Err(Error::domain("datum f must be nonnegative"));
        }
        if let Some(k) = self.truncation {
            if !(k > 0.0) {
                return Err(Error::domain("truncation level must be positive"));
            }
        }
        Ok(())
    }

    fn shift(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Absorption nonlinearity `P(u)` for `u ≥ 0`.
    fn absorption(&self, u: f64) -> f64 {
        let p = math::pow(u.max(0.0), self.r - 1.0);
        match self.truncation {
            Some(k) => p.min(k),
            None => p,
        }
    }

    fn absorption_derivative(&self, u: f64) -> f64 {
        // bounded stand-in for (r-1) u^{r-2} at u = 0 when r < 2
        let u = u.max(1e-12);
        if let Some(k) = self.truncation {
            if math::pow(u, self.r - 1.0) >= k {
                return 0.0;
            }
        }
        (self.r - 1.0) * math::pow(u, self.r - 2.0)
    }

    fn source(&self, f: f64, u: f64) -> f64 {
        f / math::pow(u.max(0.0) + self.shift(), self.theta)
    }

    fn source_derivative(&self, f: f64, u: f64) -> f64 {
        -self.theta * f / math::pow(u.max(0.0) + self.shift(), self.theta + 1.0)
    }
}

/// Nodal residual `A u + g P(u) - f/(u+1/n)^θ`.
pub fn singular_residual(eq: &SingularEquation<'_>, u: &ScalarField) -> Result<ScalarField> {
    let mut r = eq.diffusion.apply(u)?;
    let (g, f) = (eq.g.values(), eq.f.values());
    for (i, ri) in r.values_mut().iter_mut().enumerate() {
        let ui = u.values()[i];
        *ri += g[i] * eq.absorption(ui) - eq.source(f[i], ui);
    }
    Ok(r)
}

fn residual_into(eq: &SingularEquation<'_>, u: &[f64], out: &mut [f64]) {
    eq.diffusion.matrix().mul_vec_into(u, out);
    let (g, f) = (eq.g.values(), eq.f.values());
    for i in 0..u.len() {
        out[i] += g[i] * eq.absorption(u[i]) - eq.source(f[i], u[i]);
    }
}

fn norm2(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the singular equation `S`; see the module docs for the scheme.
pub fn solve_singular(
    eq: &SingularEquation<'_>,
    opts: &NewtonOptions,
    initial: Option<&ScalarField>,
) -> Result<(ScalarField, NonlinearSolveTrace)> {
    eq.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let op = eq.diffusion;
    let grid = *op.grid();
    let n = grid.len();

    let boost = math::pow(eq.n as f64, eq.theta);
    let supersolution = op.solve_spd(&eq.f.scaled(boost), opts.linear_tol)?;
    let mut trace = NonlinearSolveTrace {
        min_weight: eq.g.min(),
        supersolution_max: supersolution.max().max(0.0),
        ..Default::default()
    };
    let mut u: Vec<f64> = match initial {
        Some(init) => {
            if init.grid() != &grid {
                return Err(Error::GridMismatch {
                    expected: n,
                    found: init.len(),
                });
            }
            init.values().iter().map(|v| v.max(0.0)).collect()
        }
        None => supersolution.into_values().into_iter().map(|v| v.max(0.0)).collect(),
    };

    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    residual_into(eq, &u, &mut res);

    for it in 1..=opts.max_iterations {
        let rinf = norm_inf(&res);
        trace.residual_history.push(rinf);
        if rinf <= opts.tol {
            trace.iterations = it;
            trace.final_residual_inf = rinf;
            return Ok((ScalarField::from_vec_unchecked(grid, u), trace));
        }

        // Newton direction
        let (g, f) = (eq.g.values(), eq.f.values());
        let jac_diag: Vec<f64> = (0..n)
            .map(|i| g[i] * eq.absorption_derivative(u[i]) - eq.source_derivative(f[i], u[i]))
            .collect();
        let jac = op.matrix().plus_diagonal(&jac_diag);
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        let newton_ok = crate::sparse::conjugate_gradient(
            &jac,
            &rhs,
            &mut delta,
            crate::sparse::CgOptions {
                rel_tol: opts.linear_tol,
                max_iter: None,
            },
        )
        .is_ok();

        let r0 = norm2(&res);
        let mut accepted = false;
        if newton_ok {
            let mut t = 1.0;
            while t >= 1.0 / 1024.0 {
                for i in 0..n {
                    trial[i] = (u[i] + t * delta[i]).max(0.0);
                }
                residual_into(eq, &trial, &mut trial_res);
                if norm2(&trial_res) <= (1.0 - 1e-4 * t) * r0 {
                    accepted = true;
                    break;
                }
                t *= 0.5;
                trace.damping_events += 1;
            }
        }

        if !accepted {
            // lagged Picard step
            trace.picard_steps += 1;
            let lag: Vec<f64> = (0..n)
                .map(|i| {
                    let ui = u[i].max(1e-12);
                    g[i] * eq.absorption(ui) / ui
                })
                .collect();
            let picard = op.matrix().plus_diagonal(&lag);
            let src: Vec<f64> = (0..n).map(|i| eq.source(f[i], u[i])).collect();
            trial.copy_from_slice(&u);
            crate::sparse::conjugate_gradient(
                &picard,
                &src,
                &mut trial,
                crate::sparse::CgOptions {
                    rel_tol: opts.linear_tol,
                    max_iter: None,
                },
            )?;
            trial.iter_mut().for_each(|v| *v = v.max(0.0));
            residual_into(eq, &trial, &mut trial_res);
        }
        core::mem::swap(&mut u, &mut trial);
        core::mem::swap(&mut res, &mut trial_res);
    }

    let rinf = norm_inf(&res);
    trace.residual_history.push(rinf);
    Err(Error::NonlinearNonConvergence {
        iterations: opts.max_iterations,
        residual: rinf,
        history: trace.residual_history,
    })
}

/// Solves the potential equation `T`: `-div(M ∇ψ) = |u|^r`.
pub fn solve_potential(m_op: &DiscreteOperator, u: &ScalarField, r: f64, tol: f64) -> Result<ScalarField> {
    solve_potential_from(m_op, u, r, tol, None)
}

/// As [`solve_potential`] with an optional CG warm start.
pub fn solve_potential_from(
    m_op: &DiscreteOperator,
    u: &ScalarField,
    r: f64,
    tol: f64,
    initial: Option<&ScalarField>,
) -> Result<ScalarField> {
    if !(r > 1.0) {
        return Err(Error::domain("r must exceed 1"));
    }
    let rhs = u.map(|v| math::pow(v.abs(), r));
    let zero;
    let start = match initial {
        Some(s) => s,
        None => {
            zero = ScalarField::zeros(*m_op.grid());
            &zero
        }
    };
    let (mut psi, _) = m_op.solve_spd_from(&rhs, start, tol)?;
    if m_op.has_m_matrix_property() {
        // the exact solution is nonnegative; clear round-off below zero
        psi.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(psi)
}

/// Nodal residual `A_M ψ - |u|^r`.
pub fn potential_residual(m_op: &DiscreteOperator, u: &ScalarField, psi: &ScalarField, r: f64) -> Result<ScalarField> {
    let mut res = m_op.apply(psi)?;
    for (ri, ui) in res.values_mut().iter_mut().zip(u.values()) {
        *ri -= math::pow(ui.abs(), r);
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRung {
    pub n: u32,
    pub u: ScalarField,
    pub trace: NonlinearSolveTrace,
    pub interior_min: f64,
}

/// Solves `S` with `f_n = T_n(f)` for every `n` in `n_list` and checks that
/// the solutions increase with `n` and stay above the interior bound of the
/// first rung.
pub fn monotone_ladder(
    template: &SingularEquation<'_>,
    n_list: &[u32],
    opts: &NewtonOptions,
    interior: &InteriorSubdomain,
) -> Result<Vec<LadderRung>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n_list must be nonempty and strictly increasing"));
    }
    let mut rungs: Vec<LadderRung> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let f_n = truncate_t_field(template.f, n as f64);
        let eq = SingularEquation {
            f: &f_n,
            n,
            ..*template
        };
        let (u, trace) = solve_singular(&eq, opts, None)?;
        let interior_min = interior_min(&u, interior)?;
        if let Some(prev) = rungs.last() {
            let defect = monotonicity_defect(&prev.u, &u)?;
            if defect > MONOTONE_EPS {
                return Err(Error::Invariant(alloc::format!(
                    "u_{} exceeds u_{} by {defect:e} at some node",
                    prev.n,
                    n
                )));
            }
            let floor = rungs[0].interior_min;
            if interior_min < floor - MONOTONE_EPS {
                return Err(Error::Invariant(alloc::format!(
                    "interior minimum {interior_min:e} of u_{n} fell below c_ω = {floor:e}"
                )));
            }
        }
        rungs.push(LadderRung {
            n,
            u,
            trace,
            interior_min,
        });
    }
    Ok(rungs)
}

/// `max_i (lower_i - upper_i)^+`.
pub fn monotonicity_defect(lower: &ScalarField, upper: &ScalarField) -> Result<f64> {
    Ok(lower
        .sub(upper)?
        .values()
        .iter()
        .fold(0.0, |m: f64, &d| m.max(d)))
}
