//! The saddle functional
//!
//! ```text
//! J(u, φ) = ½∫ a|∇u|² - (1/2r)∫ M∇φ·∇φ + (1/r)∫ φ⁺|u|^r - (1/(1-θ))∫ f (u⁺)^{1-θ}
//! ```
//!
//! and a seeded check that a computed pair `(u, ψ)` satisfies
//! `J(u, φ) ≤ J(u, ψ) ≤ J(v, ψ)` on random perturbations.
//!
//! Gradient terms use the assembled operators, so `∫ a|∇u|² = h^d uᵀA_a u`.
//! The regularized variant replaces the data term by the primitive of
//! `f_n/(s + 1/n)^θ`, which makes the discrete solution at level `n` an exact
//! critical point in `u`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coupled::CoupledSystem;
use crate::error::{Error, Result};
use crate::exponents::{saddle_r_bound, saddle_r_bound_remark};
use crate::grid::{h1_seminorm, ScalarField};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalParts {
    /// `½∫ a|∇u|²`.
    pub dirichlet_u: f64,
    /// `(1/2r)∫ M∇φ·∇φ`, the magnitude of the subtracted term.
    pub dirichlet_psi_negated: f64,
    /// `(1/r)∫ φ⁺|u|^r`.
    pub coupling: f64,
    /// `(1/(1-θ))∫ f (u⁺)^{1-θ}` or its regularized counterpart.
    pub data_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalValue {
    /// `+∞` when the coupling is not integrable.
    pub total: f64,
    pub parts: FunctionalParts,
    /// Always true on a finite grid.
    pub integrability_flag: bool,
    /// Nodal sum `Σ φ⁺|u|^r h^d` recorded for reporting.
    pub coupling_magnitude: f64,
}

impl FunctionalValue {
    fn assemble(parts: FunctionalParts, coupling_magnitude: f64) -> Self {
        let integrability_flag = coupling_magnitude.is_finite();
        let total = if integrability_flag {
            parts.dirichlet_u - parts.dirichlet_psi_negated + parts.coupling - parts.data_term
        } else {
            f64::INFINITY
        };
        FunctionalValue {
            total,
            parts,
            integrability_flag,
            coupling_magnitude,
        }
    }
}

enum DataTerm {
    Exact,
    Regularized(u32),
}

fn eval(system: &CoupledSystem, u: &ScalarField, phi: &ScalarField, data: DataTerm) -> Result<FunctionalValue> {
    let p = system.problem();
    let w = p.grid.cell_volume();
    let r = p.r;
    let theta = p.theta;
    let dirichlet_u = 0.5 * system.a_operator().energy(u)?;
    let dirichlet_psi_negated = system.m_operator().energy(phi)? / (2.0 * r);
    let coupling_magnitude: f64 = phi
        .values()
        .iter()
        .zip(u.values())
        .map(|(&ph, &uu)| ph.max(0.0) * math::pow(uu.abs(), r))
        .sum::<f64>()
        * w;
    let q = 1.0 - theta;
    let data_term = match data {
        DataTerm::Exact => {
            p.f.values()
                .iter()
                .zip(u.values())
                .map(|(&f, &uu)| f * math::pow(uu.max(0.0), q))
                .sum::<f64>()
                * w
                / q
        }
        DataTerm::Regularized(n) => {
            let c = 1.0 / n as f64;
            let base = math::pow(c, q);
            let f_n = system.datum_at(n);
            f_n.values()
                .iter()
                .zip(u.values())
                .map(|(&f, &uu)| f * (math::pow(uu.max(0.0) + c, q) - base))
                .sum::<f64>()
                * w
                / q
        }
    };
    Ok(FunctionalValue::assemble(
        FunctionalParts {
            dirichlet_u,
            dirichlet_psi_negated,
            coupling: coupling_magnitude / r,
            data_term,
        },
        coupling_magnitude,
    ))
}

/// `J(u, φ)` with the unregularized data term.
pub fn eval_j(system: &CoupledSystem, u: &ScalarField, phi: &ScalarField) -> Result<FunctionalValue> {
    eval(system, u, phi, DataTerm::Exact)
}

/// `J_n(u, φ)`: data term `(1/(1-θ))∫ f_n [(u⁺ + 1/n)^{1-θ} - (1/n)^{1-θ}]`.
pub fn eval_j_regularized(system: &CoupledSystem, u: &ScalarField, phi: &ScalarField, n: u32) -> Result<FunctionalValue> {
    if n < 1 {
        return Err(Error::domain("regularization index n must be >= 1"));
    }
    eval(system, u, phi, DataTerm::Regularized(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaddleOptions {
    pub num_perturbations: usize,
    /// `W^{1,2}`-seminorm of every perturbation.
    pub magnitude: f64,
    pub seed: u64,
    pub fd_step: f64,
    pub fd_directions: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            num_perturbations: 1000,
            magnitude: 0.1,
            seed: 0,
            fd_step: 1e-6,
            fd_directions: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaddleReport {
    pub applicable: bool,
    /// Why the gate rejected the input.
    pub not_applicable_reason: Option<String>,
    pub n: u32,
    pub r_bound: f64,
    /// The alternative bound form, reported only.
    pub r_bound_remark: f64,
    pub num_perturbations: usize,
    pub magnitude: f64,
    pub seed: u64,
    pub j_value: f64,
    /// `max (J(u,φ) - J(u,ψ))⁺` over the samples.
    pub left_defect: f64,
    /// `max (J(u,ψ) - J(v,ψ))⁺` over the samples.
    pub right_defect: f64,
    /// Max error of `J(u,ψ) - J(u,φ) = (1/2r)∫ M∇(ψ-φ)·∇(ψ-φ)` over `φ ≥ 0`.
    pub phi_exactness_error: f64,
    /// Max central-difference directional derivative of `v ↦ J(v, ψ)` at `u`.
    pub stationarity: f64,
    /// `10⁻⁴ (1 + |J(u,ψ)|)`.
    pub stationarity_bound: f64,
}

impl SaddleReport {
    fn not_applicable(system: &CoupledSystem, n: u32, opts: &SaddleOptions, reason: String) -> Self {
        let p = system.problem();
        let dim = p.grid.dim() as u32;
        SaddleReport {
            applicable: false,
            not_applicable_reason: Some(reason),
            n,
            r_bound: saddle_r_bound(dim, p.theta),
            r_bound_remark: saddle_r_bound_remark(dim, p.theta),
            num_perturbations: opts.num_perturbations,
            magnitude: opts.magnitude,
            seed: opts.seed,
            j_value: f64::NAN,
            left_defect: 0.0,
            right_defect: 0.0,
            phi_exactness_error: 0.0,
            stationarity: 0.0,
            stationarity_bound: 0.0,
        }
    }
}

/// Why `(system, r)` falls outside the saddle-point regime, if it does.
pub fn saddle_gate(system: &CoupledSystem) -> Option<String> {
    let p = system.problem();
    let dim = p.grid.dim() as u32;
    if dim < 3 {
        return Some(alloc::format!("dimension {dim} < 3"));
    }
    let bound = saddle_r_bound(dim, p.theta);
    if p.r > bound + crate::exponents::THRESHOLD_TOL {
        return Some(alloc::format!("r = {} exceeds the bound {bound}", p.r));
    }
    if !p.coeff_m.is_symmetric() {
        return Some(String::from("M is not symmetric"));
    }
    None
}

/// Gated saddle check of the level-`n` pair `(u, ψ)`.
pub fn saddle_check(system: &CoupledSystem, n: u32, u: &ScalarField, psi: &ScalarField, opts: &SaddleOptions) -> Result<SaddleReport> {
    match saddle_gate(system) {
        Some(reason) => Ok(SaddleReport::not_applicable(system, n, opts, reason)),
        None => saddle_probe(system, n, u, psi, opts),
    }
}

fn normal_field(rng: &mut ChaCha8Rng, like: &ScalarField, magnitude: f64) -> ScalarField {
    let mut z = like.map(|_| 0.0);
    for v in z.values_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let s = h1_seminorm(&z);
    if s == 0.0 {
        return z;
    }
    z.scaled(magnitude / s)
}

/// The saddle check without the regime gate.
pub fn saddle_probe(system: &CoupledSystem, n: u32, u: &ScalarField, psi: &ScalarField, opts: &SaddleOptions) -> Result<SaddleReport> {
    let p = system.problem();
    let dim = p.grid.dim() as u32;
    if !(opts.magnitude >= 0.0) || !(opts.fd_step > 0.0) {
        return Err(Error::domain("saddle magnitudes must be nonnegative"));
    }
    let j = |v: &ScalarField, phi: &ScalarField| eval_j_regularized(system, v, phi, n).map(|x| x.total);
    let base = j(u, psi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let inv2r = 1.0 / (2.0 * p.r);

    let mut left_defect: f64 = 0.0;
    let mut exactness: f64 = 0.0;
    for _ in 0..opts.num_perturbations {
        let pert = normal_field(&mut rng, psi, opts.magnitude);
        let phi = psi.zip_map(&pert, |a, b| a + b)?;
        left_defect = left_defect.max(j(u, &phi)? - base);

        let phi_plus = phi.map(|v| v.max(0.0));
        let gap = base - j(u, &phi_plus)?;
        let quad = inv2r * system.m_operator().energy(&psi.sub(&phi_plus)?)?;
        exactness = exactness.max((gap - quad).abs());
    }

    let mut right_defect: f64 = 0.0;
    for _ in 0..opts.num_perturbations {
        let pert = normal_field(&mut rng, u, opts.magnitude);
        let clamp = rng.random_bool(0.5);
        let v = u.zip_map(&pert, |a, b| if clamp { (a + b).max(0.0) } else { a + b })?;
        right_defect = right_defect.max(base - j(&v, psi)?);
    }

    let mut stationarity: f64 = 0.0;
    let eps = opts.fd_step;
    for _ in 0..opts.fd_directions {
        let d = normal_field(&mut rng, u, 1.0);
        let plus = u.zip_map(&d, |a, b| a + eps * b)?;
        let minus = u.zip_map(&d, |a, b| a - eps * b)?;
        let deriv = (j(&plus, psi)? - j(&minus, psi)?) / (2.0 * eps);
        stationarity = stationarity.max(deriv.abs());
    }

    Ok(SaddleReport {
        applicable: true,
        not_applicable_reason: None,
        n,
        r_bound: saddle_r_bound(dim, p.theta),
        r_bound_remark: saddle_r_bound_remark(dim, p.theta),
        num_perturbations: opts.num_perturbations,
        magnitude: opts.magnitude,
        seed: opts.seed,
        j_value: base,
        left_defect: left_defect.max(0.0),
        right_defect: right_defect.max(0.0),
        phi_exactness_error: exactness,
        stationarity,
        stationarity_bound: 1e-4 * (1.0 + base.abs()),
    })
}

/// Values of `t ↦ J(u + t e_i, ψ)` and `t ↦ J(u, ψ + t e_i)` along unit
/// node directions, for scans on tiny grids.
pub fn axis_scan(system: &CoupledSystem, n: u32, u: &ScalarField, psi: &ScalarField, ts: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(ts.len() * u.len());
    for i in 0..u.len() {
        for &t in ts {
            let mut v = u.clone();
            v.values_mut()[i] += t;
            let mut phi = psi.clone();
            phi.values_mut()[i] += t;
            out.push((
                t,
                eval_j_regularized(system, &v, psi, n)?.total,
                eval_j_regularized(system, u, &phi, n)?.total,
            ));
        }
    }
    Ok(out)
}
