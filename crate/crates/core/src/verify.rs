//! Discrete audits of the a priori estimates.
//!
//! Inequalities without unknown constants are checked as
//! `lhs ≤ rhs (1 + 1e-10) + slack`. The slack absorbs the residual of the
//! discrete equations and is `10 · fp_tol · scale`, where `scale` is
//! `1 + ‖u‖₁ + ‖ψ‖₁ + ‖w‖₁` and `w` is the test function of the estimate.
//! Estimates carrying an unknown constant become tracked ratios whose
//! stability across rungs is what gets checked.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::coupled::{CoupledSolution, CoupledSystem, RungRecord};
use crate::error::{Error, Result};
use crate::exponents::{conjugate, gamma_choice, Regime, RegularityVerdict};
use crate::grid::{dirichlet_energy, h1_seminorm, lp_norm, truncate_g_field, weighted_dirichlet_energy, ScalarField};
use crate::math;

pub const RELATIVE_TOL: f64 = 1e-10;
/// Growth allowed for the tracked `L^σ` ratio on the last rung.
pub const SIGMA_GROWTH: f64 = 1.1;
/// Growth allowed for `‖u_n‖_∞` on the last rung when `m > N/2`.
pub const LINF_GROWTH: f64 = 1.05;
pub const DEFAULT_TAIL_LEVELS: [f64; 3] = [1.0, 2.0, 4.0];
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.2, 0.05, 0.0125];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateAudit {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// The audited inequality has no unknown constant.
    pub constant_free: bool,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    pub slack: f64,
    pub applicable: bool,
    pub passed: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

impl EstimateAudit {
    /// `lhs ≤ rhs (1 + 1e-10) + slack`.
    pub fn inequality(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        EstimateAudit {
            name: name.into(),
            lhs,
            rhs,
            constant_free: true,
            ratio: ratio(lhs, rhs),
            slack,
            applicable: true,
            passed: lhs <= rhs * (1.0 + RELATIVE_TOL) + slack,
        }
    }

    /// `|lhs - rhs| ≤ 1e-10 max(|lhs|, |rhs|) + slack`.
    pub fn equality(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        EstimateAudit {
            passed: (lhs - rhs).abs() <= RELATIVE_TOL * lhs.abs().max(rhs.abs()) + slack,
            ..Self::inequality(name, lhs, rhs, slack)
        }
    }

    /// A ratio with an unknown constant; `passed` is decided by the caller.
    pub fn tracked(name: impl Into<String>, lhs: f64, rhs: f64, passed: bool) -> Self {
        EstimateAudit {
            constant_free: false,
            passed,
            ..Self::inequality(name, lhs, rhs, 0.0)
        }
    }

    pub fn not_applicable(name: impl Into<String>) -> Self {
        EstimateAudit {
            name: name.into(),
            lhs: 0.0,
            rhs: 0.0,
            constant_free: false,
            ratio: 0.0,
            slack: 0.0,
            applicable: false,
            passed: true,
        }
    }
}

fn l1(field: &ScalarField) -> f64 {
    field.values().iter().map(|v| v.abs()).sum::<f64>() * field.grid().cell_volume()
}

fn quad(field: &ScalarField, f: impl Fn(usize, f64) -> f64) -> f64 {
    field.values().iter().enumerate().map(|(i, &v)| f(i, v)).sum::<f64>() * field.grid().cell_volume()
}

struct Slack {
    base: f64,
    fp_tol: f64,
}

impl Slack {
    fn new(system: &CoupledSystem, u: &ScalarField, psi: &ScalarField) -> Self {
        Slack {
            base: 1.0 + l1(u) + l1(psi),
            fp_tol: system.problem().fp_tol,
        }
    }

    fn with(&self, test: &ScalarField) -> f64 {
        10.0 * self.fp_tol * (self.base + l1(test))
    }
}

fn alpha(system: &CoupledSystem) -> f64 {
    system.a_operator().alpha().min(system.m_operator().alpha())
}

/// Energy estimates: `α∫|∇ψ|² ≤ ∫ψ u^r` and
/// `α(∫|∇u|² + ∫|∇ψ|²) ≤ ∫ f_n u^{1-θ}`.
pub fn audit_energy(system: &CoupledSystem, u: &ScalarField, psi: &ScalarField, n: u32) -> Result<[EstimateAudit; 2]> {
    let p = system.problem();
    let slack = Slack::new(system, u, psi);
    let a = alpha(system);
    let (eu, epsi) = (dirichlet_energy(u), dirichlet_energy(psi));
    let coupling = quad(u, |i, v| psi.values()[i] * math::pow(v.abs(), p.r));
    let f_n = system.datum_at(n);
    let data = quad(u, |i, v| f_n.values()[i] * math::pow(v.abs(), 1.0 - p.theta));
    Ok([
        EstimateAudit::inequality("energy_potential", a * epsi, coupling, slack.with(psi)),
        EstimateAudit::inequality("energy_total", a * (eu + epsi), data, slack.with(u)),
    ])
}

/// Tail estimates `α∫|∇G_k(u)|² ≤ ∫ f G_k(u)`, one per level, with the
/// measure of `{u ≥ k}`.
pub fn audit_tail(system: &CoupledSystem, u: &ScalarField, psi: &ScalarField, k_list: &[f64]) -> Result<Vec<(EstimateAudit, f64)>> {
    let p = system.problem();
    let slack = Slack::new(system, u, psi);
    let a = system.a_operator().alpha();
    let w = p.grid.cell_volume();
    k_list
        .iter()
        .map(|&k| {
            if !(k >= 1.0) {
                return Err(Error::domain("tail levels must be at least 1"));
            }
            let g = truncate_g_field(u, k);
            let lhs = a * dirichlet_energy(&g);
            let rhs = quad(&g, |i, v| p.f.values()[i] * v);
            let measure = u.values().iter().filter(|&&v| v >= k).count() as f64 * w;
            Ok((
                EstimateAudit::inequality(format!("tail_k{k}"), lhs, rhs, slack.with(&g)),
                measure,
            ))
        })
        .collect()
}

/// `(a^p - b^p) / (p (a - b))`, continuous at `a = b`.
fn chord_weight(a: f64, b: f64, p: f64) -> f64 {
    let (a, b) = (a.max(0.0), b.max(0.0));
    let scale = a.max(b);
    if scale == 0.0 {
        return if p == 1.0 { 1.0 } else { 0.0 };
    }
    if (a - b).abs() <= 1e-6 * scale {
        return math::pow(0.5 * (a + b), p - 1.0);
    }
    (math::pow(a, p) - math::pow(b, p)) / (p * (a - b))
}

/// The three steps of the `γ`-weighted chain:
/// (a) `α(2γ-1)∫|∇u|² u^{2γ-2} ≤ ∫ f_n u^{2γ-1-θ}`,
/// (b) `∫ u^{r+γ} = ∫ M∇ψ·∇(u^γ)`,
/// (c) the tracked ratio `[∫ u^s]^{1/m} / ‖f‖_{L^m}`.
///
/// The weight in (a) is the chord `(u_i^p - u_j^p)/(p(u_i - u_j))` on every
/// edge with `p = 2γ - 1`, which reduces to `u^{2γ-2}` on flat edges.
pub fn audit_gamma_chain(system: &CoupledSystem, u: &ScalarField, psi: &ScalarField, n: u32, gamma: f64) -> Result<[EstimateAudit; 3]> {
    if !(gamma >= 1.0) {
        return Err(Error::domain("gamma must be at least 1"));
    }
    let pr = system.problem();
    let slack = Slack::new(system, u, psi);
    let p = 2.0 * gamma - 1.0;
    let f_n = system.datum_at(n);

    let weighted = weighted_dirichlet_energy(u, |a, b| chord_weight(a, b, p));
    let test_a = u.map(|v| math::pow(v.max(0.0), p));
    let rhs_a = quad(u, |i, v| f_n.values()[i] * math::pow(v.max(0.0), p - pr.theta));
    let a_audit = EstimateAudit::inequality("gamma_weighted_energy", system.a_operator().alpha() * p * weighted, rhs_a, slack.with(&test_a));

    let test_b = u.map(|v| math::pow(v.max(0.0), gamma));
    let lhs_b = quad(u, |_, v| math::pow(v.max(0.0), pr.r + gamma));
    let rhs_b = system.m_operator().bilinear(psi, &test_b)?;
    let b_audit = EstimateAudit::equality("gamma_coupling_identity", lhs_b, rhs_b, slack.with(&test_b));

    let s = pr.m * (2.0 * pr.r + 1.0 + pr.theta) / (pr.m + 1.0);
    let lhs_c = math::pow(quad(u, |_, v| math::pow(v.abs(), s)), 1.0 / pr.m);
    let rhs_c = lp_norm(&pr.f, pr.m)?;
    let c_audit = EstimateAudit::tracked("gamma_summability_ratio", lhs_c, rhs_c, ratio(lhs_c, rhs_c).is_finite());
    Ok([a_audit, b_audit, c_audit])
}

/// Per-rung ratios `‖u_n‖_{L^σ} / ‖f‖_{L^m}`, then one audit: last rung at
/// most `1.1 ×` the largest earlier ratio.
pub fn audit_sigma_boundedness(system: &CoupledSystem, ladder: &CoupledSolution, verdict: Option<&RegularityVerdict>) -> Result<(Vec<f64>, EstimateAudit)> {
    let name = "sigma_boundedness";
    let Some(sigma) = verdict.filter(|v| v.regime != Regime::OutOfTheorem).and_then(|v| v.sigma) else {
        return Ok((Vec::new(), EstimateAudit::not_applicable(name)));
    };
    let f_norm = lp_norm(&system.problem().f, system.problem().m)?;
    let ratios: Vec<f64> = ladder
        .rungs
        .iter()
        .map(|rung| lp_norm(&rung.u, sigma).map(|v| ratio(v, f_norm)))
        .collect::<Result<_>>()?;
    Ok((ratios.clone(), growth_audit(name, &ratios, SIGMA_GROWTH)))
}

fn growth_audit(name: &str, values: &[f64], growth: f64) -> EstimateAudit {
    let (last, earlier) = values.split_last().expect("ladder has a rung");
    let max_earlier = earlier.iter().fold(0.0f64, |m, &v| m.max(v));
    if earlier.is_empty() {
        return EstimateAudit::tracked(name, *last, *last, last.is_finite());
    }
    EstimateAudit::tracked(name, *last, max_earlier, *last <= growth * max_earlier)
}

/// `‖u_n‖_∞` across the ladder for `m > N/2`: last at most `1.05 ×` the
/// largest earlier value.
pub fn audit_linf(ladder: &CoupledSolution, verdict: Option<&RegularityVerdict>) -> (Vec<f64>, EstimateAudit) {
    let name = "linf_boundedness";
    if !verdict.is_some_and(|v| v.bounded && v.regime != Regime::OutOfTheorem) {
        return (Vec::new(), EstimateAudit::not_applicable(name));
    }
    let maxima: Vec<f64> = ladder.rungs.iter().map(|r| r.u.max_abs()).collect();
    (maxima.clone(), growth_audit(name, &maxima, LINF_GROWTH))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquiIntegrabilityReport {
    pub fractions: Vec<f64>,
    /// `sup_n ∫_E ψ_n u_n^r` for each fraction.
    pub sup_values: Vec<f64>,
    /// Node counts of the sets `E`.
    pub set_sizes: Vec<usize>,
    /// The grid cannot resolve distinct sets.
    pub degenerate: bool,
    pub passed: bool,
}

/// For each fraction `q`, the nodes carrying the largest values of
/// `ψ_n u_n^r` and covering a fraction `q` of the domain form `E`; reports
/// `sup_n ∫_E ψ_n u_n^r` and passes when the last value is at most half the
/// first.
pub fn audit_equiintegrability(ladder: &CoupledSolution, r: f64, fractions: &[f64]) -> Result<EquiIntegrabilityReport> {
    if ladder.rungs.is_empty() {
        return Err(Error::domain("empty ladder"));
    }
    if fractions.is_empty() || fractions.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
        return Err(Error::domain("fractions must lie in (0, 1]"));
    }
    let grid = *ladder.rungs[0].u.grid();
    let total = grid.len();
    let w = grid.cell_volume();
    let set_sizes: Vec<usize> = fractions
        .iter()
        .map(|&q| (math::floor(q * total as f64) as usize).clamp(1, total))
        .collect();
    let mut sup_values = alloc::vec![0.0f64; fractions.len()];
    for rung in &ladder.rungs {
        let mut density: Vec<f64> = rung
            .psi
            .values()
            .iter()
            .zip(rung.u.values())
            .map(|(&ps, &uu)| ps.max(0.0) * math::pow(uu.abs(), r))
            .collect();
        density.sort_by(|a, b| b.total_cmp(a));
        for (slot, &k) in sup_values.iter_mut().zip(&set_sizes) {
            let mass: f64 = density[..k].iter().sum::<f64>() * w;
            *slot = slot.max(mass);
        }
    }
    let degenerate = total == 1 || set_sizes.windows(2).all(|s| s[0] == s[1]);
    let passed = degenerate || sup_values.last().copied().unwrap_or(0.0) <= 0.5 * sup_values[0];
    Ok(EquiIntegrabilityReport {
        fractions: fractions.to_vec(),
        sup_values,
        set_sizes,
        degenerate,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormSet {
    pub l1: f64,
    pub l2: f64,
    /// `L^{m'}`; the max norm when `m = 1`.
    pub l_m_conjugate: f64,
    /// `L^σ`; absent without a verdict.
    pub l_sigma: Option<f64>,
    /// `L^s` with `s = m(2r+1+θ)/(m+1)`.
    pub l_s: f64,
    pub l_inf: f64,
}

impl NormSet {
    pub fn compute(u: &ScalarField, m: f64, r: f64, theta: f64, sigma: Option<f64>) -> Result<Self> {
        let m_conj = if m > 1.0 { conjugate(m)? } else { f64::INFINITY };
        Ok(NormSet {
            l1: lp_norm(u, 1.0)?,
            l2: lp_norm(u, 2.0)?,
            l_m_conjugate: lp_norm(u, m_conj)?,
            l_sigma: sigma.map(|s| lp_norm(u, s)).transpose()?,
            l_s: lp_norm(u, m * (2.0 * r + 1.0 + theta) / (m + 1.0))?,
            l_inf: u.max_abs(),
        })
    }
}

/// Audits of one rung.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RungAudit {
    pub n: u32,
    pub h: f64,
    pub norms_u: NormSet,
    pub norm_f_m: f64,
    pub seminorm_u: f64,
    pub seminorm_psi: f64,
    pub tail_measures: Vec<f64>,
    pub audits: Vec<EstimateAudit>,
}

impl RungAudit {
    pub fn pass_count(&self) -> usize {
        self.audits.iter().filter(|a| a.passed).count()
    }

    pub fn audit(&self, name: &str) -> Option<&EstimateAudit> {
        self.audits.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LadderAudit {
    /// `(γ, s)` of the weighted chain; absent when `m` is below its floor.
    pub gamma: Option<(f64, f64)>,
    pub tail_levels: Vec<f64>,
    pub rungs: Vec<RungAudit>,
    pub sigma_ratios: Vec<f64>,
    pub linf_values: Vec<f64>,
    pub equiintegrability: EquiIntegrabilityReport,
}

impl LadderAudit {
    /// All constant-free audits and the ladder-level checks passed.
    pub fn all_passed(&self) -> bool {
        self.equiintegrability.passed && self.rungs.iter().all(|r| r.audits.iter().all(|a| a.passed))
    }

    /// Constant-free audits all passed; tracked ratios are findings, not
    /// violations.
    pub fn constant_free_passed(&self) -> bool {
        self.rungs.iter().all(|r| r.audits.iter().all(|a| a.passed || !a.constant_free))
    }

    pub fn failures(&self) -> Vec<(u32, &EstimateAudit)> {
        self.rungs
            .iter()
            .flat_map(|r| r.audits.iter().filter(|a| !a.passed).map(move |a| (r.n, a)))
            .collect()
    }
}

/// Audits of a single rung. The `σ` and `L^∞` entries are computed on the
/// prefix of the ladder ending at this rung.
pub fn audit_rung(
    system: &CoupledSystem,
    rung: &RungRecord,
    verdict: Option<&RegularityVerdict>,
    tail_levels: &[f64],
    gamma: Option<f64>,
    prefix: &CoupledSolution,
) -> Result<RungAudit> {
    let p = system.problem();
    let (u, psi) = (&rung.u, &rung.psi);
    let mut audits: Vec<EstimateAudit> = Vec::new();
    audits.extend(audit_energy(system, u, psi, rung.n)?);
    let tails = audit_tail(system, u, psi, tail_levels)?;
    let tail_measures = tails.iter().map(|(_, m)| *m).collect();
    audits.extend(tails.into_iter().map(|(a, _)| a));
    if let Some(gamma) = gamma.filter(|&g| g >= 1.0) {
        audits.extend(audit_gamma_chain(system, u, psi, rung.n, gamma)?);
    } else {
        for name in ["gamma_weighted_energy", "gamma_coupling_identity", "gamma_summability_ratio"] {
            audits.push(EstimateAudit::not_applicable(name));
        }
    }
    audits.push(audit_sigma_boundedness(system, prefix, verdict)?.1);
    audits.push(audit_linf(prefix, verdict).1);

    let sigma = verdict.and_then(|v| v.sigma);
    Ok(RungAudit {
        n: rung.n,
        h: p.grid.max_spacing(),
        norms_u: NormSet::compute(u, p.m, p.r, p.theta, sigma)?,
        norm_f_m: lp_norm(&p.f, p.m)?,
        seminorm_u: h1_seminorm(u),
        seminorm_psi: h1_seminorm(psi),
        tail_measures,
        audits,
    })
}

/// Runs every audit on every rung of a continuation run.
pub fn audit_ladder(system: &CoupledSystem, ladder: &CoupledSolution, tail_levels: &[f64], fractions: &[f64]) -> Result<LadderAudit> {
    let p = system.problem();
    let verdict = p.verdict()?;
    let gamma = gamma_choice(p.m, p.r, p.theta).ok();
    let mut rungs = Vec::with_capacity(ladder.rungs.len());
    for k in 0..ladder.rungs.len() {
        let prefix = CoupledSolution {
            u: ladder.rungs[k].u.clone(),
            psi: ladder.rungs[k].psi.clone(),
            rungs: ladder.rungs[..=k].to_vec(),
        };
        rungs.push(audit_rung(system, &ladder.rungs[k], verdict.as_ref(), tail_levels, gamma.map(|g| g.0), &prefix)?);
    }
    let (sigma_ratios, _) = audit_sigma_boundedness(system, ladder, verdict.as_ref())?;
    let (linf_values, _) = audit_linf(ladder, verdict.as_ref());
    Ok(LadderAudit {
        gamma,
        tail_levels: tail_levels.to_vec(),
        rungs,
        sigma_ratios,
        linf_values,
        equiintegrability: audit_equiintegrability(ladder, p.r, fractions)?,
    })
}
