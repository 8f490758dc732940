//! Exponent arithmetic for the regularity regimes.
//!
//! Every threshold is a closed-form expression in `(N, m, r, θ)`. Comparisons
//! against thresholds use an absolute tolerance of [`THRESHOLD_TOL`] so that
//! decimal user input sitting exactly on a boundary classifies stably.

use alloc::string::String;
use crate::error::{Error, Result};

/// Absolute tolerance for threshold comparisons.
pub const THRESHOLD_TOL: f64 = 1e-12;

/// Hölder conjugate `p / (p - 1)`.
pub fn conjugate(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::domain("Hölder conjugate needs a finite p > 1"));
    }
    Ok(p / (p - 1.0))
}

/// Sobolev exponent `2* = 2N/(N-2)` and its conjugate `2N/(N+2)`.
pub fn sobolev_exponents(dim: u32) -> Result<(f64, f64)> {
    if dim < 3 {
        return Err(Error::domain("Sobolev exponent 2* needs N >= 3"));
    }
    let n = dim as f64;
    Ok((2.0 * n / (n - 2.0), 2.0 * n / (n + 2.0)))
}

/// `m** = Nm/(N-2m)` for `m < N/2`, `+∞` otherwise.
pub fn double_star(dim: u32, m: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::domain("m** needs m > 1"));
    }
    let n = dim as f64;
    if m >= n / 2.0 {
        return Ok(f64::INFINITY);
    }
    Ok(n * m / (n - 2.0 * m))
}

/// `2N/(θ(N-2)+N+2)`: splits the two regimes in `r` and is also the
/// admissibility floor for `m` in the second regime.
pub fn regime_threshold(dim: u32, theta: f64) -> f64 {
    let n = dim as f64;
    2.0 * n / (theta * (n - 2.0) + n + 2.0)
}

/// `((r+1)/(1-θ))' = (r+1)/(r+θ)`.
pub fn lower_order_floor(r: f64, theta: f64) -> f64 {
    (r + 1.0) / (r + theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExponentInputs {
    pub dim: u32,
    pub m: f64,
    pub r: f64,
    pub theta: f64,
}

impl ExponentInputs {
    pub fn new(dim: u32, m: f64, r: f64, theta: f64) -> Result<Self> {
        let inputs = ExponentInputs { dim, m, r, theta };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::domain("dimension N must be >= 3"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::domain("theta must lie in (0, 1)"));
        }
        if !(self.r > 1.0) || !self.r.is_finite() {
            return Err(Error::domain("r must be a finite number > 1"));
        }
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(Error::domain("m must be a finite number > 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Regime {
    CaseI,
    CaseII,
    OutOfTheorem,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::CaseI => "CaseI",
            Regime::CaseII => "CaseII",
            Regime::OutOfTheorem => "OutOfTheorem",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityVerdict {
    pub inputs: ExponentInputs,
    pub regime: Regime,
    pub r_threshold: f64,
    /// Admissibility floor for `m` in the regime selected by `r`.
    pub m_lower: f64,
    pub bounded: bool,
    /// `Some(+∞)` when bounded, `None` when no exponent is predicted.
    pub sigma: Option<f64>,
    pub m_double_star: f64,
    /// `((1+θ) m**, m(2r+1+θ)/(m+1))`, reported whenever `m < N/2`.
    pub candidates: Option<(f64, f64)>,
    pub diagnostic: Option<String>,
}

pub fn regime_classify(inputs: ExponentInputs) -> Result<RegularityVerdict> {
    inputs.validate()?;
    let ExponentInputs { dim, m, r, theta } = inputs;
    let half_n = dim as f64 / 2.0;
    let r_threshold = regime_threshold(dim, theta);
    let upper_regime = r >= r_threshold - THRESHOLD_TOL;
    let m_lower = if upper_regime {
        lower_order_floor(r, theta)
    } else {
        r_threshold
    };
    let admissible = m >= m_lower - THRESHOLD_TOL;
    let m_double_star = double_star(dim, m)?;
    let on_half_n = (m - half_n).abs() <= THRESHOLD_TOL;
    let bounded = m > half_n + THRESHOLD_TOL;

    let candidates = if m < half_n - THRESHOLD_TOL {
        Some((
            (1.0 + theta) * m_double_star,
            m * (2.0 * r + 1.0 + theta) / (m + 1.0),
        ))
    } else {
        None
    };

    let mut diagnostic = None;
    let regime = if !admissible {
        diagnostic = Some(String::from("m lies below the admissibility floor of its regime"));
        Regime::OutOfTheorem
    } else if on_half_n {
        diagnostic = Some(String::from("m = N/2 is excluded: no summability exponent is stated there"));
        Regime::OutOfTheorem
    } else if upper_regime {
        Regime::CaseI
    } else {
        Regime::CaseII
    };

    let sigma = match regime {
        Regime::OutOfTheorem => None,
        _ if bounded => Some(f64::INFINITY),
        Regime::CaseI => candidates.map(|(a, b)| a.max(b)),
        Regime::CaseII => candidates.map(|(a, _)| a),
    };

    Ok(RegularityVerdict {
        inputs,
        regime,
        r_threshold,
        m_lower,
        bounded,
        sigma,
        m_double_star,
        candidates,
        diagnostic,
    })
}

/// `γ = (r(m-1) + m(θ+1))/(m+1)` and `s = r + γ` for the estimate chain that
/// uses the lower-order term.
pub fn gamma_choice(m: f64, r: f64, theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) || !(r > 1.0) || !(m > 1.0) {
        return Err(Error::domain("gamma_choice needs m > 1, r > 1, 0 < theta < 1"));
    }
    if m < lower_order_floor(r, theta) - THRESHOLD_TOL {
        return Err(Error::domain("gamma_choice needs m >= (r+1)/(r+theta)"));
    }
    let gamma = (r * (m - 1.0) + m * (theta + 1.0)) / (m + 1.0);
    Ok((gamma, r + gamma))
}

/// `γ = (1+θ) m** / 2*` for the estimate chain that drops the lower-order
/// term.
pub fn gamma_choice_no_lower_order(dim: u32, m: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain("theta must lie in (0, 1)"));
    }
    let (two_star, _) = sobolev_exponents(dim)?;
    if m < regime_threshold(dim, theta) - THRESHOLD_TOL {
        return Err(Error::domain("needs m >= 2N/(theta(N-2)+N+2)"));
    }
    if m >= dim as f64 / 2.0 {
        return Err(Error::domain("needs m < N/2"));
    }
    let mss = double_star(dim, m)?;
    Ok((1.0 + theta) * mss / two_star)
}

/// Upper bound on `r` for the saddle-point characterization with symmetric `M`.
pub fn saddle_r_bound(dim: u32, theta: f64) -> f64 {
    regime_threshold(dim, theta)
}

/// The alternative upper bound `(N+2+(N-2)θ)/(N-2)` written in the remark
/// preceding the saddle theorem. Reported, not used as a gate.
pub fn saddle_r_bound_remark(dim: u32, theta: f64) -> f64 {
    let n = dim as f64;
    (n + 2.0 + (n - 2.0) * theta) / (n - 2.0)
}

/// `(2*/(1-θ))'`, the datum floor for the saddle-point characterization.
pub fn saddle_m_floor(dim: u32, theta: f64) -> Result<f64> {
    let (two_star, _) = sobolev_exponents(dim)?;
    conjugate(two_star / (1.0 - theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn conjugate_values() {
        assert_abs_diff_eq!(conjugate(2.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(conjugate(8.0).unwrap(), 8.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(conjugate(8.0 / 7.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(conjugate(1.0).is_err());
        assert!(conjugate(0.5).is_err());
    }

    #[test]
    fn conjugate_matches_lower_order_floor() {
        // ((r+1)/(1-θ))' with r = 3, θ = 0.5
        let p = (3.0 + 1.0) / (1.0 - 0.5);
        assert_abs_diff_eq!(p, 8.0);
        assert_abs_diff_eq!(conjugate(p).unwrap(), lower_order_floor(3.0, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn sobolev_values() {
        let (a, b) = sobolev_exponents(3).unwrap();
        assert_abs_diff_eq!(a, 6.0);
        assert_abs_diff_eq!(b, 1.2, epsilon = 1e-15);
        let (a, b) = sobolev_exponents(4).unwrap();
        assert_abs_diff_eq!(a, 4.0);
        assert_abs_diff_eq!(b, 4.0 / 3.0, epsilon = 1e-15);
        let (a, b) = sobolev_exponents(6).unwrap();
        assert_abs_diff_eq!(a, 3.0);
        assert_abs_diff_eq!(b, 1.5);
        assert_abs_diff_eq!(conjugate(a).unwrap(), b, epsilon = 1e-15);
        assert!(sobolev_exponents(2).is_err());
    }

    #[test]
    fn double_star_values() {
        assert_abs_diff_eq!(double_star(4, 1.5).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(double_star(3, 1.2).unwrap(), 6.0, epsilon = 1e-12);
        assert!(double_star(4, 2.0).unwrap().is_infinite());
        assert!(double_star(4, 1.0).is_err());
    }

    #[test]
    fn classify_case_one_finite() {
        let v = regime_classify(ExponentInputs::new(4, 1.5, 3.0, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::CaseI);
        assert_abs_diff_eq!(v.r_threshold, 8.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.m_lower, 8.0 / 7.0, epsilon = 1e-12);
        assert!(!v.bounded);
        let (a, b) = v.candidates.unwrap();
        assert_abs_diff_eq!(a, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v.sigma.unwrap(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn classify_case_one_bounded() {
        let v = regime_classify(ExponentInputs::new(4, 2.5, 3.0, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::CaseI);
        assert!(v.bounded);
        assert_eq!(v.sigma, Some(f64::INFINITY));
        assert!(v.candidates.is_none());
    }

    #[test]
    fn classify_case_two() {
        let v = regime_classify(ExponentInputs::new(4, 1.2, 1.1, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::CaseII);
        assert!(v.r_threshold > 1.1);
        assert_abs_diff_eq!(v.sigma.unwrap(), 4.5, epsilon = 1e-12);
    }

    #[test]
    fn classify_half_n_is_out_of_theorem() {
        let v = regime_classify(ExponentInputs::new(4, 2.0, 3.0, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::OutOfTheorem);
        assert!(v.diagnostic.is_some());
        assert!(!v.bounded);
        assert!(v.sigma.is_none());
    }

    #[test]
    fn classify_tie_on_threshold_is_case_one() {
        let r = regime_threshold(4, 0.5);
        let v = regime_classify(ExponentInputs::new(4, 1.5, r, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::CaseI);
    }

    #[test]
    fn classify_below_floor() {
        // CaseII floor is 8/7 for N = 4, θ = 0.5
        let v = regime_classify(ExponentInputs::new(4, 1.1, 1.05, 0.5).unwrap()).unwrap();
        assert_eq!(v.regime, Regime::OutOfTheorem);
    }

    #[test]
    fn invalid_inputs() {
        assert!(ExponentInputs::new(2, 1.5, 3.0, 0.5).is_err());
        assert!(ExponentInputs::new(3, 1.5, 3.0, 1.0).is_err());
        assert!(ExponentInputs::new(3, 1.0, 3.0, 0.5).is_err());
        assert!(ExponentInputs::new(3, 1.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn gamma_values() {
        let (g, s) = gamma_choice(8.0 / 7.0, 3.0, 0.5).unwrap();
        assert_abs_diff_eq!(g, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 4.0, epsilon = 1e-12);
        let (g, s) = gamma_choice(1.5, 3.0, 0.5).unwrap();
        assert_abs_diff_eq!(g, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 4.5, epsilon = 1e-12);
        let (_, s) = gamma_choice(1e6, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(s, 5.5, epsilon = 1e-4);
        assert!(gamma_choice(1.1, 3.0, 0.5).is_err());
    }

    #[test]
    fn gamma_no_lower_order_values() {
        assert_abs_diff_eq!(
            gamma_choice_no_lower_order(4, 4.0 / 3.0, 0.5).unwrap(),
            1.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            gamma_choice_no_lower_order(3, 1.2, 1e-9).unwrap(),
            1.0,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            gamma_choice_no_lower_order(4, 1.9, 0.5).unwrap(),
            14.25,
            epsilon = 1e-9
        );
        assert!(gamma_choice_no_lower_order(4, 2.0, 0.5).is_err());
        assert!(gamma_choice_no_lower_order(4, 1.1, 0.5).is_err());
    }

    #[test]
    fn saddle_bounds() {
        assert_abs_diff_eq!(saddle_r_bound(3, 0.5), 6.0 / 5.5, epsilon = 1e-15);
        assert_abs_diff_eq!(saddle_r_bound_remark(3, 0.5), 5.5, epsilon = 1e-15);
        assert_abs_diff_eq!(saddle_m_floor(3, 0.5).unwrap(), 12.0 / 11.0, epsilon = 1e-14);
    }
}
