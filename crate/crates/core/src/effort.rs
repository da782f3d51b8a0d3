//! Barrier-limited effort along the normalized actionable direction.
//!
//! A rejected candidate picks `gamma` in `[0, gap)` maximizing
//! `S*gamma - (k/2)*gamma^2 + theta*ln(gap - gamma)`, where `gap` is the
//! remaining headroom below the ceiling. The objective is strictly concave, so
//! the maximizer is the smaller root of the first-order quadratic, clamped at 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Headroom below which a candidate is treated as sitting on the ceiling.
pub const MIN_GAP: f64 = 1e-12;

/// Per-candidate effort parameters: valuation `beta`, quadratic cost `k`,
/// barrier strength `theta`. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffortParams {
    pub beta: f64,
    pub k: f64,
    pub theta: f64,
}

impl Default for EffortParams {
    fn default() -> Self {
        EffortParams {
            beta: 1.0,
            k: 1.0,
            theta: 1.0,
        }
    }
}

impl EffortParams {
    pub fn new(beta: f64, k: f64, theta: f64) -> Result<Self> {
        let p = EffortParams { beta, k, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("k", self.k), ("theta", self.theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "effort parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortResult {
    pub gamma: f64,
    /// First-order condition binds (`gamma > 0`); false when clamped at zero.
    pub interior: bool,
    /// Objective derivative `S - k*gamma - theta/(gap - gamma)` at `gamma`.
    pub foc_residual: f64,
    pub benefit_coeff: f64,
}

/// `(k/2) gamma^2 - theta ln(gap - gamma)` on `0 <= gamma < gap`.
pub fn effort_cost(gamma: f64, params: &EffortParams, gap: f64) -> Result<f64> {
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::Domain(format!("gap must be positive, got {gap}")));
    }
    if !(gamma >= 0.0 && gamma < gap) {
        return Err(Error::Domain(format!("effort {gamma} outside [0, {gap})")));
    }
    Ok(0.5 * params.k * gamma * gamma - params.theta * (gap - gamma).ln())
}

/// Marginal benefit `S = beta * w.d_tilde`.
pub fn benefit_coefficient(params: &EffortParams, w: &[f64], d_tilde: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), d_tilde.len());
    let dot: f64 = w.iter().zip(d_tilde).map(|(a, b)| a * b).sum();
    params.beta * dot
}

/// Closed-form optimal effort for benefit coefficient `s` and headroom `gap`.
pub fn optimal_effort(s: f64, params: &EffortParams, gap: f64) -> Result<EffortResult> {
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::Domain(format!("gap must be positive, got {gap}")));
    }
    let EffortParams { k, theta, .. } = *params;
    let clamped = |gamma: f64| EffortResult {
        gamma,
        interior: false,
        foc_residual: s - k * gamma - theta / (gap - gamma),
        benefit_coeff: s,
    };
    if gap < MIN_GAP || s <= theta / gap {
        return Ok(clamped(0.0));
    }

    // s*gap > theta here, so b > 0 and the product form avoids cancellation.
    let b = k * gap + s;
    let disc = discriminant(s, params, gap);
    let mut gamma = 2.0 * (s * gap - theta) / (b + disc.sqrt());
    if gamma <= 0.0 {
        return Ok(clamped(0.0));
    }
    if gamma >= gap {
        gamma = gap.next_down();
    }
    Ok(EffortResult {
        gamma,
        interior: true,
        foc_residual: s - k * gamma - theta / (gap - gamma),
        benefit_coeff: s,
    })
}

/// `(k*gap - S)^2 + 4 k theta`, algebraically equal to
/// `(k*gap + S)^2 + 4k(theta - S*gap)` and always positive.
pub fn discriminant(s: f64, params: &EffortParams, gap: f64) -> f64 {
    let a = params.k * gap - s;
    a * a + 4.0 * params.k * params.theta
}

/// The textbook form of the discriminant, kept for cross-checking.
pub fn discriminant_expanded(s: f64, params: &EffortParams, gap: f64) -> f64 {
    let b = params.k * gap + s;
    b * b + 4.0 * params.k * (params.theta - s * gap)
}
