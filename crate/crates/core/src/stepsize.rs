//! Step-size selection along the ellipse.
//!
//! Four nested bounds are computed in order:
//!
//! 1. `α̃` keeps the multipliers (and, when the full arc is taken, the
//!    slacks) above a fraction `δ₁` of their current values; closed form.
//! 2. `ᾱ ≤ α̃` keeps `g(x(α)) ≥ δ₁ s`; backtracking with interior samples.
//! 3. `α̌ ≤ ᾱ` gives sufficient decrease of the merit function.
//! 4. `α̂ ≤ α̌` keeps the trial point inside the neighborhood.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arc::{point_on_arc, x_on_arc, ArcState};
use crate::kkt::{margin_from_merit, residual, EvalError, Iterate, KktResidual, NeighborhoodRef};
use crate::model::NlpProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("step size stalled below {alpha_min:e} while enforcing {stage}{}", gap.map(|g| format!(" (last merit gap {g:e})")).unwrap_or_default())]
    Stall {
        stage: &'static str,
        alpha_min: f64,
        gap: Option<f64>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// How the next iterate is formed from the arc point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Every block moves along the arc.
    FullArc,
    /// `(x, w)` move along the arc; `y, s, z` are reset by the warm restart.
    WarmRestart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub backtrack: f64,
    pub alpha_min: f64,
    /// Interior samples checked for the `g(x(α)) ≥ δ₁ s` condition.
    pub samples: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            delta1: 0.01,
            delta2: 0.0,
            rho: 0.25,
            backtrack: 0.8,
            alpha_min: 1e-12,
            samples: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBreakdown {
    pub alpha_tilde: f64,
    pub alpha_bar: f64,
    pub alpha_check: f64,
    pub alpha_hat: f64,
    pub alpha_k: f64,
    pub backtrack_count: usize,
}

/// Largest `t ∈ (0, ∞)` at which `a t² + b t + κ` first turns negative,
/// given `κ > 0`. `None` when it never does.
fn first_sign_change(a: f64, b: f64, kappa: f64) -> Option<f64> {
    if a == 0.0 {
        return (b < 0.0).then(|| -kappa / b);
    }
    let disc = b * b - 4.0 * a * kappa;
    if disc <= 0.0 {
        // no crossing: q stays >= 0 (touching at a double root is allowed)
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, kappa / q) };
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if a > 0.0 {
        (lo > 0.0).then_some(lo)
    } else {
        (hi > 0.0).then_some(hi)
    }
}

/// Largest `α̃ ≤ π/2` such that `c − ċ sin α + c̈ (1 − cos α) ≥ δ₁ c` on
/// `[0, α̃]` for every component.
///
/// With `t = tan(α/2)` the boundary of component `i` solves
/// `(κ + 2c̈ᵢ) t² − 2ċᵢ t + κ = 0`, `κ = (1 − δ₁) cᵢ`.
pub fn alpha_positivity(
    c: &DVector<f64>,
    cdot: &DVector<f64>,
    cddot: &DVector<f64>,
    delta1: f64,
) -> Result<f64, StepError> {
    if c.len() != cdot.len() || c.len() != cddot.len() {
        return Err(StepError::Contract("positivity inputs differ in length".into()));
    }
    if !(0.0..1.0).contains(&delta1) {
        return Err(StepError::Contract(format!("delta1 = {delta1} outside [0, 1)")));
    }
    let mut alpha = FRAC_PI_2;
    for i in 0..c.len() {
        if !(c[i] > 0.0) {
            return Err(StepError::Contract(format!("component {i} is not positive ({})", c[i])));
        }
        let kappa = (1.0 - delta1) * c[i];
        if let Some(t) = first_sign_change(kappa + 2.0 * cddot[i], -2.0 * cdot[i], kappa) {
            alpha = alpha.min(2.0 * t.atan());
        }
    }
    Ok(alpha)
}

fn backtrack<F>(alpha_start: f64, cfg: &StepConfig, stage: &'static str, count: &mut usize, mut accept: F) -> Result<f64, StepError>
where
    F: FnMut(f64) -> Result<bool, StepError>,
{
    let mut alpha = alpha_start;
    while alpha >= cfg.alpha_min {
        if accept(alpha)? {
            return Ok(alpha);
        }
        alpha *= cfg.backtrack;
        *count += 1;
    }
    Err(StepError::Stall { stage, alpha_min: cfg.alpha_min, gap: None })
}

fn feasible_at(prob: &dyn NlpProblem, v: &Iterate, arc: &ArcState, floor: &DVector<f64>, alpha: f64, samples: usize) -> bool {
    (1..=samples + 1).all(|j| {
        let a = alpha * j as f64 / (samples + 1) as f64;
        let g = prob.g(&x_on_arc(v, arc, a));
        g.iter().zip(floor.iter()).all(|(gi, fi)| gi.is_finite() && gi >= fi)
    })
}

/// Largest tested `ᾱ ≤ alpha_start` with `g(x(α)) ≥ δ₁ s_ref` at `ᾱ` and at
/// `samples` equispaced points of `(0, ᾱ)`.
pub fn alpha_feasibility(
    prob: &dyn NlpProblem,
    v: &Iterate,
    arc: &ArcState,
    s_ref: &DVector<f64>,
    delta1: f64,
    alpha_start: f64,
    cfg: &StepConfig,
) -> Result<f64, StepError> {
    let floor = s_ref * delta1;
    let mut count = 0;
    backtrack(alpha_start, cfg, "g(x) >= delta1 s", &mut count, |a| {
        Ok(feasible_at(prob, v, arc, &floor, a, cfg.samples))
    })
}

fn merit_target(phi: f64, rho: f64, sigma: f64, delta2: f64, alpha: f64) -> f64 {
    phi * (1.0 - 2.0 * rho * (1.0 - sigma) * alpha.sin()) - delta2
}

/// Largest tested `α̌ ≤ alpha_start` with
/// `φ(v(α̌)) ≤ φ(v)(1 − 2ρ(1 − σ) sin α̌) − δ₂` on the plain arc point.
pub fn alpha_merit(
    prob: &dyn NlpProblem,
    v: &Iterate,
    arc: &ArcState,
    phi: f64,
    rho: f64,
    sigma: f64,
    delta2: f64,
    alpha_start: f64,
    cfg: &StepConfig,
) -> Result<f64, StepError> {
    let mut gap = None;
    let mut count = 0;
    backtrack(alpha_start, cfg, "merit decrease", &mut count, |a| {
        let trial = point_on_arc(v, arc, a);
        let Ok(res) = residual(prob, &trial) else { return Ok(false) };
        let target = merit_target(phi, rho, sigma, delta2, a);
        gap = Some(res.merit() - target);
        Ok(res.merit() <= target)
    })
    .map_err(|e| match e {
        StepError::Stall { stage, alpha_min, .. } => StepError::Stall { stage, alpha_min, gap },
        other => other,
    })
}

/// Largest tested `α̂ ≤ alpha_start` with a non-negative neighborhood
/// margin at the plain arc point.
pub fn alpha_neighborhood(
    prob: &dyn NlpProblem,
    v: &Iterate,
    arc: &ArcState,
    reference: &NeighborhoodRef,
    alpha_start: f64,
    cfg: &StepConfig,
) -> Result<f64, StepError> {
    let mut count = 0;
    backtrack(alpha_start, cfg, "neighborhood", &mut count, |a| {
        let trial = point_on_arc(v, arc, a);
        let Ok(res) = residual(prob, &trial) else { return Ok(false) };
        Ok(margin_from_merit(res.merit(), &trial.complementarity(), reference) >= 0.0)
    })
}

/// Accepted step with the trial iterate and its residual.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub breakdown: StepBreakdown,
    pub next: Iterate,
    pub residual: KktResidual,
    /// The warm restart fell back to a minimum-norm multiplier estimate.
    pub rank_deficient_restart: bool,
}

/// The iterate produced by step `alpha` under `rule`.
pub fn trial_point(prob: &dyn NlpProblem, v: &Iterate, arc: &ArcState, alpha: f64, rule: UpdateRule) -> Result<(Iterate, bool), EvalError> {
    let mut pt = point_on_arc(v, arc, alpha);
    match rule {
        UpdateRule::FullArc => {
            // w(α) = z(α) holds exactly in exact arithmetic; remove rounding drift
            pt.z = pt.w.clone();
            Ok((pt, false))
        }
        UpdateRule::WarmRestart => {
            let restart = crate::solver::warm_restart(prob, &pt.x, &pt.w)?;
            Ok((
                Iterate { x: pt.x, y: restart.y, w: pt.w, s: restart.s, z: restart.z },
                restart.rank_deficient,
            ))
        }
    }
}

/// Composes the four bounds: `α̃` (closed form), `ᾱ` (backtracking with
/// samples), then one backtracking pass that records the first `α` meeting
/// the merit decrease as `α̌` and stops at the first `α` that also meets the
/// neighborhood condition, `α̂`. Merit and neighborhood are evaluated at the
/// iterate the update rule would actually produce.
pub fn select_step(
    prob: &dyn NlpProblem,
    v: &Iterate,
    arc: &ArcState,
    phi: f64,
    reference: &NeighborhoodRef,
    cfg: &StepConfig,
    rule: UpdateRule,
) -> Result<StepOutcome, StepError> {
    let mut alpha_tilde = alpha_positivity(&v.w, &arc.vdot.w, &arc.vddot.w, cfg.delta1)?;
    if rule == UpdateRule::FullArc {
        alpha_tilde = alpha_tilde.min(alpha_positivity(&v.s, &arc.vdot.s, &arc.vddot.s, cfg.delta1)?);
        alpha_tilde = alpha_tilde.min(alpha_positivity(&v.z, &arc.vdot.z, &arc.vddot.z, cfg.delta1)?);
    }
    let floor = &v.s * cfg.delta1;
    let mut count = 0;
    let alpha_bar = backtrack(alpha_tilde, cfg, "g(x) >= delta1 s", &mut count, |a| {
        Ok(feasible_at(prob, v, arc, &floor, a, cfg.samples))
    })?;

    let mut alpha = alpha_bar;
    let mut alpha_check = None;
    let mut last_gap = None;
    while alpha >= cfg.alpha_min {
        if let Ok((trial, rank_deficient)) = trial_point(prob, v, arc, alpha, rule) {
            if let Ok(res) = residual(prob, &trial) {
                let phi_trial = res.merit();
                let target = merit_target(phi, cfg.rho, arc.sigma, cfg.delta2, alpha);
                last_gap = Some(phi_trial - target);
                if phi_trial <= target {
                    let check = *alpha_check.get_or_insert(alpha);
                    if margin_from_merit(phi_trial, &trial.complementarity(), reference) >= 0.0 {
                        let breakdown = StepBreakdown {
                            alpha_tilde,
                            alpha_bar,
                            alpha_check: check,
                            alpha_hat: alpha,
                            alpha_k: alpha_tilde.min(alpha_bar).min(check).min(alpha),
                            backtrack_count: count,
                        };
                        return Ok(StepOutcome { breakdown, next: trial, residual: res, rank_deficient_restart: rank_deficient });
                    }
                }
            }
        }
        alpha *= cfg.backtrack;
        count += 1;
    }
    Err(StepError::Stall {
        stage: if alpha_check.is_some() { "neighborhood" } else { "merit decrease" },
        alpha_min: cfg.alpha_min,
        gap: last_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    /// Largest grid point `k·step` such that the inequality holds at every
    /// grid point up to it.
    fn scan_oracle(c: f64, cd: f64, cdd: f64, delta1: f64, step: f64) -> f64 {
        let mut last = 0.0;
        let mut k = 1usize;
        loop {
            let a = (k as f64 * step).min(FRAC_PI_2);
            let val = c - cd * a.sin() + cdd * (1.0 - a.cos());
            if val < delta1 * c {
                return last;
            }
            last = a;
            if a >= FRAC_PI_2 {
                return FRAC_PI_2;
            }
            k += 1;
        }
    }

    #[test]
    fn flat_arc_allows_right_angle() {
        let a = alpha_positivity(&dv(&[1.0, 2.0]), &dv(&[0.0, 0.0]), &dv(&[0.0, 0.0]), 0.01).unwrap();
        assert_eq!(a, FRAC_PI_2);
    }

    #[test]
    fn sine_half_boundary() {
        let a = alpha_positivity(&dv(&[1.0]), &dv(&[2.0]), &dv(&[0.0]), 0.0).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_6).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_entry_is_rejected() {
        assert!(matches!(
            alpha_positivity(&dv(&[0.0]), &dv(&[1.0]), &dv(&[0.0]), 0.1),
            Err(StepError::Contract(_))
        ));
    }

    #[test]
    fn positivity_matches_grid_scan_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c: f64 = rng.gen_range(0.01..10.0);
            let cd: f64 = rng.gen_range(-20.0..20.0);
            let cdd: f64 = rng.gen_range(-20.0..20.0);
            let d1: f64 = rng.gen_range(0.0..0.99);
            let closed = alpha_positivity(&dv(&[c]), &dv(&[cd]), &dv(&[cdd]), d1).unwrap();
            let scan = scan_oracle(c, cd, cdd, d1, 1e-4);
            assert!((closed - scan).abs() <= 1e-4 + 1e-12, "c={c} cd={cd} cdd={cdd} d1={d1}: {closed} vs {scan}");
        }
    }

    proptest! {
        #[test]
        fn positivity_bound_is_respected(
            c in 0.01f64..10.0,
            cd in -20.0f64..20.0,
            cdd in -20.0f64..20.0,
            d1 in 0.0f64..0.99,
            frac in 0.0f64..1.0,
        ) {
            let a = alpha_positivity(&dv(&[c]), &dv(&[cd]), &dv(&[cdd]), d1).unwrap();
            prop_assert!(a > 0.0 && a <= FRAC_PI_2);
            let t = a * frac;
            let val = c - cd * t.sin() + cdd * (1.0 - t.cos());
            prop_assert!(val >= d1 * c - 1e-9 * c.max(1.0));
        }
    }
}
