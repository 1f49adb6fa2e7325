//! The search ellipse `v(α) = v − v̇ sin α + v̈ (1 − cos α)`.
//!
//! `v̇` solves `k'(v) v̇ = k(v) − σμē` and `v̈` solves `k'(v) v̈ = r₂` with the
//! same factorization, where `r₂` is one of three second-order right-hand
//! sides (see [`RhsMode`]).

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::{EvalError, Iterate, KktResidual};
use crate::linsys::{KktFactorization, LinsysError};
use crate::model::{contract_with, d3_lagrangian_dir, quad_forms, NlpProblem, PointEvaluation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsMode {
    /// Exact second derivative of the central-path system, including `∇³L`.
    Full,
    /// Drops the `(∇³L)ẋẋ` term; every remaining term reuses Hessians
    /// already assembled for the matrix.
    ThirdFree,
    /// Keeps only the complementarity term `−2Żṡ`.
    Naive,
}

impl RhsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RhsMode::Full => "full",
            RhsMode::ThirdFree => "third-free",
            RhsMode::Naive => "naive",
        }
    }
}

impl fmt::Display for RhsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RhsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(RhsMode::Full),
            "third-free" => Ok(RhsMode::ThirdFree),
            "naive" => Ok(RhsMode::Naive),
            other => Err(format!("unknown rhs mode '{other}' (expected full, third-free or naive)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArcError {
    #[error("arc parameter {0} outside [0, pi/2]")]
    AlphaOutOfRange(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linsys(#[from] LinsysError),
}

/// First and second derivatives defining the ellipse at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcState {
    pub vdot: Iterate,
    pub vddot: Iterate,
    pub sigma: f64,
    pub mu: f64,
    pub rhs_mode: RhsMode,
    /// Third-order contractions served by Hessian differencing.
    pub fd_third_fallbacks: usize,
}

/// Stacked `(r_L, r_h, r_g, r_wz, r_comp − σμe)`.
pub fn first_order_rhs(res: &KktResidual, sigma: f64, mu: f64) -> DVector<f64> {
    let shifted = KktResidual {
        r_comp: res.r_comp.add_scalar(-sigma * mu),
        ..res.clone()
    };
    shifted.flatten()
}

/// Second-order right-hand side and the number of finite-difference
/// fallbacks used for `∇³L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderRhs {
    pub rhs: DVector<f64>,
    pub fd_third_fallbacks: usize,
}

pub fn second_order_rhs(
    prob: &dyn NlpProblem,
    v: &Iterate,
    vdot: &Iterate,
    mode: RhsMode,
) -> Result<SecondOrderRhs, EvalError> {
    v.check_dims(prob)?;
    vdot.check_dims(prob)?;
    let eval = PointEvaluation::new(prob, &v.x)?;
    second_order_rhs_from(prob, &eval, v, vdot, mode)
}

/// Same as [`second_order_rhs`] with Hessians taken from `eval`.
pub fn second_order_rhs_from(
    prob: &dyn NlpProblem,
    eval: &PointEvaluation,
    v: &Iterate,
    vdot: &Iterate,
    mode: RhsMode,
) -> Result<SecondOrderRhs, EvalError> {
    let (n, m, p) = (v.n(), v.m(), v.p());
    let comp = -2.0 * vdot.z.component_mul(&vdot.s);
    let mut blocks = Iterate::zeros(n, m, p);
    blocks.z = comp;
    let mut fallbacks = 0;
    if mode != RhsMode::Naive {
        let xd = &vdot.x;
        let mut top = 2.0 * contract_with(&eval.hess_h, &vdot.y, xd) + 2.0 * contract_with(&eval.hess_g, &vdot.w, xd);
        if mode == RhsMode::Full {
            let third = d3_lagrangian_dir(prob, &v.x, &v.y, &v.w, xd)?;
            fallbacks = third.fd_fallbacks;
            top -= third.value;
        }
        blocks.x = top;
        blocks.y = -quad_forms(&eval.hess_h, xd);
        blocks.w = -quad_forms(&eval.hess_g, xd);
    }
    // Stacked order of the residual: (r_L, r_h, r_g, r_wz, r_comp).
    // The Iterate fields (x, y, w, s, z) line up with those row blocks.
    let rhs = blocks.stack();
    if rhs.iter().any(|c| !c.is_finite()) {
        return Err(EvalError::NonFinite { block: "second-order rhs" });
    }
    Ok(SecondOrderRhs { rhs, fd_third_fallbacks: fallbacks })
}

/// Solves both systems with one factorization.
pub fn compute_arc(
    prob: &dyn NlpProblem,
    eval: &PointEvaluation,
    v: &Iterate,
    res: &KktResidual,
    fac: &KktFactorization,
    sigma: f64,
    mu: f64,
    mode: RhsMode,
) -> Result<ArcState, ArcError> {
    let (n, m, p) = (v.n(), v.m(), v.p());
    let vdot_flat = fac.solve(&first_order_rhs(res, sigma, mu))?;
    let vdot = Iterate::from_stacked(&vdot_flat, n, m, p).map_err(EvalError::from)?;
    let rhs2 = second_order_rhs_from(prob, eval, v, &vdot, mode)?;
    let vddot_flat = fac.solve(&rhs2.rhs)?;
    let vddot = Iterate::from_stacked(&vddot_flat, n, m, p).map_err(EvalError::from)?;
    Ok(ArcState {
        vdot,
        vddot,
        sigma,
        mu,
        rhs_mode: mode,
        fd_third_fallbacks: rhs2.fd_third_fallbacks,
    })
}

fn along(c: &DVector<f64>, cd: &DVector<f64>, cdd: &DVector<f64>, sin: f64, omc: f64) -> DVector<f64> {
    c - cd * sin + cdd * omc
}

/// `v − v̇ sin α + v̈ (1 − cos α)` without range checking.
pub fn point_on_arc(v: &Iterate, arc: &ArcState, alpha: f64) -> Iterate {
    let (sin, omc) = (alpha.sin(), 1.0 - alpha.cos());
    let (d, dd) = (&arc.vdot, &arc.vddot);
    Iterate {
        x: along(&v.x, &d.x, &dd.x, sin, omc),
        y: along(&v.y, &d.y, &dd.y, sin, omc),
        w: along(&v.w, &d.w, &dd.w, sin, omc),
        s: along(&v.s, &d.s, &dd.s, sin, omc),
        z: along(&v.z, &d.z, &dd.z, sin, omc),
    }
}

/// `x(α)` only.
pub fn x_on_arc(v: &Iterate, arc: &ArcState, alpha: f64) -> DVector<f64> {
    along(&v.x, &arc.vdot.x, &arc.vddot.x, alpha.sin(), 1.0 - alpha.cos())
}

pub fn eval_arc(v: &Iterate, arc: &ArcState, alpha: f64) -> Result<Iterate, ArcError> {
    if !(0.0..=FRAC_PI_2).contains(&alpha) {
        return Err(ArcError::AlphaOutOfRange(alpha));
    }
    if alpha == 0.0 {
        return Ok(v.clone());
    }
    Ok(point_on_arc(v, arc, alpha))
}

/// Closed-form `z_i(α) s_i(α)` along the arc:
///
/// ```text
/// z_i s_i (1 − sin α) + σμ sin α − (ż_i s̈_i + z̈_i ṡ_i) sin α (1 − cos α)
///     + (z̈_i s̈_i − ż_i ṡ_i)(1 − cos α)²
/// ```
///
/// Valid when the arc's last block rows were solved exactly.
pub fn complementarity_along_arc(i: usize, v: &Iterate, arc: &ArcState, alpha: f64) -> f64 {
    let (sin, omc) = (alpha.sin(), 1.0 - alpha.cos());
    let (d, dd) = (&arc.vdot, &arc.vddot);
    v.z[i] * v.s[i] * (1.0 - sin) + arc.sigma * arc.mu * sin - (d.z[i] * dd.s[i] + dd.z[i] * d.s[i]) * sin * omc
        + (dd.z[i] * dd.s[i] - d.z[i] * d.s[i]) * omc * omc
}
