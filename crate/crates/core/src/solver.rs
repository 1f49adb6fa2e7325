//! The three arc-search interior-point variants.
//!
//! * Variant 1 moves every block along the ellipse built from the full
//!   second-order system.
//! * Variant 2 uses the same ellipse but only moves `(x, w)`; `y, s, z` are
//!   reset by a warm restart.
//! * Variant 3 is variant 2 with the third-derivative term dropped from the
//!   second-order right-hand side.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arc::{compute_arc, ArcError, ArcState, RhsMode};
use crate::kkt::{dual_measure, jacobian_from, residual_from, EvalError, Iterate, KktResidual, NeighborhoodRef};
use crate::linsys::{factorize, least_squares_y, ConditionFlag, LinsysError, RegularizationPolicy};
use crate::model::{NlpProblem, PointEvaluation};
use crate::stepsize::{select_step, StepBreakdown, StepConfig, StepError, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Variant {
    One,
    Two,
    Three,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::One, Variant::Two, Variant::Three];

    pub fn number(self) -> u8 {
        match self {
            Variant::One => 1,
            Variant::Two => 2,
            Variant::Three => 3,
        }
    }

    /// Upper bound on σ before the `φp/μ²` term.
    pub fn sigma_cap(self) -> f64 {
        match self {
            Variant::One => 0.5,
            Variant::Two | Variant::Three => 0.125,
        }
    }

    pub fn update_rule(self) -> UpdateRule {
        match self {
            Variant::One => UpdateRule::FullArc,
            Variant::Two | Variant::Three => UpdateRule::WarmRestart,
        }
    }

    pub fn default_rhs(self) -> RhsMode {
        match self {
            Variant::One | Variant::Two => RhsMode::Full,
            Variant::Three => RhsMode::ThirdFree,
        }
    }
}

impl TryFrom<u8> for Variant {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Variant::One),
            2 => Ok(Variant::Two),
            3 => Ok(Variant::Three),
            other => Err(format!("variant must be 1, 2 or 3 (got {other})")),
        }
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v.number()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub variant: Variant,
    pub epsilon: f64,
    pub max_iter: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub sigma_bar: f64,
    pub sigma_cap_override: Option<f64>,
    pub backtrack: f64,
    pub alpha_min: f64,
    pub regularization: RegularizationPolicy,
    /// Replaces the variant's second-order right-hand side.
    pub rhs_mode: Option<RhsMode>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Three,
            epsilon: 1e-8,
            max_iter: 500,
            delta1: 0.01,
            delta2: 0.0,
            rho: 0.25,
            sigma_bar: 1e-3,
            sigma_cap_override: None,
            backtrack: 0.8,
            alpha_min: 1e-12,
            regularization: RegularizationPolicy::default(),
            rhs_mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl SolverConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn rhs(&self) -> RhsMode {
        self.rhs_mode.unwrap_or(self.variant.default_rhs())
    }

    pub fn variant_cap(&self) -> f64 {
        self.sigma_cap_override.unwrap_or(self.variant.sigma_cap())
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            delta1: self.delta1,
            delta2: self.delta2,
            rho: self.rho,
            backtrack: self.backtrack,
            alpha_min: self.alpha_min,
            ..StepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError(msg));
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive (got {})", self.epsilon));
        }
        if !(self.delta1 > 0.0 && self.delta1 < 1.0) {
            return bad(format!("delta1 must lie in (0, 1) (got {})", self.delta1));
        }
        if !(self.delta2 >= 0.0) || !self.delta2.is_finite() {
            return bad(format!("delta2 must be non-negative (got {})", self.delta2));
        }
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return bad(format!("rho must lie in (0, 1/2) (got {})", self.rho));
        }
        let cap = self.variant_cap();
        if !(cap > 0.0 && cap <= 1.0) {
            return bad(format!("sigma cap must lie in (0, 1] (got {cap})"));
        }
        if !(self.sigma_bar >= 0.0 && self.sigma_bar < cap) {
            return bad(format!("sigma_bar must lie in [0, {cap}) (got {})", self.sigma_bar));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad(format!("backtrack factor must lie in (0, 1) (got {})", self.backtrack));
        }
        if !(self.alpha_min > 0.0) {
            return bad(format!("alpha_min must be positive (got {})", self.alpha_min));
        }
        Ok(())
    }
}

/// User-supplied starting data; missing blocks get defaults in [`init_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub x: DVector<f64>,
    pub y: Option<DVector<f64>>,
    pub w: Option<DVector<f64>>,
    pub s: Option<DVector<f64>>,
    pub z: Option<DVector<f64>>,
}

impl StartPoint {
    pub fn primal(x: DVector<f64>) -> Self {
        Self { x, y: None, w: None, s: None, z: None }
    }

    /// `x` with `w⁰ = z⁰` set by `rule`; `y` and `s` keep their defaults.
    pub fn with_multipliers(prob: &dyn NlpProblem, x: DVector<f64>, rule: MultiplierStart) -> Self {
        let w = DVector::from_element(prob.p(), rule.value(prob, &x));
        Self { x, y: None, w: Some(w), s: None, z: None }
    }
}

/// Rule for the initial inequality multipliers `w⁰ = z⁰ = c·e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierStart {
    /// `c = 1`.
    #[default]
    Unit,
    /// `c = max(1, ‖∇f(x⁰)‖∞)`, so that `∇g w⁰` can balance the objective
    /// gradient when it is large.
    GradientScaled,
}

impl MultiplierStart {
    pub fn value(self, prob: &dyn NlpProblem, x: &DVector<f64>) -> f64 {
        match self {
            MultiplierStart::Unit => 1.0,
            MultiplierStart::GradientScaled => prob.grad_f(x).amax().max(1.0),
        }
    }
}

impl std::str::FromStr for MultiplierStart {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(MultiplierStart::Unit),
            "gradient" => Ok(MultiplierStart::GradientScaled),
            other => Err(format!("unknown multiplier rule '{other}' (expected unit or gradient)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitializationError {
    #[error("{block} has length {got}, expected {expected}")]
    Dimension { block: &'static str, expected: usize, got: usize },
    #[error("inequality constraint g[{index}] = {value:e} is not strictly positive at the start")]
    Infeasible { index: usize, value: f64 },
    #[error("{block}[{index}] = {value:e} is not strictly positive")]
    NotPositive { block: &'static str, index: usize, value: f64 },
    #[error("non-finite value in {0} at the start")]
    NonFinite(&'static str),
}

fn take_block(block: &'static str, given: &Option<DVector<f64>>, len: usize, default: impl FnOnce() -> DVector<f64>) -> Result<DVector<f64>, InitializationError> {
    match given {
        Some(v) if v.len() != len => Err(InitializationError::Dimension { block, expected: len, got: v.len() }),
        Some(v) => Ok(v.clone()),
        None => Ok(default()),
    }
}

fn require_positive(block: &'static str, v: &DVector<f64>) -> Result<(), InitializationError> {
    match v.iter().position(|&c| !(c > 0.0)) {
        Some(index) => Err(InitializationError::NotPositive { block, index, value: v[index] }),
        None => Ok(()),
    }
}

/// Completes and validates a starting point. `z` is set equal to `w`; a
/// missing `s` becomes `g(x⁰)`, missing `w`/`z` become `e`, missing `y` is 0.
pub fn init_check(prob: &dyn NlpProblem, start: &StartPoint) -> Result<Iterate, InitializationError> {
    let (n, m, p) = (prob.n(), prob.m(), prob.p());
    if start.x.len() != n {
        return Err(InitializationError::Dimension { block: "x", expected: n, got: start.x.len() });
    }
    if start.x.iter().any(|c| !c.is_finite()) {
        return Err(InitializationError::NonFinite("x"));
    }
    let g = prob.g(&start.x);
    if let Some(i) = g.iter().position(|c| c.is_nan()) {
        return Err(InitializationError::Infeasible { index: i, value: g[i] });
    }
    if let Some(index) = g.iter().position(|&c| !(c > 0.0)) {
        return Err(InitializationError::Infeasible { index, value: g[index] });
    }
    let y = take_block("y", &start.y, m, || DVector::zeros(m))?;
    let s = take_block("s", &start.s, p, || g.clone())?;
    let w = match (&start.w, &start.z) {
        (Some(_), _) => take_block("w", &start.w, p, || unreachable!())?,
        (None, Some(_)) => take_block("z", &start.z, p, || unreachable!())?,
        (None, None) => DVector::from_element(p, 1.0),
    };
    require_positive("w", &w)?;
    require_positive("s", &s)?;
    let v = Iterate { x: start.x.clone(), y, z: w.clone(), w, s };
    if v.stack().iter().any(|c| !c.is_finite()) {
        return Err(InitializationError::NonFinite("starting iterate"));
    }
    Ok(v)
}

/// Centering parameter: `cap = min(variant cap, φp/μ²)`,
/// `σ = min(0.1, 0.99 cap)`, raised to `min(σ̄, cap/2)` when below `σ̄`.
pub fn select_sigma(phi: f64, mu: f64, p: usize, cfg: &SolverConfig) -> f64 {
    let variant_cap = cfg.variant_cap();
    let cap = if mu > 0.0 {
        variant_cap.min(phi * p as f64 / (mu * mu))
    } else {
        variant_cap
    };
    let mut sigma = 0.1f64.min(0.99 * cap);
    if sigma < cfg.sigma_bar {
        sigma = cfg.sigma_bar.min(0.5 * cap);
    }
    sigma
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmRestart {
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    /// `∇h(x)` was numerically rank deficient; `y` is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// `s = g(x)`, `z = w`, and `y` the least-squares solution of
/// `∇h(x) y = ∇f(x) − ∇g(x) w`.
pub fn warm_restart(prob: &dyn NlpProblem, x: &DVector<f64>, w: &DVector<f64>) -> Result<WarmRestart, EvalError> {
    let s = prob.g(x);
    if s.iter().any(|c| !c.is_finite()) {
        return Err(EvalError::NonFinite { block: "g" });
    }
    if let Some(i) = s.iter().position(|&c| c <= 0.0) {
        return Err(EvalError::Invariant(format!("warm restart at g[{i}] = {:e} <= 0", s[i])));
    }
    let rhs = prob.grad_f(x) - prob.jac_g(x) * w;
    let ls = least_squares_y(&prob.jac_h(x), &rhs).map_err(|_| EvalError::NonFinite { block: "least-squares y" })?;
    if ls.y.iter().any(|c| !c.is_finite()) {
        return Err(EvalError::NonFinite { block: "least-squares y" });
    }
    Ok(WarmRestart { y: ls.y, s, z: w.clone(), rank_deficient: ls.rank_deficient })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Index of the iterate the step started from.
    pub k: usize,
    pub phi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub step: StepBreakdown,
    pub phi_next: f64,
    pub margin_next: f64,
    pub regularization_lambda: f64,
    pub condition_flag: ConditionFlag,
    pub factorizations: usize,
    pub solves: usize,
    pub fd_third_fallbacks: usize,
    pub rank_deficient_restart: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IterationError {
    #[error("factorization failed: {0}")]
    Factorization(#[from] LinsysError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Arc(ArcError),
}

impl From<ArcError> for IterationError {
    fn from(e: ArcError) -> Self {
        match e {
            ArcError::Linsys(l) => IterationError::Factorization(l),
            ArcError::Eval(ev) => IterationError::Eval(ev),
            other => IterationError::Arc(other),
        }
    }
}

/// Successful iteration: the next iterate, its residual, and the record.
#[derive(Debug, Clone)]
pub struct Step {
    pub arc: ArcState,
    pub next: Iterate,
    pub residual: KktResidual,
    pub record: IterationRecord,
}

/// One pass of the selected variant: residual and derivatives, one
/// factorization, two solves, step selection, update.
pub fn iterate_once(prob: &dyn NlpProblem, k: usize, v: &Iterate, reference: &NeighborhoodRef, cfg: &SolverConfig) -> Result<Step, IterationError> {
    let started = Instant::now();
    let eval = PointEvaluation::new(prob, &v.x).map_err(EvalError::from)?;
    let res = residual_from(&eval, v)?;
    let phi = res.merit();
    let mu = dual_measure(&v.z, &v.s);
    let sigma = select_sigma(phi, mu, v.p(), cfg);

    let jac = jacobian_from(&eval, v);
    let mut factorizations = 0;
    let fac = {
        factorizations += 1;
        factorize(&jac, &cfg.regularization)?
    };
    let arc = compute_arc(prob, &eval, v, &res, &fac, sigma, mu, cfg.rhs())?;
    let outcome = select_step(prob, v, &arc, phi, reference, &cfg.step_config(), cfg.variant.update_rule())?;

    let phi_next = outcome.residual.merit();
    let record = IterationRecord {
        k,
        phi,
        mu,
        sigma,
        step: outcome.breakdown,
        phi_next,
        margin_next: crate::kkt::neighborhood_margin(&outcome.residual, &outcome.next.complementarity(), reference),
        regularization_lambda: fac.regularization_lambda,
        condition_flag: fac.condition_flag,
        factorizations,
        solves: fac.solve_count(),
        fd_third_fallbacks: arc.fd_third_fallbacks,
        rank_deficient_restart: outcome.rank_deficient_restart,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok(Step { arc, next: outcome.next, residual: outcome.residual, record })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Stalled,
    FactorizationFailed,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Stalled => "stalled",
            SolveStatus::FactorizationFailed => "factorization_failed",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterate: Iterate,
    pub phi: f64,
    pub objective: f64,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub seconds: f64,
    /// Smallest eigenvalue of `∇²L` at the final iterate (diagnostic only).
    pub min_hessian_eigenvalue: Option<f64>,
    /// Reason for a non-converged status.
    pub message: Option<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn total_factorizations(&self) -> usize {
        self.records.iter().map(|r| r.factorizations).sum()
    }

    pub fn total_solves(&self) -> usize {
        self.records.iter().map(|r| r.solves).sum()
    }
}

fn min_hessian_eigenvalue(prob: &dyn NlpProblem, v: &Iterate) -> Option<f64> {
    let eval = PointEvaluation::new(prob, &v.x).ok()?;
    let h = eval.lagrangian_hessian(&v.y, &v.w);
    if h.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let sym = (&h + h.transpose()) * 0.5;
    Some(sym.symmetric_eigenvalues().min())
}

/// Runs the selected variant from a validated iterate until `φ ≤ ε`, the
/// iteration limit, or a failure. Failures are reported in the status.
pub fn solve(prob: &dyn NlpProblem, v0: &Iterate, cfg: &SolverConfig) -> SolveReport {
    solve_observed(prob, v0, cfg, &mut |_, _| {})
}

/// [`solve`], calling `observe(v, step)` after every accepted step with the
/// iterate the step started from.
pub fn solve_observed(prob: &dyn NlpProblem, v0: &Iterate, cfg: &SolverConfig, observe: &mut dyn FnMut(&Iterate, &Step)) -> SolveReport {
    let started = Instant::now();
    let mut v = v0.clone();
    let mut records = Vec::new();
    let finish = |v: Iterate, status: SolveStatus, phi: f64, records: Vec<IterationRecord>, message: Option<String>| {
        let objective = prob.f(&v.x);
        SolveReport {
            status,
            phi,
            objective,
            iterations: records.len(),
            records,
            seconds: started.elapsed().as_secs_f64(),
            min_hessian_eigenvalue: min_hessian_eigenvalue(prob, &v),
            message,
            iterate: v,
        }
    };
    if let Err(e) = cfg.validate() {
        return finish(v, SolveStatus::Stalled, f64::NAN, records, Some(e.to_string()));
    }
    let res0 = match crate::kkt::residual(prob, &v) {
        Ok(r) => r,
        Err(e) => return finish(v, SolveStatus::Stalled, f64::NAN, records, Some(e.to_string())),
    };
    let reference = NeighborhoodRef::at_start(&v, &res0);
    let mut phi = res0.merit();
    for k in 0..cfg.max_iter {
        if phi <= cfg.epsilon {
            return finish(v, SolveStatus::Converged, phi, records, None);
        }
        match iterate_once(prob, k, &v, &reference, cfg) {
            Ok(step) => {
                observe(&v, &step);
                phi = step.record.phi_next;
                records.push(step.record);
                v = step.next;
            }
            Err(IterationError::Factorization(e)) => {
                return finish(v, SolveStatus::FactorizationFailed, phi, records, Some(e.to_string()));
            }
            Err(e) => return finish(v, SolveStatus::Stalled, phi, records, Some(e.to_string())),
        }
    }
    if phi <= cfg.epsilon {
        return finish(v, SolveStatus::Converged, phi, records, None);
    }
    finish(v, SolveStatus::MaxIter, phi, records, Some(format!("iteration limit {} reached", cfg.max_iter)))
}

/// [`init_check`] followed by [`solve`].
pub fn solve_from(prob: &dyn NlpProblem, start: &StartPoint, cfg: &SolverConfig) -> Result<SolveReport, InitializationError> {
    let v0 = init_check(prob, start)?;
    Ok(solve(prob, &v0, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::residual;
    use crate::model::Instrumented;
    use crate::problems::get_problem;
    use std::sync::Arc;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn start(name: &str) -> (Arc<dyn NlpProblem>, Iterate) {
        let e = get_problem(name).unwrap();
        let v = init_check(e.problem.as_ref(), &StartPoint::primal(e.interior_start.clone())).unwrap();
        (e.problem.clone(), v)
    }

    #[test]
    fn sigma_rule_examples() {
        let v3 = SolverConfig::with_variant(Variant::Three);
        assert_eq!(select_sigma(1e6, 1.0, 4, &v3), 0.1);
        // φp/μ² = 1e-4
        let s = select_sigma(1e-4, 1.0, 1, &v3);
        assert!((s - 5e-5).abs() < 1e-18);
        let v1 = SolverConfig::with_variant(Variant::One);
        assert_eq!(select_sigma(10.0, 1.0, 2, &v1), 0.1);
        assert_eq!(select_sigma(1.0, 0.0, 2, &v1), 0.1);
    }

    #[test]
    fn init_fills_defaults() {
        let e = get_problem("HS19").unwrap();
        let v = init_check(e.problem.as_ref(), &StartPoint::primal(e.interior_start.clone())).unwrap();
        assert_eq!(v.s, e.problem.g(&e.interior_start));
        assert!(v.s.iter().all(|&c| c > 0.0));
        assert_eq!(v.w, DVector::from_element(6, 1.0));
        assert_eq!(v.z, v.w);
        assert_eq!(v.y.len(), 0);
    }

    #[test]
    fn init_rejects_bound_violation() {
        let e = get_problem("HS19").unwrap();
        // x1 = 13 sits on the lower bound row x1 - 13 >= 0
        let err = init_check(e.problem.as_ref(), &StartPoint::primal(dv(&[13.0, 1.0]))).unwrap_err();
        assert!(matches!(err, InitializationError::Infeasible { .. }), "{err}");
    }

    #[test]
    fn init_copies_w_into_z() {
        let e = get_problem("HS32").unwrap();
        let p = e.problem.p();
        let sp = StartPoint {
            w: Some(DVector::from_element(p, 2.0)),
            z: Some(DVector::from_element(p, 1.0)),
            ..StartPoint::primal(e.interior_start.clone())
        };
        let v = init_check(e.problem.as_ref(), &sp).unwrap();
        assert_eq!(v.z, DVector::from_element(p, 2.0));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { epsilon: -1.0, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { rho: 0.5, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { sigma_bar: 0.2, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Variant::Two).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Variant>("3").unwrap(), Variant::Three);
        assert!(serde_json::from_str::<Variant>("4").is_err());
    }

    #[test]
    fn restart_zeroes_slack_blocks() {
        let (prob, v) = start("HS19");
        let r = warm_restart(prob.as_ref(), &v.x, &v.w).unwrap();
        let vr = Iterate { y: r.y, s: r.s, z: r.z, ..v.clone() };
        let res = residual(prob.as_ref(), &vr).unwrap();
        assert_eq!(res.r_g, DVector::zeros(6));
        assert_eq!(res.r_wz, DVector::zeros(6));
        assert_eq!(vr.y.len(), 0);
    }

    #[test]
    fn restart_multipliers_solve_consistent_system() {
        let (prob, v) = start("WB");
        let x = &v.x;
        // choose w so that ∇f − ∇g w lies in the range of ∇h
        let jh = prob.jac_h(x);
        let y_true = dv(&[0.3, -0.7]);
        let w = v.w.clone();
        let target = &jh * &y_true;
        let shifted = Shifted { inner: prob.clone(), shift: target - (prob.grad_f(x) - prob.jac_g(x) * &w) };
        let r = warm_restart(&shifted, x, &w).unwrap();
        let back = &jh * &r.y - (shifted.grad_f(x) - shifted.jac_g(x) * &w);
        assert!(back.norm() <= 1e-10, "{}", back.norm());
        assert!((r.y - y_true).norm() <= 1e-10);
    }

    /// Adds a constant vector to the objective gradient.
    struct Shifted {
        inner: Arc<dyn NlpProblem>,
        shift: DVector<f64>,
    }

    impl NlpProblem for Shifted {
        fn name(&self) -> &str {
            "shifted"
        }
        fn n(&self) -> usize {
            self.inner.n()
        }
        fn m(&self) -> usize {
            self.inner.m()
        }
        fn p(&self) -> usize {
            self.inner.p()
        }
        fn f(&self, x: &DVector<f64>) -> f64 {
            self.inner.f(x) + self.shift.dot(x)
        }
        fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
            self.inner.grad_f(x) + &self.shift
        }
        fn hess_f(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
            self.inner.hess_f(x)
        }
        fn d3f(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
            self.inner.d3f(x, d)
        }
        fn h(&self, x: &DVector<f64>) -> DVector<f64> {
            self.inner.h(x)
        }
        fn jac_h(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
            self.inner.jac_h(x)
        }
        fn hess_h(&self, x: &DVector<f64>, i: usize) -> nalgebra::DMatrix<f64> {
            self.inner.hess_h(x, i)
        }
        fn d3h(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
            self.inner.d3h(x, i, d)
        }
        fn g(&self, x: &DVector<f64>) -> DVector<f64> {
            self.inner.g(x)
        }
        fn jac_g(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
            self.inner.jac_g(x)
        }
        fn hess_g(&self, x: &DVector<f64>, i: usize) -> nalgebra::DMatrix<f64> {
            self.inner.hess_g(x, i)
        }
        fn d3g(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
            self.inner.d3g(x, i, d)
        }
    }

    #[test]
    fn one_iteration_decreases_merit_and_keeps_w_equal_z() {
        let (prob, v) = start("HS32");
        let res = residual(prob.as_ref(), &v).unwrap();
        let reference = NeighborhoodRef::at_start(&v, &res);
        for variant in Variant::ALL {
            let cfg = SolverConfig::with_variant(variant);
            let step = iterate_once(prob.as_ref(), 0, &v, &reference, &cfg).unwrap();
            assert!(step.record.phi_next < res.merit());
            assert_eq!(step.next.w, step.next.z);
            assert_eq!(step.record.factorizations, 1);
            assert_eq!(step.record.solves, 2);
        }
    }

    #[test]
    fn third_free_variant_never_calls_third_order_oracles() {
        let e = get_problem("HS71").unwrap();
        let inst = Instrumented::new(e.problem.clone());
        let v0 = init_check(&inst, &StartPoint::primal(e.interior_start.clone())).unwrap();
        let report = solve(&inst, &v0, &SolverConfig::with_variant(Variant::Three));
        assert!(report.converged(), "{:?}", report.message);
        assert_eq!(inst.counters.third_order_calls(), 0);

        let inst = Instrumented::new(e.problem.clone());
        let report = solve(&inst, &v0, &SolverConfig::with_variant(Variant::Two));
        assert!(report.records.len() > 0);
        assert!(inst.counters.third_order_calls() > 0);
    }

    /// The restart leaves `h` unchanged, zeroes `g − s` and `w − z`, and
    /// minimizes the stationarity residual over `y`, so those blocks never get
    /// worse. The complementarity block changes from `z(α)∘s(α)` to
    /// `w(α)∘g(x(α))` and is not covered by this bound.
    #[test]
    fn restart_never_increases_non_complementarity_residual_on_hs32() {
        use crate::arc::compute_arc;
        use crate::kkt::{jacobian_from, residual_from};
        use crate::stepsize::trial_point;
        let partial = |r: &KktResidual| r.r_l.norm_squared() + r.r_h.norm_squared() + r.r_g.norm_squared() + r.r_wz.norm_squared();
        for variant in [Variant::Two, Variant::Three] {
            let (prob, mut v) = start("HS32");
            let res0 = residual(prob.as_ref(), &v).unwrap();
            let reference = NeighborhoodRef::at_start(&v, &res0);
            let cfg = SolverConfig::with_variant(variant);
            for k in 0..100 {
                if residual(prob.as_ref(), &v).unwrap().merit() <= cfg.epsilon {
                    break;
                }
                let step = iterate_once(prob.as_ref(), k, &v, &reference, &cfg).unwrap();
                // rebuild the same arc and compare the plain point with the restarted one
                let eval = PointEvaluation::new(prob.as_ref(), &v.x).unwrap();
                let fac = factorize(&jacobian_from(&eval, &v), &cfg.regularization).unwrap();
                let arc = compute_arc(prob.as_ref(), &eval, &v, &residual_from(&eval, &v).unwrap(), &fac, step.record.sigma, step.record.mu, cfg.rhs()).unwrap();
                let alpha = step.record.step.alpha_k;
                let mut plain = crate::arc::point_on_arc(&v, &arc, alpha);
                plain.z = plain.w.clone();
                let (restarted, _) = trial_point(prob.as_ref(), &v, &arc, alpha, UpdateRule::WarmRestart).unwrap();
                assert_eq!(restarted, step.next);
                let before = partial(&residual(prob.as_ref(), &plain).unwrap());
                let after = partial(&residual(prob.as_ref(), &restarted).unwrap());
                assert!(after <= before * (1.0 + 1e-12) + 1e-300, "k={k}: {after} > {before}");
                v = step.next;
            }
        }
    }
}
