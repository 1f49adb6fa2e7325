//! Problem-evaluation interface.
//!
//! A problem has the form
//!
//! ```text
//! min f(x)   s.t.   h(x) = 0 (m rows),   g(x) >= 0 (p rows)
//! ```
//!
//! with derivatives available through third order. Jacobians follow the
//! column convention `jac_h(x) = [∇h_1(x), ..., ∇h_m(x)]` (an `n x m`
//! matrix), likewise for `g`. Third-order oracles return the twice-contracted
//! tensor `(∇³c(x))[d, d]` as an n-vector; they are optional and fall back to
//! differencing the Hessian along `d` when absent.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid problem shape: {0}")]
    InvalidShape(String),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::Dimension { what, expected, got })
    }
}

/// Evaluation oracles of a smooth constrained problem.
///
/// Implementations must be pure: the same input yields bit-identical output,
/// and evaluation from several threads at once is safe.
pub trait NlpProblem: Send + Sync {
    fn name(&self) -> &str {
        "unnamed"
    }
    /// Number of decision variables.
    fn n(&self) -> usize;
    /// Number of equality constraints.
    fn m(&self) -> usize;
    /// Number of inequality constraints (bound rows included).
    fn p(&self) -> usize;

    fn f(&self, x: &DVector<f64>) -> f64;
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn d3f(&self, _x: &DVector<f64>, _d: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn h(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn hess_h(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64>;
    fn d3h(&self, _x: &DVector<f64>, _i: usize, _d: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn g(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64>;
    fn d3g(&self, _x: &DVector<f64>, _i: usize, _d: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Checks `n > m >= 0` and `p >= 1`.
pub fn validate_shape(n: usize, m: usize, p: usize) -> Result<(), ModelError> {
    if n == 0 || n <= m {
        return Err(ModelError::InvalidShape(format!("need n > m, got n={n}, m={m}")));
    }
    if p == 0 {
        return Err(ModelError::InvalidShape("need at least one inequality row".into()));
    }
    Ok(())
}

/// A scalar component (objective or single constraint row).
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn third(&self, _x: &DVector<f64>, _d: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Hand-coded component given by plain functions over slices.
///
/// `hessian` returns the `n x n` matrix in row-major order; `third` returns
/// `Σ_jk T_ijk d_j d_k`.
#[derive(Clone, Copy)]
pub struct Analytic {
    pub value: fn(&[f64]) -> f64,
    pub gradient: fn(&[f64]) -> Vec<f64>,
    pub hessian: fn(&[f64]) -> Vec<f64>,
    pub third: fn(&[f64], &[f64]) -> Vec<f64>,
}

impl SmoothFunction for Analytic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x.as_slice())
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec((self.gradient)(x.as_slice()))
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        DMatrix::from_row_slice(n, n, &(self.hessian)(x.as_slice()))
    }

    fn third(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_vec((self.third)(x.as_slice(), d.as_slice())))
    }
}

/// Affine component `a^T x + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub coeffs: DVector<f64>,
    pub constant: f64,
}

impl Affine {
    /// The bound row `x_i - lo` (`sign = 1`) or `hi - x_i` (`sign = -1`).
    pub fn bound_row(n: usize, index: usize, sign: f64, constant: f64) -> Self {
        let mut coeffs = DVector::zeros(n);
        coeffs[index] = sign;
        Self { coeffs, constant }
    }
}

impl SmoothFunction for Affine {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.dot(x) + self.constant
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.coeffs.clone()
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn third(&self, x: &DVector<f64>, _d: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(x.len()))
    }
}

/// A problem assembled from scalar components, with simple bounds appended as
/// inequality rows after the general inequalities.
#[derive(Clone)]
pub struct ComposedProblem {
    name: String,
    n: usize,
    objective: Arc<dyn SmoothFunction>,
    equalities: Vec<Arc<dyn SmoothFunction>>,
    inequalities: Vec<Arc<dyn SmoothFunction>>,
    general_inequalities: usize,
}

impl std::fmt::Debug for ComposedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComposedProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.equalities.len())
            .field("p", &self.inequalities.len())
            .finish()
    }
}

impl ComposedProblem {
    pub fn new(name: impl Into<String>, n: usize, objective: impl SmoothFunction + 'static) -> Self {
        Self {
            name: name.into(),
            n,
            objective: Arc::new(objective),
            equalities: Vec::new(),
            inequalities: Vec::new(),
            general_inequalities: 0,
        }
    }

    pub fn equality(mut self, c: impl SmoothFunction + 'static) -> Self {
        self.equalities.push(Arc::new(c));
        self
    }

    /// Adds a general inequality row `c(x) >= 0`. General rows precede bound rows.
    pub fn inequality(mut self, c: impl SmoothFunction + 'static) -> Self {
        self.inequalities
            .insert(self.general_inequalities, Arc::new(c));
        self.general_inequalities += 1;
        self
    }

    pub fn equality_arc(mut self, c: Arc<dyn SmoothFunction>) -> Self {
        self.equalities.push(c);
        self
    }

    pub fn inequality_arc(mut self, c: Arc<dyn SmoothFunction>) -> Self {
        self.inequalities.insert(self.general_inequalities, c);
        self.general_inequalities += 1;
        self
    }

    /// Appends `x_i - lo >= 0` and/or `hi - x_i >= 0` (zero-based `index`).
    pub fn bounds(mut self, index: usize, lo: Option<f64>, hi: Option<f64>) -> Self {
        assert!(index < self.n, "bound index {index} out of range");
        if let Some(lo) = lo {
            self.inequalities
                .push(Arc::new(Affine::bound_row(self.n, index, 1.0, -lo)));
        }
        if let Some(hi) = hi {
            self.inequalities
                .push(Arc::new(Affine::bound_row(self.n, index, -1.0, hi)));
        }
        self
    }

    /// Number of inequality rows that are not simple bounds.
    pub fn general_inequalities(&self) -> usize {
        self.general_inequalities
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        validate_shape(self.n, self.equalities.len(), self.inequalities.len())?;
        Ok(self)
    }
}

fn stack_values(cs: &[Arc<dyn SmoothFunction>], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(cs.len(), cs.iter().map(|c| c.value(x)))
}

fn stack_gradients(n: usize, cs: &[Arc<dyn SmoothFunction>], x: &DVector<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(n, cs.len());
    for (j, c) in cs.iter().enumerate() {
        jac.set_column(j, &c.gradient(x));
    }
    jac
}

impl NlpProblem for ComposedProblem {
    fn name(&self) -> &str {
        &self.name
    }
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.equalities.len()
    }
    fn p(&self) -> usize {
        self.inequalities.len()
    }

    fn f(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(x)
    }
    fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.objective.hessian(x)
    }
    fn d3f(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.objective.third(x, d)
    }

    fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        stack_values(&self.equalities, x)
    }
    fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        stack_gradients(self.n, &self.equalities, x)
    }
    fn hess_h(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        self.equalities[i].hessian(x)
    }
    fn d3h(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.equalities[i].third(x, d)
    }

    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        stack_values(&self.inequalities, x)
    }
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        stack_gradients(self.n, &self.inequalities, x)
    }
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        self.inequalities[i].hessian(x)
    }
    fn d3g(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.inequalities[i].third(x, d)
    }
}

fn check_dims(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(), ModelError> {
    check_len("x", prob.n(), x.len())?;
    check_len("y", prob.m(), y.len())?;
    check_len("w", prob.p(), w.len())
}

/// `∇²f(x) − Σ y_i ∇²h_i(x) − Σ w_i ∇²g_i(x)`.
pub fn eval_lagrangian_hessian(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    check_dims(prob, x, y, w)?;
    let mut hl = prob.hess_f(x);
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0.0 {
            hl -= prob.hess_h(x, i) * yi;
        }
    }
    for (i, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            hl -= prob.hess_g(x, i) * wi;
        }
    }
    Ok(hl)
}

/// Central difference of the Hessian along `d`, contracted once more with `d`.
fn fd_third(hess: impl Fn(&DVector<f64>) -> DMatrix<f64>, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let dn = d.norm();
    if dn == 0.0 {
        return DVector::zeros(x.len());
    }
    let t = 1e-4 * x.norm().max(1.0) / dn;
    let hp = hess(&(x + d * t));
    let hm = hess(&(x - d * t));
    (hp - hm) * d / (2.0 * t)
}

/// Third-order contraction of one component, with the number of
/// analytic-oracle misses that were served by differencing.
#[derive(Debug, Clone)]
pub struct ThirdOrder {
    pub value: DVector<f64>,
    pub fd_fallbacks: usize,
}

/// `(∇³L)[d, d] = d3f(x,d) − Σ y_i d3h_i(x,d) − Σ w_i d3g_i(x,d)`.
pub fn d3_lagrangian_dir(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<ThirdOrder, ModelError> {
    check_dims(prob, x, y, w)?;
    check_len("d", prob.n(), d.len())?;
    let mut fallbacks = 0;
    let mut out = match prob.d3f(x, d) {
        Some(v) => v,
        None => {
            fallbacks += 1;
            fd_third(|z| prob.hess_f(z), x, d)
        }
    };
    for (i, &yi) in y.iter().enumerate() {
        if yi == 0.0 {
            continue;
        }
        let t = prob.d3h(x, i, d).unwrap_or_else(|| {
            fallbacks += 1;
            fd_third(|z| prob.hess_h(z, i), x, d)
        });
        out -= t * yi;
    }
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let t = prob.d3g(x, i, d).unwrap_or_else(|| {
            fallbacks += 1;
            fd_third(|z| prob.hess_g(z, i), x, d)
        });
        out -= t * wi;
    }
    Ok(ThirdOrder { value: out, fd_fallbacks: fallbacks })
}

/// `Σ_i ẏ_i ∇²h_i(x) ẋ`.
pub fn contract_hess_h(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    ydot: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_len("x", prob.n(), x.len())?;
    check_len("ydot", prob.m(), ydot.len())?;
    check_len("xdot", prob.n(), xdot.len())?;
    let hs: Vec<_> = (0..prob.m()).map(|i| prob.hess_h(x, i)).collect();
    Ok(contract_with(&hs, ydot, xdot))
}

/// `Σ_i ẇ_i ∇²g_i(x) ẋ`, summed over the p inequality rows.
pub fn contract_hess_g(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    wdot: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_len("x", prob.n(), x.len())?;
    check_len("wdot", prob.p(), wdot.len())?;
    check_len("xdot", prob.n(), xdot.len())?;
    let hs: Vec<_> = (0..prob.p()).map(|i| prob.hess_g(x, i)).collect();
    Ok(contract_with(&hs, wdot, xdot))
}

/// `[ẋᵀ ∇²h_i(x) ẋ]_i`.
pub fn quad_form_h(prob: &dyn NlpProblem, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    check_len("x", prob.n(), x.len())?;
    check_len("xdot", prob.n(), xdot.len())?;
    let hs: Vec<_> = (0..prob.m()).map(|i| prob.hess_h(x, i)).collect();
    Ok(quad_forms(&hs, xdot))
}

/// `[ẋᵀ ∇²g_i(x) ẋ]_i`.
pub fn quad_form_g(prob: &dyn NlpProblem, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    check_len("x", prob.n(), x.len())?;
    check_len("xdot", prob.n(), xdot.len())?;
    let hs: Vec<_> = (0..prob.p()).map(|i| prob.hess_g(x, i)).collect();
    Ok(quad_forms(&hs, xdot))
}

pub(crate) fn contract_with(hessians: &[DMatrix<f64>], coeffs: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(xdot.len());
    for (hm, &c) in hessians.iter().zip(coeffs.iter()) {
        if c != 0.0 {
            out += hm * xdot * c;
        }
    }
    out
}

pub(crate) fn quad_forms(hessians: &[DMatrix<f64>], xdot: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(hessians.len(), hessians.iter().map(|hm| xdot.dot(&(hm * xdot))))
}

/// Every derivative needed for one iteration, evaluated once at `x`.
#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_f: DVector<f64>,
    pub hess_f: DMatrix<f64>,
    pub h: DVector<f64>,
    pub jac_h: DMatrix<f64>,
    pub hess_h: Vec<DMatrix<f64>>,
    pub g: DVector<f64>,
    pub jac_g: DMatrix<f64>,
    pub hess_g: Vec<DMatrix<f64>>,
}

impl PointEvaluation {
    pub fn new(prob: &dyn NlpProblem, x: &DVector<f64>) -> Result<Self, ModelError> {
        check_len("x", prob.n(), x.len())?;
        Ok(Self {
            x: x.clone(),
            f: prob.f(x),
            grad_f: prob.grad_f(x),
            hess_f: prob.hess_f(x),
            h: prob.h(x),
            jac_h: prob.jac_h(x),
            hess_h: (0..prob.m()).map(|i| prob.hess_h(x, i)).collect(),
            g: prob.g(x),
            jac_g: prob.jac_g(x),
            hess_g: (0..prob.p()).map(|i| prob.hess_g(x, i)).collect(),
        })
    }

    pub fn lagrangian_hessian(&self, y: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let mut hl = self.hess_f.clone();
        for (hm, &yi) in self.hess_h.iter().zip(y.iter()) {
            hl -= hm * yi;
        }
        for (hm, &wi) in self.hess_g.iter().zip(w.iter()) {
            hl -= hm * wi;
        }
        hl
    }
}

// ---------------------------------------------------------------------------
// Derivative checking

/// Result of comparing one callback family against finite differences.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CallbackCheck {
    pub callback: String,
    /// `max |analytic − fd| / max(1, |analytic|, |fd|)` over all entries.
    pub max_rel_error: f64,
    /// `(row, column)` of the worst entry; column is 0 for vectors.
    pub worst_entry: Option<(usize, usize)>,
    pub tolerance: f64,
    pub finite: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DerivativeReport {
    pub checks: Vec<CallbackCheck>,
    pub passed: bool,
}

impl DerivativeReport {
    pub fn failures(&self) -> impl Iterator<Item = &CallbackCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, callback: &str) -> Option<&CallbackCheck> {
        self.checks.iter().find(|c| c.callback == callback)
    }
}

struct Comparison {
    worst: f64,
    at: Option<(usize, usize)>,
    finite: bool,
}

impl Comparison {
    fn new() -> Self {
        Self { worst: 0.0, at: None, finite: true }
    }

    fn push(&mut self, analytic: f64, fd: f64, at: (usize, usize)) {
        if !analytic.is_finite() || !fd.is_finite() {
            self.finite = false;
            if self.at.is_none() {
                self.at = Some(at);
            }
            return;
        }
        let err = (analytic - fd).abs() / 1f64.max(analytic.abs()).max(fd.abs());
        if self.finite && (err > self.worst || self.at.is_none()) {
            self.worst = err;
            self.at = Some(at);
        }
    }

    fn finish(self, callback: String, tolerance: f64) -> CallbackCheck {
        let passed = self.finite && self.worst <= tolerance;
        CallbackCheck {
            callback,
            max_rel_error: if self.finite { self.worst } else { f64::INFINITY },
            worst_entry: self.at,
            tolerance,
            finite: self.finite,
            passed,
        }
    }
}

fn fd_step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

/// Central-difference Jacobian-style derivative of a vector map: column j
/// holds `∂F/∂x_j`.
fn fd_columns(x: &DVector<f64>, map: impl Fn(&DVector<f64>) -> DVector<f64>) -> Vec<DVector<f64>> {
    (0..x.len())
        .map(|j| {
            let step = fd_step(x[j]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            (map(&xp) - map(&xm)) / (xp[j] - xm[j])
        })
        .collect()
}

fn directions(n: usize) -> Vec<DVector<f64>> {
    let mut ds: Vec<DVector<f64>> = (0..n)
        .map(|j| {
            let mut d = DVector::zeros(n);
            d[j] = 1.0;
            d
        })
        .collect();
    ds.push(DVector::from_iterator(n, (0..n).map(|j| 1.0 - 0.37 * j as f64 / n as f64)));
    ds
}

fn check_gradient(
    label: &str,
    x: &DVector<f64>,
    value: impl Fn(&DVector<f64>) -> f64,
    grad: &DVector<f64>,
    tol: f64,
) -> CallbackCheck {
    let cols = fd_columns(x, |z| DVector::from_element(1, value(z)));
    let mut cmp = Comparison::new();
    for (j, c) in cols.iter().enumerate() {
        cmp.push(grad[j], c[0], (j, 0));
    }
    cmp.finish(label.to_string(), tol)
}

fn check_hessian(
    label: &str,
    x: &DVector<f64>,
    gradient: impl Fn(&DVector<f64>) -> DVector<f64>,
    hess: &DMatrix<f64>,
    tol: f64,
) -> CallbackCheck {
    let cols = fd_columns(x, gradient);
    let mut cmp = Comparison::new();
    for (j, c) in cols.iter().enumerate() {
        for i in 0..x.len() {
            cmp.push(hess[(i, j)], c[i], (i, j));
        }
    }
    // symmetry is part of the Hessian contract
    for i in 0..x.len() {
        for j in 0..i {
            let a = hess[(i, j)];
            let b = hess[(j, i)];
            if (a - b).abs() > 1e-12 * 1f64.max(a.abs()).max(b.abs()) {
                cmp.push(a, b, (i, j));
            }
        }
    }
    cmp.finish(label.to_string(), tol)
}

fn check_third(
    label: &str,
    x: &DVector<f64>,
    hess: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    third: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
    tol: f64,
) -> Option<CallbackCheck> {
    let mut cmp = Comparison::new();
    for (k, d) in directions(x.len()).iter().enumerate() {
        let analytic = third(d)?;
        let dn = d.norm();
        let t = fd_step(x.norm()) / dn;
        let fd = (hess(&(x + d * t)) - hess(&(x - d * t))) * d / (2.0 * t);
        for i in 0..x.len() {
            cmp.push(analytic[i], fd[i], (i, k));
        }
    }
    Some(cmp.finish(label.to_string(), tol))
}

/// Tolerances used by [`check_derivatives_with`].
#[derive(Debug, Clone, Copy)]
pub struct CheckTolerances {
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

impl CheckTolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { first: tol, second: tol, third: tol }
    }
}

/// Compares every analytic callback against central finite differences with
/// step `cbrt(eps)·max(1, |x_i|)`. Absent third-order oracles are skipped.
pub fn check_derivatives(prob: &dyn NlpProblem, x: &DVector<f64>, tol: f64) -> Result<DerivativeReport, ModelError> {
    check_derivatives_with(prob, x, CheckTolerances::uniform(tol))
}

pub fn check_derivatives_with(
    prob: &dyn NlpProblem,
    x: &DVector<f64>,
    tol: CheckTolerances,
) -> Result<DerivativeReport, ModelError> {
    check_len("x", prob.n(), x.len())?;
    let mut checks = Vec::new();

    checks.push(check_gradient("grad_f", x, |z| prob.f(z), &prob.grad_f(x), tol.first));
    checks.push(check_hessian("hess_f", x, |z| prob.grad_f(z), &prob.hess_f(x), tol.second));
    if let Some(c) = check_third("d3f", x, |z| prob.hess_f(z), |d| prob.d3f(x, d), tol.third) {
        checks.push(c);
    }

    let jh = prob.jac_h(x);
    for i in 0..prob.m() {
        checks.push(check_gradient(
            &format!("jac_h[{i}]"),
            x,
            |z| prob.h(z)[i],
            &jh.column(i).into_owned(),
            tol.first,
        ));
        checks.push(check_hessian(
            &format!("hess_h[{i}]"),
            x,
            |z| prob.jac_h(z).column(i).into_owned(),
            &prob.hess_h(x, i),
            tol.second,
        ));
        if let Some(c) = check_third(&format!("d3h[{i}]"), x, |z| prob.hess_h(z, i), |d| prob.d3h(x, i, d), tol.third) {
            checks.push(c);
        }
    }

    let jg = prob.jac_g(x);
    for i in 0..prob.p() {
        checks.push(check_gradient(
            &format!("jac_g[{i}]"),
            x,
            |z| prob.g(z)[i],
            &jg.column(i).into_owned(),
            tol.first,
        ));
        checks.push(check_hessian(
            &format!("hess_g[{i}]"),
            x,
            |z| prob.jac_g(z).column(i).into_owned(),
            &prob.hess_g(x, i),
            tol.second,
        ));
        if let Some(c) = check_third(&format!("d3g[{i}]"), x, |z| prob.hess_g(z, i), |d| prob.d3g(x, i, d), tol.third) {
            checks.push(c);
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(DerivativeReport { checks, passed })
}

// ---------------------------------------------------------------------------
// Wrappers

/// Counts oracle invocations. Counters are atomic so the wrapper stays
/// shareable across threads.
pub struct Instrumented<P> {
    inner: P,
    pub counters: OracleCounters,
}

#[derive(Debug, Default)]
pub struct OracleCounters {
    pub values: std::sync::atomic::AtomicUsize,
    pub gradients: std::sync::atomic::AtomicUsize,
    pub hessians: std::sync::atomic::AtomicUsize,
    pub third_order: std::sync::atomic::AtomicUsize,
}

impl OracleCounters {
    pub fn third_order_calls(&self) -> usize {
        self.third_order.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl<P: NlpProblem> Instrumented<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, counters: OracleCounters::default() }
    }

    fn bump(c: &std::sync::atomic::AtomicUsize) {
        c.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }
}

impl<P: NlpProblem> NlpProblem for Instrumented<P> {
    fn name(&self) -> &str {
        self.inner.name()
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
        Self::bump(&self.counters.values);
        self.inner.f(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        Self::bump(&self.counters.gradients);
        self.inner.grad_f(x)
    }
    fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::bump(&self.counters.hessians);
        self.inner.hess_f(x)
    }
    fn d3f(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        Self::bump(&self.counters.third_order);
        self.inner.d3f(x, d)
    }
    fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        Self::bump(&self.counters.values);
        self.inner.h(x)
    }
    fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::bump(&self.counters.gradients);
        self.inner.jac_h(x)
    }
    fn hess_h(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        Self::bump(&self.counters.hessians);
        self.inner.hess_h(x, i)
    }
    fn d3h(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        Self::bump(&self.counters.third_order);
        self.inner.d3h(x, i, d)
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        Self::bump(&self.counters.values);
        self.inner.g(x)
    }
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::bump(&self.counters.gradients);
        self.inner.jac_g(x)
    }
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        Self::bump(&self.counters.hessians);
        self.inner.hess_g(x, i)
    }
    fn d3g(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        Self::bump(&self.counters.third_order);
        self.inner.d3g(x, i, d)
    }
}

/// Adds a constant offset to one objective-gradient entry. Used to exercise
/// the derivative checker.
pub struct GradientFault<P> {
    pub inner: P,
    pub index: usize,
    pub offset: f64,
}

impl<P: NlpProblem> NlpProblem for GradientFault<P> {
    fn name(&self) -> &str {
        self.inner.name()
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
        self.inner.f(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut gr = self.inner.grad_f(x);
        gr[self.index] += self.offset;
        gr
    }
    fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.hess_f(x)
    }
    fn d3f(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.d3f(x, d)
    }
    fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.h(x)
    }
    fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jac_h(x)
    }
    fn hess_h(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        self.inner.hess_h(x, i)
    }
    fn d3h(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.d3h(x, i, d)
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.g(x)
    }
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jac_g(x)
    }
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        self.inner.hess_g(x, i)
    }
    fn d3g(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.d3g(x, i, d)
    }
}

impl<P: NlpProblem + ?Sized> NlpProblem for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn n(&self) -> usize {
        (**self).n()
    }
    fn m(&self) -> usize {
        (**self).m()
    }
    fn p(&self) -> usize {
        (**self).p()
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        (**self).f(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).grad_f(x)
    }
    fn hess_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).hess_f(x)
    }
    fn d3f(&self, x: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
        (**self).d3f(x, d)
    }
    fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).h(x)
    }
    fn jac_h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).jac_h(x)
    }
    fn hess_h(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        (**self).hess_h(x, i)
    }
    fn d3h(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        (**self).d3h(x, i, d)
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).g(x)
    }
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).jac_g(x)
    }
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        (**self).hess_g(x, i)
    }
    fn d3g(&self, x: &DVector<f64>, i: usize, d: &DVector<f64>) -> Option<DVector<f64>> {
        (**self).d3g(x, i, d)
    }
}
