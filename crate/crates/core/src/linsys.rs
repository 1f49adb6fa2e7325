//! Dense factorization of the KKT matrix, shared by the first- and
//! second-order solves, plus the multiplier least-squares problem.
//!
//! The matrix is equilibrated by rows and columns before an LU factorization
//! with partial pivoting. The complementarity rows `[Z S]` otherwise dominate
//! any condition estimate near a solution even when the system is well posed.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::KktMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinsysError {
    #[error("KKT matrix still singular after regularization up to lambda = {lambda:e}")]
    Singular { lambda: f64 },
    #[error("right-hand side has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite entries in the KKT matrix")]
    NonFinite,
}

/// Primal regularization `∇²L + λI`, escalated geometrically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizationPolicy {
    pub initial: f64,
    pub growth: f64,
    pub max: f64,
    /// Reciprocal-condition threshold on the equilibrated matrix.
    pub rcond_min: f64,
    /// Also inspect `∇²L + ∇g S⁻¹Z ∇gᵀ`: regularize while it is singular,
    /// and treat an ill-conditioned KKT matrix as repairable only when this
    /// matrix is ill-conditioned too.
    pub condensed_check: bool,
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-8,
            growth: 10.0,
            max: 1e6,
            rcond_min: f64::EPSILON.sqrt(),
            condensed_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    Ok,
    Regularized,
    /// Nonsingular but never reached the condition threshold; factored
    /// without regularization.
    IllConditioned,
}

struct Attempt {
    lu: LU<f64, Dyn, Dyn>,
    matrix: DMatrix<f64>,
    row_scale: DVector<f64>,
    col_scale: DVector<f64>,
    rcond: f64,
    singular: bool,
    /// Reciprocal condition of the equilibrated condensed matrix; `None`
    /// when the check is disabled or there are no inequality rows.
    condensed_rcond: Option<f64>,
}

/// One LU factorization, reusable for any number of right-hand sides.
#[derive(Debug)]
pub struct KktFactorization {
    lu: LU<f64, Dyn, Dyn>,
    matrix: DMatrix<f64>,
    row_scale: DVector<f64>,
    col_scale: DVector<f64>,
    pub regularization_lambda: f64,
    pub condition_flag: ConditionFlag,
    /// Estimated reciprocal 1-norm condition number of the equilibrated matrix.
    pub rcond: f64,
    /// Number of LU decompositions attempted while choosing λ.
    pub attempts: usize,
    solves: AtomicUsize,
}

fn regularized(a: &KktMatrix, lambda: f64) -> DMatrix<f64> {
    let mut m = a.matrix.clone();
    for i in 0..a.n {
        m[(i, i)] += lambda;
    }
    m
}

fn row_scaling(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows(),
        m.row_iter().map(|r| {
            let mx = r.amax();
            if mx > 0.0 {
                1.0 / mx
            } else {
                1.0
            }
        }),
    )
}

/// Ruiz equilibration: row and column scalings `(r, c)` that bring every
/// row and column of `diag(r) M diag(c)` close to unit max-norm.
fn equilibrate(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut r = DVector::from_element(m.nrows(), 1.0);
    let mut c = DVector::from_element(m.ncols(), 1.0);
    let mut scaled = m.clone();
    for _ in 0..20 {
        let rs = row_scaling(&scaled).map(f64::sqrt);
        let cs = row_scaling(&scaled.transpose()).map(f64::sqrt);
        scaled = DMatrix::from_diagonal(&rs) * scaled * DMatrix::from_diagonal(&cs);
        r.component_mul_assign(&rs);
        c.component_mul_assign(&cs);
        if rs.iter().chain(cs.iter()).all(|v| (v - 1.0).abs() < 1e-3) {
            break;
        }
    }
    (r, c)
}

fn lu_is_singular(lu: &LU<f64, Dyn, Dyn>) -> bool {
    let u = lu.u();
    let n = u.nrows();
    let umax = u.amax();
    let tiny = (n.max(1) as f64) * f64::EPSILON * umax.max(1.0);
    (0..n).any(|i| !(u[(i, i)].abs() > tiny))
}

/// Solves `Bᵀ z = b` given `P B = L U`.
fn lu_solve_transpose(lu: &LU<f64, Dyn, Dyn>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let a = lu.u().tr_solve_upper_triangular(b)?;
    let mut z = lu.l().tr_solve_lower_triangular(&a)?;
    lu.p().inv_permute_rows(&mut z);
    Some(z)
}

/// Hager's estimate of `‖B⁻¹‖₁`.
fn inverse_one_norm_estimate(lu: &LU<f64, Dyn, Dyn>, dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut x = DVector::from_element(dim, 1.0 / dim as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        estimate = y.lp_norm(1);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = lu_solve_transpose(lu, &xi) else { return f64::INFINITY };
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    estimate
}

fn reciprocal_condition(lu: &LU<f64, Dyn, Dyn>, norm: f64) -> f64 {
    1.0 / (norm * inverse_one_norm_estimate(lu, lu.u().nrows()))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

fn attempt(a: &KktMatrix, lambda: f64, policy: &RegularizationPolicy) -> Attempt {
    let matrix = regularized(a, lambda);
    let (row_scale, col_scale) = equilibrate(&matrix);
    let scaled = DMatrix::from_diagonal(&row_scale) * &matrix * DMatrix::from_diagonal(&col_scale);
    let norm = one_norm(&scaled);
    let lu = scaled.lu();
    let singular = lu_is_singular(&lu);
    let rcond = if singular { 0.0 } else { reciprocal_condition(&lu, norm) };
    let condensed_rcond = (policy.condensed_check && a.p > 0).then(|| {
        let reg = KktMatrix { n: a.n, m: a.m, p: a.p, matrix: matrix.clone() };
        let c = reg.condensed_hessian();
        let (r, cs) = equilibrate(&c);
        let scaled = DMatrix::from_diagonal(&r) * c * DMatrix::from_diagonal(&cs);
        let norm = one_norm(&scaled);
        let lu = scaled.lu();
        if lu_is_singular(&lu) {
            0.0
        } else {
            reciprocal_condition(&lu, norm)
        }
    });
    Attempt { lu, matrix, row_scale, col_scale, rcond, singular, condensed_rcond }
}

/// Factorizes `A`, adding `λI` to the `∇²L` block while the matrix is
/// singular or its equilibrated condition estimate exceeds `1/rcond_min`
/// (see [`RegularizationPolicy::condensed_check`] for the refinement).
pub fn factorize(a: &KktMatrix, policy: &RegularizationPolicy) -> Result<KktFactorization, LinsysError> {
    if a.matrix.iter().any(|v| !v.is_finite()) {
        return Err(LinsysError::NonFinite);
    }
    let mut lambda = 0.0;
    let mut attempts = 0;
    let mut unregularized: Option<Attempt> = None;
    loop {
        let at = attempt(a, lambda, policy);
        attempts += 1;
        let well_posed = !at.singular
            && match at.condensed_rcond {
                None => at.rcond >= policy.rcond_min,
                Some(c) => c > 0.0 && (at.rcond >= policy.rcond_min || c >= policy.rcond_min),
            };
        if well_posed {
            return Ok(finish(at, lambda, if lambda > 0.0 { ConditionFlag::Regularized } else { ConditionFlag::Ok }, attempts));
        }
        if lambda == 0.0 && !at.singular {
            unregularized = Some(at);
        }
        lambda = if lambda == 0.0 { policy.initial } else { lambda * policy.growth };
        if lambda > policy.max * (1.0 + 1e-12) || policy.initial <= 0.0 {
            return match unregularized {
                Some(at) => Ok(finish(at, 0.0, ConditionFlag::IllConditioned, attempts)),
                None => Err(LinsysError::Singular { lambda: policy.max }),
            };
        }
    }
}

fn finish(at: Attempt, lambda: f64, flag: ConditionFlag, attempts: usize) -> KktFactorization {
    KktFactorization {
        lu: at.lu,
        matrix: at.matrix,
        row_scale: at.row_scale,
        col_scale: at.col_scale,
        regularization_lambda: lambda,
        condition_flag: flag,
        rcond: at.rcond,
        attempts,
        solves: AtomicUsize::new(0),
    }
}

impl KktFactorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The matrix actually factorized (after regularization, before scaling).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Number of [`solve`](Self::solve) calls served by this factorization.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn backsolve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let scaled = rhs.component_mul(&self.row_scale);
        self.lu
            .solve(&scaled)
            .map(|x| x.component_mul(&self.col_scale))
            .unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN))
    }

    /// Solves `A_reg x = rhs` with one step of iterative refinement.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, LinsysError> {
        if rhs.len() != self.dim() {
            return Err(LinsysError::Dimension { expected: self.dim(), got: rhs.len() });
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let mut x = self.backsolve(rhs);
        let r = rhs - &self.matrix * &x;
        x += self.backsolve(&r);
        Ok(x)
    }
}

/// Least-squares multipliers and whether the rank-deficient fallback ran.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub y: DVector<f64>,
    pub rank_deficient: bool,
}

/// Minimizes `‖Jh·y − r‖₂` with a Householder QR; falls back to the
/// minimum-norm solution from an SVD when `Jh` is numerically rank deficient.
pub fn least_squares_y(jh: &DMatrix<f64>, r: &DVector<f64>) -> Result<LeastSquares, LinsysError> {
    let (n, m) = jh.shape();
    if r.len() != n {
        return Err(LinsysError::Dimension { expected: n, got: r.len() });
    }
    if m == 0 {
        return Ok(LeastSquares { y: DVector::zeros(0), rank_deficient: false });
    }
    let qr = jh.clone().qr();
    let rmat = qr.r();
    let diag_max = (0..m).map(|i| rmat[(i, i)].abs()).fold(0.0, f64::max);
    let diag_min = (0..m).map(|i| rmat[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    let full_rank = m <= n && diag_max > 0.0 && diag_min > 1e-12 * diag_max;
    if full_rank {
        let qtr = qr.q().transpose() * r;
        if let Some(y) = rmat.solve_upper_triangular(&qtr) {
            return Ok(LeastSquares { y, rank_deficient: false });
        }
    }
    let svd = jh.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let y = svd
        .solve(r, tol)
        .map_err(|_| LinsysError::Singular { lambda: 0.0 })?;
    Ok(LeastSquares { y, rank_deficient: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(42)
    }

    fn plain(m: DMatrix<f64>) -> KktMatrix {
        let n = m.nrows();
        KktMatrix::from_dense(m, n)
    }

    #[test]
    fn identity_needs_no_regularization() {
        let a = plain(DMatrix::identity(6, 6));
        let fac = factorize(&a, &RegularizationPolicy::default()).unwrap();
        assert_eq!(fac.regularization_lambda, 0.0);
        assert_eq!(fac.condition_flag, ConditionFlag::Ok);
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        assert_eq!(fac.solve(&b).unwrap(), b);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = plain(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]));
        let fac = factorize(&a, &RegularizationPolicy::default()).unwrap();
        assert_eq!(fac.solve(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn random_well_conditioned_multiply_back() {
        let mut rng = rng();
        let mut m = DMatrix::from_fn(10, 10, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..10 {
            m[(i, i)] += 10.0;
        }
        let fac = factorize(&plain(m.clone()), &RegularizationPolicy::default()).unwrap();
        assert_eq!(fac.regularization_lambda, 0.0);
        for _ in 0..5 {
            let b = DVector::from_fn(10, |_, _| rng.gen_range(-5.0..5.0));
            let x = fac.solve(&b).unwrap();
            assert!((&m * &x - &b).norm() <= 1e-10);
        }
        let ones = DVector::from_element(10, 1.0);
        let x = fac.solve(&(&m * &ones)).unwrap();
        assert!((x - ones).amax() <= 1e-10);
    }

    #[test]
    fn repeated_solves_reuse_one_factorization() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let fac = factorize(&plain(m), &RegularizationPolicy::default()).unwrap();
        assert_eq!(fac.attempts, 1);
        fac.solve(&DVector::from_element(3, 1.0)).unwrap();
        fac.solve(&DVector::from_element(3, -2.0)).unwrap();
        assert_eq!(fac.solve_count(), 2);
        assert_eq!(fac.attempts, 1);
    }

    #[test]
    fn singular_hessian_block_is_regularized() {
        // [[0, 1], [1, 0]] is fine; [[0, 0], [0, 1]] with n = 2 needs lambda
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let a = KktMatrix::from_dense(m.clone(), 2);
        let fac = factorize(&a, &RegularizationPolicy::default()).unwrap();
        assert!(fac.regularization_lambda > 0.0);
        assert_eq!(fac.condition_flag, ConditionFlag::Regularized);
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let x = fac.solve(&b).unwrap();
        assert!((fac.matrix() * &x - &b).norm() <= 1e-8 * b.norm().max(1.0));
    }

    #[test]
    fn hopeless_matrix_reports_singular() {
        let a = KktMatrix::from_dense(DMatrix::zeros(3, 3), 1);
        assert!(matches!(factorize(&a, &RegularizationPolicy::default()), Err(LinsysError::Singular { .. })));
    }

    #[test]
    fn solve_rejects_wrong_length() {
        let fac = factorize(&plain(DMatrix::identity(2, 2)), &RegularizationPolicy::default()).unwrap();
        assert!(matches!(fac.solve(&DVector::zeros(3)), Err(LinsysError::Dimension { .. })));
    }

    #[test]
    fn least_squares_orthonormal_columns() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.6, 0.0, 0.8]);
        let r = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let ls = least_squares_y(&q, &r).unwrap();
        assert!(!ls.rank_deficient);
        assert!((ls.y - q.transpose() * r).amax() <= 1e-14);
    }

    #[test]
    fn least_squares_consistent_system() {
        let mut rng = rng();
        let jh = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let ones = DVector::from_element(3, 1.0);
        let ls = least_squares_y(&jh, &(&jh * &ones)).unwrap();
        assert!((ls.y - ones).amax() <= 1e-10);
    }

    #[test]
    fn least_squares_rank_deficient_min_norm() {
        let jh = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let r = DVector::from_row_slice(&[2.0, 0.0, 0.0]);
        let ls = least_squares_y(&jh, &r).unwrap();
        assert!(ls.rank_deficient);
        assert!((ls.y - DVector::from_row_slice(&[1.0, 1.0])).amax() <= 1e-12);
    }

    #[test]
    fn least_squares_empty() {
        let ls = least_squares_y(&DMatrix::zeros(3, 0), &DVector::zeros(3)).unwrap();
        assert_eq!(ls.y.len(), 0);
    }

    #[test]
    fn condition_estimate_tracks_exact_value() {
        let mut rng = rng();
        for _ in 0..20 {
            let m = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            let lu = m.clone().lu();
            let exact = one_norm(&m.clone().try_inverse().unwrap());
            let est = inverse_one_norm_estimate(&lu, 6);
            assert!(est <= exact * (1.0 + 1e-10));
            assert!(est >= exact / 10.0, "estimate {est} exact {exact}");
        }
    }
}
