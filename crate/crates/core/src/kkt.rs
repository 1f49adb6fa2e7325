//! KKT residual, merit function, dual measure and the residual Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_len, ModelError, NlpProblem, PointEvaluation};

/// Stacked primal-dual point `(x, y, w, s, z)`; also used for directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
}

impl Iterate {
    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(m),
            w: DVector::zeros(p),
            s: DVector::zeros(p),
            z: DVector::zeros(p),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
    pub fn m(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.w.len()
    }

    /// Length `n + m + 3p` of the stacked vector.
    pub fn dim(&self) -> usize {
        self.n() + self.m() + 3 * self.p()
    }

    pub fn stack(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        let mut off = 0;
        for b in [&self.x, &self.y, &self.w, &self.s, &self.z] {
            out.rows_mut(off, b.len()).copy_from(b);
            off += b.len();
        }
        out
    }

    pub fn from_stacked(v: &DVector<f64>, n: usize, m: usize, p: usize) -> Result<Self, ModelError> {
        check_len("stacked vector", n + m + 3 * p, v.len())?;
        Ok(Self {
            x: v.rows(0, n).into_owned(),
            y: v.rows(n, m).into_owned(),
            w: v.rows(n + m, p).into_owned(),
            s: v.rows(n + m + p, p).into_owned(),
            z: v.rows(n + m + 2 * p, p).into_owned(),
        })
    }

    pub fn check_dims(&self, prob: &dyn NlpProblem) -> Result<(), ModelError> {
        check_len("x", prob.n(), self.x.len())?;
        check_len("y", prob.m(), self.y.len())?;
        check_len("w", prob.p(), self.w.len())?;
        check_len("s", prob.p(), self.s.len())?;
        check_len("z", prob.p(), self.z.len())
    }

    /// Componentwise products `z_i s_i`.
    pub fn complementarity(&self) -> DVector<f64> {
        self.z.component_mul(&self.s)
    }

    /// `(w, s, z) > 0` componentwise.
    pub fn is_interior(&self) -> bool {
        self.w.iter().chain(self.s.iter()).chain(self.z.iter()).all(|&v| v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value in residual block {block}")]
    NonFinite { block: &'static str },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The five blocks of `k(v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    /// `∇f − ∇h y − ∇g w`
    pub r_l: DVector<f64>,
    /// `h(x)`
    pub r_h: DVector<f64>,
    /// `g(x) − s`
    pub r_g: DVector<f64>,
    /// `w − z`
    pub r_wz: DVector<f64>,
    /// `Z s`
    pub r_comp: DVector<f64>,
}

impl KktResidual {
    pub fn blocks(&self) -> [(&'static str, &DVector<f64>); 5] {
        [
            ("r_L", &self.r_l),
            ("r_h", &self.r_h),
            ("r_g", &self.r_g),
            ("r_wz", &self.r_wz),
            ("r_comp", &self.r_comp),
        ]
    }

    /// Flattened in the order `(r_L, r_h, r_g, r_wz, r_comp)`.
    pub fn flatten(&self) -> DVector<f64> {
        let len: usize = self.blocks().iter().map(|(_, b)| b.len()).sum();
        let mut out = DVector::zeros(len);
        let mut off = 0;
        for (_, b) in self.blocks() {
            out.rows_mut(off, b.len()).copy_from(b);
            off += b.len();
        }
        out
    }

    pub fn merit(&self) -> f64 {
        merit(self)
    }

    pub fn norm(&self) -> f64 {
        self.merit().sqrt()
    }
}

/// Residual from pre-evaluated derivatives at `v.x`.
pub fn residual_from(eval: &PointEvaluation, v: &Iterate) -> Result<KktResidual, EvalError> {
    let r_l = &eval.grad_f - &eval.jac_h * &v.y - &eval.jac_g * &v.w;
    let res = KktResidual {
        r_l,
        r_h: eval.h.clone(),
        r_g: &eval.g - &v.s,
        r_wz: &v.w - &v.z,
        r_comp: v.z.component_mul(&v.s),
    };
    for (name, b) in res.blocks() {
        if b.iter().any(|c| !c.is_finite()) {
            return Err(EvalError::NonFinite { block: name });
        }
    }
    Ok(res)
}

/// `k(v)`: stationarity, equality feasibility, slack feasibility,
/// multiplier consistency and complementarity.
pub fn residual(prob: &dyn NlpProblem, v: &Iterate) -> Result<KktResidual, EvalError> {
    v.check_dims(prob)?;
    let x = &v.x;
    let r_l = prob.grad_f(x) - prob.jac_h(x) * &v.y - prob.jac_g(x) * &v.w;
    let res = KktResidual {
        r_l,
        r_h: prob.h(x),
        r_g: prob.g(x) - &v.s,
        r_wz: &v.w - &v.z,
        r_comp: v.z.component_mul(&v.s),
    };
    for (name, b) in res.blocks() {
        if b.iter().any(|c| !c.is_finite()) {
            return Err(EvalError::NonFinite { block: name });
        }
    }
    Ok(res)
}

/// `φ = ‖k(v)‖²`.
pub fn merit(res: &KktResidual) -> f64 {
    res.blocks().iter().map(|(_, b)| b.norm_squared()).sum()
}

/// `μ = zᵀs / p`.
pub fn dual_measure(z: &DVector<f64>, s: &DVector<f64>) -> f64 {
    assert!(!z.is_empty() && z.len() == s.len(), "dual measure needs p >= 1 matching entries");
    z.dot(s) / z.len() as f64
}

/// Dense `k'(v)` with its block dimensions.
///
/// Row/column blocks are ordered `(x, y, w, s, z)`:
///
/// ```text
/// [ ∇²L   −∇h  −∇g   0   0 ]
/// [ ∇hᵀ    0    0    0   0 ]
/// [ ∇gᵀ    0    0   −I   0 ]
/// [  0     0    I    0  −I ]
/// [  0     0    0    Z   S ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct KktMatrix {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub matrix: DMatrix<f64>,
}

impl KktMatrix {
    pub fn dim(&self) -> usize {
        self.n + self.m + 3 * self.p
    }

    /// Wraps an arbitrary square matrix whose leading `n x n` block plays the
    /// role of `∇²L` for regularization.
    pub fn from_dense(matrix: DMatrix<f64>, n: usize) -> Self {
        assert!(matrix.is_square() && n <= matrix.nrows());
        let rest = matrix.nrows() - n;
        Self { n, m: rest, p: 0, matrix }
    }

    pub fn hessian_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.n, self.n)).into_owned()
    }

    /// `∇g` recovered from the `(1,3)` block.
    pub fn jac_g(&self) -> DMatrix<f64> {
        -self.matrix.view((0, self.n + self.m), (self.n, self.p)).into_owned()
    }

    pub fn z_diag(&self) -> DVector<f64> {
        let r = self.n + self.m + 2 * self.p;
        DVector::from_iterator(self.p, (0..self.p).map(|i| self.matrix[(r + i, self.n + self.m + self.p + i)]))
    }

    pub fn s_diag(&self) -> DVector<f64> {
        let r = self.n + self.m + 2 * self.p;
        DVector::from_iterator(self.p, (0..self.p).map(|i| self.matrix[(r + i, r + i)]))
    }

    /// `∇²L + ∇g S⁻¹ Z ∇gᵀ`, the matrix whose invertibility the convergence
    /// theory assumes.
    pub fn condensed_hessian(&self) -> DMatrix<f64> {
        let jg = self.jac_g();
        let ratio = self.z_diag().component_div(&self.s_diag());
        let scaled = &jg * DMatrix::from_diagonal(&ratio);
        self.hessian_block() + scaled * jg.transpose()
    }
}

/// Assembles `k'(v)` from pre-evaluated derivatives.
pub fn jacobian_from(eval: &PointEvaluation, v: &Iterate) -> KktMatrix {
    let (n, m, p) = (v.n(), v.m(), v.p());
    let dim = n + m + 3 * p;
    let (oy, ow, os, oz) = (n, n + m, n + m + p, n + m + 2 * p);
    let mut a = DMatrix::zeros(dim, dim);

    a.view_mut((0, 0), (n, n)).copy_from(&eval.lagrangian_hessian(&v.y, &v.w));
    a.view_mut((0, oy), (n, m)).copy_from(&(-&eval.jac_h));
    a.view_mut((0, ow), (n, p)).copy_from(&(-&eval.jac_g));
    a.view_mut((oy, 0), (m, n)).copy_from(&eval.jac_h.transpose());
    a.view_mut((ow, 0), (p, n)).copy_from(&eval.jac_g.transpose());
    for i in 0..p {
        a[(ow + i, os + i)] = -1.0;
        a[(os + i, ow + i)] = 1.0;
        a[(os + i, oz + i)] = -1.0;
        a[(oz + i, os + i)] = v.z[i];
        a[(oz + i, oz + i)] = v.s[i];
    }
    KktMatrix { n, m, p, matrix: a }
}

pub fn jacobian(prob: &dyn NlpProblem, v: &Iterate) -> Result<KktMatrix, EvalError> {
    v.check_dims(prob)?;
    let eval = PointEvaluation::new(prob, &v.x)?;
    Ok(jacobian_from(&eval, v))
}

/// Reference quantities of the starting point that define the neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRef {
    /// `min_i z⁰_i s⁰_i`
    pub min_comp0: f64,
    /// `φ(v⁰)`
    pub phi0: f64,
}

impl NeighborhoodRef {
    pub fn at_start(v0: &Iterate, res0: &KktResidual) -> Self {
        Self {
            min_comp0: v0.complementarity().min(),
            phi0: res0.merit(),
        }
    }

    /// `½ · min(Z⁰s⁰) / φ(v⁰)`
    pub fn slope(&self) -> f64 {
        0.5 * self.min_comp0 / self.phi0
    }
}

/// `m̂ = min_i comp_i − ½ (min(Z⁰s⁰)/φ⁰) φ`; non-negative inside the
/// neighborhood.
pub fn neighborhood_margin(res: &KktResidual, comp: &DVector<f64>, reference: &NeighborhoodRef) -> f64 {
    margin_from_merit(res.merit(), comp, reference)
}

pub(crate) fn margin_from_merit(phi: f64, comp: &DVector<f64>, reference: &NeighborhoodRef) -> f64 {
    comp.min() - reference.slope() * phi
}
