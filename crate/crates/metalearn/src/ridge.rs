//! Ridge regression parameterized by a representation `D`, its meta-loss,
//! and the analytic gradient of the meta-loss.
//!
//! Everything works through the `n x n` system `M(D) = X D X^T + n I`, which
//! is positive definite with smallest eigenvalue at least `n` regardless of
//! `D`, so one Cholesky factorization per `(D, Z)` pair serves the predictor,
//! the loss, and the gradient:
//!
//! - predictor   `w = D X^T M^{-1} y`
//! - loss        `L_Z(D) = n || M^{-1} y ||^2`
//! - gradient    `grad L_Z(D) = -n (p q^T + q p^T)` with
//!   `u = M^{-1} y`, `v = M^{-1} u`, `p = X^T u`, `q = X^T v`,
//!   which is the factored form of `-n X^T M^{-1} S(D) M^{-1} X` for
//!   `S(D) = y y^T M^{-1} + M^{-1} y y^T`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::types::{LinearPredictor, Representation, TaskDataset};

/// The meta-loss value at `(D, Z)` together with the factorization of
/// `M(D)`, reusable for the gradient and the predictor.
pub struct LossEval<'a> {
    value: f64,
    xd: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    u: DVector<f64>,
    dataset: &'a TaskDataset,
}

impl<'a> LossEval<'a> {
    fn new(repr: &Representation, dataset: &'a TaskDataset) -> Result<Self> {
        if repr.dim() != dataset.dim() {
            return Err(Error::DimensionMismatch(format!(
                "representation is {}-dimensional, dataset is {}-dimensional",
                repr.dim(),
                dataset.dim()
            )));
        }
        let x = dataset.inputs();
        let n = dataset.n();
        let xd = x * repr.matrix();
        let mut m = &xd * x.transpose();
        for i in 0..n {
            m[(i, i)] += n as f64;
        }
        let chol = Cholesky::new(m).ok_or_else(|| {
            Error::LinearSolveFailure(
                "M(D) = X D X^T + n I is not positive definite; input is corrupted".into(),
            )
        })?;
        let u = chol.solve(dataset.outputs());
        let value = n as f64 * u.norm_squared();
        Ok(Self {
            value,
            xd,
            chol,
            u,
            dataset,
        })
    }

    /// `L_Z(D) = n || M(D)^{-1} y ||^2`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// The ridge solution `w = D X^T M^{-1} y`.
    pub fn predictor(&self) -> LinearPredictor {
        LinearPredictor::new(self.xd.transpose() * &self.u)
            .expect("finite factorization yields finite weights")
    }

    /// The gradient of the meta-loss at `D`, an exactly symmetric `d x d`
    /// matrix with Frobenius norm at most 2 on theory-compliant data.
    pub fn gradient(&self) -> DMatrix<f64> {
        let x = self.dataset.inputs();
        let n = self.dataset.n() as f64;
        let v = self.chol.solve(&self.u);
        let p = x.transpose() * &self.u;
        let q = x.transpose() * &v;
        let mut g = &p * q.transpose();
        g += &q * p.transpose();
        g *= -n;
        g
    }
}

/// Meta-loss of ridge regression with representation `repr` on dataset `z`.
pub fn meta_loss<'a>(repr: &Representation, z: &'a TaskDataset) -> Result<LossEval<'a>> {
    LossEval::new(repr, z)
}

/// Closed-form minimizer of the representation-penalized ridge objective
/// over the range of `D`.
pub fn ridge_solve(repr: &Representation, z: &TaskDataset) -> Result<LinearPredictor> {
    Ok(LossEval::new(repr, z)?.predictor())
}

/// Gradient of the meta-loss with respect to `D`.
pub fn meta_gradient(repr: &Representation, z: &TaskDataset) -> Result<DMatrix<f64>> {
    Ok(LossEval::new(repr, z)?.gradient())
}

/// Mean squared error of predictor `w` on dataset `z`.
pub fn empirical_risk(w: &LinearPredictor, z: &TaskDataset) -> Result<f64> {
    if w.dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "predictor is {}-dimensional, dataset is {}-dimensional",
            w.dim(),
            z.dim()
        )));
    }
    let residual = w.predict_rows(z.inputs()) - z.outputs();
    Ok(residual.norm_squared() / z.n() as f64)
}
