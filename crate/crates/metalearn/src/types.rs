//! Core domain types shared by every other module.
//!
//! All types are immutable value objects after construction and validate
//! their invariants up front, so downstream numerical code can assume
//! well-formed inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical slack on the smallest eigenvalue when checking positive
/// semidefiniteness. Exact arithmetic would need none; finite precision does.
pub const PSD_TOL: f64 = 1e-10;

/// Numerical slack on the trace-budget check `tr(D) <= 1/lambda`.
pub const TRACE_TOL: f64 = 1e-10;

/// Slack applied to the unit-ball / unit-interval checks of
/// [`TaskDataset::new`], absorbing float dust from normalization.
pub const THEORY_TOL: f64 = 1e-12;

/// One task's training data: an `n x d` input matrix whose rows are the
/// sample points, and the corresponding `n` outputs.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    theory_compliant: bool,
}

impl TaskDataset {
    /// Validates raw data into a dataset.
    ///
    /// Compliance with the boundedness assumptions (every row inside the
    /// unit ball, every output in `[0, 1]`) is always measured and recorded;
    /// with `enforce_theory` set, a violating row is an error instead.
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        enforce_theory: bool,
    ) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need n >= 1 and d >= 1, got {}x{}",
                inputs.nrows(),
                inputs.ncols()
            )));
        }
        if inputs.nrows() != outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) || outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("dataset entries".into()));
        }

        let mut compliant = true;
        for (i, row) in inputs.row_iter().enumerate() {
            if row.norm() > 1.0 + THEORY_TOL {
                if enforce_theory {
                    return Err(Error::TheoryViolation(format!(
                        "row {i} has norm {} > 1",
                        row.norm()
                    )));
                }
                compliant = false;
                break;
            }
        }
        if compliant {
            for (i, &y) in outputs.iter().enumerate() {
                if !(-THEORY_TOL..=1.0 + THEORY_TOL).contains(&y) {
                    if enforce_theory {
                        return Err(Error::TheoryViolation(format!(
                            "output {i} = {y} outside [0, 1]"
                        )));
                    }
                    compliant = false;
                    break;
                }
            }
        } else if enforce_theory {
            unreachable!("violations error out above");
        }

        Ok(Self {
            inputs,
            outputs,
            theory_compliant: compliant,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Whether every row lies inside the unit ball and every output in [0, 1].
    pub fn theory_compliant(&self) -> bool {
        self.theory_compliant
    }
}

/// Rebuilds `m` as `(m + m^T) / 2` with bit-identical mirrored entries, so
/// the result is exactly symmetric under `==`.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        s[(i, i)] = m[(i, i)];
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

pub(crate) fn is_symmetric_exact(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if m[(i, j)] != m[(j, i)] {
                return false;
            }
        }
    }
    true
}

/// A symmetric positive semidefinite `d x d` matrix `D` with trace at most
/// `1/lambda`: the learned representation parameterizing the ridge penalty
/// `w^T D^+ w`.
#[derive(Debug, Clone)]
pub struct Representation {
    matrix: DMatrix<f64>,
    lambda: f64,
}

impl Representation {
    /// Validates symmetry (exact), positive semidefiniteness (smallest
    /// eigenvalue at least `-PSD_TOL`), and the trace budget
    /// (`tr(D) <= 1/lambda + TRACE_TOL`).
    pub fn new(matrix: DMatrix<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "representation must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("representation entries".into()));
        }
        if !is_symmetric_exact(&matrix) {
            return Err(Error::InvalidParameter(
                "representation matrix is not symmetric".into(),
            ));
        }
        let min_eig = matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidParameter(format!(
                "smallest eigenvalue {min_eig} < -{PSD_TOL}"
            )));
        }
        let trace = matrix.trace();
        if trace > 1.0 / lambda + TRACE_TOL {
            return Err(Error::InvalidParameter(format!(
                "trace {trace} exceeds budget {}",
                1.0 / lambda
            )));
        }
        Ok(Self { matrix, lambda })
    }

    /// Constructor for matrices feasible by construction (projection output,
    /// convex averages of feasible iterates). Skips the eigenvalue check.
    pub(crate) fn trusted(matrix: DMatrix<f64>, lambda: f64) -> Self {
        debug_assert!(is_symmetric_exact(&matrix));
        Self { matrix, lambda }
    }

    /// The isotropic feasible point `I / (lambda d)`, with trace `1/lambda`.
    pub fn isotropic(d: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let scale = 1.0 / (lambda * d as f64);
        Ok(Self::trusted(DMatrix::identity(d, d) * scale, lambda))
    }

    /// The zero representation (forces the zero predictor).
    pub fn zero(d: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(Self::trusted(DMatrix::zeros(d, d), lambda))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Trace budget `1/lambda`.
    pub fn budget(&self) -> f64 {
        1.0 / self.lambda
    }

    /// Norm of the component of `w` outside the span of eigenvectors with
    /// eigenvalue above `PSD_TOL`. Diagnostic: the closed-form ridge solution
    /// lands in the range of `D` automatically.
    pub fn range_residual(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} vs dimension {}",
                w.len(),
                self.dim()
            )));
        }
        let eig = crate::projection::symmetric_eigen(self.matrix.clone())?;
        let mut projected = DVector::zeros(w.len());
        for (k, &val) in eig.eigenvalues.iter().enumerate() {
            if val > PSD_TOL {
                let v = eig.eigenvectors.column(k);
                projected += v * v.dot(w);
            }
        }
        Ok((w - projected).norm())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// A linear predictor `x -> <w, x>`.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    weights: DVector<f64>,
}

impl LinearPredictor {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("predictor weights".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.weights.dot(x)
    }

    /// Predictions for every row of `inputs`.
    pub fn predict_rows(&self, inputs: &DMatrix<f64>) -> DVector<f64> {
        inputs * &self.weights
    }
}

/// The compared learning strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    OnlineLtl,
    BatchLtl,
    Itl,
    Mtl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::OnlineLtl => "online_ltl",
            Method::BatchLtl => "batch_ltl",
            Method::Itl => "itl",
            Method::Mtl => "mtl",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One result row: a method evaluated at a given task count / sample size.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub method: Method,
    pub lambda: f64,
    pub tasks: usize,
    pub samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub test_mse: f64,
    pub ev_pct: f64,
    pub wall_ms: f64,
}
