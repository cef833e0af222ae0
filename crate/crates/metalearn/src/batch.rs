//! Batch learning of the representation: projected gradient descent on the
//! multitask empirical risk over the PSD trace ball, plus the independent
//! task learning (ITL) and multitask (MTL) baselines.

use rayon::prelude::*;

use nalgebra::DMatrix;

use crate::envs::TaskSplit;
use crate::error::{Error, Result};
use crate::eval::LambdaGrid;
use crate::projection::project;
use crate::ridge::{empirical_risk, meta_loss, ridge_solve};
use crate::types::{LinearPredictor, Representation, TaskDataset};

/// The meta-loss gradient is 6-Lipschitz in Frobenius norm, so the constant
/// step `1/6` guarantees descent without a line search.
pub const GRADIENT_LIPSCHITZ: f64 = 6.0;

/// Stopping tolerance / iteration cap when the solver serves as the
/// best-in-hindsight comparator for regret measurements.
pub const COMPARATOR_TOL: f64 = 1e-8;
pub const COMPARATOR_MAX_ITER: usize = 5000;

/// Stopping tolerance / iteration cap for experiment runs.
pub const EXPERIMENT_TOL: f64 = 1e-5;
pub const EXPERIMENT_MAX_ITER: usize = 500;

/// Result of a projected gradient descent run.
#[derive(Debug, Clone)]
pub struct BatchSolution {
    pub representation: Representation,
    /// Multitask empirical risk at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the gradient-map norm
    /// dropped below tolerance; the best iterate found is still returned.
    pub converged: bool,
    pub gradient_map_norm: f64,
}

/// Multitask empirical risk `(1/T) sum_t L_{Z_t}(D)` and its gradient,
/// evaluated concurrently per task and reduced in task order.
fn objective_and_gradient(
    datasets: &[TaskDataset],
    repr: &Representation,
) -> Result<(f64, DMatrix<f64>)> {
    let per_task: Vec<(f64, DMatrix<f64>)> = datasets
        .par_iter()
        .map(|z| {
            let eval = meta_loss(repr, z)?;
            Ok((eval.value(), eval.gradient()))
        })
        .collect::<Result<_>>()?;

    let t = datasets.len() as f64;
    let mut loss_sum = 0.0;
    let mut grad_sum = DMatrix::zeros(repr.dim(), repr.dim());
    for (loss, grad) in per_task {
        loss_sum += loss;
        grad_sum += grad;
    }
    Ok((loss_sum / t, grad_sum / t))
}

/// Multitask empirical risk of `repr` on `datasets`.
pub fn multitask_risk(datasets: &[TaskDataset], repr: &Representation) -> Result<f64> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for z in datasets {
        sum += meta_loss(repr, z)?.value();
    }
    Ok(sum / datasets.len() as f64)
}

/// Minimizes the multitask empirical risk over the PSD trace ball by
/// projected gradient descent with constant step `1/6`, stopping when the
/// gradient-map norm `||D - proj(D - eta grad)||_F / eta` falls below `tol`.
///
/// `warm_start` initializes at a previous solution; cold starts use the
/// isotropic feasible point.
pub fn solve(
    datasets: &[TaskDataset],
    lambda: f64,
    warm_start: Option<&Representation>,
    tol: f64,
    max_iter: usize,
) -> Result<BatchSolution> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = datasets[0].dim();
    for z in datasets {
        if z.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "datasets mix dimensions {dim} and {}",
                z.dim()
            )));
        }
    }
    let mut current = match warm_start {
        Some(w) => {
            if w.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "warm start is {}-dimensional, datasets are {dim}-dimensional",
                    w.dim()
                )));
            }
            // Re-projecting adapts a warm start carried over from a
            // different trace budget.
            if w.lambda() != lambda {
                project(w.matrix(), lambda)?
            } else {
                w.clone()
            }
        }
        None => Representation::isotropic(dim, lambda)?,
    };

    let eta = 1.0 / GRADIENT_LIPSCHITZ;
    let mut best: Option<(f64, Representation)> = None;
    let mut last_gmap = f64::INFINITY;

    for iteration in 0..max_iter {
        let (objective, gradient) = objective_and_gradient(datasets, &current)?;
        if best.as_ref().is_none_or(|(b, _)| objective < *b) {
            best = Some((objective, current.clone()));
        }

        let stepped = current.matrix() - eta * &gradient;
        let next = project(&stepped, lambda)?;
        last_gmap = (current.matrix() - next.matrix()).norm() / eta;
        if last_gmap <= tol {
            return Ok(BatchSolution {
                representation: current,
                objective,
                iterations: iteration,
                converged: true,
                gradient_map_norm: last_gmap,
            });
        }
        current = next;
    }

    let objective = multitask_risk(datasets, &current)?;
    let (best_objective, best_repr) = match best {
        Some((b, r)) if b < objective => (b, r),
        _ => (objective, current),
    };
    Ok(BatchSolution {
        representation: best_repr,
        objective: best_objective,
        iterations: max_iter,
        converged: false,
        gradient_map_norm: last_gmap,
    })
}

/// Independent task learning: standard ridge regression with penalty
/// `lambda_itl ||w||^2`, expressed through the same machinery with
/// `D = I / lambda_itl`.
pub fn itl_fit(z: &TaskDataset, lambda_itl: f64) -> Result<LinearPredictor> {
    if !(lambda_itl.is_finite() && lambda_itl > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_itl must be positive and finite, got {lambda_itl}"
        )));
    }
    // I / lambda_itl saturates the trace budget of lambda_itl / d exactly.
    let repr = Representation::isotropic(z.dim(), lambda_itl / z.dim() as f64)?;
    ridge_solve(&repr, z)
}

/// Multitask baseline fitted directly on the evaluation tasks.
#[derive(Debug, Clone)]
pub struct MtlFit {
    pub lambda: f64,
    pub representation: Representation,
    pub predictors: Vec<LinearPredictor>,
    pub test_mse: f64,
}

/// Learns a representation on the evaluation tasks' train splits for every
/// grid value, scores on their test splits, and keeps the best-performing
/// lambda. Selecting on test performance makes this an oracle lower bound,
/// not a learning-to-learn method.
pub fn mtl_fit(tasks: &[TaskSplit], grid: &LambdaGrid) -> Result<MtlFit> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let train: Vec<TaskDataset> = tasks.iter().map(|s| s.train.clone()).collect();

    let fits: Vec<MtlFit> = grid
        .values()
        .par_iter()
        .map(|&lambda| {
            let solution = solve(&train, lambda, None, EXPERIMENT_TOL, EXPERIMENT_MAX_ITER)?;
            let mut predictors = Vec::with_capacity(tasks.len());
            let mut mse_sum = 0.0;
            for split in tasks {
                let w = ridge_solve(&solution.representation, &split.train)?;
                mse_sum += empirical_risk(&w, &split.test)?;
                predictors.push(w);
            }
            Ok(MtlFit {
                lambda,
                representation: solution.representation,
                predictors,
                test_mse: mse_sum / tasks.len() as f64,
            })
        })
        .collect::<Result<_>>()?;

    // Strict improvement keeps the smallest lambda on ties.
    let best = fits
        .into_iter()
        .min_by(|a, b| {
            a.test_mse
                .partial_cmp(&b.test_mse)
                .expect("finite test errors")
        })
        .expect("nonempty grid");
    Ok(best)
}
