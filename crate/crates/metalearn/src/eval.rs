//! Transfer-risk estimation, metrics, the parallel lambda-grid selection
//! harness, and diagnostic bound reporting.

use rayon::prelude::*;

use crate::envs::TaskSplit;
use crate::error::{Error, Result};
use crate::online::OnlineLearner;
use crate::ridge::{empirical_risk, ridge_solve};
use crate::types::{Representation, TaskDataset};

/// Ordered grid of candidate regularization parameters.
#[derive(Debug, Clone)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        for pair in values.windows(2) {
            if pair[0].partial_cmp(&pair[1]) != Some(std::cmp::Ordering::Less) {
                return Err(Error::InvalidParameter(
                    "grid values must be strictly increasing".into(),
                ));
            }
        }
        if !(values[0].is_finite() && values[0] > 0.0) || !values[values.len() - 1].is_finite() {
            return Err(Error::InvalidParameter(
                "grid values must be positive and finite".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `count` logarithmically spaced values with exact inclusive endpoints.
    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && min > 0.0 && max.is_finite() && max > min) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < min < max, got [{min}, {max}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidParameter("need at least two grid values".into()));
        }
        let (log_min, log_max) = (min.log10(), max.log10());
        let mut values = Vec::with_capacity(count);
        values.push(min);
        for i in 1..count - 1 {
            let f = i as f64 / (count - 1) as f64;
            values.push(10f64.powf(log_min + f * (log_max - log_min)));
        }
        values.push(max);
        Self::new(values)
    }

    /// The 30-point grid over `[1e-6, 1e3]` used for model selection.
    pub fn default_grid() -> Self {
        Self::log_spaced(1e-6, 1e3, 30).expect("default grid is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean over tasks of the held-out risk of ridge regression fitted with
/// representation `repr` on each task's training split.
pub fn transfer_risk_estimate(repr: &Representation, tasks: &[TaskSplit]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for split in tasks {
        let w = ridge_solve(repr, &split.train)?;
        sum += empirical_risk(&w, &split.test)?;
    }
    Ok(sum / tasks.len() as f64)
}

/// Percentage of held-out output variance explained, averaged per task:
/// `100 (1 - MSE / Var(y_test))`. Tasks with zero output variance are
/// skipped with a warning; a worse-than-mean fit is legitimately negative.
pub fn explained_variance_pct(repr: &Representation, tasks: &[TaskSplit]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    let mut scored = 0usize;
    for split in tasks {
        let y = split.test.outputs();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
        if var <= 0.0 {
            log::warn!("skipping task with zero output variance in explained-variance score");
            continue;
        }
        let w = ridge_solve(repr, &split.train)?;
        let mse = empirical_risk(&w, &split.test)?;
        sum += 100.0 * (1.0 - mse / var);
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::AllTasksDegenerate);
    }
    Ok(sum / scored as f64)
}

/// Largest eigenvalue of the pooled second-moment matrix of all inputs.
/// Diagnostic for how favorable the environment is to representation
/// learning (uniform-sphere marginals give `1/d`).
pub fn covariance_norm_estimate(tasks: &[TaskDataset]) -> Result<f64> {
    let dim = tasks.first().ok_or(Error::EmptyInput)?.dim();
    let mut second_moment = nalgebra::DMatrix::zeros(dim, dim);
    let mut total = 0usize;
    for z in tasks {
        if z.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "tasks mix dimensions {dim} and {}",
                z.dim()
            )));
        }
        second_moment += z.inputs().transpose() * z.inputs();
        total += z.n();
    }
    second_moment /= total as f64;
    let eigs = second_moment.symmetric_eigenvalues();
    Ok(eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// High-probability upper bound on the excess transfer risk of the averaged
/// online iterate, reported as a diagnostic next to measured risks.
pub fn excess_risk_bound(
    covariance_norm: f64,
    lambda: f64,
    samples: usize,
    tasks: usize,
    delta: f64,
) -> f64 {
    let n = samples as f64;
    let t = tasks as f64;
    let generalization =
        4.0 * (2.0 * std::f64::consts::PI).sqrt() * covariance_norm.sqrt() * (1.0 + lambda.sqrt())
            / (lambda * n.sqrt());
    let optimization = 4.0 * 2.0_f64.sqrt() / (lambda * t.sqrt());
    let confidence = (8.0 * (2.0 / delta).ln() / t).sqrt();
    generalization + optimization + confidence
}

/// Per-step outcome of the parallel selection harness.
#[derive(Debug, Clone)]
pub struct SelectionStep {
    /// Tasks observed when this score was taken.
    pub tasks_seen: usize,
    pub best_lambda: f64,
    pub best_validation_mse: f64,
    /// Validation transfer risk per grid value, in grid order.
    pub per_lambda_mse: Vec<f64>,
}

/// Final result of [`select_online`].
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub best_lambda: f64,
    pub representation: Representation,
    pub trajectory: Vec<SelectionStep>,
}

/// One online learner per grid value, updated in lockstep as tasks arrive.
/// Learners never exchange state, so updates and scoring run concurrently.
pub struct ParallelSelection {
    grid: LambdaGrid,
    learners: Vec<OnlineLearner>,
}

impl ParallelSelection {
    pub fn new(dim: usize, grid: &LambdaGrid) -> Result<Self> {
        let learners = grid
            .values()
            .iter()
            .map(|&lambda| OnlineLearner::new(dim, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            learners,
        })
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn tasks_seen(&self) -> usize {
        self.learners.first().map_or(0, |l| l.tasks_seen())
    }

    /// Feeds one incoming task to every learner.
    pub fn observe(&mut self, z: &TaskDataset) -> Result<()> {
        self.learners
            .par_iter_mut()
            .map(|learner| learner.step(z).map(|_| ()))
            .collect::<Vec<Result<()>>>()
            .into_iter()
            .collect()
    }

    /// Averaged output of the learner at grid position `index`.
    pub fn representation(&self, index: usize) -> Representation {
        self.learners[index].averaged_output()
    }

    /// Scores every candidate representation on the validation tasks and
    /// returns the per-lambda risks with the argmin (ties break toward the
    /// smaller lambda).
    pub fn score(&self, validation: &[TaskSplit]) -> Result<SelectionStep> {
        let per_lambda_mse: Vec<f64> = self
            .learners
            .par_iter()
            .map(|learner| transfer_risk_estimate(&learner.averaged_output(), validation))
            .collect::<Result<_>>()?;
        let mut best = 0usize;
        for (i, &mse) in per_lambda_mse.iter().enumerate() {
            if mse < per_lambda_mse[best] {
                best = i;
            }
        }
        Ok(SelectionStep {
            tasks_seen: self.tasks_seen(),
            best_lambda: self.grid.values()[best],
            best_validation_mse: per_lambda_mse[best],
            per_lambda_mse,
        })
    }

    /// Grid index of the current validation argmin.
    pub fn best_index(&self, validation: &[TaskSplit]) -> Result<usize> {
        let step = self.score(validation)?;
        Ok(self
            .grid
            .values()
            .iter()
            .position(|&l| l == step.best_lambda)
            .expect("best lambda comes from the grid"))
    }
}

/// Runs the full selection harness: consumes `tasks` datasets, feeds each to
/// all per-lambda learners, scores the validation set after every
/// `score_stride`-th task (and always after the last), and returns the final
/// winner with the score trajectory.
pub fn select_online(
    stream: impl IntoIterator<Item = TaskDataset>,
    validation: &[TaskSplit],
    grid: &LambdaGrid,
    dim: usize,
    tasks: usize,
    score_stride: usize,
) -> Result<SelectionOutcome> {
    if validation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let stride = score_stride.max(1);
    let mut harness = ParallelSelection::new(dim, grid)?;
    let mut stream = stream.into_iter();
    let mut trajectory = Vec::new();
    for got in 0..tasks {
        let z = stream
            .next()
            .ok_or(Error::StreamExhausted { got, want: tasks })?;
        harness.observe(&z)?;
        if (got + 1) % stride == 0 || got + 1 == tasks {
            trajectory.push(harness.score(validation)?);
        }
    }
    let last = trajectory.last().ok_or(Error::EmptyInput)?;
    let best_index = grid
        .values()
        .iter()
        .position(|&l| l == last.best_lambda)
        .expect("best lambda comes from the grid");
    Ok(SelectionOutcome {
        best_lambda: last.best_lambda,
        representation: harness.representation(best_index),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvironmentSpec;
    use crate::online::run_online;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn default_grid_endpoints_and_count() {
        let grid = LambdaGrid::default_grid();
        assert_eq!(grid.len(), 30);
        assert_eq!(grid.values()[0], 1e-6);
        assert_eq!(grid.values()[29], 1e3);
    }

    #[test]
    fn grid_rejects_disorder() {
        assert!(LambdaGrid::new(vec![0.1, 0.1]).is_err());
        assert!(LambdaGrid::new(vec![0.2, 0.1]).is_err());
        assert!(LambdaGrid::new(vec![-0.1, 0.2]).is_err());
        assert!(LambdaGrid::new(vec![]).is_err());
    }

    #[test]
    fn zero_outputs_give_zero_transfer_risk() {
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let z = TaskDataset::new(x, DVector::zeros(2), true).unwrap();
        let split = TaskSplit::new(z.clone(), z).unwrap();
        let repr = Representation::isotropic(2, 1.0).unwrap();
        assert_eq!(transfer_risk_estimate(&repr, &[split]).unwrap(), 0.0);
    }

    #[test]
    fn transfer_risk_scalar_pipeline() {
        // Train: X=[1], y=[1], D=[1] gives w = 1/2. Test: X=[1], y=[0.3]
        // gives risk (0.5 - 0.3)^2 = 0.04.
        let train = TaskDataset::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            true,
        )
        .unwrap();
        let test = TaskDataset::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![0.3]),
            true,
        )
        .unwrap();
        let split = TaskSplit::new(train, test).unwrap();
        let repr =
            Representation::new(DMatrix::from_row_slice(1, 1, &[1.0]), 1.0).unwrap();
        let risk = transfer_risk_estimate(&repr, &[split]).unwrap();
        assert!((risk - 0.04).abs() < 1e-15);
    }

    #[test]
    fn transfer_risk_is_permutation_invariant() {
        let env = EnvironmentSpec::synthetic(6, 5, 21).unwrap();
        let mut tasks: Vec<TaskSplit> = (0..6).map(|i| env.test_task(i).split).collect();
        let repr = Representation::isotropic(6, 1.0).unwrap();
        let forward = transfer_risk_estimate(&repr, &tasks).unwrap();
        tasks.reverse();
        let backward = transfer_risk_estimate(&repr, &tasks).unwrap();
        assert!((forward - backward).abs() < 1e-12);
    }

    #[test]
    fn explained_variance_of_perfect_fit_is_100() {
        // Shared direction, no noise, representation aligned with it.
        let direction = DVector::from_vec(vec![1.0, 0.0]);
        let make = |seed: u64| {
            let x = DMatrix::from_fn(4, 2, |i, j| {
                0.3 * ((seed as f64 + 1.0) * (i as f64 + 1.3) * (j as f64 + 0.7)).sin()
            });
            let y = &x * &direction;
            TaskDataset::new(x, y, false).unwrap()
        };
        let split = TaskSplit::new(make(0), make(1)).unwrap();
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        // Large budget so the penalty barely shrinks the fit.
        let repr = Representation::new(m * 1e6, 1e-6 / 2.0).unwrap();
        let ev = explained_variance_pct(&repr, &[split]).unwrap();
        assert!(ev > 99.9, "ev = {ev}");
    }

    #[test]
    fn explained_variance_zero_when_mse_equals_variance() {
        // The zero representation predicts 0; with zero-mean outputs the MSE
        // equals the output variance exactly.
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let y = DVector::from_vec(vec![-0.4, 0.4]);
        let z = TaskDataset::new(x, y, false).unwrap();
        let split = TaskSplit::new(z.clone(), z).unwrap();
        let repr = Representation::zero(2, 1.0).unwrap();
        let ev = explained_variance_pct(&repr, &[split]).unwrap();
        assert!(ev.abs() < 1e-10);
    }

    #[test]
    fn explained_variance_can_be_negative() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let train_y = DVector::from_vec(vec![1.0, 0.9]);
        let test_y = DVector::from_vec(vec![-1.0, -0.9]);
        let train = TaskDataset::new(x.clone(), train_y, false).unwrap();
        let test = TaskDataset::new(x, test_y, false).unwrap();
        let split = TaskSplit::new(train, test).unwrap();
        let repr =
            Representation::new(DMatrix::from_row_slice(1, 1, &[10.0]), 0.1).unwrap();
        let ev = explained_variance_pct(&repr, &[split]).unwrap();
        assert!(ev < 0.0, "ev = {ev}");
    }

    #[test]
    fn degenerate_tasks_are_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let y = DVector::from_vec(vec![0.7, 0.7]);
        let z = TaskDataset::new(x, y, true).unwrap();
        let split = TaskSplit::new(z.clone(), z).unwrap();
        let repr = Representation::zero(1, 1.0).unwrap();
        assert!(matches!(
            explained_variance_pct(&repr, &[split]),
            Err(Error::AllTasksDegenerate)
        ));
    }

    #[test]
    fn covariance_norm_of_axis_points_is_one() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let z = TaskDataset::new(x, DVector::zeros(3), true).unwrap();
        let norm = covariance_norm_estimate(&[z]).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_norm_single_unit_sample_is_one() {
        let x = DMatrix::from_row_slice(1, 3, &[0.6, 0.8, 0.0]);
        let z = TaskDataset::new(x, DVector::zeros(1), true).unwrap();
        let norm = covariance_norm_estimate(&[z]).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_decreases_in_tasks_and_samples() {
        let mut previous = f64::INFINITY;
        for t in [10, 100, 1000, 10_000] {
            let b = excess_risk_bound(0.02, 0.1, 25, t, 0.1);
            assert!(b < previous);
            previous = b;
        }
        let mut previous = f64::INFINITY;
        for n in [5, 50, 500, 5000] {
            let b = excess_risk_bound(0.02, 0.1, n, 100, 0.1);
            assert!(b < previous);
            previous = b;
        }
    }

    #[test]
    fn singleton_grid_matches_run_online_bit_for_bit() {
        let env = EnvironmentSpec::synthetic(6, 5, 33).unwrap();
        let stream: Vec<TaskDataset> =
            (0..7).map(|i| env.train_task(i).split.train).collect();
        let validation: Vec<TaskSplit> = (0..3).map(|i| env.validation_task(i).split).collect();

        let grid = LambdaGrid::new(vec![0.5]).unwrap();
        let outcome =
            select_online(stream.clone(), &validation, &grid, 6, 7, 1).unwrap();
        let (direct, _) = run_online(stream, 6, 0.5, 7, false).unwrap();
        assert_eq!(outcome.representation.matrix(), direct.matrix());
        assert_eq!(outcome.best_lambda, 0.5);
    }

    #[test]
    fn learners_do_not_interact() {
        let env = EnvironmentSpec::synthetic(4, 4, 55).unwrap();
        let stream: Vec<TaskDataset> =
            (0..5).map(|i| env.train_task(i).split.train).collect();

        let grid = LambdaGrid::new(vec![0.1, 1.0]).unwrap();
        let mut harness = ParallelSelection::new(4, &grid).unwrap();
        for z in &stream {
            harness.observe(z).unwrap();
        }

        for (i, &lambda) in grid.values().iter().enumerate() {
            let (alone, _) = run_online(stream.clone(), 4, lambda, 5, false).unwrap();
            assert_eq!(harness.representation(i).matrix(), alone.matrix());
        }
    }

    #[test]
    fn final_selection_is_argmin_on_validation() {
        let env = EnvironmentSpec::synthetic(6, 8, 77).unwrap();
        let stream: Vec<TaskDataset> =
            (0..10).map(|i| env.train_task(i).split.train).collect();
        let validation: Vec<TaskSplit> = (0..4).map(|i| env.validation_task(i).split).collect();
        let grid = LambdaGrid::log_spaced(1e-3, 1e2, 6).unwrap();

        let outcome = select_online(stream, &validation, &grid, 6, 10, 1).unwrap();
        let last = outcome.trajectory.last().unwrap();
        let best = last
            .per_lambda_mse
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(last.best_validation_mse, best);
        assert!(last.per_lambda_mse.iter().all(|&m| m >= best));
    }
}
