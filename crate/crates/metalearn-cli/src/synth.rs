//! Synthetic-environment experiment drivers: the incremental trajectory
//! comparison of the four methods, and the improvement-over-ITL grid.

use anyhow::{Context, Result};
use rayon::prelude::*;

use metalearn::batch::{self, EXPERIMENT_MAX_ITER, EXPERIMENT_TOL};
use metalearn::envs::{EnvironmentSpec, TaskSplit};
use metalearn::{
    covariance_norm_estimate, empirical_risk, excess_risk_bound, explained_variance_pct,
    itl_fit, mtl_fit, transfer_risk_estimate, ExperimentRecord, LambdaGrid, Method,
    ParallelSelection, Representation, TaskDataset,
};

/// Test tasks backing every synthetic evaluation.
pub const TEST_TASKS: usize = 100;
/// Confidence level at which the diagnostic risk bound is reported.
pub const BOUND_DELTA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub dim: usize,
    pub samples: usize,
    pub tasks: usize,
    pub seed: u64,
    pub grid: LambdaGrid,
}

/// Validation tasks are a quarter of the training tasks, at least one.
pub fn validation_count(tasks: usize) -> usize {
    (tasks / 4).max(1)
}

/// Cell coordinates swept by grid mode: fixed checkpoints up to the flag
/// value, plus the flag value itself.
pub fn grid_cells(max: usize) -> Vec<usize> {
    let mut cells: Vec<usize> = [10, 25, 50, 75, 100, 125, 150]
        .into_iter()
        .filter(|&v| v < max)
        .collect();
    cells.push(max);
    cells
}

fn mean_itl_risk(tasks: &[TaskSplit], lambda_itl: f64) -> Result<f64> {
    let mut sum = 0.0;
    for split in tasks {
        let w = itl_fit(&split.train, lambda_itl)?;
        sum += empirical_risk(&w, &split.test)?;
    }
    Ok(sum / tasks.len() as f64)
}

/// Grid-selected independent task learning: the penalty is chosen on the
/// validation tasks, performance reported on the test tasks.
fn fit_itl(
    grid: &LambdaGrid,
    validation: &[TaskSplit],
    test: &[TaskSplit],
    dim: usize,
) -> Result<(f64, f64, f64)> {
    let scored: Vec<f64> = grid
        .values()
        .par_iter()
        .map(|&l| mean_itl_risk(validation, l))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &risk) in scored.iter().enumerate() {
        if risk < scored[best] {
            best = i;
        }
    }
    let lambda_itl = grid.values()[best];
    let test_mse = mean_itl_risk(test, lambda_itl)?;
    let repr = Representation::isotropic(dim, lambda_itl / dim as f64)?;
    let ev = explained_variance_pct(&repr, test)?;
    Ok((lambda_itl, test_mse, ev))
}

/// Warm-restarted per-lambda batch solutions on a growing prefix of the
/// stream, scored on validation to pick the reported representation.
struct BatchTracker {
    warm: Vec<Option<Representation>>,
}

impl BatchTracker {
    fn new(grid: &LambdaGrid) -> Self {
        Self {
            warm: vec![None; grid.len()],
        }
    }

    /// Re-solves every grid value on `seen` (warm-started), then returns the
    /// validation-selected (lambda, test_mse, ev).
    fn solve_and_score(
        &mut self,
        grid: &LambdaGrid,
        seen: &[TaskDataset],
        validation: &[TaskSplit],
        test: &[TaskSplit],
    ) -> Result<(f64, f64, f64)> {
        let solutions: Vec<Representation> = grid
            .values()
            .par_iter()
            .zip(&self.warm)
            .map(|(&lambda, warm)| {
                let sol = batch::solve(
                    seen,
                    lambda,
                    warm.as_ref(),
                    EXPERIMENT_TOL,
                    EXPERIMENT_MAX_ITER,
                )?;
                Ok(sol.representation)
            })
            .collect::<metalearn::Result<_>>()?;

        let scored: Vec<f64> = solutions
            .par_iter()
            .map(|repr| transfer_risk_estimate(repr, validation))
            .collect::<metalearn::Result<_>>()?;
        let mut best = 0;
        for (i, &risk) in scored.iter().enumerate() {
            if risk < scored[best] {
                best = i;
            }
        }

        let lambda = grid.values()[best];
        let test_mse = transfer_risk_estimate(&solutions[best], test)?;
        let ev = explained_variance_pct(&solutions[best], test)?;
        self.warm = solutions.into_iter().map(Some).collect();
        Ok((lambda, test_mse, ev))
    }
}

/// Runs one incremental trial: all four methods evaluated on the shared test
/// tasks at every checkpoint task count. Batch re-solves (warm-restarted) at
/// checkpoints only; online updates at every task.
pub fn run_trajectory(cfg: &SynthConfig, checkpoints: &[usize]) -> Result<Vec<ExperimentRecord>> {
    anyhow::ensure!(!checkpoints.is_empty(), "no checkpoints requested");
    anyhow::ensure!(
        checkpoints.windows(2).all(|w| w[0] < w[1]),
        "checkpoints must be strictly increasing"
    );
    let last = *checkpoints.last().unwrap();
    anyhow::ensure!(
        last <= cfg.tasks,
        "checkpoint {last} exceeds task budget {}",
        cfg.tasks
    );

    let env = EnvironmentSpec::synthetic(cfg.dim, cfg.samples, cfg.seed)
        .context("building synthetic environment")?;
    let stream: Vec<TaskDataset> = (0..cfg.tasks as u64)
        .map(|i| env.train_task(i).split.train)
        .collect();
    let validation: Vec<TaskSplit> = (0..validation_count(cfg.tasks) as u64)
        .map(|i| env.validation_task(i).split)
        .collect();
    let test: Vec<TaskSplit> = (0..TEST_TASKS as u64)
        .map(|i| env.test_task(i).split)
        .collect();

    let record = |method: Method, lambda: f64, tasks: usize, mse: f64, ev: f64| {
        ExperimentRecord {
            method,
            lambda,
            tasks,
            samples: cfg.samples,
            dim: cfg.dim,
            seed: cfg.seed,
            test_mse: mse,
            ev_pct: ev,
            wall_ms: 0.0,
        }
    };

    // Constant baselines: neither uses the training stream.
    let (itl_lambda, itl_mse, itl_ev) = fit_itl(&cfg.grid, &validation, &test, cfg.dim)?;
    let mtl = mtl_fit(&test, &cfg.grid)?;
    let mtl_ev = explained_variance_pct(&mtl.representation, &test)?;

    let mut online = ParallelSelection::new(cfg.dim, &cfg.grid)?;
    let mut batch_tracker = BatchTracker::new(&cfg.grid);
    let mut records = Vec::new();
    let mut next_checkpoint = 0usize;

    for (index, z) in stream.iter().enumerate() {
        online.observe(z)?;
        let t = index + 1;
        if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == t {
            next_checkpoint += 1;

            let score = online.score(&validation)?;
            let best = online.best_index(&validation)?;
            let online_repr = online.representation(best);
            records.push(record(
                Method::OnlineLtl,
                score.best_lambda,
                t,
                transfer_risk_estimate(&online_repr, &test)?,
                explained_variance_pct(&online_repr, &test)?,
            ));

            let (batch_lambda, batch_mse, batch_ev) =
                batch_tracker.solve_and_score(&cfg.grid, &stream[..t], &validation, &test)?;
            records.push(record(Method::BatchLtl, batch_lambda, t, batch_mse, batch_ev));

            records.push(record(Method::Itl, itl_lambda, t, itl_mse, itl_ev));
            records.push(record(Method::Mtl, mtl.lambda, t, mtl.test_mse, mtl_ev));
        }
    }

    // Diagnostic: the theoretical excess-risk bound at the final checkpoint,
    // alongside the measured covariance norm.
    if let Some(&final_t) = checkpoints.last() {
        let cov = covariance_norm_estimate(&stream)?;
        let online_lambda = records
            .iter()
            .rev()
            .find(|r| r.method == Method::OnlineLtl)
            .map(|r| r.lambda)
            .unwrap_or(1.0);
        log::info!(
            "covariance norm estimate {cov:.4e}; excess-risk bound at T={final_t}, \
             n={}, lambda={online_lambda:.3e}, delta={BOUND_DELTA}: {:.4e}",
            cfg.samples,
            excess_risk_bound(cov, online_lambda, cfg.samples, final_t, BOUND_DELTA),
        );
    }

    Ok(records)
}

/// One grid-mode cell: per-replicate improvement of online LTL over ITL.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub tasks: usize,
    pub samples: usize,
    /// Per replicate: (seed, online record, itl record, improvement %).
    pub replicates: Vec<(u64, ExperimentRecord, ExperimentRecord, f64)>,
    pub improvement_mean_pct: f64,
    pub improvement_std_pct: f64,
}

/// Sweeps task-count x sample-count cells, measuring the relative test-MSE
/// improvement of validation-selected online LTL over validation-selected
/// ITL, replicated across seeds.
pub fn run_grid(cfg: &SynthConfig, replicates: usize) -> Result<Vec<GridCell>> {
    anyhow::ensure!(replicates >= 1, "need at least one replicate");
    let mut cells = Vec::new();
    for &tasks in &grid_cells(cfg.tasks) {
        for &samples in &grid_cells(cfg.samples) {
            let mut rows = Vec::new();
            for r in 0..replicates as u64 {
                let seed = cfg.seed + r;
                let env = EnvironmentSpec::synthetic(cfg.dim, samples, seed)?;
                let validation: Vec<TaskSplit> = (0..validation_count(tasks) as u64)
                    .map(|i| env.validation_task(i).split)
                    .collect();
                let test: Vec<TaskSplit> = (0..TEST_TASKS as u64)
                    .map(|i| env.test_task(i).split)
                    .collect();

                let mut online = ParallelSelection::new(cfg.dim, &cfg.grid)?;
                for i in 0..tasks as u64 {
                    online.observe(&env.train_task(i).split.train)?;
                }
                let best = online.best_index(&validation)?;
                let online_repr = online.representation(best);
                let online_mse = transfer_risk_estimate(&online_repr, &test)?;
                let online_rec = ExperimentRecord {
                    method: Method::OnlineLtl,
                    lambda: online.grid().values()[best],
                    tasks,
                    samples,
                    dim: cfg.dim,
                    seed,
                    test_mse: online_mse,
                    ev_pct: explained_variance_pct(&online_repr, &test)?,
                    wall_ms: 0.0,
                };

                let (itl_lambda, itl_mse, itl_ev) =
                    fit_itl(&cfg.grid, &validation, &test, cfg.dim)?;
                let itl_rec = ExperimentRecord {
                    method: Method::Itl,
                    lambda: itl_lambda,
                    tasks,
                    samples,
                    dim: cfg.dim,
                    seed,
                    test_mse: itl_mse,
                    ev_pct: itl_ev,
                    wall_ms: 0.0,
                };

                let improvement = if itl_mse > 0.0 {
                    100.0 * (itl_mse - online_mse) / itl_mse
                } else {
                    0.0
                };
                rows.push((seed, online_rec, itl_rec, improvement));
            }

            let mean = rows.iter().map(|r| r.3).sum::<f64>() / rows.len() as f64;
            let var = rows
                .iter()
                .map(|r| (r.3 - mean) * (r.3 - mean))
                .sum::<f64>()
                / rows.len() as f64;
            cells.push(GridCell {
                tasks,
                samples,
                replicates: rows,
                improvement_mean_pct: mean,
                improvement_std_pct: var.sqrt(),
            });
        }
    }
    Ok(cells)
}
