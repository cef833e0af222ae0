//! Wall-time comparison of the two learners on the incremental protocol:
//! per arriving task, online takes one gradient step while batch re-solves
//! the multitask problem on all tasks so far with warm restart.
//!
//! Only learner updates and batch solves are timed; data generation,
//! validation scoring, and evaluation stay outside the measured intervals.
//! Cells run sequentially and per-lambda loops stay single-threaded so the
//! measurements do not contend with each other.

use std::time::{Duration, Instant};

use anyhow::Result;

use metalearn::batch::{self, EXPERIMENT_MAX_ITER, EXPERIMENT_TOL};
use metalearn::envs::{EnvironmentSpec, TaskSplit};
use metalearn::{
    explained_variance_pct, transfer_risk_estimate, ExperimentRecord, LambdaGrid, Method,
    OnlineLearner, Representation, TaskDataset,
};

use crate::synth::{validation_count, TEST_TASKS};

/// Task-count x sample-count cells of the timing table, in run order.
pub const PAPER_CELLS: [(usize, usize); 6] =
    [(50, 20), (50, 50), (100, 20), (100, 50), (150, 20), (150, 50)];

#[derive(Debug, Clone)]
pub struct TimingCell {
    pub tasks: usize,
    pub samples: usize,
    pub online: ExperimentRecord,
    pub batch: ExperimentRecord,
}

/// Times one cell. Returns the online and batch records with measured wall
/// milliseconds and untimed final-representation test metrics.
pub fn run_cell(
    dim: usize,
    tasks: usize,
    samples: usize,
    seed: u64,
    grid: &LambdaGrid,
) -> Result<TimingCell> {
    let env = EnvironmentSpec::synthetic(dim, samples, seed)?;
    let stream: Vec<TaskDataset> = (0..tasks as u64)
        .map(|i| env.train_task(i).split.train)
        .collect();
    let validation: Vec<TaskSplit> = (0..validation_count(tasks) as u64)
        .map(|i| env.validation_task(i).split)
        .collect();
    let test: Vec<TaskSplit> = (0..TEST_TASKS as u64)
        .map(|i| env.test_task(i).split)
        .collect();

    // Online: one step per task per lambda.
    let mut online_elapsed = Duration::ZERO;
    let mut learners: Vec<OnlineLearner> = grid
        .values()
        .iter()
        .map(|&lambda| OnlineLearner::new(dim, lambda))
        .collect::<metalearn::Result<_>>()?;
    for z in &stream {
        for learner in &mut learners {
            let start = Instant::now();
            learner.step(z)?;
            online_elapsed += start.elapsed();
        }
    }

    // Batch: warm-restarted re-solve on every prefix per lambda.
    let mut batch_elapsed = Duration::ZERO;
    let mut warm: Vec<Option<Representation>> = vec![None; grid.len()];
    for t in 1..=stream.len() {
        for (i, &lambda) in grid.values().iter().enumerate() {
            let start = Instant::now();
            let sol = batch::solve(
                &stream[..t],
                lambda,
                warm[i].as_ref(),
                EXPERIMENT_TOL,
                EXPERIMENT_MAX_ITER,
            )?;
            batch_elapsed += start.elapsed();
            warm[i] = Some(sol.representation);
        }
    }

    // Untimed evaluation of the validation-selected representation.
    let pick = |candidates: Vec<Representation>| -> Result<(f64, Representation)> {
        let mut best: Option<(f64, f64, Representation)> = None;
        for (i, repr) in candidates.into_iter().enumerate() {
            let risk = transfer_risk_estimate(&repr, &validation)?;
            if best.as_ref().is_none_or(|(b, _, _)| risk < *b) {
                best = Some((risk, grid.values()[i], repr));
            }
        }
        let (_, lambda, repr) = best.expect("nonempty grid");
        Ok((lambda, repr))
    };

    let (online_lambda, online_repr) =
        pick(learners.iter().map(|l| l.averaged_output()).collect())?;
    let (batch_lambda, batch_repr) = pick(
        warm.into_iter()
            .map(|w| w.expect("solved at every prefix"))
            .collect(),
    )?;

    let make = |method: Method,
                lambda: f64,
                repr: &Representation,
                elapsed: Duration|
     -> Result<ExperimentRecord> {
        Ok(ExperimentRecord {
            method,
            lambda,
            tasks,
            samples,
            dim,
            seed,
            test_mse: transfer_risk_estimate(repr, &test)?,
            ev_pct: explained_variance_pct(repr, &test)?,
            wall_ms: elapsed.as_secs_f64() * 1e3,
        })
    };

    Ok(TimingCell {
        tasks,
        samples,
        online: make(Method::OnlineLtl, online_lambda, &online_repr, online_elapsed)?,
        batch: make(Method::BatchLtl, batch_lambda, &batch_repr, batch_elapsed)?,
    })
}

/// Runs the first `cells` paper cells sequentially.
pub fn run_timing(
    dim: usize,
    seed: u64,
    grid: &LambdaGrid,
    cells: usize,
) -> Result<Vec<TimingCell>> {
    anyhow::ensure!(
        (1..=PAPER_CELLS.len()).contains(&cells),
        "cells must be in 1..={}",
        PAPER_CELLS.len()
    );
    PAPER_CELLS[..cells]
        .iter()
        .map(|&(tasks, samples)| run_cell(dim, tasks, samples, seed, grid))
        .collect()
}
