//! Schools benchmark driver: incremental trajectories of all four methods,
//! reported as explained variance (and MSE) on the held-out tasks.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use metalearn::batch::{self, EXPERIMENT_MAX_ITER, EXPERIMENT_TOL};
use metalearn::envs::schools::SCHOOLS_DIM;
use metalearn::{
    covariance_norm_estimate, empirical_risk, excess_risk_bound, explained_variance_pct,
    itl_fit, load_schools, mtl_fit, transfer_risk_estimate, ExperimentRecord, LambdaGrid,
    Method, ParallelSelection, Representation,
};

use crate::synth::BOUND_DELTA;

pub fn run_schools(
    path: &Path,
    split_seed: u64,
    grid: &LambdaGrid,
) -> Result<Vec<ExperimentRecord>> {
    let data = load_schools(path, split_seed).context("loading schools data")?;
    let train = data.train;
    let validation = data.validation;
    let test = data.test;

    let record = |method: Method, lambda: f64, t: usize, samples: usize, mse: f64, ev: f64| {
        ExperimentRecord {
            method,
            lambda,
            tasks: t,
            samples,
            dim: SCHOOLS_DIM,
            seed: split_seed,
            test_mse: mse,
            ev_pct: ev,
            wall_ms: 0.0,
        }
    };

    // Baselines independent of the training stream.
    let itl_scored: Vec<f64> = grid
        .values()
        .par_iter()
        .map(|&l| {
            let mut sum = 0.0;
            for split in &validation {
                sum += empirical_risk(&itl_fit(&split.train, l)?, &split.test)?;
            }
            Ok(sum / validation.len() as f64)
        })
        .collect::<metalearn::Result<_>>()?;
    let mut best = 0;
    for (i, &risk) in itl_scored.iter().enumerate() {
        if risk < itl_scored[best] {
            best = i;
        }
    }
    let itl_lambda = grid.values()[best];
    let mut itl_mse = 0.0;
    for split in &test {
        itl_mse += empirical_risk(&itl_fit(&split.train, itl_lambda)?, &split.test)?;
    }
    itl_mse /= test.len() as f64;
    let itl_repr = Representation::isotropic(SCHOOLS_DIM, itl_lambda / SCHOOLS_DIM as f64)?;
    let itl_ev = explained_variance_pct(&itl_repr, &test)?;

    let mtl = mtl_fit(&test, grid)?;
    let mtl_ev = explained_variance_pct(&mtl.representation, &test)?;

    let mut online = ParallelSelection::new(SCHOOLS_DIM, grid)?;
    let mut warm: Vec<Option<Representation>> = vec![None; grid.len()];
    let mut records = Vec::new();

    for (index, z) in train.iter().enumerate() {
        let t = index + 1;
        let samples = z.n();
        online.observe(z)?;

        let score = online.score(&validation)?;
        let best = online.best_index(&validation)?;
        let online_repr = online.representation(best);
        records.push(record(
            Method::OnlineLtl,
            score.best_lambda,
            t,
            samples,
            transfer_risk_estimate(&online_repr, &test)?,
            explained_variance_pct(&online_repr, &test)?,
        ));

        let solutions: Vec<Representation> = grid
            .values()
            .par_iter()
            .zip(&warm)
            .map(|(&lambda, start)| {
                let sol = batch::solve(
                    &train[..t],
                    lambda,
                    start.as_ref(),
                    EXPERIMENT_TOL,
                    EXPERIMENT_MAX_ITER,
                )?;
                Ok(sol.representation)
            })
            .collect::<metalearn::Result<_>>()?;
        let batch_scored: Vec<f64> = solutions
            .par_iter()
            .map(|repr| transfer_risk_estimate(repr, &validation))
            .collect::<metalearn::Result<_>>()?;
        let mut batch_best = 0;
        for (i, &risk) in batch_scored.iter().enumerate() {
            if risk < batch_scored[batch_best] {
                batch_best = i;
            }
        }
        records.push(record(
            Method::BatchLtl,
            grid.values()[batch_best],
            t,
            samples,
            transfer_risk_estimate(&solutions[batch_best], &test)?,
            explained_variance_pct(&solutions[batch_best], &test)?,
        ));
        warm = solutions.into_iter().map(Some).collect();

        records.push(record(Method::Itl, itl_lambda, t, samples, itl_mse, itl_ev));
        records.push(record(Method::Mtl, mtl.lambda, t, samples, mtl.test_mse, mtl_ev));
    }

    let cov = covariance_norm_estimate(&train)?;
    let mean_n = train.iter().map(|z| z.n()).sum::<usize>() / train.len().max(1);
    let online_lambda = records
        .iter()
        .rev()
        .find(|r| r.method == Method::OnlineLtl)
        .map(|r| r.lambda)
        .unwrap_or(1.0);
    log::info!(
        "covariance norm estimate {cov:.4e}; excess-risk bound at T={}, mean n={mean_n}, \
         lambda={online_lambda:.3e}, delta={BOUND_DELTA}: {:.4e}",
        train.len(),
        excess_risk_bound(cov, online_lambda, mean_n, train.len(), BOUND_DELTA),
    );

    Ok(records)
}
