//! Projected stochastic gradient descent on the future empirical risk:
//! one gradient step and one projection per incoming task, with
//! Polyak-Ruppert averaging of the iterates.
//!
//! After `s` observed tasks the returned representation is the mean of the
//! iterates `D^(1), ..., D^(s)` — the iterates at which the per-task losses
//! were paid. The iterate produced by the final update is excluded; it would
//! only enter the average at step `s + 1`.

use std::sync::Once;

use nalgebra::DMatrix;

use crate::batch;
use crate::error::{Error, Result};
use crate::projection::project;
use crate::ridge::meta_loss;
use crate::types::{Representation, TaskDataset};

static NONCOMPLIANT_WARNING: Once = Once::new();

/// Step size schedule `gamma_t = 1 / (lambda * sqrt(2 t))`.
pub fn step_size(lambda: f64, t: u64) -> f64 {
    1.0 / (lambda * (2.0 * t as f64).sqrt())
}

/// Upper bound on the averaged regret after `t` tasks: `4 sqrt(2) / (lambda sqrt(t))`.
pub fn regret_bound(lambda: f64, t: usize) -> f64 {
    4.0 * 2.0_f64.sqrt() / (lambda * (t as f64).sqrt())
}

/// Per-step losses paid by the iterate sequence, plus the datasets themselves
/// when the learner ran in audit mode.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    losses: Vec<f64>,
    datasets: Option<Vec<TaskDataset>>,
}

impl RegretLedger {
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    pub fn mean_loss(&self) -> f64 {
        if self.losses.is_empty() {
            0.0
        } else {
            self.losses.iter().sum::<f64>() / self.losses.len() as f64
        }
    }

    pub fn retained_datasets(&self) -> Option<&[TaskDataset]> {
        self.datasets.as_deref()
    }
}

/// Single-owner state of one online run at a fixed `lambda`.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    lambda: f64,
    dim: usize,
    /// The iterate `D^(t)` at which the next incoming loss is paid.
    current: Representation,
    /// Sum of the already-averaged iterates `D^(1) + ... + D^(t-1)`.
    sum_prev: DMatrix<f64>,
    /// Iterate counter: `current` is the `t`-th iterate. Starts at 1.
    t: u64,
    cumulative_loss: f64,
    losses: Vec<f64>,
    retained: Option<Vec<TaskDataset>>,
}

impl OnlineLearner {
    /// Initializes at the isotropic feasible point `D^(1) = I / (lambda d)`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        let current = Representation::isotropic(dim, lambda)?;
        Ok(Self {
            lambda,
            dim,
            current,
            sum_prev: DMatrix::zeros(dim, dim),
            t: 1,
            cumulative_loss: 0.0,
            losses: Vec::new(),
            retained: None,
        })
    }

    /// Enables the regret audit: incoming datasets are retained so the
    /// best-in-hindsight comparator can be solved later.
    pub fn with_audit(mut self) -> Self {
        self.retained = Some(Vec::new());
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Iterate counter `t`; `current()` is `D^(t)`.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn tasks_seen(&self) -> usize {
        self.losses.len()
    }

    pub fn current(&self) -> &Representation {
        &self.current
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }

    /// Running mean of all iterates produced so far, `D^(1), ..., D^(t)`.
    pub fn average(&self) -> Representation {
        let mean = (&self.sum_prev + self.current.matrix()) / self.t as f64;
        Representation::trusted(mean, self.lambda)
    }

    /// The representation the algorithm outputs after the tasks seen so far:
    /// the mean of the iterates at which losses were paid. Before any task
    /// has been seen this is the initial iterate.
    pub fn averaged_output(&self) -> Representation {
        let s = self.tasks_seen();
        if s == 0 {
            self.current.clone()
        } else {
            Representation::trusted(&self.sum_prev / s as f64, self.lambda)
        }
    }

    /// Pays the loss of the current iterate on `z`, then takes one projected
    /// gradient step. Returns the loss paid.
    ///
    /// Non-theory-compliant data only degrades the guarantees, not the
    /// mechanics, so it warns (once per process) instead of aborting.
    pub fn step(&mut self, z: &TaskDataset) -> Result<f64> {
        if !z.theory_compliant() {
            NONCOMPLIANT_WARNING.call_once(|| {
                log::warn!(
                    "task stream violates the boundedness assumptions \
                     (row norms <= 1, outputs in [0,1]); regret and risk \
                     guarantees do not apply as stated"
                );
            });
        }
        let eval = meta_loss(&self.current, z)?;
        let loss = eval.value();
        let gradient = eval.gradient();

        let gamma = step_size(self.lambda, self.t);
        let stepped = self.current.matrix() - gamma * gradient;
        let next = project(&stepped, self.lambda)?;

        self.sum_prev += self.current.matrix();
        self.current = next;
        self.t += 1;
        self.cumulative_loss += loss;
        self.losses.push(loss);
        if let Some(retained) = &mut self.retained {
            retained.push(z.clone());
        }
        Ok(loss)
    }

    pub fn ledger(&self) -> RegretLedger {
        RegretLedger {
            losses: self.losses.clone(),
            datasets: self.retained.clone(),
        }
    }

    pub fn into_ledger(self) -> RegretLedger {
        RegretLedger {
            losses: self.losses,
            datasets: self.retained,
        }
    }
}

/// Consumes exactly `tasks` datasets from the stream and returns the
/// averaged representation together with the loss ledger.
pub fn run_online(
    stream: impl IntoIterator<Item = TaskDataset>,
    dim: usize,
    lambda: f64,
    tasks: usize,
    audit: bool,
) -> Result<(Representation, RegretLedger)> {
    let mut learner = OnlineLearner::new(dim, lambda)?;
    if audit {
        learner = learner.with_audit();
    }
    let mut stream = stream.into_iter();
    for got in 0..tasks {
        let z = stream
            .next()
            .ok_or(Error::StreamExhausted { got, want: tasks })?;
        learner.step(&z)?;
    }
    let representation = learner.averaged_output();
    Ok((representation, learner.into_ledger()))
}

/// Averaged regret of the recorded run: mean paid loss minus the multitask
/// empirical risk of the best fixed representation in hindsight, the latter
/// solved by projected gradient descent on the retained datasets.
pub fn regret(ledger: &RegretLedger, lambda: f64) -> Result<f64> {
    let datasets = ledger.datasets.as_ref().ok_or(Error::AuditModeOff)?;
    if datasets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let comparator = batch::solve(
        datasets,
        lambda,
        None,
        batch::COMPARATOR_TOL,
        batch::COMPARATOR_MAX_ITER,
    )?;
    if !comparator.converged {
        log::warn!(
            "regret comparator stopped at gradient-map norm {:.3e} > {:.1e}; \
             the reported regret may be slightly conservative",
            comparator.gradient_map_norm,
            batch::COMPARATOR_TOL
        );
    }
    Ok(ledger.mean_loss() - comparator.objective)
}
