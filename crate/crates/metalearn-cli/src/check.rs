//! Self-check suites runnable in the field: finite-difference gradient
//! verification, projection oracle equivalence, the loss regularity bounds,
//! and the regret-bound check. The oracles here are local to this module so
//! the checks stay independent of the library's computational paths.

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

use metalearn::envs::EnvironmentSpec;
use metalearn::{
    meta_gradient, meta_loss, project, regret, regret_bound, run_online, Representation,
    TaskDataset,
};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    pub fn report_line(&self) -> String {
        format!(
            "check {}: {} ({})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub trials: Option<usize>,
    pub tasks: usize,
    pub lambda: f64,
    pub seed: u64,
}

fn compliant_dataset(rng: &mut ChaCha20Rng, d: usize, n: usize) -> TaskDataset {
    let mut inputs = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut row = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let norm = row.norm();
        if norm > 1e-12 {
            row *= rng.gen_range(0.05..0.999) / norm;
        }
        inputs.row_mut(i).copy_from(&row.transpose());
    }
    let outputs = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
    TaskDataset::new(inputs, outputs, true).expect("generated data is compliant")
}

fn feasible_representation(rng: &mut ChaCha20Rng, d: usize, lambda: f64) -> Representation {
    let factor = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut psd = &factor * factor.transpose();
    psd *= rng.gen_range(0.05..0.95) / (lambda * psd.trace());
    for i in 0..d {
        for j in (i + 1)..d {
            psd[(j, i)] = psd[(i, j)];
        }
    }
    Representation::new(psd, lambda).expect("construction is feasible")
}

/// Interior-feasible representation so finite-difference probes stay PSD.
fn interior_representation(rng: &mut ChaCha20Rng, d: usize, lambda: f64) -> Representation {
    let factor = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut psd = &factor * factor.transpose();
    let fraction = rng.gen_range(0.3..0.85);
    psd *= 0.9 * fraction / (lambda * psd.trace());
    let iso = 0.1 * fraction / (lambda * d as f64);
    for i in 0..d {
        psd[(i, i)] += iso;
        for j in (i + 1)..d {
            psd[(j, i)] = psd[(i, j)];
        }
    }
    Representation::new(psd, lambda).expect("construction is interior feasible")
}

fn random_symmetric(rng: &mut ChaCha20Rng, d: usize, scale: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-scale..scale));
    0.5 * (&raw + raw.transpose())
}

pub fn gradient_suite(cfg: &CheckConfig) -> Result<SuiteResult> {
    let trials = cfg.trials.unwrap_or(20);
    let (d, n, h) = (6, 8, 1e-5);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let z = compliant_dataset(&mut rng, d, n);
        let repr = interior_representation(&mut rng, d, 1.0);
        let analytic = meta_gradient(&repr, &z)?;

        let mut numeric = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut plus = repr.matrix().clone();
                let mut minus = repr.matrix().clone();
                plus[(i, j)] += h;
                minus[(i, j)] -= h;
                if i != j {
                    plus[(j, i)] += h;
                    minus[(j, i)] -= h;
                }
                let lambda = repr.lambda();
                let lp = meta_loss(&Representation::new(plus, lambda)?, &z)?.value();
                let lm = meta_loss(&Representation::new(minus, lambda)?, &z)?.value();
                let directional = (lp - lm) / (2.0 * h);
                if i == j {
                    numeric[(i, i)] = directional;
                } else {
                    numeric[(i, j)] = directional / 2.0;
                    numeric[(j, i)] = directional / 2.0;
                }
            }
        }
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm().max(1e-12));
    }
    Ok(SuiteResult {
        name: "gradient",
        passed: worst <= 1e-5,
        detail: format!("{trials} trials, max relative error {worst:.3e}"),
    })
}

pub fn projection_suite(cfg: &CheckConfig) -> Result<SuiteResult> {
    let trials = cfg.trials.unwrap_or(500);
    let d = 5;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut worst_gap = 0.0f64;
    let mut worst_drift = 0.0f64;
    for trial in 0..trials {
        let lambda = [0.25, 1.0, 4.0][trial % 3];
        let budget = 1.0 / lambda;
        let q = random_symmetric(&mut rng, d, 3.0);
        let projected = project(&q, lambda)?;

        // Bisection oracle on the eigenvalue shrinkage threshold.
        let eig = (0.5 * (&q + q.transpose())).symmetric_eigen();
        let gammas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let clipped: f64 = gammas.iter().map(|&g| g.max(0.0)).sum();
        let a = if clipped <= budget {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, gammas.iter().cloned().fold(0.0, f64::max));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gammas.iter().map(|&g| (g - mid).max(0.0)).sum::<f64>() > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let mut scaled = eig.eigenvectors.clone();
        for (k, &g) in gammas.iter().enumerate() {
            scaled.column_mut(k).scale_mut((g - a).max(0.0));
        }
        let oracle = scaled * eig.eigenvectors.transpose();

        worst_gap = worst_gap.max((projected.matrix() - &oracle).norm());
        let again = project(projected.matrix(), lambda)?;
        worst_drift = worst_drift.max((again.matrix() - projected.matrix()).norm());
        if projected.trace() > budget + metalearn::types::TRACE_TOL {
            return Ok(SuiteResult {
                name: "projection",
                passed: false,
                detail: format!("infeasible output at trial {trial}"),
            });
        }
    }
    Ok(SuiteResult {
        name: "projection",
        passed: worst_gap <= 1e-8 && worst_drift <= 1e-10,
        detail: format!(
            "{trials} trials, max oracle gap {worst_gap:.3e}, max idempotence drift {worst_drift:.3e}"
        ),
    })
}

pub fn bounds_suite(cfg: &CheckConfig) -> Result<SuiteResult> {
    let trials = cfg.trials.unwrap_or(200);
    let (d, n) = (5, 7);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    for trial in 0..trials {
        let z = compliant_dataset(&mut rng, d, n);
        let a = feasible_representation(&mut rng, d, 1.0);
        let b = feasible_representation(&mut rng, d, 1.0);
        let (la, lb) = (meta_loss(&a, &z)?.value(), meta_loss(&b, &z)?.value());
        let gap = (a.matrix() - b.matrix()).norm();
        let (ga, gb) = (meta_gradient(&a, &z)?, meta_gradient(&b, &z)?);
        let mid = Representation::new(0.5 * (a.matrix() + b.matrix()), 1.0)?;
        let lmid = meta_loss(&mid, &z)?.value();

        let ok = (0.0..=1.0).contains(&la)
            && (0.0..=1.0).contains(&lb)
            && (la - lb).abs() <= 2.0 * gap + 1e-12
            && (&ga - &gb).norm() <= 6.0 * gap + 1e-12
            && lmid <= 0.5 * (la + lb) + 1e-10;
        if !ok {
            return Ok(SuiteResult {
                name: "bounds",
                passed: false,
                detail: format!("regularity violated at trial {trial}"),
            });
        }
    }
    Ok(SuiteResult {
        name: "bounds",
        passed: true,
        detail: format!("{trials} trials within the loss/gradient bounds"),
    })
}

pub fn regret_suite(cfg: &CheckConfig) -> Result<SuiteResult> {
    let (d, n) = (10, 10);
    let env = EnvironmentSpec::synthetic(d, n, cfg.seed)?;
    let stream = (0..cfg.tasks as u64).map(|i| env.train_task(i).split.train);
    let (_, ledger) = run_online(stream, d, cfg.lambda, cfg.tasks, true)?;
    let measured = regret(&ledger, cfg.lambda)?;
    let bound = regret_bound(cfg.lambda, cfg.tasks);
    Ok(SuiteResult {
        name: "regret",
        passed: (-1e-6..=bound).contains(&measured),
        detail: format!(
            "T={}, lambda={}: regret {measured:.4e} vs bound {bound:.4e}",
            cfg.tasks, cfg.lambda
        ),
    })
}

/// Runs the requested suite(s). `suite` is one of
/// `all|gradient|projection|bounds|regret`.
pub fn run_checks(suite: &str, cfg: &CheckConfig) -> Result<Vec<SuiteResult>> {
    let mut results = Vec::new();
    let mut matched = false;
    if suite == "all" || suite == "gradient" {
        results.push(gradient_suite(cfg)?);
        matched = true;
    }
    if suite == "all" || suite == "projection" {
        results.push(projection_suite(cfg)?);
        matched = true;
    }
    if suite == "all" || suite == "bounds" {
        results.push(bounds_suite(cfg)?);
        matched = true;
    }
    if suite == "all" || suite == "regret" {
        results.push(regret_suite(cfg)?);
        matched = true;
    }
    if !matched {
        return Err(metalearn::Error::InvalidParameter(format!(
            "unknown suite `{suite}`; expected all|gradient|projection|bounds|regret"
        ))
        .into());
    }
    Ok(results)
}
