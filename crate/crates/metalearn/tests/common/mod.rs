//! Shared generators and independent oracles for the integration suites.
//!
//! The oracles deliberately avoid the library's computational paths: the
//! ridge oracle solves the d-side stationarity system in an eigenbasis of
//! `D` instead of the n-side closed form, the projection oracle bisects the
//! shrinkage threshold instead of solving it in closed form, and the
//! gradient oracle is plain central differencing of the loss.

#![allow(dead_code)]

use metalearn::types::PSD_TOL;
use metalearn::{meta_loss, Representation, TaskDataset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random dataset satisfying the boundedness assumptions with margin.
pub fn compliant_dataset(rng: &mut ChaCha20Rng, d: usize, n: usize) -> TaskDataset {
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
    TaskDataset::new(inputs, outputs, true).expect("construction satisfies the assumptions")
}

/// Random symmetric matrix with entries on the given scale.
pub fn random_symmetric(rng: &mut ChaCha20Rng, d: usize, scale: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-scale..scale));
    let mut sym = DMatrix::zeros(d, d);
    for i in 0..d {
        sym[(i, i)] = raw[(i, i)];
        for j in (i + 1)..d {
            let v = 0.5 * (raw[(i, j)] + raw[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    sym
}

/// Random feasible representation: PSD with random rank, trace strictly
/// inside the budget.
pub fn feasible_representation(rng: &mut ChaCha20Rng, d: usize, lambda: f64) -> Representation {
    let rank = rng.gen_range(1..=d);
    let factor = DMatrix::from_fn(d, rank, |_, _| rng.gen_range(-1.0..1.0));
    let mut psd = &factor * factor.transpose();
    let trace = psd.trace();
    if trace > 0.0 {
        psd *= rng.gen_range(0.05..0.95) / (lambda * trace);
    }
    // Mirror the triangle so the constructor's exact-symmetry check passes.
    for i in 0..d {
        for j in (i + 1)..d {
            psd[(j, i)] = psd[(i, j)];
        }
    }
    Representation::new(psd, lambda).expect("construction is feasible")
}

/// Feasible representation with smallest eigenvalue bounded away from zero,
/// so small symmetric perturbations stay inside the PSD cone (needed by the
/// finite-difference oracle).
pub fn interior_representation(rng: &mut ChaCha20Rng, d: usize, lambda: f64) -> Representation {
    let factor = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut psd = &factor * factor.transpose();
    let trace = psd.trace();
    let fraction = rng.gen_range(0.3..0.85);
    psd *= 0.9 * fraction / (lambda * trace);
    let iso = 0.1 * fraction / (lambda * d as f64);
    for i in 0..d {
        psd[(i, i)] += iso;
        for j in (i + 1)..d {
            psd[(j, i)] = psd[(i, j)];
        }
    }
    Representation::new(psd, lambda).expect("construction is interior feasible")
}

/// Central finite differences of the meta-loss along the symmetric
/// coordinate directions, mapped back to gradient entries: perturbing the
/// `(i, j)` pair (both triangles) measures `2 grad_ij` off the diagonal and
/// `grad_ii` on it.
pub fn fd_gradient(repr: &Representation, z: &TaskDataset, h: f64) -> DMatrix<f64> {
    let d = repr.dim();
    let lambda = repr.lambda();
    let mut grad = DMatrix::zeros(d, d);
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
            let l_plus = meta_loss(&Representation::new(plus, lambda).unwrap(), z)
                .unwrap()
                .value();
            let l_minus = meta_loss(&Representation::new(minus, lambda).unwrap(), z)
                .unwrap()
                .value();
            let directional = (l_plus - l_minus) / (2.0 * h);
            if i == j {
                grad[(i, i)] = directional;
            } else {
                grad[(i, j)] = directional / 2.0;
                grad[(j, i)] = directional / 2.0;
            }
        }
    }
    grad
}

/// Solves the penalized least-squares problem restricted to the range of
/// `D` by its stationarity system: with `D = V diag(s) V^T` (positive part)
/// and `w = V c`, the minimizer satisfies
/// `((XV)^T (XV) / n + diag(1/s)) c = (XV)^T y / n`.
pub fn ridge_stationarity_oracle(repr: &Representation, z: &TaskDataset) -> DVector<f64> {
    let eig = repr.matrix().clone().symmetric_eigen();
    let kept: Vec<usize> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > PSD_TOL)
        .map(|(k, _)| k)
        .collect();
    if kept.is_empty() {
        return DVector::zeros(repr.dim());
    }
    let mut basis = DMatrix::zeros(repr.dim(), kept.len());
    for (col, &k) in kept.iter().enumerate() {
        basis.column_mut(col).copy_from(&eig.eigenvectors.column(k));
    }
    let n = z.n() as f64;
    let xv = z.inputs() * &basis;
    let mut system = xv.transpose() * &xv / n;
    for (col, &k) in kept.iter().enumerate() {
        system[(col, col)] += 1.0 / eig.eigenvalues[k];
    }
    let rhs = xv.transpose() * z.outputs() / n;
    let coeffs = system
        .lu()
        .solve(&rhs)
        .expect("reduced stationarity system is positive definite");
    basis * coeffs
}

/// Projection oracle: eigendecompose, then find the shrinkage threshold by
/// bisection (or zero when clipping suffices) and verify the KKT conditions
/// before reconstructing.
pub fn projection_oracle(q: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let budget = 1.0 / lambda;
    let sym = 0.5 * (q + q.transpose());
    let eig = sym.symmetric_eigen();
    let gammas: Vec<f64> = eig.eigenvalues.iter().copied().collect();

    let clipped: f64 = gammas.iter().map(|&g| g.max(0.0)).sum();
    let a = if clipped <= budget {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = gammas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let total: f64 = gammas.iter().map(|&g| (g - mid).max(0.0)).sum();
            if total > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let thetas: Vec<f64> = gammas.iter().map(|&g| (g - a).max(0.0)).collect();

    // KKT: primal feasibility, complementarity per eigendirection, and
    // complementarity of the trace constraint.
    let total: f64 = thetas.iter().sum();
    assert!(total <= budget + 1e-9, "trace feasibility violated");
    if a > 0.0 {
        assert!((total - budget).abs() <= 1e-9, "active trace constraint not tight");
    }
    for (&g, &t) in gammas.iter().zip(&thetas) {
        assert!(t >= 0.0);
        assert!((t * (g - t - a)).abs() <= 1e-8, "stationarity violated");
        if t == 0.0 {
            assert!(g - a <= 1e-9, "clipped eigenvalue above threshold");
        }
    }

    let mut scaled = eig.eigenvectors.clone();
    for (k, &t) in thetas.iter().enumerate() {
        scaled.column_mut(k).scale_mut(t);
    }
    let rebuilt = scaled * eig.eigenvectors.transpose();
    0.5 * (&rebuilt + rebuilt.transpose())
}
