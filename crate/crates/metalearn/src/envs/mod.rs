//! Task meta-distribution sources: the synthetic shared-subspace generator
//! and the Schools dataset ingestion.

pub mod schools;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::TaskDataset;

pub use schools::{load_schools, SchoolsData};

/// A task observed with both a training split `Z` and a held-out split `Z'`
/// drawn from the same distribution.
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

impl TaskSplit {
    pub fn new(train: TaskDataset, test: TaskDataset) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::DimensionMismatch(format!(
                "train split is {}-dimensional, test split {}-dimensional",
                train.dim(),
                test.dim()
            )));
        }
        Ok(Self { train, test })
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

/// Reserved RNG stream for drawing the shared subspace basis.
const BASIS_STREAM: u64 = u64::MAX;
/// Stream-id offsets keeping training / validation / test task draws
/// disjoint regardless of how many tasks each role consumes.
pub const TRAIN_STREAM_BASE: u64 = 0;
pub const VALIDATION_STREAM_BASE: u64 = 1 << 40;
pub const TEST_STREAM_BASE: u64 = 1 << 41;

/// Parameters of the synthetic environment: task vectors live in a fixed
/// `d/2`-dimensional subspace, inputs are uniform on the unit sphere, and
/// outputs carry additive Gaussian noise.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    dim: usize,
    subspace_dim: usize,
    noise_std: f64,
    samples_per_task: usize,
    seed: u64,
    /// `d x d/2` basis with orthonormal columns, fixed per environment.
    basis: DMatrix<f64>,
}

/// Default input dimension of the synthetic experiments.
pub const DEFAULT_DIM: usize = 50;
/// Default number of samples per task.
pub const DEFAULT_SAMPLES_PER_TASK: usize = 25;
/// Variance of the additive output noise.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.2;

impl EnvironmentSpec {
    /// Synthetic environment with subspace dimension `d/2` and noise
    /// variance 0.2. `d` must be even and positive.
    pub fn synthetic(dim: usize, samples_per_task: usize, seed: u64) -> Result<Self> {
        Self::with_noise_std(dim, samples_per_task, DEFAULT_NOISE_VARIANCE.sqrt(), seed)
    }

    /// Synthetic environment with an explicit noise standard deviation.
    pub fn with_noise_std(
        dim: usize,
        samples_per_task: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "input dimension must be positive and even, got {dim}"
            )));
        }
        if samples_per_task == 0 {
            return Err(Error::InvalidSpec("need at least one sample per task".into()));
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "noise standard deviation must be nonnegative, got {noise_std}"
            )));
        }
        let subspace_dim = dim / 2;
        let basis = orthonormal_basis(dim, subspace_dim, seed);
        Ok(Self {
            dim,
            subspace_dim,
            noise_std,
            samples_per_task,
            seed,
            basis,
        })
    }

    /// The defaults of the synthetic benchmark: `d = 50`, `n = 25`.
    pub fn default_synthetic(seed: u64) -> Self {
        Self::synthetic(DEFAULT_DIM, DEFAULT_SAMPLES_PER_TASK, seed)
            .expect("defaults are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subspace_dim(&self) -> usize {
        self.subspace_dim
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    pub fn samples_per_task(&self) -> usize {
        self.samples_per_task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Independent child generator for one task: all environment randomness
    /// flows from the single seed, split one stream per task index.
    fn stream_rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Draws one task: a unit-norm weight vector inside the shared subspace,
    /// plus train and test splits of `n` points each.
    pub fn sample_task(&self, stream: u64) -> SampledTask {
        let mut rng = self.stream_rng(stream);

        let tilde = unit_gaussian(&mut rng, self.subspace_dim);
        let weights = &self.basis * tilde;

        let train = self.sample_dataset(&weights, &mut rng);
        let test = self.sample_dataset(&weights, &mut rng);
        SampledTask {
            weights,
            split: TaskSplit { train, test },
        }
    }

    pub fn train_task(&self, index: u64) -> SampledTask {
        self.sample_task(TRAIN_STREAM_BASE + index)
    }

    pub fn validation_task(&self, index: u64) -> SampledTask {
        self.sample_task(VALIDATION_STREAM_BASE + index)
    }

    pub fn test_task(&self, index: u64) -> SampledTask {
        self.sample_task(TEST_STREAM_BASE + index)
    }

    fn sample_dataset(&self, weights: &DVector<f64>, rng: &mut ChaCha20Rng) -> TaskDataset {
        let n = self.samples_per_task;
        let mut inputs = DMatrix::zeros(n, self.dim);
        let mut outputs = DVector::zeros(n);
        for i in 0..n {
            let x = unit_gaussian(rng, self.dim);
            let noise: f64 = rng.sample(StandardNormal);
            outputs[i] = weights.dot(&x) + self.noise_std * noise;
            inputs.row_mut(i).copy_from(&x.transpose());
        }
        // Outputs are not clipped to [0, 1]; synthetic runs deliberately
        // leave the boundedness flag off.
        TaskDataset::new(inputs, outputs, false).expect("generated data is well-formed")
    }
}

/// A sampled task together with its ground-truth weight vector.
#[derive(Debug, Clone)]
pub struct SampledTask {
    pub weights: DVector<f64>,
    pub split: TaskSplit,
}

/// Standard normal vector normalized to the unit sphere.
fn unit_gaussian(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Orthonormalizes a seeded Gaussian `d x k` matrix by thin QR.
fn orthonormal_basis(dim: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(BASIS_STREAM);
    let raw = DMatrix::from_fn(dim, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = raw.qr();
    qr.q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_benchmark() {
        let env = EnvironmentSpec::default_synthetic(0);
        assert_eq!(env.dim(), 50);
        assert_eq!(env.subspace_dim(), 25);
        assert_eq!(env.samples_per_task(), 25);
        assert!((env.noise_variance() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn odd_dimension_is_rejected() {
        assert!(matches!(
            EnvironmentSpec::synthetic(7, 10, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn basis_columns_are_orthonormal() {
        let env = EnvironmentSpec::synthetic(10, 5, 3).unwrap();
        let gram = env.basis().transpose() * env.basis();
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn inputs_on_unit_sphere_and_weights_unit_norm() {
        let env = EnvironmentSpec::synthetic(8, 6, 5).unwrap();
        for index in 0..10 {
            let task = env.train_task(index);
            assert!((task.weights.norm() - 1.0).abs() < 1e-12);
            for split in [&task.split.train, &task.split.test] {
                for row in split.inputs().row_iter() {
                    assert!((row.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noiseless_outputs_are_inner_products() {
        let env = EnvironmentSpec::with_noise_std(6, 5, 0.0, 9).unwrap();
        let task = env.train_task(0);
        for (i, row) in task.split.train.inputs().row_iter().enumerate() {
            let expected = row.transpose().dot(&task.weights);
            assert_eq!(task.split.train.outputs()[i], expected);
            assert!(task.split.train.outputs()[i].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn same_seed_reproduces_stream_and_roles_are_disjoint() {
        let env_a = EnvironmentSpec::synthetic(6, 4, 11).unwrap();
        let env_b = EnvironmentSpec::synthetic(6, 4, 11).unwrap();
        let a = env_a.train_task(2);
        let b = env_b.train_task(2);
        assert_eq!(a.split.train.inputs(), b.split.train.inputs());
        assert_eq!(a.split.train.outputs(), b.split.train.outputs());

        let val = env_a.validation_task(2);
        assert_ne!(a.split.train.inputs(), val.split.train.inputs());
    }

    #[test]
    fn weight_second_moment_concentrates_on_subspace() {
        // The normalized Gaussian directions are isotropic inside the
        // subspace, so the mean of w w^T approaches P P^T / k.
        let dim = 50;
        let k = 25;
        let env = EnvironmentSpec::synthetic(dim, 1, 17).unwrap();
        let trials = 10_000;
        let mut moment = DMatrix::zeros(dim, dim);
        for index in 0..trials {
            let task = env.train_task(index);
            moment += &task.weights * task.weights.transpose();
        }
        moment /= trials as f64;
        let target = env.basis() * env.basis().transpose() / k as f64;
        let gap = (moment - target).symmetric_eigenvalues();
        let op_norm = gap.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!(op_norm <= 0.05, "operator norm {op_norm}");
    }
}
