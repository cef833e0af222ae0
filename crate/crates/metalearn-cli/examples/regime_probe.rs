//! Scratch probe: does the multitask minimizer align with the subspace at
//! all, given enough optimization? Custom PGD loop with a data-scaled step.
use metalearn::envs::EnvironmentSpec;
use metalearn::{meta_loss, project, transfer_risk_estimate, Representation, TaskDataset};
use metalearn::envs::TaskSplit;
use nalgebra::DMatrix;

fn main() {
    let env = EnvironmentSpec::with_noise_std(50, 25, 0.2, 0).unwrap();
    let test: Vec<TaskSplit> = (0..100).map(|i| env.test_task(i).split).collect();
    let train: Vec<TaskDataset> = (0..50).map(|i| env.train_task(i).split.train).collect();
    let basis = env.basis().clone();

    let scale = train.iter().map(|z| z.outputs().norm_squared() / z.n() as f64)
        .fold(0.0f64, f64::max);
    let eta = 1.0 / (6.0 * scale);
    println!("max ||y||^2/n = {scale:.4}, eta = {eta:.3}");

    let lambda = 3e-3;
    let mut current = Representation::isotropic(50, lambda).unwrap();
    for sweep in 0..=10 {
        if sweep > 0 {
            for _ in 0..3000 {
                let mut grad = DMatrix::zeros(50, 50);
                let mut obj = 0.0;
                for z in &train {
                    let eval = meta_loss(&current, z).unwrap();
                    obj += eval.value();
                    grad += eval.gradient();
                }
                let _ = obj;
                grad /= train.len() as f64;
                let stepped = current.matrix() - eta * grad;
                current = project(&stepped, lambda).unwrap();
            }
        }
        let d_mat = current.matrix();
        let align = (basis.transpose() * d_mat * &basis).trace() / d_mat.trace().max(1e-300);
        let mut obj = 0.0;
        for z in &train { obj += meta_loss(&current, z).unwrap().value(); }
        obj /= train.len() as f64;
        println!("iters {:>6}: obj {obj:.6} align {align:.4} te {:.6}",
                 sweep * 3000, transfer_risk_estimate(&current, &test).unwrap());
    }
}
