//! Hand-derived gradients, optimizers and the mini-batch training loop.

mod backward;
mod loss;
mod optimizer;
mod trainer;

pub use backward::{backward, batch_gradients, regularization, BatchResult, Gradients, Perturbation};
pub use loss::{logistic_loss, squared_loss, LossKind};
pub use optimizer::{OptimizerKind, OptimizerState, ADAGRAD_EPS, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    load_checkpoint, predict_dataset, pretrain_fm, train, train_from, EpochRecord, TrainConfig, TrainHistory,
    TrainOutcome,
};

use crate::data::SparseInstance;
use crate::error::{Error, Result};
use crate::model::IfmModel;
use crate::numeric::{grad_check, GradCheck, SeededRng};

/// Inverted-dropout mask: each entry is `0` with probability `1 - keep_prob`
/// and `1 / keep_prob` otherwise.
pub fn dropout_mask(len: usize, keep_prob: f64, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Parameter(format!("keep probability must be in (0, 1], got {keep_prob}")));
    }
    if keep_prob == 1.0 {
        return Ok(vec![1.0; len]);
    }
    let scale = 1.0 / keep_prob;
    Ok((0..len).map(|_| if rng.bernoulli(keep_prob) { scale } else { 0.0 }).collect())
}

/// Finite-difference check of every parameter group of `model` against the
/// analytic gradient of the full-batch objective over `data`.
pub fn check_gradients(
    model: &IfmModel,
    data: &[SparseInstance],
    lambda_f: f64,
    loss: LossKind,
    perturb: Option<&Perturbation>,
    eps: f64,
) -> Result<Vec<(String, GradCheck)>> {
    let batch: Vec<usize> = (0..data.len()).collect();
    let names: Vec<String> = model.param_groups().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let start = model
            .param_groups()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, g)| g.to_vec())
            .expect("group listed above");
        let mut probe = model.clone();
        let mut failure = None;
        let check = grad_check(
            |params: &[f64]| {
                probe.param_group_mut(&name).expect("group exists").copy_from_slice(params);
                match batch_gradients(&probe, data, &batch, lambda_f, loss, perturb) {
                    Ok(res) => (res.objective, res.grads.dense(&name, &probe).expect("group exists")),
                    Err(e) => {
                        failure.get_or_insert(e);
                        (f64::NAN, vec![f64::NAN; params.len()])
                    }
                }
            },
            &start,
            eps,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        out.push((name, check?));
    }
    Ok(out)
}
