use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::qnet::{q_target, QNetwork, Sample, ValueHyper};
use super::transitions::TransitionLog;
use crate::data::RatingScale;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch MSE per epoch.
    pub epoch_losses: Vec<f64>,
    pub batches: usize,
    pub target_syncs: usize,
}

/// Scale the gradient down to `max_norm` when its L2 norm exceeds it.
pub fn clip_grad_norm<T: Scalar>(grad: &mut [T], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Fitted Q-learning on logged transitions.
///
/// Targets come from a frozen copy refreshed every
/// `target_sync_interval` batches; with `gamma = 0` this is plain reward
/// regression. Biases start at the mean logged reward.
pub fn train_value_model<T: Scalar>(
    log: &TransitionLog<T>,
    num_items: usize,
    scale: RatingScale,
    popularity: Vec<u64>,
    hyper: &ValueHyper,
) -> Result<(QNetwork<T>, TrainReport)> {
    hyper.validate()?;
    if log.is_empty() {
        return Err(Error::InvalidArgument("no transitions to train on".into()));
    }
    if let Some(t) = log.iter().find(|t| t.action >= num_items || t.state.iter().any(|(i, _)| *i >= num_items)) {
        return Err(Error::InvalidArgument(format!(
            "transition of user {} references an item outside 0..{num_items}",
            t.user
        )));
    }
    let mut online = QNetwork::new(num_items, scale, popularity, hyper, log.mean_reward())?;
    let mut target = online.clone();
    let gamma = T::of(hyper.gamma);
    let mut opt = Adam::new(online.params.len(), hyper.lr);
    let mut grad = vec![T::zero(); online.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5e_ed0f_7a11);
    let mut order: Vec<usize> = (0..log.len()).collect();
    let mut report = TrainReport::default();

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let targets: Vec<T> = chunk
                .par_iter()
                .map(|&i| q_target(&log.get(i), &target, gamma))
                .collect();
            let batch: Vec<Sample<'_, T>> = chunk
                .iter()
                .zip(&targets)
                .map(|(&i, &y)| {
                    let t = log.get(i);
                    Sample {
                        events: t.state,
                        action: t.action,
                        target: y,
                    }
                })
                .collect();
            let loss = online.loss_and_grad(&batch, hyper.weight_decay, &mut grad);
            if !loss.total().is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("value-model training, batch {}", report.batches),
                });
            }
            clip_grad_norm(&mut grad, hyper.grad_clip);
            opt.update(&mut online.params, &grad);
            report.batches += 1;
            if report.batches % hyper.target_sync_interval == 0 {
                target.params.copy_from_slice(&online.params);
                report.target_syncs += 1;
            }
            epoch_sse += loss.mse.as_f64();
            n_batches += 1;
        }
        report.epoch_losses.push(epoch_sse / n_batches.max(1) as f64);
    }
    Ok((online, report))
}
