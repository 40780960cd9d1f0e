//! Recommendation policies: Random, POP and a discounted Q-learning agent
//! whose `gamma = 0` case is the greedy reward model.

mod adam;
mod policy;
mod qnet;
mod train;
mod transitions;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use policy::{
    argmax_unmasked, EnvScorer, GreedyPolicy, ItemMask, Policy, PolicyKind, PopPolicy, RandomPolicy, Scorer,
};
pub use qnet::{q_target, Loss, QNetwork, Sample, ValueHyper};
pub use train::{clip_grad_norm, train_value_model, TrainReport};
pub use transitions::{build_transitions, Transition, TransitionLog};

use crate::data::Dataset;
use crate::error::Result;
use crate::scalar::Scalar;

/// Build transitions from `users` of `ds` and train a value model on them.
/// Popularity is taken from `ds.item_popularity`.
pub fn train_agent<T: Scalar>(ds: &Dataset, users: &[usize], hyper: &ValueHyper) -> Result<(QNetwork<T>, TrainReport)> {
    let log = build_transitions::<T, _>(users.iter().map(|&u| &ds.users[u]), 1)?;
    train_value_model(&log, ds.num_items, ds.scale, ds.item_popularity.clone(), hyper)
}
