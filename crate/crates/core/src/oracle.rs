//! Beam-search planner over a simulator and the greedy-vs-beam diagnostic.
//!
//! Trajectories are ranked by accumulated simulated reward only. Ties break
//! towards the lexicographically smaller item sequence, so results are a
//! deterministic function of the environment and start state.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{argmax_unmasked, ItemMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulator::{Environment, State};

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult<T> {
    pub items: Vec<usize>,
    pub reward: T,
}

#[derive(Clone, Debug)]
struct Trajectory<T> {
    state: State<T>,
    items: Vec<usize>,
    mask: ItemMask,
    reward: T,
}

fn initial_mask<T: Scalar>(num_items: usize, initial: &State<T>, mask_seen: bool) -> ItemMask {
    let mut mask = ItemMask::new(num_items);
    if mask_seen {
        for &(i, _) in &initial.events {
            if i < num_items {
                mask.insert(i);
            }
        }
    }
    mask
}

fn check_args(horizon: usize, width: usize) -> Result<()> {
    if horizon == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "beam search needs horizon >= 1 and width >= 1 (got T={horizon}, k={width})"
        )));
    }
    Ok(())
}

fn exhausted(step: usize) -> Error {
    Error::NoCandidates(format!("no admissible extension at step {step}"))
}

/// Keep the `width` best partial sequences for `horizon` steps and return
/// the best complete one.
pub fn beam_search<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    initial: &State<T>,
    horizon: usize,
    width: usize,
    mask_seen: bool,
) -> Result<BeamResult<T>> {
    check_args(horizon, width)?;
    let n = env.num_items();
    let mut beam = vec![Trajectory {
        state: initial.clone(),
        items: Vec::with_capacity(horizon),
        mask: initial_mask(n, initial, mask_seen),
        reward: T::zero(),
    }];
    let mut scores = vec![T::zero(); n];
    let mut candidates: Vec<(T, usize, usize)> = Vec::with_capacity(width * n);

    for step in 0..horizon {
        candidates.clear();
        for (b, tr) in beam.iter().enumerate() {
            env.rate_all(&tr.state, &mut scores);
            for (i, &s) in scores.iter().enumerate() {
                if !tr.mask.contains(i) {
                    candidates.push((tr.reward + s, b, i));
                }
            }
        }
        if candidates.is_empty() {
            return Err(exhausted(step));
        }

        // Rank of each trajectory's item sequence in lexicographic order.
        let mut lex: Vec<usize> = (0..beam.len()).collect();
        lex.sort_by(|&a, &b| beam[a].items.cmp(&beam[b].items));
        let mut lex_rank = vec![0usize; beam.len()];
        for (r, &b) in lex.iter().enumerate() {
            lex_rank[b] = r;
        }
        let order = |a: &(T, usize, usize), b: &(T, usize, usize)| -> Ordering {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(lex_rank[a.1].cmp(&lex_rank[b.1]))
                .then(a.2.cmp(&b.2))
        };
        if candidates.len() > width {
            candidates.select_nth_unstable_by(width - 1, order);
            candidates.truncate(width);
        }
        candidates.sort_by(order);

        let next: Vec<Trajectory<T>> = candidates
            .iter()
            .map(|&(reward, b, item)| {
                let parent = &beam[b];
                let rating = env.rate(&parent.state, item);
                let mut items = parent.items.clone();
                items.push(item);
                let mut mask = parent.mask.clone();
                if mask_seen {
                    mask.insert(item);
                }
                Trajectory {
                    state: parent.state.appended(item, rating),
                    items,
                    mask,
                    reward,
                }
            })
            .collect();
        beam = next;
    }
    let best = beam.swap_remove(0);
    Ok(BeamResult {
        items: best.items,
        reward: best.reward,
    })
}

/// Per-step argmax of the one-step reward. Written independently of
/// [`beam_search`]; the two agree exactly at width 1.
pub fn greedy_rollout<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    initial: &State<T>,
    horizon: usize,
    mask_seen: bool,
) -> Result<BeamResult<T>> {
    check_args(horizon, 1)?;
    let n = env.num_items();
    let mut mask = initial_mask(n, initial, mask_seen);
    let mut state = initial.clone();
    let mut scores = vec![T::zero(); n];
    let mut items = Vec::with_capacity(horizon);
    let mut reward = T::zero();
    for step in 0..horizon {
        env.rate_all(&state, &mut scores);
        let item = argmax_unmasked(&scores, &mask).ok_or_else(|| exhausted(step))?;
        let (r, next) = env.step(&state, item)?;
        reward += r;
        items.push(item);
        if mask_seen {
            mask.insert(item);
        }
        state = next;
    }
    Ok(BeamResult { items, reward })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub horizon: usize,
    pub k_values: Vec<usize>,
    pub k_ref: usize,
    pub mask_seen: bool,
    pub users: Vec<usize>,
    /// Per-user cumulative reward, keyed by beam width.
    pub rewards: BTreeMap<String, Vec<f64>>,
    pub mean_rewards: BTreeMap<String, f64>,
    /// Mean reward at width 1 divided by mean reward at `k_ref`.
    pub relative: f64,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl OracleReport {
    pub fn rewards_for(&self, k: usize) -> Option<&[f64]> {
        self.rewards.get(&k.to_string()).map(|v| v.as_slice())
    }
}

/// Threshold at or above which greedy is considered as good as planning.
pub const NO_EFFECT_THRESHOLD: f64 = 0.99;

pub fn verdict(relative: f64) -> &'static str {
    if relative >= NO_EFFECT_THRESHOLD {
        "no material long-term effects detected; greedy baseline is mandatory"
    } else {
        "long-term effects present"
    }
}

/// Beam search from every start state at each width in `k_values` (width 1
/// and `k_ref` are always included).
pub fn relative_performance<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    starts: &[State<T>],
    horizon: usize,
    k_values: &[usize],
    k_ref: usize,
    mask_seen: bool,
) -> Result<OracleReport> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("relative performance needs at least one user".into()));
    }
    if k_ref == 0 {
        return Err(Error::InvalidArgument("k_ref must be >= 1".into()));
    }
    let mut ks: Vec<usize> = k_values.to_vec();
    ks.extend([1, k_ref]);
    ks.sort_unstable();
    ks.dedup();

    let per_user: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|s| {
            ks.iter()
                .map(|&k| beam_search(env, s, horizon, k, mask_seen).map(|r| r.reward.as_f64()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut rewards = BTreeMap::new();
    let mut mean_rewards = BTreeMap::new();
    for (j, k) in ks.iter().enumerate() {
        let col: Vec<f64> = per_user.iter().map(|r| r[j]).collect();
        mean_rewards.insert(k.to_string(), col.iter().sum::<f64>() / col.len() as f64);
        rewards.insert(k.to_string(), col);
    }
    let greedy = mean_rewards["1"];
    let reference = mean_rewards[&k_ref.to_string()];
    let relative = if reference == 0.0 { 1.0 } else { greedy / reference };
    Ok(OracleReport {
        horizon,
        k_values: ks,
        k_ref,
        mask_seen,
        users: starts.iter().map(|s| s.user).collect(),
        rewards,
        mean_rewards,
        relative,
        seed: None,
        config: serde_json::Value::Null,
    })
}
