//! Interactive evaluation protocol: warm-up from logged history, then `T`
//! simulated recommendation steps scored by RW@T, PR@T and RC@T.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{ItemMask, Policy, QNetwork, GreedyPolicy};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulator::{Environment, State};

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub user: usize,
    pub items: Vec<usize>,
    pub ratings: Vec<f64>,
    /// Ratings strictly above the positive threshold.
    pub positives: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub rw: f64,
    pub pr: f64,
    pub rc: f64,
}

/// A test user's frozen warm-up prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalUser<T> {
    pub user: usize,
    pub warmup: Vec<(usize, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPopulation<T> {
    pub users: Vec<EvalUser<T>>,
    /// Users dropped for having fewer than `warmup_len` logged interactions.
    pub skipped: usize,
}

/// Warm-up prefixes (first `warmup_len` logged interactions) for `users`.
pub fn eval_population<T: Scalar>(ds: &Dataset, users: &[usize], warmup_len: usize) -> EvalPopulation<T> {
    let mut out = Vec::with_capacity(users.len());
    let mut skipped = 0;
    for &u in users {
        let h = &ds.users[u];
        if h.len() < warmup_len {
            skipped += 1;
            continue;
        }
        out.push(EvalUser {
            user: u,
            warmup: h.interactions[..warmup_len]
                .iter()
                .map(|x| (x.item, T::of(x.rating)))
                .collect(),
        });
    }
    EvalPopulation { users: out, skipped }
}

/// Per-(seed, user) generator; independent of scheduling.
pub fn episode_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

fn warmup_mask<T: Scalar>(num_items: usize, warmup: &[(usize, T)], mask_seen: bool) -> ItemMask {
    let mut mask = ItemMask::new(num_items);
    if mask_seen {
        for &(i, _) in warmup {
            mask.insert(i);
        }
    }
    mask
}

pub fn run_episode<T, E, P>(
    policy: &P,
    env: &E,
    user: usize,
    warmup: &[(usize, T)],
    horizon: usize,
    seed: u64,
    mask_seen: bool,
) -> Result<EpisodeResult>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let mut mask = warmup_mask(env.num_items(), warmup, mask_seen);
    if mask_seen && mask.available() < horizon {
        return Err(Error::NoCandidates(format!(
            "user {user}: {} unmasked items for a horizon of {horizon}",
            mask.available()
        )));
    }
    let threshold = env.scale().positive_threshold;
    let mut rng = episode_rng(seed, user);
    let mut state = env.reset(user, warmup);
    let mut items = Vec::with_capacity(horizon);
    let mut ratings = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let item = policy.act(&state, &mask, &mut rng)?;
        let (r, next) = env.step(&state, item)?;
        if mask_seen {
            mask.insert(item);
        }
        items.push(item);
        ratings.push(r.as_f64());
        state = next;
    }
    let positives = ratings.iter().filter(|r| **r > threshold).count();
    Ok(EpisodeResult {
        user,
        items,
        ratings,
        positives,
    })
}

/// Items (outside the masked warm-up) the simulator rates above threshold
/// for this user at the frozen warm-up state.
pub fn positive_items<T: Scalar, E: Environment<T> + ?Sized>(env: &E, warmup_state: &State<T>, mask_seen: bool) -> usize {
    let threshold = T::of(env.scale().positive_threshold);
    let mask = warmup_mask(env.num_items(), &warmup_state.events, mask_seen);
    let mut scores = vec![T::zero(); env.num_items()];
    env.rate_all(warmup_state, &mut scores);
    scores
        .iter()
        .enumerate()
        .filter(|(i, s)| !mask.contains(*i) && **s > threshold)
        .count()
}

/// RW@T, PR@T and RC@T given the recall denominator.
pub fn episode_metrics(episode: &EpisodeResult, positive_items: usize) -> EpisodeMetrics {
    let t = episode.ratings.len() as f64;
    if t == 0.0 {
        return EpisodeMetrics { rw: 0.0, pr: 0.0, rc: 0.0 };
    }
    EpisodeMetrics {
        rw: neumaier_sum(episode.ratings.iter().copied()) / t,
        pr: episode.positives as f64 / t,
        rc: if positive_items == 0 {
            0.0
        } else {
            episode.positives as f64 / positive_items as f64
        },
    }
}

pub fn metrics<T: Scalar, E: Environment<T> + ?Sized>(
    episode: &EpisodeResult,
    env: &E,
    warmup_state: &State<T>,
    mask_seen: bool,
) -> EpisodeMetrics {
    episode_metrics(episode, positive_items(env, warmup_state, mask_seen))
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricSummary {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MetricSummary { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = neumaier_sum(xs.iter().copied()) / n;
        let var = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / n;
        MetricSummary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub horizon: usize,
    pub rw: MetricSummary,
    pub pr: MetricSummary,
    pub rc: MetricSummary,
    pub num_users: usize,
    pub num_skipped: usize,
    pub num_episodes: usize,
    pub seeds: Vec<u64>,
    pub mask_seen: bool,
    /// Per-episode RW@T in (seed, user) order.
    pub episode_rw: Vec<f64>,
    pub config: serde_json::Value,
}

pub const CSV_HEADER: &str = "policy,T,rw_mean,rw_std,pr_mean,pr_std,rc_mean,rc_std,n_users,n_seeds";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.policy,
            self.horizon,
            self.rw.mean,
            self.rw.std,
            self.pr.mean,
            self.pr.std,
            self.rc.mean,
            self.rc.std,
            self.num_users,
            self.seeds.len()
        )
    }

    /// Standard error of the RW@T mean over episodes.
    pub fn rw_standard_error(&self) -> f64 {
        if self.num_episodes < 2 {
            return 0.0;
        }
        let n = self.num_episodes as f64;
        // population std -> sample std
        self.rw.std * (n / (n - 1.0)).sqrt() / n.sqrt()
    }
}

/// Run every `(seed, user)` episode and aggregate.
pub fn evaluate<T, E, P>(
    policy: &P,
    env: &E,
    population: &EvalPopulation<T>,
    horizon: usize,
    seeds: &[u64],
    mask_seen: bool,
) -> Result<EvalReport>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    if population.users.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no eligible users to evaluate ({} skipped)",
            population.skipped
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one evaluation seed is required".into()));
    }
    let denominators: Vec<usize> = population
        .users
        .par_iter()
        .map(|u| positive_items(env, &State::new(u.user, u.warmup.clone()), mask_seen))
        .collect();
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..population.users.len()).map(move |j| (s, j)))
        .collect();
    let per_episode: Vec<EpisodeMetrics> = jobs
        .par_iter()
        .map(|&(seed, j)| {
            let u = &population.users[j];
            run_episode(policy, env, u.user, &u.warmup, horizon, seed, mask_seen)
                .map(|ep| episode_metrics(&ep, denominators[j]))
        })
        .collect::<Result<_>>()?;

    let col = |f: fn(&EpisodeMetrics) -> f64| -> Vec<f64> { per_episode.iter().map(f).collect() };
    let rw = col(|m| m.rw);
    Ok(EvalReport {
        policy: policy.name().to_string(),
        horizon,
        rw: MetricSummary::of(&rw),
        pr: MetricSummary::of(&col(|m| m.pr)),
        rc: MetricSummary::of(&col(|m| m.rc)),
        num_users: population.users.len(),
        num_skipped: population.skipped,
        num_episodes: per_episode.len(),
        seeds: seeds.to_vec(),
        mask_seen,
        episode_rw: rw,
        config: serde_json::Value::Null,
    })
}

/// Train one value model per discount factor (same seeds and remaining
/// hyper-parameters) and evaluate each greedily.
pub fn gamma_sweep<T, E, F>(
    mut train: F,
    env: &E,
    population: &EvalPopulation<T>,
    gammas: &[f64],
    horizon: usize,
    seeds: &[u64],
    mask_seen: bool,
) -> Result<Vec<(f64, EvalReport)>>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
    F: FnMut(f64) -> Result<QNetwork<T>>,
{
    let mut out = Vec::with_capacity(gammas.len());
    for &g in gammas {
        if !(0.0..1.0).contains(&g) {
            return Err(Error::InvalidArgument(format!("discount factor {g} outside [0, 1)")));
        }
        let model = train(g)?;
        let policy = GreedyPolicy::new(format!("DQNR(gamma={g})"), model);
        out.push((g, evaluate(&policy, env, population, horizon, seeds, mask_seen)?));
    }
    Ok(out)
}

/// Sweep table: one `gamma,rw_mean,rw_std` row per discount factor.
pub fn sweep_csv(rows: &[(f64, MetricSummary)]) -> String {
    let mut s = String::from("gamma,rw_mean,rw_std\n");
    for (g, m) in rows {
        s.push_str(&format!("{g},{:.6},{:.6}\n", m.mean, m.std));
    }
    s
}
