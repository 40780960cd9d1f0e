#![allow(dead_code)]

use irsbench::agents::{QNetwork, Sample, ValueHyper};
use irsbench::data::RatingScale;
use irsbench::simulator::{Environment, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny history-dependent environment: a base reward per item plus a bonus
/// for each (previous item, item) pair. Values sit on a 1/8 grid so every
/// cumulative sum is exact.
#[derive(Clone, Debug)]
pub struct PairEnv {
    pub n: usize,
    pub base: Vec<f64>,
    pub pair: Vec<f64>,
    pub scale: RatingScale,
}

impl PairEnv {
    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let eighth = |rng: &mut ChaCha8Rng, lo: i32, hi: i32| rng.gen_range(lo..=hi) as f64 / 8.0;
        PairEnv {
            n,
            base: (0..n).map(|_| eighth(rng, 8, 40)).collect(),
            pair: (0..n * n).map(|_| eighth(rng, -16, 16)).collect(),
            scale: RatingScale::new(0.0, 10.0, 3.0).unwrap(),
        }
    }
}

impl Environment<f64> for PairEnv {
    fn num_users(&self) -> usize {
        1
    }
    fn num_items(&self) -> usize {
        self.n
    }
    fn scale(&self) -> RatingScale {
        self.scale
    }
    fn rate(&self, state: &State<f64>, item: usize) -> f64 {
        let bonus = state.events.last().map_or(0.0, |&(p, _)| self.pair[p * self.n + item]);
        (self.base[item] + bonus).clamp(self.scale.min, self.scale.max)
    }
}

/// A random tiny planning instance: environment, start state, horizon.
pub struct TinyCase {
    pub env: PairEnv,
    pub start: State<f64>,
    pub horizon: usize,
}

/// `|A| <= 6`, `T <= 4`, zero or one warm-up item.
pub fn tiny_case(seed: u64) -> TinyCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let env = PairEnv::random(n, &mut rng);
    let warm = if n > 2 { rng.gen_range(0..=1) } else { 0 };
    let events: Vec<(usize, f64)> = (0..warm).map(|_| (rng.gen_range(0..n), 5.0)).collect();
    let horizon = rng.gen_range(1..=(n - warm).min(4));
    TinyCase {
        env,
        start: State::new(0, events),
        horizon,
    }
}

/// Exhaustive optimum over every admissible item sequence of length
/// `horizon`; the count of admissible sequences is returned as well.
pub fn brute_force<E: Environment<f64>>(env: &E, start: &State<f64>, horizon: usize, mask_seen: bool) -> (f64, usize) {
    fn go<E: Environment<f64>>(
        env: &E,
        state: &State<f64>,
        used: &mut Vec<bool>,
        left: usize,
        mask_seen: bool,
    ) -> (f64, usize) {
        if left == 0 {
            return (0.0, 1);
        }
        let mut best = f64::NEG_INFINITY;
        let mut count = 0;
        for i in 0..env.num_items() {
            if mask_seen && used[i] {
                continue;
            }
            let r = env.rate(state, i);
            let mut next = state.clone();
            next.events.push((i, r));
            used[i] = true;
            let (v, c) = go(env, &next, used, left - 1, mask_seen);
            used[i] = false;
            // restore items masked by the start state
            if mask_seen && state.events.iter().any(|&(j, _)| j == i) {
                used[i] = true;
            }
            best = best.max(r + v);
            count += c;
        }
        (best, count)
    }
    let mut used = vec![false; env.num_items()];
    if mask_seen {
        for &(i, _) in &start.events {
            used[i] = true;
        }
    }
    go(env, start, &mut used, horizon, mask_seen)
}

/// Replay `items` from `start`, summing the rewards.
pub fn replay<E: Environment<f64>>(env: &E, start: &State<f64>, items: &[usize]) -> f64 {
    let mut state = start.clone();
    let mut total = 0.0;
    for &i in items {
        let r = env.rate(&state, i);
        total += r;
        state.events.push((i, r));
    }
    total
}

/// The frozen tiny value model used for gradient checks: 3 items, d = 4,
/// window 3, and a batch of two transitions.
pub fn frozen_tiny_model() -> (QNetwork<f64>, Vec<(Vec<(usize, f64)>, usize, f64)>) {
    let hyper = ValueHyper {
        dim: 4,
        history_window: 3,
        init_scale: 0.5,
        seed: 11,
        ..ValueHyper::default()
    };
    let scale = RatingScale::five_star();
    let model = QNetwork::new(3, scale, vec![1, 1, 1], &hyper, 0.3).unwrap();
    let batch = vec![
        (vec![(0, 4.0), (2, 2.0)], 1, 3.5),
        (vec![(1, 5.0)], 2, 1.0),
    ];
    (model, batch)
}

pub struct GradCheck {
    /// `|g_a - g_n| / (|g_a| + |g_n|)` over the whole vector.
    pub vector_rel_err: f64,
    /// Worst per-component relative error over components with magnitude
    /// above 1e-6.
    pub max_component_rel_err: f64,
}

/// Central finite differences of the full objective against the analytic
/// gradient.
pub fn gradient_check(model: &QNetwork<f64>, batch: &[(Vec<(usize, f64)>, usize, f64)], wd: f64, h: f64) -> GradCheck {
    let samples: Vec<Sample<'_, f64>> = batch
        .iter()
        .map(|(e, a, t)| Sample {
            events: e,
            action: *a,
            target: *t,
        })
        .collect();
    let mut analytic = vec![0.0; model.params.len()];
    model.loss_and_grad(&samples, wd, &mut analytic);
    let mut scratch = vec![0.0; model.params.len()];
    let mut m = model.clone();
    let mut numeric = vec![0.0; model.params.len()];
    for p in 0..model.params.len() {
        let orig = m.params[p];
        m.params[p] = orig + h;
        let up = m.loss_and_grad(&samples, wd, &mut scratch).total();
        m.params[p] = orig - h;
        let down = m.loss_and_grad(&samples, wd, &mut scratch).total();
        m.params[p] = orig;
        numeric[p] = (up - down) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let denom = norm(&analytic) + norm(&numeric);
    let vector_rel_err = if denom == 0.0 { 0.0 } else { norm(&diff) / denom };
    let max_component_rel_err = analytic
        .iter()
        .zip(&numeric)
        .filter(|(a, n)| a.abs().max(n.abs()) > 1e-6)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max);
    GradCheck {
        vector_rel_err,
        max_component_rel_err,
    }
}
