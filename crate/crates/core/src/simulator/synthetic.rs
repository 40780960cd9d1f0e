use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, State};
use crate::data::{Dataset, IdMap, Interaction, RatingScale, UserHistory};
use crate::error::{Error, Result};
use crate::scalar::{clamp, Scalar};

/// Base utilities live on this grid so that cumulative rewards are exact in
/// both `f32` and `f64` and planner comparisons never hinge on rounding.
pub const UTILITY_GRID: f64 = 1.0 / 4096.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_genres: usize,
    /// Rating units lost per same-genre event inside the window.
    pub lambda: f64,
    pub window: usize,
    pub scale: RatingScale,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 100,
            num_items: 200,
            num_genres: 3,
            lambda: 2.0,
            window: 5,
            scale: RatingScale {
                min: 1.0,
                max: 3.0,
                positive_threshold: 2.0,
            },
            seed: 0,
        }
    }
}

/// Genre-fatigue environment: `clamp(base[u][i] - lambda * n_same_genre)`
/// where `n_same_genre` counts the last `window` events sharing `i`'s genre.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEnv<T> {
    pub config: SyntheticConfig,
    pub genre_of: Vec<usize>,
    /// Row-major `num_users x num_items`.
    pub base_utility: Vec<T>,
}

impl<T: Scalar> SyntheticEnv<T> {
    /// Genres round-robin over items; base utilities i.i.d. uniform over
    /// `[scale.min + 1, scale.max]` (on [`UTILITY_GRID`]) from the seed.
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        config.scale.validate()?;
        if config.num_genres == 0 || config.num_items == 0 || config.num_users == 0 {
            return Err(Error::InvalidArgument(
                "synthetic environment needs at least one user, item and genre".into(),
            ));
        }
        if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", config.lambda)));
        }
        let lo = config.scale.min + 1.0;
        if lo > config.scale.max {
            return Err(Error::InvalidArgument(
                "synthetic scale needs max - min >= 1".into(),
            ));
        }
        let steps = ((config.scale.max - lo) / UTILITY_GRID).floor() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let base_utility = (0..config.num_users * config.num_items)
            .map(|_| T::of(lo + rng.gen_range(0..=steps) as f64 * UTILITY_GRID))
            .collect();
        Ok(SyntheticEnv {
            genre_of: (0..config.num_items).map(|i| i % config.num_genres).collect(),
            base_utility,
            config,
        })
    }

    pub fn base(&self, user: usize, item: usize) -> T {
        self.base_utility[user * self.config.num_items + item]
    }

    /// Events among the last `window` of `events` whose genre matches `item`.
    pub fn same_genre_count(&self, events: &[(usize, T)], item: usize) -> usize {
        let g = self.genre_of[item];
        let start = events.len().saturating_sub(self.config.window);
        events[start..].iter().filter(|(j, _)| self.genre_of[*j] == g).count()
    }

    /// Logged behaviour for every user: `history_len` distinct items drawn
    /// uniformly at random, each rated by this environment in sequence.
    /// Item and user ids are the environment's own indices.
    pub fn logged_dataset(&self, history_len: usize, seed: u64) -> Result<Dataset> {
        let n_items = self.config.num_items;
        if history_len > n_items {
            return Err(Error::InvalidArgument(format!(
                "history length {history_len} exceeds item count {n_items}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items: Vec<usize> = (0..n_items).collect();
        let mut users = Vec::with_capacity(self.config.num_users);
        for u in 0..self.config.num_users {
            items.shuffle(&mut rng);
            let mut state = State::new(u, Vec::with_capacity(history_len));
            let mut interactions = Vec::with_capacity(history_len);
            for (t, &i) in items[..history_len].iter().enumerate() {
                let r = self.rate(&state, i);
                state.events.push((i, r));
                interactions.push(Interaction {
                    item: i,
                    rating: r.as_f64(),
                    timestamp: t as u64,
                });
            }
            users.push(UserHistory { user: u, interactions });
        }
        let mut ds = Dataset {
            users,
            num_items: n_items,
            scale: self.config.scale,
            item_popularity: Vec::new(),
            user_ids: IdMap::from_raw((0..self.config.num_users as u64).collect())?,
            item_ids: IdMap::from_raw((0..n_items as u64).collect())?,
        };
        let all: Vec<usize> = (0..ds.num_users()).collect();
        ds.set_training_users(&all);
        Ok(ds)
    }
}

impl<T: Scalar> Environment<T> for SyntheticEnv<T> {
    fn num_users(&self) -> usize {
        self.config.num_users
    }

    fn num_items(&self) -> usize {
        self.config.num_items
    }

    fn scale(&self) -> RatingScale {
        self.config.scale
    }

    fn rate(&self, state: &State<T>, item: usize) -> T {
        let n = self.same_genre_count(&state.events, item);
        let fatigue = T::of(self.config.lambda) * T::of(n as f64);
        clamp(
            self.base(state.user, item) - fatigue,
            T::of(self.config.scale.min),
            T::of(self.config.scale.max),
        )
    }

    fn rate_all(&self, state: &State<T>, out: &mut [T]) {
        let g = self.config.num_genres;
        let mut counts = vec![0usize; g];
        let start = state.events.len().saturating_sub(self.config.window);
        for (j, _) in &state.events[start..] {
            counts[self.genre_of[*j]] += 1;
        }
        let lambda = T::of(self.config.lambda);
        let (lo, hi) = (T::of(self.config.scale.min), T::of(self.config.scale.max));
        let row = &self.base_utility[state.user * self.config.num_items..][..self.config.num_items];
        for (i, o) in out.iter_mut().enumerate() {
            *o = clamp(row[i] - lambda * T::of(counts[self.genre_of[i]] as f64), lo, hi);
        }
    }
}
