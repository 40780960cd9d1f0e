use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qnet::QNetwork;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulator::{Environment, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Random,
    Pop,
    ValueGreedy,
}

/// Items excluded from recommendation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemMask {
    masked: Vec<bool>,
    count: usize,
}

impl ItemMask {
    pub fn new(num_items: usize) -> Self {
        ItemMask {
            masked: vec![false; num_items],
            count: 0,
        }
    }

    pub fn insert(&mut self, item: usize) {
        if !self.masked[item] {
            self.masked[item] = true;
            self.count += 1;
        }
    }

    pub fn contains(&self, item: usize) -> bool {
        self.masked[item]
    }

    pub fn num_items(&self) -> usize {
        self.masked.len()
    }

    pub fn available(&self) -> usize {
        self.masked.len() - self.count
    }
}

/// Lowest-index maximiser over unmasked items.
pub fn argmax_unmasked<T: Scalar>(scores: &[T], mask: &ItemMask) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if mask.contains(i) {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

fn no_candidates() -> Error {
    Error::NoCandidates("every item is masked".into())
}

/// A recommendation policy `state -> item`.
pub trait Policy<T: Scalar>: Sync {
    fn name(&self) -> &str;
    fn act(&self, state: &State<T>, mask: &ItemMask, rng: &mut ChaCha8Rng) -> Result<usize>;
}

/// Per-item scores used by [`GreedyPolicy`].
pub trait Scorer<T: Scalar>: Sync {
    fn num_items(&self) -> usize;
    fn score_all(&self, state: &State<T>, out: &mut [T]);
}

impl<T: Scalar> Scorer<T> for QNetwork<T> {
    fn num_items(&self) -> usize {
        self.num_items
    }

    fn score_all(&self, state: &State<T>, out: &mut [T]) {
        QNetwork::score_all(self, &state.events, out)
    }
}

/// Scores items by the environment's true one-step reward.
pub struct EnvScorer<E>(pub E);

impl<T: Scalar, E: Environment<T>> Scorer<T> for EnvScorer<E> {
    fn num_items(&self) -> usize {
        self.0.num_items()
    }

    fn score_all(&self, state: &State<T>, out: &mut [T]) {
        self.0.rate_all(state, out)
    }
}

pub struct RandomPolicy {
    pub num_items: usize,
}

impl<T: Scalar> Policy<T> for RandomPolicy {
    fn name(&self) -> &str {
        "Random"
    }

    fn act(&self, _state: &State<T>, mask: &ItemMask, rng: &mut ChaCha8Rng) -> Result<usize> {
        let n = mask.available();
        if n == 0 {
            return Err(no_candidates());
        }
        let mut k = rng.gen_range(0..n);
        for i in 0..self.num_items {
            if !mask.contains(i) {
                if k == 0 {
                    return Ok(i);
                }
                k -= 1;
            }
        }
        unreachable!("mask count out of sync")
    }
}

pub struct PopPolicy {
    pub popularity: Vec<u64>,
}

impl<T: Scalar> Policy<T> for PopPolicy {
    fn name(&self) -> &str {
        "POP"
    }

    fn act(&self, _state: &State<T>, mask: &ItemMask, _rng: &mut ChaCha8Rng) -> Result<usize> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &p) in self.popularity.iter().enumerate() {
            if mask.contains(i) {
                continue;
            }
            match best {
                Some((_, b)) if p <= b => {}
                _ => best = Some((i, p)),
            }
        }
        best.map(|(i, _)| i).ok_or_else(no_candidates)
    }
}

pub struct GreedyPolicy<S> {
    pub name: String,
    pub scorer: S,
}

impl<S> GreedyPolicy<S> {
    pub fn new(name: impl Into<String>, scorer: S) -> Self {
        GreedyPolicy {
            name: name.into(),
            scorer,
        }
    }
}

impl<T: Scalar, S: Scorer<T>> Policy<T> for GreedyPolicy<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, state: &State<T>, mask: &ItemMask, _rng: &mut ChaCha8Rng) -> Result<usize> {
        let mut scores = vec![T::zero(); self.scorer.num_items()];
        self.scorer.score_all(state, &mut scores);
        argmax_unmasked(&scores, mask).ok_or_else(no_candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    struct Fixed(Vec<f64>);

    impl Scorer<f64> for Fixed {
        fn num_items(&self) -> usize {
            self.0.len()
        }
        fn score_all(&self, _: &State<f64>, out: &mut [f64]) {
            out.copy_from_slice(&self.0)
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn pop_ties_to_lower_index() {
        let p = PopPolicy {
            popularity: vec![5, 9, 9, 1],
        };
        let s = State::<f64>::new(0, vec![]);
        assert_eq!(p.act(&s, &ItemMask::new(4), &mut rng()).unwrap(), 1);
        let mut m = ItemMask::new(4);
        m.insert(1);
        assert_eq!(Policy::<f64>::act(&p, &s, &m, &mut rng()).unwrap(), 2);
    }

    #[test]
    fn greedy_respects_mask() {
        let p = GreedyPolicy::new("g", Fixed(vec![0.1, 0.9, 0.3]));
        let mut m = ItemMask::new(3);
        m.insert(1);
        let s = State::new(0, vec![]);
        assert_eq!(p.act(&s, &m, &mut rng()).unwrap(), 2);
    }

    #[test]
    fn greedy_ties_to_lower_index() {
        let p = GreedyPolicy::new("g", Fixed(vec![0.5, 0.9, 0.9]));
        assert_eq!(p.act(&State::new(0, vec![]), &ItemMask::new(3), &mut rng()).unwrap(), 1);
    }

    #[test]
    fn empty_candidates_error() {
        let mut m = ItemMask::new(2);
        m.insert(0);
        m.insert(1);
        let s = State::<f64>::new(0, vec![]);
        assert!(RandomPolicy { num_items: 2 }.act(&s, &m, &mut rng()).is_err());
        assert!(Policy::<f64>::act(&PopPolicy { popularity: vec![1, 2] }, &s, &m, &mut rng()).is_err());
        assert!(GreedyPolicy::new("g", Fixed(vec![1.0, 2.0])).act(&s, &m, &mut rng()).is_err());
    }

    #[test]
    fn random_frequencies_within_three_sigma() {
        // 6 items, 3 masked; 30,000 draws. Binomial sd = sqrt(n p (1-p)).
        let mut m = ItemMask::new(6);
        for i in [0, 2, 4] {
            m.insert(i);
        }
        let p = RandomPolicy { num_items: 6 };
        let s = State::<f64>::new(0, vec![]);
        let mut r = ChaCha8Rng::seed_from_u64(123);
        let n = 30_000usize;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[p.act(&s, &m, &mut r).unwrap()] += 1;
        }
        let expected = n as f64 / 3.0;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for i in [1, 3, 5] {
            assert!((counts[i] as f64 - expected).abs() < 3.0 * sd, "{counts:?}");
        }
        assert_eq!(counts[0] + counts[2] + counts[4], 0);
    }
}
