//! Environment simulators: the reward function and (deterministic)
//! transition of the interactive recommendation process.

mod mf;
mod synthetic;

pub use mf::{MatrixFactorization, MfHyper};
pub use synthetic::{SyntheticConfig, SyntheticEnv};

use crate::data::RatingScale;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A user's interaction prefix: warm-up history followed by every
/// simulated `(item, rating)` appended so far.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub user: usize,
    pub events: Vec<(usize, T)>,
}

impl<T: Scalar> State<T> {
    pub fn new(user: usize, events: Vec<(usize, T)>) -> Self {
        State { user, events }
    }

    /// A copy of `self` with one more event.
    pub fn appended(&self, item: usize, rating: T) -> Self {
        let mut events = Vec::with_capacity(self.events.len() + 1);
        events.extend_from_slice(&self.events);
        events.push((item, rating));
        State {
            user: self.user,
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Answers "what rating does this user give `item` in this state".
///
/// `rate` must be pure and return values inside `scale()`; `step` appends
/// the rated item and changes nothing else.
pub trait Environment<T: Scalar>: Sync {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn scale(&self) -> RatingScale;

    fn rate(&self, state: &State<T>, item: usize) -> T;

    /// Ratings for every item in `state`; `out.len()` must equal `num_items()`.
    fn rate_all(&self, state: &State<T>, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.num_items());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rate(state, i);
        }
    }

    fn reset(&self, user: usize, warmup: &[(usize, T)]) -> State<T> {
        State::new(user, warmup.to_vec())
    }

    fn step(&self, state: &State<T>, item: usize) -> Result<(T, State<T>)> {
        if item >= self.num_items() {
            return Err(Error::InvalidArgument(format!(
                "item {item} out of range (num_items = {})",
                self.num_items()
            )));
        }
        let r = self.rate(state, item);
        Ok((r, state.appended(item, r)))
    }
}

impl<T: Scalar, E: Environment<T> + ?Sized> Environment<T> for &E {
    fn num_users(&self) -> usize {
        (**self).num_users()
    }
    fn num_items(&self) -> usize {
        (**self).num_items()
    }
    fn scale(&self) -> RatingScale {
        (**self).scale()
    }
    fn rate(&self, state: &State<T>, item: usize) -> T {
        (**self).rate(state, item)
    }
    fn rate_all(&self, state: &State<T>, out: &mut [T]) {
        (**self).rate_all(state, out)
    }
    fn reset(&self, user: usize, warmup: &[(usize, T)]) -> State<T> {
        (**self).reset(user, warmup)
    }
    fn step(&self, state: &State<T>, item: usize) -> Result<(T, State<T>)> {
        (**self).step(state, item)
    }
}
