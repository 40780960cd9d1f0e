use crate::data::UserHistory;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One logged step `(s_t, a_t, r_t, s_{t+1})`. States borrow prefixes of the
/// owning episode, so a log of N steps costs O(N) memory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<'a, T> {
    pub user: usize,
    pub state: &'a [(usize, T)],
    pub action: usize,
    pub reward: T,
    pub next_state: &'a [(usize, T)],
    pub terminal: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TransitionLog<T> {
    episodes: Vec<(usize, Vec<(usize, T)>)>,
    /// `(episode, position)` of each transition's action.
    index: Vec<(u32, u32)>,
}

/// Unroll every history after its first `warmup` events. Rewards are the
/// logged ratings; the last logged event of each user is terminal.
pub fn build_transitions<'a, T, I>(histories: I, warmup: usize) -> Result<TransitionLog<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a UserHistory>,
{
    if warmup == 0 {
        return Err(Error::InvalidArgument("transition warm-up must be >= 1".into()));
    }
    let mut log = TransitionLog {
        episodes: Vec::new(),
        index: Vec::new(),
    };
    for h in histories {
        if h.len() <= warmup {
            continue;
        }
        let ep = log.episodes.len() as u32;
        log.episodes.push((
            h.user,
            h.interactions.iter().map(|x| (x.item, T::of(x.rating))).collect(),
        ));
        log.index.extend((warmup..h.len()).map(|j| (ep, j as u32)));
    }
    Ok(log)
}

impl<T: Scalar> TransitionLog<T> {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, i: usize) -> Transition<'_, T> {
        let (ep, j) = self.index[i];
        let (user, events) = &self.episodes[ep as usize];
        let j = j as usize;
        Transition {
            user: *user,
            state: &events[..j],
            action: events[j].0,
            reward: events[j].1,
            next_state: &events[..=j],
            terminal: j + 1 == events.len(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition<'_, T>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.iter().map(|t| t.reward.as_f64()).sum::<f64>() / self.len() as f64
    }
}
