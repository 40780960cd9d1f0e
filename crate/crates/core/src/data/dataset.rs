use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::parse::RawRating;
use crate::error::{Error, Result};

/// Rating bounds plus the level an item must strictly exceed to count as
/// positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub positive_threshold: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64, positive_threshold: f64) -> Result<Self> {
        let s = RatingScale {
            min,
            max,
            positive_threshold,
        };
        s.validate()?;
        Ok(s)
    }

    /// The 1..5 star scale with positives above 4.
    pub fn five_star() -> Self {
        RatingScale {
            min: 1.0,
            max: 5.0,
            positive_threshold: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min.is_finite()
            && self.max.is_finite()
            && self.positive_threshold.is_finite()
            && self.min < self.positive_threshold
            && self.positive_threshold <= self.max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "rating scale requires min < positive_threshold <= max, got {self:?}"
            )))
        }
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    pub fn is_positive(&self, rating: f64) -> bool {
        rating > self.positive_threshold
    }

    /// Map `rating` into `[0, 1]`.
    pub fn normalize(&self, rating: f64) -> f64 {
        (rating - self.min) / (self.max - self.min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub item: usize,
    pub rating: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserHistory {
    pub user: usize,
    pub interactions: Vec<Interaction>,
}

impl UserHistory {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }
}

/// Bijection between raw file identifiers and dense 0-based indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    raw: Vec<u64>,
    dense: HashMap<u64, usize>,
}

impl IdMap {
    pub fn from_raw(raw: Vec<u64>) -> Result<Self> {
        let mut dense = HashMap::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            if dense.insert(*r, i).is_some() {
                return Err(Error::Format(format!("duplicate raw id {r} in id map")));
            }
        }
        Ok(IdMap { raw, dense })
    }

    fn intern(&mut self, raw: u64) -> usize {
        let next = self.raw.len();
        *self.dense.entry(raw).or_insert_with(|| {
            self.raw.push(raw);
            next
        })
    }

    pub fn dense(&self, raw: u64) -> Option<usize> {
        self.dense.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> Option<u64> {
        self.raw.get(dense).copied()
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub users: Vec<UserHistory>,
    pub num_items: usize,
    pub scale: RatingScale,
    /// Interaction counts per item over the training users (all users until
    /// [`Dataset::set_training_users`] is called).
    pub item_popularity: Vec<u64>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

/// Group `ratings` by user, assign dense ids in first-appearance order and
/// sort every history by timestamp (stable, so file order breaks ties).
pub fn build_dataset(ratings: &[RawRating], scale: RatingScale) -> Result<Dataset> {
    scale.validate()?;
    let mut user_ids = IdMap::default();
    let mut item_ids = IdMap::default();
    let mut users: Vec<UserHistory> = Vec::new();
    for r in ratings {
        if !scale.contains(r.rating) {
            return Err(Error::RatingOutOfScale {
                user: r.user,
                item: r.item,
                rating: r.rating,
                timestamp: r.timestamp,
                min: scale.min,
                max: scale.max,
            });
        }
        let u = user_ids.intern(r.user);
        let i = item_ids.intern(r.item);
        if u == users.len() {
            users.push(UserHistory {
                user: u,
                interactions: Vec::new(),
            });
        }
        users[u].interactions.push(Interaction {
            item: i,
            rating: r.rating,
            timestamp: r.timestamp,
        });
    }
    for h in &mut users {
        h.interactions.sort_by_key(|x| x.timestamp);
    }
    let mut ds = Dataset {
        num_items: item_ids.len(),
        users,
        scale,
        item_popularity: Vec::new(),
        user_ids,
        item_ids,
    };
    let all: Vec<usize> = (0..ds.users.len()).collect();
    ds.set_training_users(&all);
    Ok(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub avg_interactions: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10} {:>10} {:>12} {:>10}", "", "# Users", "# Items", "# Int", "Avg.Int")?;
        write!(
            f,
            "{:<10} {:>10} {:>10} {:>12} {:>10.2}",
            "dataset", self.num_users, self.num_items, self.num_interactions, self.avg_interactions
        )
    }
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.users.iter().map(|u| u.len()).sum()
    }

    pub fn stats(&self) -> DatasetStats {
        compute_stats(self)
    }

    /// Recompute `item_popularity` from the given users only.
    pub fn set_training_users(&mut self, train: &[usize]) {
        let mut pop = vec![0u64; self.num_items];
        for &u in train {
            for x in &self.users[u].interactions {
                pop[x.item] += 1;
            }
        }
        self.item_popularity = pop;
    }

    /// Check every structural invariant; used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        if self.user_ids.len() != self.users.len() || self.item_ids.len() != self.num_items {
            return Err(Error::Format("id map sizes disagree with dataset".into()));
        }
        if self.item_popularity.len() != self.num_items {
            return Err(Error::Format("popularity table has wrong length".into()));
        }
        for (u, h) in self.users.iter().enumerate() {
            if h.user != u {
                return Err(Error::Format(format!("user {u} stored out of order")));
            }
            let mut prev = 0u64;
            for x in &h.interactions {
                if x.item >= self.num_items || !self.scale.contains(x.rating) || x.timestamp < prev {
                    return Err(Error::Format(format!("user {u} has an invalid interaction")));
                }
                prev = x.timestamp;
            }
        }
        Ok(())
    }
}

pub fn compute_stats(ds: &Dataset) -> DatasetStats {
    let num_users = ds.num_users();
    let num_interactions = ds.num_interactions();
    DatasetStats {
        num_users,
        num_items: ds.num_items,
        num_interactions,
        avg_interactions: if num_users == 0 {
            0.0
        } else {
            num_interactions as f64 / num_users as f64
        },
    }
}
