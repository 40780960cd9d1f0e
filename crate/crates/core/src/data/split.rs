use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.85,
            validation: 0.05,
            test: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of user indices, then contiguous slicing.
///
/// Sizes: `train = round(n * f_train)`, `validation = floor(n * f_val)`,
/// the remainder goes to test. Each part keeps at least one user.
pub fn split_users(num_users: usize, fractions: SplitFractions, seed: u64) -> Result<Split> {
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be in [0, 1] and sum to 1, got {fractions:?}"
        )));
    }
    if num_users < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 users to split, got {num_users}"
        )));
    }
    let n = num_users as f64;
    let n_train = ((n * train).round() as usize).clamp(1, num_users - 2);
    let n_val = (((n * validation) + 1e-9).floor() as usize).clamp(1, num_users - n_train - 1);

    let mut order: Vec<usize> = (0..num_users).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let test_part = order.split_off(n_train + n_val);
    let val_part = order.split_off(n_train);
    Ok(Split {
        train: order,
        validation: val_part,
        test: test_part,
    })
}

/// Per-user chronological holdout: the last `fraction` of each history
/// (rounded, at least one when the user has two or more interactions) goes to
/// the held-out set. Returns `(fit, held_out)` as `(user, item, rating)`.
pub fn chronological_holdout(
    ds: &Dataset,
    fraction: f64,
) -> (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
    let mut fit = Vec::with_capacity(ds.num_interactions());
    let mut held = Vec::new();
    for h in &ds.users {
        let len = h.len();
        let n_hold = if len < 2 {
            0
        } else {
            ((len as f64 * fraction).round() as usize).clamp(1, len - 1)
        };
        for (j, x) in h.interactions.iter().enumerate() {
            let t = (h.user, x.item, x.rating);
            if j + n_hold >= len {
                held.push(t);
            } else {
                fit.push(t);
            }
        }
    }
    (fit, held)
}
