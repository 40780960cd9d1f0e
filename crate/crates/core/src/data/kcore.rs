use std::collections::HashMap;

use super::parse::RawRating;

/// Iteratively drop users and items with fewer than `k` records until every
/// survivor has at least `k`. Record order is preserved.
pub fn k_core_filter(ratings: &[RawRating], k: usize) -> Vec<RawRating> {
    let mut alive = vec![true; ratings.len()];
    loop {
        let mut user_counts: HashMap<u64, usize> = HashMap::new();
        let mut item_counts: HashMap<u64, usize> = HashMap::new();
        for (r, _) in ratings.iter().zip(&alive).filter(|(_, a)| **a) {
            *user_counts.entry(r.user).or_default() += 1;
            *item_counts.entry(r.item).or_default() += 1;
        }
        let mut changed = false;
        for (r, a) in ratings.iter().zip(alive.iter_mut()) {
            if *a && (user_counts[&r.user] < k || item_counts[&r.item] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    ratings
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| *r)
        .collect()
}
