use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionSet, Split};
use crate::error::{Error, Result};
use crate::ids::UserId;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Drop users and items below the threshold once, counted on the input.
    #[default]
    SinglePass,
    /// Repeat until every remaining user and item meets the threshold.
    IterativeCore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub removed: usize,
}

fn report(set: &InteractionSet, before: usize) -> FilterReport {
    FilterReport {
        users: set.users().len(),
        items: set.items().len(),
        ratings: set.len(),
        removed: before - set.len(),
    }
}

fn one_pass(set: &InteractionSet, min_ratings: usize) -> InteractionSet {
    let users = set.user_counts();
    let items = set.item_counts();
    let min = min_ratings as u64;
    let kept: Vec<Interaction> = set
        .iter()
        .filter(|x| users[&x.user] >= min && items[&x.item] >= min)
        .cloned()
        .collect();
    InteractionSet::new(kept, set.split())
}

/// Removes every user and every item that has fewer than `min_ratings`
/// ratings in the input, in a single simultaneous pass.
pub fn filter_min_activity(
    set: &InteractionSet,
    min_ratings: usize,
) -> Result<(InteractionSet, FilterReport)> {
    if min_ratings == 0 {
        return Err(Error::invalid("min_ratings must be at least 1"));
    }
    let out = one_pass(set, min_ratings);
    if out.is_empty() {
        return Err(Error::Empty("no interactions survive min-activity filtering".into()));
    }
    let rep = report(&out, set.len());
    Ok((out, rep))
}

/// Iterated variant of [`filter_min_activity`] producing a k-core.
pub fn filter_k_core(
    set: &InteractionSet,
    min_ratings: usize,
) -> Result<(InteractionSet, FilterReport)> {
    if min_ratings == 0 {
        return Err(Error::invalid("min_ratings must be at least 1"));
    }
    let mut current = set.clone();
    loop {
        let next = one_pass(&current, min_ratings);
        if next.len() == current.len() {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        return Err(Error::Empty("no interactions survive k-core filtering".into()));
    }
    let rep = report(&current, set.len());
    Ok((current, rep))
}

/// Per-user random split. Each user keeps `round(fraction * n)` interactions
/// in train (at least one); single-interaction users go entirely to train.
/// Original record order is preserved within each output set.
pub fn split_train_test(
    set: &InteractionSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(InteractionSet, InteractionSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_user: BTreeMap<&UserId, Vec<usize>> = BTreeMap::new();
    for (idx, x) in set.iter().enumerate() {
        by_user.entry(&x.user).or_default().push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; set.len()];
    for indices in by_user.values_mut() {
        let n = indices.len();
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n);
        indices.shuffle(&mut rng);
        for &idx in &indices[..n_train] {
            is_train[idx] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (idx, x) in set.iter().enumerate() {
        if is_train[idx] {
            train.push(x.clone());
        } else {
            test.push(x.clone());
        }
    }
    Ok((
        InteractionSet::new(train, Split::Train),
        InteractionSet::new(test, Split::Test),
    ))
}
