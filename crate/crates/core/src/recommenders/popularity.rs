use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{rank_order, RecommendationList, ScoredItem};
use crate::dataset::{InteractionSet, ItemCatalog};
use crate::error::{Error, Result};
use crate::ids::ItemId;

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(())
}

/// Scores every unseen catalog item by its training rating count.
pub fn most_popular(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    n: usize,
) -> Result<Vec<RecommendationList>> {
    check_n(n)?;
    let profiles = train.profiles();
    let users = train.users();
    // Catalog order is already (popularity desc, id asc).
    Ok(users
        .par_iter()
        .map(|user| {
            let seen = &profiles[user];
            let entries = catalog
                .entries()
                .iter()
                .filter(|e| !seen.contains(&e.item))
                .take(n)
                .map(|e| ScoredItem {
                    item: e.item.clone(),
                    score: e.popularity as f64,
                })
                .collect();
            RecommendationList::new(user.clone(), entries)
        })
        .collect())
}

/// Uniform random scores in (0, 1). Each user draws from its own ChaCha
/// stream so results do not depend on scheduling.
pub fn random_guess(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    n: usize,
    seed: u64,
) -> Result<Vec<RecommendationList>> {
    check_n(n)?;
    let profiles = train.profiles();
    let users = train.users();
    let mut items: Vec<&ItemId> = catalog.entries().iter().map(|e| &e.item).collect();
    items.sort();
    Ok(users
        .par_iter()
        .enumerate()
        .map(|(idx, user)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let seen = &profiles[user];
            let mut entries: Vec<ScoredItem> = Vec::with_capacity(items.len());
            for item in &items {
                let mut score: f64 = rng.random();
                while score == 0.0 {
                    score = rng.random();
                }
                if !seen.contains(*item) {
                    entries.push(ScoredItem {
                        item: (*item).clone(),
                        score,
                    });
                }
            }
            if entries.len() > n {
                entries.select_nth_unstable_by(n - 1, rank_order);
                entries.truncate(n);
            }
            entries.sort_by(rank_order);
            RecommendationList::new(user.clone(), entries)
        })
        .collect())
}

/// Pads short lists with unseen popular items scored strictly below the
/// list's last score.
pub(crate) fn backfill(
    lists: &mut [RecommendationList],
    train: &InteractionSet,
    catalog: &ItemCatalog,
    n: usize,
) {
    let profiles = train.profiles();
    for list in lists.iter_mut() {
        if list.len() >= n {
            continue;
        }
        let floor = list.entries.last().map_or(0.0, |e| e.score);
        let present: HashSet<ItemId> = list.items().cloned().collect();
        let seen = profiles.get(&list.user);
        let mut step = 1.0;
        for e in catalog.entries() {
            if list.len() >= n {
                break;
            }
            if present.contains(&e.item) || seen.is_some_and(|s| s.contains(&e.item)) {
                continue;
            }
            list.entries.push(ScoredItem {
                item: e.item.clone(),
                score: floor - step,
            });
            step += 1.0;
        }
    }
}
