//! Rating data, continent metadata, the item catalog and target distributions.

mod catalog;
mod continent;
mod filter;
mod parse;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use catalog::{
    assign_groups, build_catalog, target_continent, target_popularity, CatalogEntry, ItemCatalog, PopGroup,
    TargetDistribution, TargetMode,
};
pub use continent::{
    load_continent_map, parse_continent_map, write_continent_map, Continent, ContinentMap,
    ContinentSet,
};
pub use filter::{
    filter_k_core, filter_min_activity, split_train_test, FilterMode, FilterReport,
    DEFAULT_TRAIN_FRACTION,
};
pub use parse::{
    parse_interactions, parse_interactions_from, write_interactions_tsv, Format, ParseOutcome,
};

use crate::ids::{ItemId, UserId};

/// One rating record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
}

impl Interaction {
    pub fn new(user: impl Into<UserId>, item: impl Into<ItemId>, rating: f64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

/// A bag of interactions tagged with the split it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    interactions: Vec<Interaction>,
    split: Split,
}

impl InteractionSet {
    pub fn new(interactions: Vec<Interaction>, split: Split) -> Self {
        Self {
            interactions,
            split,
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interaction> {
        self.interactions.iter()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn into_interactions(self) -> Vec<Interaction> {
        self.interactions
    }

    /// Distinct users in ascending id order.
    pub fn users(&self) -> Vec<UserId> {
        let set: BTreeSet<&UserId> = self.interactions.iter().map(|x| &x.user).collect();
        set.into_iter().cloned().collect()
    }

    /// Distinct items in ascending id order.
    pub fn items(&self) -> Vec<ItemId> {
        let set: BTreeSet<&ItemId> = self.interactions.iter().map(|x| &x.item).collect();
        set.into_iter().cloned().collect()
    }

    /// Items rated by each user (Φ_u).
    pub fn profiles(&self) -> HashMap<UserId, HashSet<ItemId>> {
        let mut out: HashMap<UserId, HashSet<ItemId>> = HashMap::new();
        for x in &self.interactions {
            out.entry(x.user.clone()).or_default().insert(x.item.clone());
        }
        out
    }

    /// Rating count per item.
    pub fn item_counts(&self) -> HashMap<ItemId, u64> {
        let mut out = HashMap::new();
        for x in &self.interactions {
            *out.entry(x.item.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Rating count per user.
    pub fn user_counts(&self) -> HashMap<UserId, u64> {
        let mut out = HashMap::new();
        for x in &self.interactions {
            *out.entry(x.user.clone()).or_insert(0) += 1;
        }
        out
    }
}

impl<'a> IntoIterator for &'a InteractionSet {
    type Item = &'a Interaction;
    type IntoIter = std::slice::Iter<'a, Interaction>;

    fn into_iter(self) -> Self::IntoIter {
        self.interactions.iter()
    }
}
