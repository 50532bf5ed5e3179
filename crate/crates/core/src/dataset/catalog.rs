use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Continent, ContinentMap, ContinentSet, InteractionSet};
use crate::error::{Error, Result};
use crate::ids::ItemId;

/// Popularity group: g1 holds the most-rated 10% of items, g2 the next 10%,
/// g3 the long tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PopGroup {
    #[serde(rename = "g1")]
    G1,
    #[serde(rename = "g2")]
    G2,
    #[serde(rename = "g3")]
    G3,
}

impl PopGroup {
    pub const ALL: [PopGroup; 3] = [PopGroup::G1, PopGroup::G2, PopGroup::G3];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> PopGroup {
        Self::ALL[i]
    }
}

impl fmt::Display for PopGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PopGroup::G1 => "g1",
            PopGroup::G2 => "g2",
            PopGroup::G3 => "g3",
        })
    }
}

impl FromStr for PopGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g1" => Ok(PopGroup::G1),
            "g2" => Ok(PopGroup::G2),
            "g3" => Ok(PopGroup::G3),
            other => Err(Error::invalid(format!("unknown popularity group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub item: ItemId,
    pub continents: ContinentSet,
    /// Number of training ratings.
    pub popularity: u64,
    pub group: PopGroup,
}

/// Items eligible for recommendation, ordered by popularity descending then
/// id ascending.
#[derive(Debug, Clone)]
pub struct ItemCatalog {
    entries: Vec<CatalogEntry>,
    index: HashMap<ItemId, usize>,
    dropped: Vec<ItemId>,
}

impl ItemCatalog {
    /// Builds a catalog from explicit entries (fixtures, pinned data).
    /// Entries are re-sorted into catalog order; groups are taken as given.
    pub fn from_entries(mut entries: Vec<CatalogEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("catalog has no items".into()));
        }
        entries.sort_by(|a, b| b.popularity.cmp(&a.popularity).then_with(|| a.item.cmp(&b.item)));
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.continents.is_empty() {
                return Err(Error::invalid(format!("item {} has no continent", e.item)));
            }
            if index.insert(e.item.clone(), i).is_some() {
                return Err(Error::invalid(format!("item {} listed twice", e.item)));
            }
        }
        Ok(Self {
            entries,
            index,
            dropped: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, item: &ItemId) -> Option<&CatalogEntry> {
        self.index.get(item).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, item: &ItemId) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn entry(&self, idx: usize) -> &CatalogEntry {
        &self.entries[idx]
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.index.contains_key(item)
    }

    /// Training items dropped for lack of continent data, ascending id.
    pub fn dropped(&self) -> &[ItemId] {
        &self.dropped
    }

    /// |Φ^g| for each group.
    pub fn group_sizes(&self) -> [usize; PopGroup::COUNT] {
        let mut sizes = [0; PopGroup::COUNT];
        for e in &self.entries {
            sizes[e.group.index()] += 1;
        }
        sizes
    }

    /// |Φ^c| for each continent; multi-continent items count for each.
    pub fn continent_sizes(&self) -> [usize; Continent::COUNT] {
        let mut sizes = [0; Continent::COUNT];
        for e in &self.entries {
            for c in e.continents.iter() {
                sizes[c.index()] += 1;
            }
        }
        sizes
    }
}

/// Builds the catalog from training data: items lacking continent data are
/// dropped, popularity is the training rating count, and the first
/// `ceil(0.1 m)` items go to g1, the next `ceil(0.1 m)` to g2, the rest to g3.
pub fn build_catalog(train: &InteractionSet, continents: &ContinentMap) -> Result<ItemCatalog> {
    if train.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let counts = train.item_counts();
    let mut entries = Vec::with_capacity(counts.len());
    let mut dropped = Vec::new();
    for (item, popularity) in counts {
        match continents.get(&item) {
            Some(set) if !set.is_empty() => entries.push(CatalogEntry {
                item,
                continents: *set,
                popularity,
                group: PopGroup::G3,
            }),
            _ => dropped.push(item),
        }
    }
    if entries.is_empty() {
        return Err(Error::Empty("no training item has continent data".into()));
    }
    assign_groups(&mut entries);
    dropped.sort();
    let mut catalog = ItemCatalog::from_entries(entries)?;
    catalog.dropped = dropped;
    Ok(catalog)
}

/// Sorts entries into catalog order and assigns popularity groups: the first
/// `ceil(0.1 m)` go to g1, the next `ceil(0.1 m)` to g2, the rest to g3.
pub fn assign_groups(entries: &mut [CatalogEntry]) {
    entries.sort_by(|a, b| b.popularity.cmp(&a.popularity).then_with(|| a.item.cmp(&b.item)));
    let cut = entries.len().div_ceil(10);
    for (rank, e) in entries.iter_mut().enumerate() {
        e.group = if rank < cut {
            PopGroup::G1
        } else if rank < 2 * cut {
            PopGroup::G2
        } else {
            PopGroup::G3
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Share of catalog items per continent.
    #[default]
    ItemBased,
    /// Share of training ratings per continent.
    RatingBased,
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "item" | "item_based" => Ok(TargetMode::ItemBased),
            "rating" | "rating_based" => Ok(TargetMode::RatingBased),
            other => Err(Error::invalid(format!("unknown target mode {other:?}"))),
        }
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::ItemBased => "item",
            TargetMode::RatingBased => "rating",
        })
    }
}

/// Target shares for continents and popularity groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub mode: TargetMode,
    pub continent: BTreeMap<Continent, f64>,
    pub popgroup: BTreeMap<PopGroup, f64>,
}

impl TargetDistribution {
    pub fn compute(train: &InteractionSet, catalog: &ItemCatalog, mode: TargetMode) -> Result<Self> {
        Ok(Self {
            mode,
            continent: target_continent(train, catalog, mode)?,
            popgroup: target_popularity(catalog)?,
        })
    }

    /// Continent targets indexed by [`Continent::index`]; absent continents are 0.
    pub fn continent_array(&self) -> [f64; Continent::COUNT] {
        let mut out = [0.0; Continent::COUNT];
        for (c, v) in &self.continent {
            out[c.index()] = *v;
        }
        out
    }

    pub fn popgroup_array(&self) -> [f64; PopGroup::COUNT] {
        let mut out = [0.0; PopGroup::COUNT];
        for (g, v) in &self.popgroup {
            out[g.index()] = *v;
        }
        out
    }
}

/// Mean popularity per group, normalized over the three groups.
pub fn target_popularity(catalog: &ItemCatalog) -> Result<BTreeMap<PopGroup, f64>> {
    let mut sums = [0u64; PopGroup::COUNT];
    let sizes = catalog.group_sizes();
    for e in catalog.entries() {
        sums[e.group.index()] += e.popularity;
    }
    let mut means = [0.0; PopGroup::COUNT];
    for g in PopGroup::ALL {
        if sizes[g.index()] == 0 {
            return Err(Error::EmptyGroup(g.to_string()));
        }
        means[g.index()] = sums[g.index()] as f64 / sizes[g.index()] as f64;
    }
    let total: f64 = means.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("catalog items have zero total popularity"));
    }
    Ok(PopGroup::ALL.into_iter().map(|g| (g, means[g.index()] / total)).collect())
}

/// Continent shares of catalog items (item-based) or of training ratings on
/// catalog items (rating-based). Only continents with a non-zero count appear.
pub fn target_continent(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    mode: TargetMode,
) -> Result<BTreeMap<Continent, f64>> {
    let counts: [u64; Continent::COUNT] = match mode {
        TargetMode::ItemBased => catalog.continent_sizes().map(|n| n as u64),
        TargetMode::RatingBased => {
            let mut counts = [0u64; Continent::COUNT];
            for x in train {
                if let Some(e) = catalog.get(&x.item) {
                    for c in e.continents.iter() {
                        counts[c.index()] += 1;
                    }
                }
            }
            counts
        }
    };
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("no continent counts to derive targets from".into()));
    }
    Ok(Continent::ALL
        .into_iter()
        .filter(|c| counts[c.index()] > 0)
        .map(|c| (c, counts[c.index()] as f64 / total as f64))
        .collect())
}
