//! Vanilla top-n recommenders and the list interchange format.

mod bpr;
mod knn;
mod mf;
mod popularity;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bpr::{bpr, bpr_auc, triple_gradient, triple_loss, Bpr, TripleGradient};
pub use knn::{knn, KnnMode, KnnModel};
pub use mf::{biased_mf, BiasedMf};
pub use popularity::{most_popular, random_guess};

use crate::dataset::{ItemCatalog, InteractionSet};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item: ItemId,
    pub score: f64,
}

/// One user's ranked list. Position `p` (1-based) is `entries[p - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: UserId,
    pub entries: Vec<ScoredItem>,
}

impl RecommendationList {
    pub fn new(user: impl Into<UserId>, entries: Vec<ScoredItem>) -> Self {
        Self {
            user: user.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item)
    }

    /// Scores non-increasing, ties broken by ascending item id.
    pub fn is_sorted(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater)
    }
}

/// Ranking order: score descending, then item id ascending.
pub fn rank_order(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.item.cmp(&b.item))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    MostPop,
    Random,
    UserKnn,
    ItemKnn,
    BiasedMf,
    Bpr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::MostPop,
        Algorithm::Random,
        Algorithm::UserKnn,
        Algorithm::ItemKnn,
        Algorithm::BiasedMf,
        Algorithm::Bpr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MostPop => "mostpop",
            Algorithm::Random => "random",
            Algorithm::UserKnn => "userknn",
            Algorithm::ItemKnn => "itemknn",
            Algorithm::BiasedMf => "biasedmf",
            Algorithm::Bpr => "bpr",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

/// Hyperparameters shared by the model-based recommenders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderParams {
    pub k_neighbors: usize,
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Fill KNN lists that lack scoring evidence with popular items.
    pub backfill: bool,
}

impl Default for RecommenderParams {
    fn default() -> Self {
        Self {
            k_neighbors: 50,
            factors: 10,
            lr: 0.01,
            reg: 0.01,
            epochs: 30,
            backfill: false,
        }
    }
}

/// Training curves reported by the model-based recommenders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Training RMSE after each epoch (BiasedMF).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rmse: Vec<f64>,
    /// Mean pairwise loss per epoch (BPR).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pairwise_loss: Vec<f64>,
}

/// Produces vanilla top-n lists for every training user.
pub fn recommend(
    algorithm: Algorithm,
    train: &InteractionSet,
    catalog: &ItemCatalog,
    n: usize,
    seed: u64,
    params: &RecommenderParams,
) -> Result<(Vec<RecommendationList>, FitReport)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(match algorithm {
        Algorithm::MostPop => (most_popular(train, catalog, n)?, FitReport::default()),
        Algorithm::Random => (random_guess(train, catalog, n, seed)?, FitReport::default()),
        Algorithm::UserKnn | Algorithm::ItemKnn => {
            let mode = if algorithm == Algorithm::UserKnn {
                KnnMode::User
            } else {
                KnnMode::Item
            };
            let mut lists = knn(train, catalog, mode, params.k_neighbors, n)?;
            if params.backfill {
                popularity::backfill(&mut lists, train, catalog, n);
            }
            (lists, FitReport::default())
        }
        Algorithm::BiasedMf => {
            let (lists, rmse) = biased_mf(train, catalog, params, seed, n)?;
            (lists, FitReport { rmse, ..Default::default() })
        }
        Algorithm::Bpr => {
            let (lists, pairwise_loss) = bpr(train, catalog, params, seed, n)?;
            (lists, FitReport { pairwise_loss, ..Default::default() })
        }
    })
}

/// Dense view of a training set: users and items indexed in ascending id order.
pub(crate) struct RatingMatrix {
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    pub item_index: HashMap<ItemId, u32>,
    /// Per user: (item index, rating), ascending item index.
    pub rows: Vec<Vec<(u32, f64)>>,
    /// Per item: (user index, rating), ascending user index.
    pub cols: Vec<Vec<(u32, f64)>>,
}

impl RatingMatrix {
    pub fn new(train: &InteractionSet) -> Self {
        let users = train.users();
        let items = train.items();
        let user_index: HashMap<&UserId, u32> =
            users.iter().enumerate().map(|(i, u)| (u, i as u32)).collect();
        let item_index: HashMap<ItemId, u32> =
            items.iter().enumerate().map(|(i, it)| (it.clone(), i as u32)).collect();
        let mut rows = vec![Vec::new(); users.len()];
        let mut cols = vec![Vec::new(); items.len()];
        for x in train {
            let (u, i) = (user_index[&x.user], item_index[&x.item]);
            rows[u as usize].push((i, x.rating));
            cols[i as usize].push((u, x.rating));
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        for c in cols.iter_mut() {
            c.sort_by_key(|e| e.0);
        }
        Self {
            users,
            items,
            item_index,
            rows,
            cols,
        }
    }

    /// Matrix indices of catalog items, in ascending matrix index.
    pub fn candidates(&self, catalog: &ItemCatalog) -> Vec<u32> {
        let mut out: Vec<u32> = catalog
            .entries()
            .iter()
            .filter_map(|e| self.item_index.get(&e.item).copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn seen(&self, user: usize) -> Vec<bool> {
        let mut seen = vec![false; self.items.len()];
        for &(i, _) in &self.rows[user] {
            seen[i as usize] = true;
        }
        seen
    }
}

/// Keeps the `n` best `(matrix item index, score)` pairs. Item indices follow
/// ascending id order, so comparing indices breaks ties by id.
pub(crate) fn top_n(
    matrix: &RatingMatrix,
    user: usize,
    mut scored: Vec<(u32, f64)>,
    n: usize,
) -> Result<RecommendationList> {
    let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0));
    if let Some(bad) = scored.iter().find(|s| !s.1.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite score for item {}",
            matrix.items[bad.0 as usize]
        )));
    }
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, cmp);
        scored.truncate(n);
    }
    scored.sort_by(cmp);
    Ok(RecommendationList {
        user: matrix.users[user].clone(),
        entries: scored
            .into_iter()
            .map(|(i, score)| ScoredItem {
                item: matrix.items[i as usize].clone(),
                score,
            })
            .collect(),
    })
}

/// Writes lists as `user<TAB>rank<TAB>item<TAB>score`, rank starting at 1.
pub fn write_lists_tsv(lists: &[RecommendationList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, lists_to_tsv(lists)).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn lists_to_tsv(lists: &[RecommendationList]) -> String {
    let mut out = String::new();
    for list in lists {
        for (pos, e) in list.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{:?}\n", list.user, pos + 1, e.item, e.score));
        }
    }
    out
}

pub fn read_lists_tsv(path: impl AsRef<Path>) -> Result<Vec<RecommendationList>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lists_tsv(&bytes[..])
}

/// Parses the list TSV. Users keep their first-appearance order; within a
/// user, ranks must be exactly 1..=len and items distinct.
pub fn parse_lists_tsv(reader: impl BufRead) -> Result<Vec<RecommendationList>> {
    let mut order: Vec<UserId> = Vec::new();
    let mut rows: HashMap<UserId, Vec<(usize, ScoredItem)>> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(n + 1, "expected user<TAB>rank<TAB>item<TAB>score"));
        }
        let rank: usize = f[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("bad rank {:?}", f[1])))?;
        let score: f64 = f[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("bad score {:?}", f[3])))?;
        if !score.is_finite() {
            return Err(Error::parse(n + 1, "score must be finite"));
        }
        let user = UserId::new(f[0].trim());
        let entry = (
            rank,
            ScoredItem {
                item: ItemId::new(f[2].trim()),
                score,
            },
        );
        rows.entry(user.clone())
            .or_insert_with(|| {
                order.push(user);
                Vec::new()
            })
            .push(entry);
    }
    let mut lists = Vec::with_capacity(order.len());
    for user in order {
        let mut entries = rows.remove(&user).unwrap_or_default();
        entries.sort_by_key(|e| e.0);
        let mut seen = std::collections::HashSet::new();
        for (expected, (rank, e)) in entries.iter().enumerate() {
            if *rank != expected + 1 {
                return Err(Error::invalid(format!("user {user}: ranks are not 1..=len")));
            }
            if !seen.insert(e.item.clone()) {
                return Err(Error::invalid(format!("user {user}: duplicate item {}", e.item)));
            }
        }
        lists.push(RecommendationList {
            user,
            entries: entries.into_iter().map(|e| e.1).collect(),
        });
    }
    Ok(lists)
}
