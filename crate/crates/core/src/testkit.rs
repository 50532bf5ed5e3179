//! Synthetic data, the eight-item toy scenario, tiny random instances with an
//! exhaustive re-ranking oracle, and the popularity-penalty fixture family.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    assign_groups, target_continent, target_popularity, CatalogEntry, Continent, ContinentMap, ContinentSet,
    Interaction, InteractionSet, ItemCatalog, PopGroup, Split, TargetDistribution, TargetMode,
};
use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::recommenders::{RecommendationList, ScoredItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub continent_weights: BTreeMap<Continent, f64>,
    /// Power-law exponent of item sampling weights; 0 gives uniform counts.
    pub popularity_skew: f64,
    pub ratings_per_user: usize,
    /// Chance that an item gets a second continent.
    pub multi_continent_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: 400,
            continent_weights: [
                (Continent::NA, 0.55),
                (Continent::EU, 0.25),
                (Continent::AS, 0.1),
                (Continent::SA, 0.04),
                (Continent::AF, 0.03),
                (Continent::OC, 0.03),
            ]
            .into_iter()
            .collect(),
            popularity_skew: 1.0,
            ratings_per_user: 40,
            multi_continent_rate: 0.05,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.continent_weights.values().sum();
        if self.continent_weights.values().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("continent weights must be non-negative and sum to 1"));
        }
        if self.n_items < 10 {
            return Err(Error::invalid("need at least 10 items"));
        }
        if self.n_users == 0 || self.ratings_per_user == 0 || self.ratings_per_user > self.n_items {
            return Err(Error::invalid("need users and 1..=n_items ratings per user"));
        }
        if !(0.0..=1.0).contains(&self.multi_continent_rate) || !self.popularity_skew.is_finite() {
            return Err(Error::invalid("bad multi-continent rate or skew"));
        }
        Ok(())
    }
}

/// Generates ratings and item continents. Each user draws a favourite
/// continent and rates its items 4-5, everything else 1-4. Items are picked
/// without replacement with weight `rank^-skew` over a random ranking.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(InteractionSet, ContinentMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (codes, weights): (Vec<Continent>, Vec<f64>) = spec.continent_weights.iter().map(|(c, w)| (*c, *w)).unzip();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;

    let mut continents: Vec<ContinentSet> = Vec::with_capacity(spec.n_items);
    for _ in 0..spec.n_items {
        let mut set = ContinentSet::single(codes[pick.sample(&mut rng)]);
        if rng.random::<f64>() < spec.multi_continent_rate {
            set.insert(codes[pick.sample(&mut rng)]);
        }
        continents.push(set);
    }
    let mut ranks: Vec<usize> = (0..spec.n_items).collect();
    ranks.shuffle(&mut rng);
    let items: Vec<(usize, f64)> = ranks
        .iter()
        .enumerate()
        .map(|(i, r)| (i, ((r + 1) as f64).powf(-spec.popularity_skew)))
        .collect();

    let mut rows = Vec::with_capacity(spec.n_users * spec.ratings_per_user);
    for u in 0..spec.n_users {
        let favourite = codes[pick.sample(&mut rng)];
        let chosen: Vec<usize> = items
            .choose_multiple_weighted(&mut rng, spec.ratings_per_user, |x| x.1)
            .map_err(|e| Error::invalid(e.to_string()))?
            .map(|x| x.0)
            .collect();
        for i in chosen {
            let rating = if continents[i].contains(favourite) {
                rng.random_range(4..=5)
            } else {
                rng.random_range(1..=4)
            };
            rows.push(Interaction::new(u as u64, i as u64, rating as f64));
        }
    }
    let map = continents
        .into_iter()
        .enumerate()
        .map(|(i, c)| (ItemId::from(i as u64), c))
        .collect();
    Ok((InteractionSet::new(rows, Split::All), map))
}

/// Eight items, one user, a six-entry list and a top-4 cutoff.
#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub catalog: ItemCatalog,
    pub targets: TargetDistribution,
    pub list: RecommendationList,
    /// Training ratings consistent with the catalog popularities.
    pub train: InteractionSet,
    pub k: usize,
    pub n: usize,
}

const TOY_ITEMS: [(&str, &str, u64, PopGroup); 8] = [
    ("I_1", "NA", 30, PopGroup::G1),
    ("I_2", "NA", 40, PopGroup::G1),
    ("I_3", "EU", 14, PopGroup::G2),
    ("I_4", "AF", 8, PopGroup::G2),
    ("I_5", "SA", 6, PopGroup::G2),
    ("I_6", "NA", 35, PopGroup::G1),
    ("I_7", "EU", 12, PopGroup::G2),
    ("I_8", "AS", 5, PopGroup::G2),
];

const TOY_LIST: [(&str, f64); 6] = [
    ("I_2", 0.95),
    ("I_3", 0.90),
    ("I_6", 0.80),
    ("I_1", 0.78),
    ("I_7", 0.74),
    ("I_5", 0.72),
];

/// The user of the toy list; they have rated I_4 and I_8.
pub const TOY_USER: &str = "4";

/// Golden toy scenario. Groups are pinned rather than derived (g3 is empty),
/// so popularity targets are the per-group mean popularities normalized over
/// g1 and g2.
pub fn toy_fixture() -> ToyFixture {
    let entries = TOY_ITEMS
        .iter()
        .map(|(id, c, pop, g)| CatalogEntry {
            item: ItemId::new(id),
            continents: c.parse().expect("valid code"),
            popularity: *pop,
            group: *g,
        })
        .collect();
    let catalog = ItemCatalog::from_entries(entries).expect("valid fixture");

    let mut rows = Vec::new();
    for (id, _, pop, _) in TOY_ITEMS {
        let own = matches!(id, "I_4" | "I_8");
        if own {
            rows.push(Interaction::new(TOY_USER, id, 4.0));
        }
        for r in 0..pop - own as u64 {
            rows.push(Interaction::new(format!("{}", 100 + r).as_str(), id, 3.0));
        }
    }
    let train = InteractionSet::new(rows, Split::Train);

    let mut sums = [0.0; PopGroup::COUNT];
    let mut sizes = [0usize; PopGroup::COUNT];
    for e in catalog.entries() {
        sums[e.group.index()] += e.popularity as f64;
        sizes[e.group.index()] += 1;
    }
    let means: Vec<f64> = (0..PopGroup::COUNT)
        .map(|g| if sizes[g] == 0 { 0.0 } else { sums[g] / sizes[g] as f64 })
        .collect();
    let total: f64 = means.iter().sum();
    let targets = TargetDistribution {
        mode: TargetMode::ItemBased,
        continent: target_continent(&train, &catalog, TargetMode::ItemBased).expect("non-empty"),
        popgroup: PopGroup::ALL.into_iter().map(|g| (g, means[g.index()] / total)).collect(),
    };
    let list = RecommendationList::new(
        TOY_USER,
        TOY_LIST
            .iter()
            .map(|(id, s)| ScoredItem {
                item: ItemId::new(id),
                score: *s,
            })
            .collect(),
    );
    ToyFixture {
        catalog,
        targets,
        list,
        train,
        k: 4,
        n: 6,
    }
}

/// Σ_c |share(c) - target(c)| for one set of items, where an item adds one
/// unit to each of its continents.
pub fn continent_deviation<'a>(
    items: impl IntoIterator<Item = &'a ItemId>,
    catalog: &ItemCatalog,
    targets: &TargetDistribution,
) -> Result<f64> {
    let mut counts = [0.0; Continent::COUNT];
    for item in items {
        let e = catalog.get(item).ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        for c in e.continents.iter() {
            counts[c.index()] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let t = targets.continent_array();
    Ok((0..Continent::COUNT).map(|c| (counts[c] / total - t[c]).abs()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Optimal top-k items, in ascending id order.
    pub top_k: Vec<ItemId>,
    pub deviation: f64,
    pub relevance: f64,
    /// Vanilla top-k relevance minus the optimum's relevance.
    pub loss: f64,
}

/// Deviations closer than this count as ties.
const ORACLE_TIE: f64 = 1e-12;

/// Exhaustively finds the top-k subset with the smallest continent deviation,
/// breaking ties by larger total score and then by smaller sorted id list.
pub fn brute_force_rerank(
    list: &RecommendationList,
    catalog: &ItemCatalog,
    targets: &TargetDistribution,
    k: usize,
) -> Result<OracleResult> {
    let n = list.len();
    if n > 12 || k > 5 {
        return Err(Error::InstanceTooLarge { n, k });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k={k} out of range for a list of {n}")));
    }
    let vanilla: f64 = list.entries[..k].iter().map(|e| e.score).sum();
    let mut best: Option<(f64, f64, Vec<ItemId>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut chosen: Vec<&ScoredItem> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &list.entries[i]).collect();
        // id order keeps the float sums independent of list order
        chosen.sort_by(|a, b| a.item.cmp(&b.item));
        let dev = continent_deviation(chosen.iter().map(|e| &e.item), catalog, targets)?;
        let rel: f64 = chosen.iter().map(|e| e.score).sum();
        let ids: Vec<ItemId> = chosen.iter().map(|e| e.item.clone()).collect();
        let better = match &best {
            None => true,
            Some((bd, br, bids)) => {
                if dev < bd - ORACLE_TIE {
                    true
                } else if dev > bd + ORACLE_TIE {
                    false
                } else {
                    rel > *br || (rel == *br && ids < *bids)
                }
            }
        };
        if better {
            best = Some((dev, rel, ids));
        }
    }
    let (deviation, relevance, top_k) = best.expect("at least one subset");
    Ok(OracleResult {
        top_k,
        deviation,
        relevance,
        loss: vanilla - relevance,
    })
}

/// A single-user instance small enough for [`brute_force_rerank`].
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub catalog: ItemCatalog,
    pub targets: TargetDistribution,
    pub list: RecommendationList,
    pub k: usize,
    pub n: usize,
}

/// 6-12 items from 2-4 continents (one each), k in 2..=4, targets equal to
/// the item shares of the list itself, scores sorted descending.
pub fn tiny_instance(seed: u64) -> TinyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=12);
    let k = rng.random_range(2..=4);
    let n_cont = rng.random_range(2..=4);
    let pool: Vec<Continent> = Continent::ALL.choose_multiple(&mut rng, n_cont).copied().collect();
    let mut entries: Vec<CatalogEntry> = (0..n)
        .map(|i| CatalogEntry {
            item: ItemId::from(i as u64),
            continents: ContinentSet::single(*pool.choose(&mut rng).expect("non-empty")),
            popularity: rng.random_range(1..=50),
            group: PopGroup::G3,
        })
        .collect();
    assign_groups(&mut entries);
    let catalog = ItemCatalog::from_entries(entries).expect("valid instance");
    let mut scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let list = RecommendationList::new(
        0u64,
        scores
            .into_iter()
            .enumerate()
            .map(|(i, score)| ScoredItem {
                item: ItemId::from(i as u64),
                score,
            })
            .collect(),
    );
    let empty = InteractionSet::new(Vec::new(), Split::Train);
    let targets = TargetDistribution {
        mode: TargetMode::ItemBased,
        continent: target_continent(&empty, &catalog, TargetMode::ItemBased).expect("non-empty"),
        popgroup: target_popularity(&catalog).expect("groups non-empty"),
    };
    TinyInstance {
        catalog,
        targets,
        list,
        k,
        n,
    }
}

/// Multi-user instance where NA items crowd the top-k and the promotion
/// candidates beyond it outnumber the continent deficit and span all three
/// popularity groups with close scores.
#[derive(Debug, Clone)]
pub struct PenaltyFixture {
    pub catalog: ItemCatalog,
    pub targets: TargetDistribution,
    pub lists: Vec<RecommendationList>,
    pub k: usize,
    pub n: usize,
}

/// 60 items (30 NA, 15 EU, 15 SA) with power-law popularity assigned at
/// random, 10 users, n = 30, k = 10. Scores mix normalized popularity, a small
/// NA bonus and per-user noise, so EU and SA items still reach positions
/// k+1..n in numbers.
pub fn penalty_fixture(seed: u64) -> PenaltyFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 60usize;
    let mut ranks: Vec<usize> = (0..m).collect();
    ranks.shuffle(&mut rng);
    let continent = |i: usize| match i {
        0..30 => Continent::NA,
        30..45 => Continent::EU,
        _ => Continent::SA,
    };
    let mut entries: Vec<CatalogEntry> = (0..m)
        .map(|i| CatalogEntry {
            item: ItemId::from(i as u64),
            continents: ContinentSet::single(continent(i)),
            popularity: 200 / (ranks[i] as u64 + 1) + 1,
            group: PopGroup::G3,
        })
        .collect();
    assign_groups(&mut entries);
    let max_pop = entries[0].popularity as f64;
    let pops: Vec<f64> = (0..m)
        .map(|i| entries.iter().find(|e| e.item == ItemId::from(i as u64)).expect("present").popularity as f64 / max_pop)
        .collect();
    let catalog = ItemCatalog::from_entries(entries).expect("valid fixture");
    let empty = InteractionSet::new(Vec::new(), Split::Train);
    let targets = TargetDistribution {
        mode: TargetMode::ItemBased,
        continent: target_continent(&empty, &catalog, TargetMode::ItemBased).expect("non-empty"),
        popgroup: target_popularity(&catalog).expect("groups non-empty"),
    };
    let (n, k) = (30, 10);
    let lists = (0..10u64)
        .map(|u| {
            let mut scored: Vec<ScoredItem> = (0..m)
                .map(|i| {
                    let na = if continent(i) == Continent::NA { 0.15 } else { 0.0 };
                    ScoredItem {
                        item: ItemId::from(i as u64),
                        score: 0.3 * pops[i] + na + 0.55 * rng.random::<f64>(),
                    }
                })
                .collect();
            scored.sort_by(crate::recommenders::rank_order);
            scored.truncate(n);
            RecommendationList::new(u, scored)
        })
        .collect();
    PenaltyFixture {
        catalog,
        targets,
        lists,
        k,
        n,
    }
}
