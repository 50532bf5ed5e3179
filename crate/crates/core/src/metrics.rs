//! Visibility and exposure bias for continents and popularity groups, plus
//! NDCG. Reported values are `actual share - target share`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{Continent, InteractionSet, ItemCatalog, PopGroup, TargetDistribution};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::recommenders::RecommendationList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasType {
    /// Every top-k slot weighs 1.
    Visibility,
    /// Slot `p` weighs `1 / log2(1 + p)`.
    Exposure,
}

impl BiasType {
    pub fn weight(self, pos: usize) -> f64 {
        match self {
            BiasType::Visibility => 1.0,
            BiasType::Exposure => exposure_weight(pos),
        }
    }
}

impl fmt::Display for BiasType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasType::Visibility => "visibility",
            BiasType::Exposure => "exposure",
        })
    }
}

/// Position discount for a 1-based position.
pub fn exposure_weight(pos: usize) -> f64 {
    1.0 / ((1 + pos) as f64).log2()
}

/// How per-user continent shares are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Normalize within each user, then average over users.
    #[default]
    PerUser,
    /// Sum weights over all users, then normalize once.
    Pooled,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_user" | "per-user" => Ok(Aggregation::PerUser),
            "pooled" => Ok(Aggregation::Pooled),
            other => Err(Error::invalid(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// A continent or a popularity group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKey {
    Continent(Continent),
    Pop(PopGroup),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Continent(c) => c.fmt(f),
            GroupKey::Pop(g) => g.fmt(f),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<PopGroup>() {
            Ok(g) => Ok(GroupKey::Pop(g)),
            Err(_) => s.parse().map(GroupKey::Continent),
        }
    }
}

impl Serialize for GroupKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasValue {
    pub group: GroupKey,
    pub value: f64,
}

/// Σ |value|.
pub fn total_bs(values: &[BiasValue]) -> f64 {
    values.iter().map(|v| v.value.abs()).sum()
}

/// Fixed-shape pairwise sum over per-user arrays. The summation order depends
/// only on the number of leaves, so a point update followed by reading the
/// root gives the same bits as rebuilding the whole tree.
#[derive(Debug, Clone)]
struct SumTree<const N: usize> {
    width: usize,
    nodes: Vec<[f64; N]>,
}

impl<const N: usize> SumTree<N> {
    fn new(leaves: &[[f64; N]]) -> Self {
        let width = leaves.len().next_power_of_two();
        let mut nodes = vec![[0.0; N]; 2 * width];
        nodes[width..width + leaves.len()].copy_from_slice(leaves);
        for i in (1..width).rev() {
            nodes[i] = add(&nodes[2 * i], &nodes[2 * i + 1]);
        }
        Self { width, nodes }
    }

    fn set(&mut self, idx: usize, leaf: [f64; N]) {
        let mut i = self.width + idx;
        self.nodes[i] = leaf;
        while i > 1 {
            i /= 2;
            self.nodes[i] = add(&self.nodes[2 * i], &self.nodes[2 * i + 1]);
        }
    }

    fn total(&self) -> [f64; N] {
        self.nodes[1]
    }
}

fn add<const N: usize>(a: &[f64; N], b: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| a[i] + b[i])
}

/// Aggregated top-k group weights over all users. Users are summed through a
/// [`SumTree`], so updating one user after a swap matches a full rebuild.
#[derive(Debug, Clone)]
pub struct ShareState {
    bias_type: BiasType,
    aggregation: Aggregation,
    k: usize,
    users: usize,
    group_sizes: [usize; PopGroup::COUNT],
    continent: SumTree<{ Continent::COUNT }>,
    popgroup: SumTree<{ PopGroup::COUNT }>,
}

impl ShareState {
    pub fn new(
        lists: &[RecommendationList],
        catalog: &ItemCatalog,
        bias_type: BiasType,
        k: usize,
        aggregation: Aggregation,
    ) -> Result<Self> {
        check_lists(lists, k)?;
        let per_user: Vec<_> = lists
            .par_iter()
            .map(|l| user_weights(l, catalog, bias_type, k).map(|(c, g)| (continent_leaf(c, aggregation), g)))
            .collect::<Result<_>>()?;
        let (continent, popgroup): (Vec<_>, Vec<_>) = per_user.into_iter().unzip();
        Ok(Self {
            bias_type,
            aggregation,
            k,
            users: lists.len(),
            group_sizes: catalog.group_sizes(),
            continent: SumTree::new(&continent),
            popgroup: SumTree::new(&popgroup),
        })
    }

    pub fn bias_type(&self) -> BiasType {
        self.bias_type
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Refreshes the cached weights of the user at `idx`.
    pub fn update_user(&mut self, idx: usize, list: &RecommendationList, catalog: &ItemCatalog) -> Result<()> {
        let (c, g) = user_weights(list, catalog, self.bias_type, self.k)?;
        self.continent.set(idx, continent_leaf(c, self.aggregation));
        self.popgroup.set(idx, g);
        Ok(())
    }

    /// Actual continent shares, indexed by [`Continent::index`].
    pub fn continent_shares(&self) -> [f64; Continent::COUNT] {
        let acc = self.continent.total();
        let denom = match self.aggregation {
            Aggregation::PerUser => self.users as f64,
            Aggregation::Pooled => acc.iter().sum(),
        };
        acc.map(|v| v / denom)
    }

    /// Actual popularity-group shares: per-group weight over group size,
    /// normalized. A group with no catalog items has share 0.
    pub fn popgroup_shares(&self) -> [f64; PopGroup::COUNT] {
        let mut acc = self.popgroup.total();
        for (v, &size) in acc.iter_mut().zip(&self.group_sizes) {
            *v = if size == 0 { 0.0 } else { *v / size as f64 };
        }
        let total: f64 = acc.iter().sum();
        acc.map(|v| v / total)
    }
}

fn continent_leaf(w: [f64; Continent::COUNT], aggregation: Aggregation) -> [f64; Continent::COUNT] {
    match aggregation {
        Aggregation::PerUser => {
            let total: f64 = w.iter().sum();
            w.map(|v| v / total)
        }
        Aggregation::Pooled => w,
    }
}

fn check_lists(lists: &[RecommendationList], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if lists.is_empty() {
        return Err(Error::Empty("no recommendation lists".into()));
    }
    if let Some(l) = lists.iter().find(|l| l.len() < k) {
        return Err(Error::ListTooShort {
            user: l.user.to_string(),
            len: l.len(),
            k,
        });
    }
    Ok(())
}

type UserWeights = ([f64; Continent::COUNT], [f64; PopGroup::COUNT]);

fn user_weights(list: &RecommendationList, catalog: &ItemCatalog, bias_type: BiasType, k: usize) -> Result<UserWeights> {
    let mut cont = [0.0; Continent::COUNT];
    let mut pop = [0.0; PopGroup::COUNT];
    for (i, e) in list.entries.iter().take(k).enumerate() {
        let entry = catalog
            .get(&e.item)
            .ok_or_else(|| Error::UnknownItem(e.item.to_string()))?;
        let w = bias_type.weight(i + 1);
        for c in entry.continents.iter() {
            cont[c.index()] += w;
        }
        pop[entry.group.index()] += w;
    }
    Ok((cont, pop))
}

/// Continents reported for a catalog: those with catalog items or a target.
pub fn report_continents(catalog: &ItemCatalog, target: &TargetDistribution) -> Vec<Continent> {
    let sizes = catalog.continent_sizes();
    Continent::ALL
        .into_iter()
        .filter(|c| sizes[c.index()] > 0 || target.continent.contains_key(c))
        .collect()
}

fn continent_values(state: &ShareState, catalog: &ItemCatalog, target: &TargetDistribution) -> Vec<BiasValue> {
    let shares = state.continent_shares();
    let t = target.continent_array();
    report_continents(catalog, target)
        .into_iter()
        .map(|c| BiasValue {
            group: GroupKey::Continent(c),
            value: shares[c.index()] - t[c.index()],
        })
        .collect()
}

fn popgroup_values(state: &ShareState, target: &TargetDistribution) -> Vec<BiasValue> {
    let shares = state.popgroup_shares();
    let t = target.popgroup_array();
    PopGroup::ALL
        .into_iter()
        .map(|g| BiasValue {
            group: GroupKey::Pop(g),
            value: shares[g.index()] - t[g.index()],
        })
        .collect()
}

pub fn continent_bias(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    bias_type: BiasType,
    k: usize,
    aggregation: Aggregation,
) -> Result<Vec<BiasValue>> {
    let state = ShareState::new(lists, catalog, bias_type, k, aggregation)?;
    Ok(continent_values(&state, catalog, target))
}

pub fn popgroup_bias(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    bias_type: BiasType,
    k: usize,
) -> Result<Vec<BiasValue>> {
    let state = ShareState::new(lists, catalog, bias_type, k, Aggregation::PerUser)?;
    Ok(popgroup_values(&state, target))
}

pub fn visibility_bias_continent(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    k: usize,
) -> Result<Vec<BiasValue>> {
    continent_bias(lists, catalog, target, BiasType::Visibility, k, Aggregation::PerUser)
}

pub fn exposure_bias_continent(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    k: usize,
) -> Result<Vec<BiasValue>> {
    continent_bias(lists, catalog, target, BiasType::Exposure, k, Aggregation::PerUser)
}

pub fn visibility_bias_popgroup(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    k: usize,
) -> Result<Vec<BiasValue>> {
    popgroup_bias(lists, catalog, target, BiasType::Visibility, k)
}

pub fn exposure_bias_popgroup(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    target: &TargetDistribution,
    k: usize,
) -> Result<Vec<BiasValue>> {
    popgroup_bias(lists, catalog, target, BiasType::Exposure, k)
}

/// Mean NDCG@k with binary relevance (membership in the user's test items),
/// over listed users that have at least one test item.
pub fn ndcg(lists: &[RecommendationList], test: &InteractionSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut held: HashMap<&UserId, HashSet<&ItemId>> = HashMap::new();
    for x in test {
        held.entry(&x.user).or_default().insert(&x.item);
    }
    let scores: Vec<f64> = lists
        .par_iter()
        .filter_map(|l| {
            let relevant = held.get(&l.user)?;
            let dcg: f64 = l
                .entries
                .iter()
                .take(k)
                .enumerate()
                .filter(|(_, e)| relevant.contains(&e.item))
                .map(|(i, _)| exposure_weight(i + 1))
                .sum();
            let idcg: f64 = (1..=k.min(relevant.len())).map(exposure_weight).sum();
            Some(dcg / idcg)
        })
        .collect();
    if scores.is_empty() {
        return Err(Error::Empty("no listed user has test items".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub continent_vb: f64,
    pub continent_eb: f64,
    pub pop_vb: f64,
    pub pop_eb: f64,
}

/// All four bias families at one cutoff, with NDCG when a test set is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub k: usize,
    pub aggregation: Aggregation,
    pub continent_vb: Vec<BiasValue>,
    pub continent_eb: Vec<BiasValue>,
    pub pop_vb: Vec<BiasValue>,
    pub pop_eb: Vec<BiasValue>,
    pub total_bs: Totals,
    pub ndcg: Option<f64>,
}

impl BiasReport {
    pub fn compute(
        lists: &[RecommendationList],
        catalog: &ItemCatalog,
        target: &TargetDistribution,
        test: Option<&InteractionSet>,
        k: usize,
        aggregation: Aggregation,
    ) -> Result<Self> {
        let vis = ShareState::new(lists, catalog, BiasType::Visibility, k, aggregation)?;
        let exp = ShareState::new(lists, catalog, BiasType::Exposure, k, aggregation)?;
        let continent_vb = continent_values(&vis, catalog, target);
        let continent_eb = continent_values(&exp, catalog, target);
        let pop_vb = popgroup_values(&vis, target);
        let pop_eb = popgroup_values(&exp, target);
        let total_bs = Totals {
            continent_vb: total_bs(&continent_vb),
            continent_eb: total_bs(&continent_eb),
            pop_vb: total_bs(&pop_vb),
            pop_eb: total_bs(&pop_eb),
        };
        let ndcg = test.map(|t| ndcg(lists, t, k)).transpose()?;
        Ok(Self {
            k,
            aggregation,
            continent_vb,
            continent_eb,
            pop_vb,
            pop_eb,
            total_bs,
            ndcg,
        })
    }

    /// The four families in a fixed order, keyed by metric name.
    pub fn families(&self) -> [(&'static str, &[BiasValue]); 4] {
        [
            ("continent_vb", &self.continent_vb),
            ("continent_eb", &self.continent_eb),
            ("pop_vb", &self.pop_vb),
            ("pop_eb", &self.pop_eb),
        ]
    }

    pub fn value(&self, metric: &str, group: GroupKey) -> Option<f64> {
        let (_, values) = self.families().into_iter().find(|(m, _)| *m == metric)?;
        values.iter().find(|v| v.group == group).map(|v| v.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CatalogEntry, ContinentSet, Interaction, Split, TargetMode};
    use crate::recommenders::ScoredItem;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn cs(s: &str) -> ContinentSet {
        s.parse().unwrap()
    }

    fn catalog(items: &[(u64, &str, PopGroup)]) -> ItemCatalog {
        let entries = items
            .iter()
            .enumerate()
            .map(|(i, (id, c, g))| CatalogEntry {
                item: ItemId::from(*id),
                continents: cs(c),
                popularity: (items.len() - i) as u64,
                group: *g,
            })
            .collect();
        ItemCatalog::from_entries(entries).unwrap()
    }

    fn target(cont: &[(Continent, f64)], pop: [f64; 3]) -> TargetDistribution {
        TargetDistribution {
            mode: TargetMode::ItemBased,
            continent: cont.iter().copied().collect(),
            popgroup: PopGroup::ALL.into_iter().zip(pop).collect(),
        }
    }

    fn list(user: u64, items: &[u64]) -> RecommendationList {
        let n = items.len();
        RecommendationList::new(
            user,
            items
                .iter()
                .enumerate()
                .map(|(i, &it)| ScoredItem {
                    item: ItemId::from(it),
                    score: (n - i) as f64,
                })
                .collect(),
        )
    }

    fn get(values: &[BiasValue], group: GroupKey) -> f64 {
        values.iter().find(|v| v.group == group).unwrap().value
    }

    use Continent::*;
    use PopGroup::*;

    #[test]
    fn exposure_discount_closed_form() {
        assert_eq!(exposure_weight(1), 1.0);
        assert_eq!(exposure_weight(3), 0.5);
    }

    #[test]
    fn all_na_lists() {
        let cat = catalog(&[(1, "NA", G1), (2, "NA", G2), (3, "EU", G3), (4, "AS", G3)]);
        let t = target(&[(NA, 0.7), (EU, 0.2), (AS, 0.1)], [0.5, 0.3, 0.2]);
        let lists = [list(1, &[1, 2, 3]), list(2, &[2, 1, 4])];
        let vb = visibility_bias_continent(&lists, &cat, &t, 2).unwrap();
        assert!((get(&vb, GroupKey::Continent(NA)) - 0.3).abs() < 1e-12);
        assert_eq!(get(&vb, GroupKey::Continent(EU)), -0.2);
        assert_eq!(get(&vb, GroupKey::Continent(AS)), -0.1);
    }

    #[test]
    fn fair_lists_have_zero_bias() {
        let cat = catalog(&[(1, "NA", G1), (2, "EU", G2), (3, "NA", G3), (4, "EU", G3)]);
        let t = target(&[(NA, 0.5), (EU, 0.5)], [0.5, 0.3, 0.2]);
        let lists = [list(1, &[1, 2]), list(2, &[4, 3])];
        let vb = visibility_bias_continent(&lists, &cat, &t, 2).unwrap();
        assert!(vb.iter().all(|v| v.value == 0.0));
    }

    #[test]
    fn three_user_two_continent_hand_values() {
        let cat = catalog(&[(1, "NA", G1), (2, "NA", G2), (3, "EU", G3), (4, "EU,NA", G3), (5, "EU", G3)]);
        let t = target(&[(NA, 0.6), (EU, 0.4)], [0.5, 0.3, 0.2]);
        // u1: NA NA -> 1; u2: NA EU -> 1/2; u3: EU {EU,NA} -> NA 1/3
        let lists = [list(1, &[1, 2, 5]), list(2, &[1, 3, 5]), list(3, &[3, 4, 1])];
        let vb = visibility_bias_continent(&lists, &cat, &t, 2).unwrap();
        let na = (1.0 + 0.5 + 1.0 / 3.0) / 3.0 - 0.6;
        let eu = (0.0 + 0.5 + 2.0 / 3.0) / 3.0 - 0.4;
        assert!((get(&vb, GroupKey::Continent(NA)) - na).abs() < 1e-12);
        assert!((get(&vb, GroupKey::Continent(EU)) - eu).abs() < 1e-12);

        // pooled: NA 4 of 7 units, EU 3 of 7
        let pooled = continent_bias(&lists, &cat, &t, BiasType::Visibility, 2, Aggregation::Pooled).unwrap();
        assert!((get(&pooled, GroupKey::Continent(NA)) - (4.0 / 7.0 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn popgroup_all_g1() {
        let cat = catalog(&[(1, "NA", G1), (2, "NA", G1), (3, "EU", G2), (4, "AS", G3)]);
        let t = target(&[(NA, 0.5), (EU, 0.25), (AS, 0.25)], [0.6, 0.3, 0.1]);
        let lists = [list(1, &[1, 2, 3]), list(2, &[2, 1, 4])];
        let vb = visibility_bias_popgroup(&lists, &cat, &t, 2).unwrap();
        assert!((get(&vb, GroupKey::Pop(G1)) - 0.4).abs() < 1e-12);
        assert_eq!(get(&vb, GroupKey::Pop(G2)), -0.3);
        assert_eq!(get(&vb, GroupKey::Pop(G3)), -0.1);
    }

    #[test]
    fn popgroup_exposure_two_users_hand_table() {
        // sizes: g1 = 1, g2 = 2, g3 = 2
        let cat = catalog(&[(1, "NA", G1), (2, "NA", G2), (3, "EU", G2), (4, "EU", G3), (5, "NA", G3)]);
        let t = target(&[(NA, 0.6), (EU, 0.4)], [0.5, 0.3, 0.2]);
        let lists = [list(1, &[1, 2, 4]), list(2, &[3, 5, 1])];
        let w = [1.0, 1.0 / 3f64.log2(), 0.5];
        // u1: g1 g2 g3, u2: g2 g3 g1
        let e1 = (w[0] + w[2]) / 1.0;
        let e2 = (w[1] + w[0]) / 2.0;
        let e3 = (w[2] + w[1]) / 2.0;
        let total = e1 + e2 + e3;
        let eb = exposure_bias_popgroup(&lists, &cat, &t, 3).unwrap();
        assert!((get(&eb, GroupKey::Pop(G1)) - (e1 / total - 0.5)).abs() < 1e-12);
        assert!((get(&eb, GroupKey::Pop(G2)) - (e2 / total - 0.3)).abs() < 1e-12);
        assert!((get(&eb, GroupKey::Pop(G3)) - (e3 / total - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn k1_exposure_equals_visibility() {
        let cat = catalog(&[(1, "NA", G1), (2, "EU,SA", G2), (3, "EU", G3), (4, "AS", G3)]);
        let t = target(&[(NA, 0.4), (EU, 0.3), (SA, 0.1), (AS, 0.2)], [0.5, 0.3, 0.2]);
        let lists = [list(1, &[1, 2, 3]), list(2, &[2, 1, 4]), list(3, &[4, 3, 1])];
        let r = BiasReport::compute(&lists, &cat, &t, None, 1, Aggregation::PerUser).unwrap();
        assert_eq!(r.continent_vb, r.continent_eb);
        assert_eq!(r.pop_vb, r.pop_eb);
    }

    #[test]
    fn promoting_to_the_top_raises_exposure_share() {
        let cat = catalog(&[(1, "NA", G1), (2, "NA", G2), (3, "EU", G3)]);
        let t = target(&[(NA, 0.5), (EU, 0.5)], [0.5, 0.3, 0.2]);
        let before = exposure_bias_continent(&[list(1, &[1, 2, 3])], &cat, &t, 3).unwrap();
        let after = exposure_bias_continent(&[list(1, &[3, 2, 1])], &cat, &t, 3).unwrap();
        assert!(get(&after, GroupKey::Continent(EU)) > get(&before, GroupKey::Continent(EU)));
    }

    #[test]
    fn ndcg_closed_forms() {
        let lists = [list(1, &[10, 11])];
        let test = InteractionSet::new(vec![Interaction::new(1, 11, 4.0)], Split::Test);
        let v = ndcg(&lists, &test, 2).unwrap();
        assert!((v - 0.6309).abs() < 5e-5);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);

        let test = InteractionSet::new(
            vec![Interaction::new(1, 10, 4.0), Interaction::new(1, 11, 2.0)],
            Split::Test,
        );
        assert_eq!(ndcg(&lists, &test, 2).unwrap(), 1.0);
        let test = InteractionSet::new(vec![Interaction::new(1, 99, 4.0)], Split::Test);
        assert_eq!(ndcg(&lists, &test, 2).unwrap(), 0.0);
        let test = InteractionSet::new(vec![Interaction::new(7, 99, 4.0)], Split::Test);
        assert!(ndcg(&lists, &test, 2).is_err());
    }

    #[test]
    fn total_bs_examples() {
        let v = |x| BiasValue { group: GroupKey::Pop(G1), value: x };
        assert_eq!(total_bs(&[v(0.0), v(0.0)]), 0.0);
        assert!((total_bs(&[v(0.3), v(-0.2), v(-0.1)]) - 0.6).abs() < 1e-12);
        assert_eq!(total_bs(&[v(0.3), v(-0.2)]), total_bs(&[v(-0.3), v(0.2)]));
    }

    #[test]
    fn short_lists_and_unknown_items_rejected() {
        let cat = catalog(&[(1, "NA", G1), (2, "EU", G2)]);
        let t = target(&[(NA, 0.5), (EU, 0.5)], [0.5, 0.3, 0.2]);
        assert!(matches!(
            visibility_bias_continent(&[list(1, &[1])], &cat, &t, 2),
            Err(Error::ListTooShort { .. })
        ));
        assert!(matches!(
            visibility_bias_continent(&[list(1, &[1, 9])], &cat, &t, 2),
            Err(Error::UnknownItem(_))
        ));
    }

    #[test]
    fn incremental_update_matches_rebuild() {
        let cat = catalog(&[(1, "NA", G1), (2, "EU,SA", G2), (3, "EU", G3), (4, "AS", G3), (5, "SA", G3)]);
        let mut lists = vec![list(1, &[1, 2, 3, 4]), list(2, &[2, 1, 4, 5]), list(3, &[4, 3, 1, 5])];
        let mut state = ShareState::new(&lists, &cat, BiasType::Exposure, 3, Aggregation::PerUser).unwrap();
        lists[1].entries.swap(0, 3);
        state.update_user(1, &lists[1], &cat).unwrap();
        let fresh = ShareState::new(&lists, &cat, BiasType::Exposure, 3, Aggregation::PerUser).unwrap();
        assert_eq!(state.continent_shares(), fresh.continent_shares());
        assert_eq!(state.popgroup_shares(), fresh.popgroup_shares());
    }

    fn continents_strategy() -> impl Strategy<Value = ContinentSet> {
        (1u8..64).prop_map(|bits| Continent::ALL.into_iter().filter(|c| bits & (1 << c.index()) != 0).collect())
    }

    proptest! {
        #[test]
        fn families_sum_to_zero_and_stay_in_range(
            items in proptest::collection::vec(continents_strategy(), 10..30),
            picks in proptest::collection::vec(proptest::collection::vec(any::<proptest::sample::Index>(), 5), 1..8),
            k in 1usize..=5,
        ) {
            let m = items.len();
            let cut = m.div_ceil(10);
            let entries: Vec<_> = items.iter().enumerate().map(|(i, c)| CatalogEntry {
                item: ItemId::from(i as u64),
                continents: *c,
                popularity: (m - i) as u64,
                group: if i < cut { G1 } else if i < 2 * cut { G2 } else { G3 },
            }).collect();
            let cat = ItemCatalog::from_entries(entries).unwrap();
            let interactions = InteractionSet::new(vec![], Split::Train);
            let t = TargetDistribution {
                mode: TargetMode::ItemBased,
                continent: crate::dataset::target_continent(&interactions, &cat, TargetMode::ItemBased).unwrap(),
                popgroup: crate::dataset::target_popularity(&cat).unwrap(),
            };
            let lists: Vec<_> = picks.iter().enumerate().map(|(u, p)| {
                let mut chosen: Vec<u64> = Vec::new();
                for ix in p {
                    let mut j = ix.index(m) as u64;
                    while chosen.contains(&j) { j = (j + 1) % m as u64; }
                    chosen.push(j);
                }
                list(u as u64, &chosen)
            }).collect();
            let r = BiasReport::compute(&lists, &cat, &t, None, k, Aggregation::PerUser).unwrap();
            let targets: BTreeMap<GroupKey, f64> = t.continent.iter().map(|(c, v)| (GroupKey::Continent(*c), *v))
                .chain(t.popgroup.iter().map(|(g, v)| (GroupKey::Pop(*g), *v))).collect();
            for (_, values) in r.families() {
                let sum: f64 = values.iter().map(|v| v.value).sum();
                prop_assert!(sum.abs() < 1e-9);
                for v in values {
                    let tv = targets.get(&v.group).copied().unwrap_or(0.0);
                    prop_assert!(v.value >= -tv - 1e-12 && v.value <= 1.0 - tv + 1e-12);
                }
            }
        }
    }
}
