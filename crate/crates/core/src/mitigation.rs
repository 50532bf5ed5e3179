//! MFAIR: greedy top-k / beyond-top-k swaps that move continent shares
//! toward their targets, with a popularity-aware penalty on swap losses, run
//! as a visibility phase followed by an exposure phase.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Continent, ContinentSet, ItemCatalog, PopGroup, TargetDistribution, TargetMode};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::metrics::{Aggregation, BiasType, ShareState};
use crate::recommenders::RecommendationList;

/// Deltas at or below this are treated as zero, so shares that match their
/// target up to rounding never trigger swaps.
pub const DELTA_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phases {
    VisibilityOnly,
    ExposureOnly,
    #[default]
    Both,
}

impl Phases {
    pub fn bias_types(self) -> &'static [BiasType] {
        match self {
            Phases::VisibilityOnly => &[BiasType::Visibility],
            Phases::ExposureOnly => &[BiasType::Exposure],
            Phases::Both => &[BiasType::Visibility, BiasType::Exposure],
        }
    }
}

impl FromStr for Phases {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visibility" | "visibility_only" => Ok(Phases::VisibilityOnly),
            "exposure" | "exposure_only" => Ok(Phases::ExposureOnly),
            "both" => Ok(Phases::Both),
            other => Err(Error::invalid(format!("unknown phases {other:?}"))),
        }
    }
}

impl fmt::Display for Phases {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phases::VisibilityOnly => "visibility",
            Phases::ExposureOnly => "exposure",
            Phases::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub k: usize,
    pub n: usize,
    pub eps: f64,
    pub target_mode: TargetMode,
    pub phases: Phases,
    /// Also require, when applying a swap, that the demoted item is not
    /// under-represented.
    pub strict: bool,
    pub aggregation: Aggregation,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            k: 20,
            n: 150,
            eps: 1.0,
            target_mode: TargetMode::ItemBased,
            phases: Phases::Both,
            strict: false,
            aggregation: Aggregation::PerUser,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.n {
            return Err(Error::invalid(format!("need 1 <= k < n, got k={} n={}", self.k, self.n)));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::invalid(format!("eps must lie in [0, 1], got {}", self.eps)));
        }
        Ok(())
    }
}

/// `target - actual` per group; positive means under-represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDeltas {
    pub bias_type: BiasType,
    pub continent: [f64; Continent::COUNT],
    pub popgroup: [f64; PopGroup::COUNT],
}

impl GroupDeltas {
    fn from_state(state: &ShareState, targets: &TargetDistribution) -> Self {
        let (ct, pt) = (targets.continent_array(), targets.popgroup_array());
        let (cs, ps) = (state.continent_shares(), state.popgroup_shares());
        Self {
            bias_type: state.bias_type(),
            continent: std::array::from_fn(|i| ct[i] - cs[i]),
            popgroup: std::array::from_fn(|i| pt[i] - ps[i]),
        }
    }

    pub fn continent(&self, c: Continent) -> f64 {
        self.continent[c.index()]
    }

    pub fn popgroup(&self, g: PopGroup) -> f64 {
        self.popgroup[g.index()]
    }

    pub fn continent_map(&self) -> BTreeMap<Continent, f64> {
        Continent::ALL.into_iter().map(|c| (c, self.continent(c))).collect()
    }

    pub fn popgroup_map(&self) -> BTreeMap<PopGroup, f64> {
        PopGroup::ALL.into_iter().map(|g| (g, self.popgroup(g))).collect()
    }

    /// True while some continent is under-represented.
    pub fn any_under(&self) -> bool {
        self.continent.iter().any(|d| *d > DELTA_TOLERANCE)
    }

    /// True iff any continent of the set is under-represented.
    pub fn is_under(&self, continents: ContinentSet) -> bool {
        continents.iter().any(|c| self.continent(c) > DELTA_TOLERANCE)
    }
}

pub fn compute_deltas(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    targets: &TargetDistribution,
    bias_type: BiasType,
    k: usize,
) -> Result<GroupDeltas> {
    let state = ShareState::new(lists, catalog, bias_type, k, Aggregation::PerUser)?;
    Ok(GroupDeltas::from_state(&state, targets))
}

pub fn is_under_represented(item: &ItemId, catalog: &ItemCatalog, deltas: &GroupDeltas) -> Result<bool> {
    let entry = catalog.get(item).ok_or_else(|| Error::UnknownItem(item.to_string()))?;
    Ok(deltas.is_under(entry.continents))
}

/// A list entry eligible for a swap. `pos` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item: ItemId,
    pub pos: usize,
    pub score: f64,
    pub group: PopGroup,
}

/// Splits one list into demotion candidates (top-k, not under-represented)
/// and promotion candidates (positions k+1..=n, under-represented), each in
/// descending score order with earlier positions first on ties. For a sorted
/// list this is list order.
pub fn collect_candidates(
    list: &RecommendationList,
    catalog: &ItemCatalog,
    deltas: &GroupDeltas,
    k: usize,
    n: usize,
) -> Result<(Vec<Candidate>, Vec<Candidate>)> {
    let mut down = Vec::new();
    let mut up = Vec::new();
    for (i, e) in list.entries.iter().take(n).enumerate() {
        let entry = catalog.get(&e.item).ok_or_else(|| Error::UnknownItem(e.item.to_string()))?;
        let under = deltas.is_under(entry.continents);
        let cand = Candidate {
            item: e.item.clone(),
            pos: i + 1,
            score: e.score,
            group: entry.group,
        };
        match (i < k, under) {
            (true, false) => down.push(cand),
            (false, true) => up.push(cand),
            _ => {}
        }
    }
    let by_score = |a: &Candidate, b: &Candidate| b.score.total_cmp(&a.score).then(a.pos.cmp(&b.pos));
    down.sort_by(by_score);
    up.sort_by(by_score);
    Ok((down, up))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapCandidate {
    pub user: UserId,
    /// Index of the user's list in the input slice.
    pub list_index: usize,
    pub down: Candidate,
    pub up: Candidate,
    /// `score(down) - score(up)`.
    pub raw_loss: f64,
    pub adj_loss: f64,
}

/// Pairs the best remaining promotion candidate with the worst remaining
/// demotion candidate until one side runs out.
pub fn propose_swaps(
    user: &UserId,
    list_index: usize,
    mut down: Vec<Candidate>,
    up: Vec<Candidate>,
) -> Vec<SwapCandidate> {
    let mut out = Vec::with_capacity(down.len().min(up.len()));
    for u in up {
        let Some(d) = down.pop() else { break };
        let raw_loss = d.score - u.score;
        out.push(SwapCandidate {
            user: user.clone(),
            list_index,
            down: d,
            up: u,
            raw_loss,
            adj_loss: raw_loss,
        });
    }
    out
}

/// Shifts losses by `eps` times the mean absolute loss: swaps that promote an
/// under-represented popularity group at the expense of an over-represented
/// one get cheaper, the reverse gets dearer. Returns the number of swaps whose
/// loss was adjusted; with `eps == 0` the popularity deltas are not consulted.
pub fn add_penalty(swaps: &mut [SwapCandidate], pop_deltas: &[f64; PopGroup::COUNT], eps: f64) -> usize {
    if swaps.is_empty() || eps == 0.0 {
        return 0;
    }
    let average = swaps.iter().map(|s| s.raw_loss.abs()).sum::<f64>() / swaps.len() as f64;
    let mut adjusted = 0;
    for s in swaps.iter_mut() {
        let (up, down) = (pop_deltas[s.up.group.index()], pop_deltas[s.down.group.index()]);
        s.adj_loss = if up > 0.0 && down < 0.0 {
            adjusted += 1;
            s.raw_loss - average * eps
        } else if up < 0.0 && down > 0.0 {
            adjusted += 1;
            s.raw_loss + average * eps
        } else {
            s.raw_loss
        };
    }
    adjusted
}

/// Ascending loss, then user id, then demotion position.
fn swap_order(a: &SwapCandidate, b: &SwapCandidate) -> Ordering {
    a.adj_loss
        .total_cmp(&b.adj_loss)
        .then_with(|| a.user.cmp(&b.user))
        .then(a.down.pos.cmp(&b.down.pos))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub bias_type: BiasType,
    pub candidates: usize,
    pub penalty_applications: usize,
    pub discarded: usize,
    pub before: GroupDeltas,
    pub after: GroupDeltas,
    /// Swaps in the order they were applied.
    pub applied: Vec<SwapCandidate>,
}

/// One MFAIR pass with deltas of the given bias type.
pub fn mfair_phase(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    targets: &TargetDistribution,
    bias_type: BiasType,
    config: &MitigationConfig,
) -> Result<(Vec<RecommendationList>, PhaseStats)> {
    config.validate()?;
    let mut seen = HashSet::with_capacity(lists.len());
    if let Some(dup) = lists.iter().find(|l| !seen.insert(&l.user)) {
        return Err(Error::invalid(format!("user {} has more than one list", dup.user)));
    }
    let mut state = ShareState::new(lists, catalog, bias_type, config.k, config.aggregation)?;
    let before = GroupDeltas::from_state(&state, targets);
    let mut out = lists.to_vec();
    let mut stats = PhaseStats {
        bias_type,
        candidates: 0,
        penalty_applications: 0,
        discarded: 0,
        before,
        after: before,
        applied: Vec::new(),
    };
    if !before.any_under() {
        return Ok((out, stats));
    }

    let per_user: Vec<Vec<SwapCandidate>> = lists
        .par_iter()
        .enumerate()
        .map(|(idx, l)| {
            let (down, up) = collect_candidates(l, catalog, &before, config.k, config.n)?;
            Ok(propose_swaps(&l.user, idx, down, up))
        })
        .collect::<Result<_>>()?;
    let mut swaps: Vec<SwapCandidate> = per_user.into_iter().flatten().collect();
    stats.candidates = swaps.len();
    stats.penalty_applications = add_penalty(&mut swaps, &before.popgroup, config.eps);
    swaps.sort_by(swap_order);

    let mut deltas = before;
    for swap in swaps {
        if !deltas.any_under() {
            break;
        }
        let up_ok = deltas.is_under(catalog.entry(catalog.index_of(&swap.up.item).expect("checked")).continents);
        let down_ok = !config.strict
            || !deltas.is_under(catalog.entry(catalog.index_of(&swap.down.item).expect("checked")).continents);
        if !(up_ok && down_ok) {
            stats.discarded += 1;
            continue;
        }
        let list = &mut out[swap.list_index];
        list.entries.swap(swap.down.pos - 1, swap.up.pos - 1);
        state.update_user(swap.list_index, list, catalog)?;
        deltas = GroupDeltas::from_state(&state, targets);
        stats.applied.push(swap);
    }
    stats.after = deltas;
    Ok((out, stats))
}

/// Runs the configured phases in order, each on the previous phase's output.
pub fn mitigate_two_phase(
    lists: &[RecommendationList],
    catalog: &ItemCatalog,
    targets: &TargetDistribution,
    config: &MitigationConfig,
) -> Result<(Vec<RecommendationList>, Vec<PhaseStats>)> {
    let mut current = lists.to_vec();
    let mut stats = Vec::new();
    for &bias_type in config.phases.bias_types() {
        let (next, s) = mfair_phase(&current, catalog, targets, bias_type, config)?;
        current = next;
        stats.push(s);
    }
    Ok((current, stats))
}
