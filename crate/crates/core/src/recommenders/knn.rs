use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{top_n, RatingMatrix, RecommendationList};
use crate::dataset::{InteractionSet, ItemCatalog};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnMode {
    User,
    Item,
}

/// Neighbourhood model over mean-centered cosine similarity.
///
/// In user mode each user's vector is centered on that user's mean rating;
/// in item mode each item's vector is centered on the item's mean. Only
/// positively similar neighbours are kept.
pub struct KnnModel {
    mode: KnnMode,
    matrix: RatingMatrix,
    /// Per entity (user or item): top neighbours by similarity.
    neighbors: Vec<Vec<(u32, f64)>>,
    /// Item mode: for item j, the items that list j as a neighbour.
    reverse: Vec<Vec<(u32, f64)>>,
    vectors: Vec<Vec<(u32, f64)>>,
    norms: Vec<f64>,
}

fn centered(entries: &[(u32, f64)]) -> Vec<(u32, f64)> {
    if entries.is_empty() {
        return Vec::new();
    }
    let mean = entries.iter().map(|e| e.1).sum::<f64>() / entries.len() as f64;
    entries.iter().map(|&(j, r)| (j, r - mean)).collect()
}

fn cmp_neighbor(a: &(u32, f64), b: &(u32, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl KnnModel {
    pub fn fit(train: &InteractionSet, mode: KnnMode, k_neighbors: usize) -> Result<Self> {
        if k_neighbors == 0 {
            return Err(Error::invalid("k_neighbors must be at least 1"));
        }
        if train.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        let matrix = RatingMatrix::new(train);
        let source = match mode {
            KnnMode::User => &matrix.rows,
            KnnMode::Item => &matrix.cols,
        };
        let vectors: Vec<Vec<(u32, f64)>> = source.iter().map(|v| centered(v)).collect();
        let norms: Vec<f64> = vectors
            .iter()
            .map(|v| v.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt())
            .collect();
        let other_len = match mode {
            KnnMode::User => matrix.items.len(),
            KnnMode::Item => matrix.users.len(),
        };
        let mut transposed: Vec<Vec<(u32, f64)>> = vec![Vec::new(); other_len];
        for (e, v) in vectors.iter().enumerate() {
            for &(o, c) in v {
                transposed[o as usize].push((e as u32, c));
            }
        }
        let n_entities = vectors.len();
        let neighbors: Vec<Vec<(u32, f64)>> = (0..n_entities)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; n_entities], vec![false; n_entities], Vec::<u32>::new()),
                |(acc, mark, touched), a| {
                    if norms[a] == 0.0 {
                        return Vec::new();
                    }
                    for &(o, ca) in &vectors[a] {
                        for &(b, cb) in &transposed[o as usize] {
                            if !mark[b as usize] {
                                mark[b as usize] = true;
                                touched.push(b);
                            }
                            acc[b as usize] += ca * cb;
                        }
                    }
                    let mut out = Vec::new();
                    for &b in touched.iter() {
                        let dot = std::mem::take(&mut acc[b as usize]);
                        mark[b as usize] = false;
                        if b as usize == a || norms[b as usize] == 0.0 {
                            continue;
                        }
                        let sim = dot / (norms[a] * norms[b as usize]);
                        if sim > 0.0 {
                            out.push((b, sim));
                        }
                    }
                    touched.clear();
                    out.sort_by(cmp_neighbor);
                    out.truncate(k_neighbors);
                    out
                },
            )
            .collect();
        let mut reverse = Vec::new();
        if mode == KnnMode::Item {
            reverse = vec![Vec::new(); n_entities];
            for (i, ns) in neighbors.iter().enumerate() {
                for &(j, s) in ns {
                    reverse[j as usize].push((i as u32, s));
                }
            }
        }
        Ok(Self {
            mode,
            matrix,
            neighbors,
            reverse,
            vectors,
            norms,
        })
    }

    fn entity_index(&self, id: &str) -> Option<usize> {
        match self.mode {
            KnnMode::User => self.matrix.users.binary_search(&UserId::new(id)).ok(),
            KnnMode::Item => self.matrix.items.binary_search(&ItemId::new(id)).ok(),
        }
    }

    /// Similarity of two users (user mode) or two items (item mode).
    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let (a, b) = (self.entity_index(a)?, self.entity_index(b)?);
        if self.norms[a] == 0.0 || self.norms[b] == 0.0 {
            return Some(0.0);
        }
        let (va, vb) = (&self.vectors[a], &self.vectors[b]);
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < va.len() && j < vb.len() {
            match va[i].0.cmp(&vb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += va[i].1 * vb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Some(dot / (self.norms[a] * self.norms[b]))
    }

    /// Similarity-weighted neighbour ratings for every item of one user,
    /// as (numerator, denominator) arrays over matrix items.
    fn accumulate(&self, user: usize) -> (Vec<f64>, Vec<f64>) {
        let n_items = self.matrix.items.len();
        let (mut num, mut den) = (vec![0.0; n_items], vec![0.0; n_items]);
        match self.mode {
            KnnMode::User => {
                for &(v, s) in &self.neighbors[user] {
                    for &(i, r) in &self.matrix.rows[v as usize] {
                        num[i as usize] += s * r;
                        den[i as usize] += s;
                    }
                }
            }
            KnnMode::Item => {
                for &(j, r) in &self.matrix.rows[user] {
                    for &(i, s) in &self.reverse[j as usize] {
                        num[i as usize] += s * r;
                        den[i as usize] += s;
                    }
                }
            }
        }
        (num, den)
    }

    /// Predicted rating, or `None` when no neighbour provides evidence.
    pub fn predict(&self, user: &UserId, item: &ItemId) -> Option<f64> {
        let u = self.matrix.users.binary_search(user).ok()?;
        let i = *self.matrix.item_index.get(item)? as usize;
        let (num, den) = self.accumulate(u);
        (den[i] > 0.0).then(|| num[i] / den[i])
    }

    pub fn recommend(&self, catalog: &ItemCatalog, n: usize) -> Result<Vec<RecommendationList>> {
        let candidates = self.matrix.candidates(catalog);
        (0..self.matrix.users.len())
            .into_par_iter()
            .map(|u| {
                let (num, den) = self.accumulate(u);
                let seen = self.matrix.seen(u);
                let scored: Vec<(u32, f64)> = candidates
                    .iter()
                    .filter(|&&i| !seen[i as usize] && den[i as usize] > 0.0)
                    .map(|&i| (i, num[i as usize] / den[i as usize]))
                    .collect();
                top_n(&self.matrix, u, scored, n)
            })
            .collect()
    }
}

/// UserKNN / ItemKNN top-n lists. Items without neighbour evidence are
/// omitted, so lists may be shorter than `n`.
pub fn knn(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    mode: KnnMode,
    k_neighbors: usize,
    n: usize,
) -> Result<Vec<RecommendationList>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    KnnModel::fit(train, mode, k_neighbors)?.recommend(catalog, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CatalogEntry, Continent, ContinentSet, Interaction, PopGroup, Split};

    fn set(rows: &[(&str, &str, f64)]) -> InteractionSet {
        InteractionSet::new(rows.iter().map(|(u, i, r)| Interaction::new(*u, *i, *r)).collect(), Split::Train)
    }

    #[test]
    fn identical_vectors_have_similarity_one() {
        let train = set(&[("a", "1", 5.0), ("a", "2", 1.0), ("b", "1", 5.0), ("b", "2", 1.0)]);
        let m = KnnModel::fit(&train, KnnMode::User, 5).unwrap();
        assert!((m.similarity("a", "b").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_similarity_zero() {
        let train = set(&[("a", "1", 5.0), ("a", "2", 1.0), ("b", "3", 5.0), ("b", "4", 1.0)]);
        let m = KnnModel::fit(&train, KnnMode::User, 5).unwrap();
        assert_eq!(m.similarity("a", "b").unwrap(), 0.0);
    }

    /// Dense reference: mean-centered cosine over full vectors, top-k positive
    /// neighbours among all users, weighted mean of their ratings.
    fn dense_user_knn(r: &[[Option<f64>; 5]; 4], k: usize, u: usize, i: usize) -> Option<f64> {
        let centered: Vec<[f64; 5]> = r
            .iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().flatten().copied().collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let mut out = [0.0; 5];
                for (j, x) in row.iter().enumerate() {
                    if let Some(x) = x {
                        out[j] = x - mean;
                    }
                }
                out
            })
            .collect();
        let norm = |v: &[f64; 5]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut sims: Vec<(usize, f64)> = (0..4)
            .filter(|&v| v != u)
            .map(|v| {
                let dot: f64 = (0..5).map(|j| centered[u][j] * centered[v][j]).sum();
                (v, dot / (norm(&centered[u]) * norm(&centered[v])))
            })
            .filter(|s| s.1 > 0.0)
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sims.truncate(k);
        let (mut num, mut den) = (0.0, 0.0);
        for (v, s) in sims {
            if let Some(x) = r[v][i] {
                num += s * x;
                den += s;
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn four_user_fixture_matches_dense_reference() {
        let r: [[Option<f64>; 5]; 4] = [
            [Some(5.0), Some(3.0), None, Some(1.0), None],
            [Some(4.0), None, Some(4.0), Some(1.0), Some(2.0)],
            [Some(1.0), Some(1.0), Some(5.0), None, Some(4.0)],
            [Some(5.0), Some(4.0), Some(2.0), Some(2.0), None],
        ];
        let mut rows = Vec::new();
        for (u, row) in r.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                if let Some(x) = x {
                    rows.push(Interaction::new(u.to_string().as_str(), i.to_string().as_str(), *x));
                }
            }
        }
        let train = InteractionSet::new(rows, Split::Train);
        for k in [1, 2, 3] {
            let m = KnnModel::fit(&train, KnnMode::User, k).unwrap();
            for u in 0..4 {
                for i in 0..5 {
                    if r[u][i].is_some() {
                        continue;
                    }
                    let got = m.predict(&u.to_string().as_str().into(), &i.to_string().as_str().into());
                    let want = dense_user_knn(&r, k, u, i);
                    match (got, want) {
                        (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "u{u} i{i} k{k}: {g} vs {w}"),
                        (None, None) => {}
                        other => panic!("u{u} i{i} k{k}: {other:?}"),
                    }
                }
            }
        }
        // Hand check for user 0, item 2. Centered vectors: u0 (2, 0, _, -2, _),
        // u1 (1.25, _, 1.25, -1.75, -0.75), u3 (1.75, 0.75, -1.25, -1.25, _).
        // Both dot products with u0 are 6 and both norms are sqrt(6.75), so
        // u1 and u3 tie; k = 1 keeps u1 (lower id) and predicts its 4, k = 2
        // averages 4 and 2 with equal weights.
        let m = KnnModel::fit(&train, KnnMode::User, 1).unwrap();
        assert_eq!(m.predict(&"0".into(), &"2".into()), Some(4.0));
        let m = KnnModel::fit(&train, KnnMode::User, 2).unwrap();
        assert_eq!(m.predict(&"0".into(), &"2".into()), Some(3.0));
    }

    #[test]
    fn item_mode_lists_exclude_seen_and_are_sorted() {
        let train = set(&[
            ("a", "1", 5.0), ("a", "2", 4.0), ("a", "3", 1.0),
            ("b", "1", 4.0), ("b", "2", 5.0), ("b", "4", 2.0),
            ("c", "1", 1.0), ("c", "3", 5.0), ("c", "4", 4.0),
            ("d", "2", 5.0), ("d", "1", 4.0),
        ]);
        let catalog = ItemCatalog::from_entries(
            ["1", "2", "3", "4"]
                .iter()
                .map(|i| CatalogEntry { item: (*i).into(), continents: ContinentSet::single(Continent::EU), popularity: 1, group: PopGroup::G1 })
                .collect(),
        )
        .unwrap();
        let lists = knn(&train, &catalog, KnnMode::Item, 10, 10).unwrap();
        let profiles = train.profiles();
        for l in &lists {
            assert!(l.is_sorted());
            assert!(l.items().all(|i| !profiles[&l.user].contains(i)));
        }
        // d likes 1 and 2, which co-vary positively with each other only.
        let d = lists.iter().find(|l| l.user.as_str() == "d").unwrap();
        assert!(d.len() <= 2);
    }

    #[test]
    fn zero_neighbors_rejected() {
        let train = set(&[("a", "1", 5.0)]);
        assert!(KnnModel::fit(&train, KnnMode::User, 0).is_err());
    }
}
