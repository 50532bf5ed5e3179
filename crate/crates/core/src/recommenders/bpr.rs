use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mf::{dot, init_factors, validate};
use super::{top_n, RatingMatrix, RecommendationList, RecommenderParams};
use crate::dataset::{InteractionSet, ItemCatalog};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(p_u·(q_i - q_j)) + reg/2 (|p_u|² + |q_i|² + |q_j|²)`.
pub fn triple_loss(pu: &[f64], qi: &[f64], qj: &[f64], reg: f64) -> f64 {
    let x = dot(pu, qi) - dot(pu, qj);
    let norms = dot(pu, pu) + dot(qi, qi) + dot(qj, qj);
    softplus(-x) + 0.5 * reg * norms
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient {
    pub loss: f64,
    pub user: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Analytic gradient of [`triple_loss`].
pub fn triple_gradient(pu: &[f64], qi: &[f64], qj: &[f64], reg: f64) -> TripleGradient {
    let x = dot(pu, qi) - dot(pu, qj);
    // d/dx softplus(-x) = -σ(-x)
    let g = -sigmoid(-x);
    TripleGradient {
        loss: triple_loss(pu, qi, qj, reg),
        user: (0..pu.len()).map(|k| g * (qi[k] - qj[k]) + reg * pu[k]).collect(),
        positive: (0..pu.len()).map(|k| g * pu[k] + reg * qi[k]).collect(),
        negative: (0..pu.len()).map(|k| -g * pu[k] + reg * qj[k]).collect(),
    }
}

/// Bayesian personalized ranking over `p_u·q_i`, trained with uniformly
/// sampled (user, rated item, unrated item) triples. Every rating is treated
/// as positive feedback.
pub struct Bpr {
    matrix: RatingMatrix,
    factors: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl Bpr {
    /// Trains the model; returns it with the mean sampled loss per epoch.
    pub fn fit(train: &InteractionSet, params: &RecommenderParams, seed: u64) -> Result<(Self, Vec<f64>)> {
        validate(params)?;
        if train.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        let matrix = RatingMatrix::new(train);
        let f = params.factors;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self {
            factors: f,
            user_factors: init_factors(&mut rng, matrix.users.len() * f),
            item_factors: init_factors(&mut rng, matrix.items.len() * f),
            matrix,
        };
        let n_items = model.matrix.items.len();
        let eligible: Vec<usize> = (0..model.matrix.users.len())
            .filter(|&u| !model.matrix.rows[u].is_empty() && model.matrix.rows[u].len() < n_items)
            .collect();
        let mut curve = Vec::with_capacity(params.epochs);
        if eligible.is_empty() {
            return Ok((model, curve));
        }
        let profiles: Vec<HashSet<u32>> = model
            .matrix
            .rows
            .iter()
            .map(|r| r.iter().map(|e| e.0).collect())
            .collect();
        let steps = train.len();
        for epoch in 0..params.epochs {
            let mut total = 0.0;
            for _ in 0..steps {
                let u = eligible[rng.random_range(0..eligible.len())];
                let row = &model.matrix.rows[u];
                let i = row[rng.random_range(0..row.len())].0 as usize;
                let j = loop {
                    let j = rng.random_range(0..n_items as u32);
                    if !profiles[u].contains(&j) {
                        break j as usize;
                    }
                };
                let (pu, qi, qj) = (u * f, i * f, j * f);
                let grad = triple_gradient(
                    &model.user_factors[pu..pu + f],
                    &model.item_factors[qi..qi + f],
                    &model.item_factors[qj..qj + f],
                    params.reg,
                );
                total += grad.loss;
                for k in 0..f {
                    model.user_factors[pu + k] -= params.lr * grad.user[k];
                    model.item_factors[qi + k] -= params.lr * grad.positive[k];
                    model.item_factors[qj + k] -= params.lr * grad.negative[k];
                }
            }
            let mean = total / steps as f64;
            if !mean.is_finite() || model.user_factors.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            curve.push(mean);
        }
        Ok((model, curve))
    }

    fn score(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        dot(&self.user_factors[u * f..(u + 1) * f], &self.item_factors[i * f..(i + 1) * f])
    }

    pub fn predict(&self, user: &UserId, item: &ItemId) -> Option<f64> {
        let u = self.matrix.users.binary_search(user).ok()?;
        let i = *self.matrix.item_index.get(item)? as usize;
        Some(self.score(u, i))
    }

    pub fn recommend(&self, catalog: &ItemCatalog, n: usize) -> Result<Vec<RecommendationList>> {
        let candidates = self.matrix.candidates(catalog);
        (0..self.matrix.users.len())
            .into_par_iter()
            .map(|u| {
                let seen = self.matrix.seen(u);
                let scored = candidates
                    .iter()
                    .filter(|&&i| !seen[i as usize])
                    .map(|&i| (i, self.score(u, i as usize)))
                    .collect();
                top_n(&self.matrix, u, scored, n)
            })
            .collect()
    }
}

/// Pairwise AUC on held-out data: for each test interaction known to the
/// model, one item the user has neither trained on nor holds out is sampled
/// as the negative. Ties count one half. `None` when no pair can be formed.
pub fn bpr_auc(model: &Bpr, test: &InteractionSet, seed: u64) -> Option<f64> {
    let m = &model.matrix;
    let mut held: HashMap<usize, HashSet<u32>> = HashMap::new();
    let mut pairs = Vec::new();
    for x in test {
        let (Ok(u), Some(&i)) = (m.users.binary_search(&x.user), m.item_index.get(&x.item)) else {
            continue;
        };
        held.entry(u).or_default().insert(i);
        pairs.push((u, i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut count) = (0.0, 0usize);
    for (u, i) in pairs {
        let seen: HashSet<u32> = m.rows[u].iter().map(|e| e.0).collect();
        let blocked = seen.len() + held[&u].len();
        if blocked >= m.items.len() {
            continue;
        }
        let j = loop {
            let j = rng.random_range(0..m.items.len() as u32);
            if !seen.contains(&j) && !held[&u].contains(&j) {
                break j;
            }
        };
        let (si, sj) = (model.score(u, i as usize), model.score(u, j as usize));
        hits += if si > sj {
            1.0
        } else if si == sj {
            0.5
        } else {
            0.0
        };
        count += 1;
    }
    (count > 0).then(|| hits / count as f64)
}

pub fn bpr(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    params: &RecommenderParams,
    seed: u64,
    n: usize,
) -> Result<(Vec<RecommendationList>, Vec<f64>)> {
    let (model, curve) = Bpr::fit(train, params, seed)?;
    Ok((model.recommend(catalog, n)?, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_train_test, Interaction, Split};

    fn params(epochs: usize) -> RecommenderParams {
        RecommenderParams { factors: 8, lr: 0.05, reg: 0.01, epochs, ..Default::default() }
    }

    /// Users in two taste clusters, each rating mostly its own half of the items.
    fn clustered(seed: u64) -> InteractionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for u in 0..120u64 {
            let home = (u % 2) * 40;
            for i in 0..80u64 {
                let p = if (home..home + 40).contains(&i) { 0.35 } else { 0.03 };
                if rng.random::<f64>() < p {
                    rows.push(Interaction::new(u, i, 4.0));
                }
            }
        }
        InteractionSet::new(rows, Split::All)
    }

    #[test]
    fn zero_epochs_scores_come_from_initialisation() {
        let data = clustered(1);
        let (model, curve) = Bpr::fit(&data, &params(0), 7).unwrap();
        assert!(curve.is_empty());
        let (again, _) = Bpr::fit(&data, &params(0), 7).unwrap();
        let (u, i) = (UserId::from(3), ItemId::from(5));
        assert_eq!(model.predict(&u, &i), again.predict(&u, &i));
        assert!(model.predict(&u, &i).unwrap().abs() < 0.5);
    }

    #[test]
    fn held_out_auc_beats_chance() {
        let data = clustered(2);
        let (train, test) = split_train_test(&data, 0.8, 3).unwrap();
        let (model, _) = Bpr::fit(&train, &params(40), 4).unwrap();
        let auc = bpr_auc(&model, &test, 5).unwrap();
        assert!(auc > 0.5, "auc {auc}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let f = 5;
            let v = |rng: &mut ChaCha8Rng| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (pu, qi, qj) = (v(&mut rng), v(&mut rng), v(&mut rng));
            let reg = 0.05;
            let g = triple_gradient(&pu, &qi, &qj, reg);
            let h = 1e-6;
            for k in 0..f {
                let (mut a, mut b) = (pu.clone(), pu.clone());
                a[k] += h;
                b[k] -= h;
                let fd = (triple_loss(&a, &qi, &qj, reg) - triple_loss(&b, &qi, &qj, reg)) / (2.0 * h);
                assert!((fd - g.user[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn loss_is_stable_for_large_margins() {
        let big = [50.0];
        assert!(triple_loss(&big, &big, &[-50.0], 0.0) >= 0.0);
        assert!((triple_loss(&big, &[-50.0], &big, 0.0) - 5000.0).abs() < 1e-9);
    }
}
