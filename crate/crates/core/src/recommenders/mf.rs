use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{top_n, RatingMatrix, RecommendationList, RecommenderParams};
use crate::dataset::{InteractionSet, ItemCatalog};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

pub(crate) fn init_factors(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    (0..len).map(|_| normal.sample(rng)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn validate(params: &RecommenderParams) -> Result<()> {
    if params.factors == 0 {
        return Err(Error::invalid("factors must be at least 1"));
    }
    if !(params.lr >= 0.0 && params.reg >= 0.0) {
        return Err(Error::invalid("lr and reg must be non-negative"));
    }
    Ok(())
}

/// Biased matrix factorization: `r̂ = μ + b_u + b_i + p_u·q_i`, trained by
/// SGD on squared error. Biases start at zero, factors at N(0, 0.1²).
pub struct BiasedMf {
    matrix: RatingMatrix,
    factors: usize,
    pub mu: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl BiasedMf {
    /// Trains the model and returns it with the training RMSE after each epoch.
    pub fn fit(train: &InteractionSet, params: &RecommenderParams, seed: u64) -> Result<(Self, Vec<f64>)> {
        validate(params)?;
        if train.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        let matrix = RatingMatrix::new(train);
        let f = params.factors;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user_factors = init_factors(&mut rng, matrix.users.len() * f);
        let item_factors = init_factors(&mut rng, matrix.items.len() * f);
        let mut triples: Vec<(u32, u32, f64)> = Vec::with_capacity(train.len());
        for (u, row) in matrix.rows.iter().enumerate() {
            for &(i, r) in row {
                triples.push((u as u32, i, r));
            }
        }
        let mu = triples.iter().map(|t| t.2).sum::<f64>() / triples.len() as f64;
        let mut model = Self {
            factors: f,
            mu,
            user_bias: vec![0.0; matrix.users.len()],
            item_bias: vec![0.0; matrix.items.len()],
            user_factors,
            item_factors,
            matrix,
        };
        let (lr, reg) = (params.lr, params.reg);
        let mut curve = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            triples.shuffle(&mut rng);
            for &(u, i, r) in &triples {
                let (u, i) = (u as usize, i as usize);
                let err = r - model.score(u, i);
                model.user_bias[u] += lr * (err - reg * model.user_bias[u]);
                model.item_bias[i] += lr * (err - reg * model.item_bias[i]);
                let (pu, qi) = (u * f, i * f);
                for k in 0..f {
                    let p = model.user_factors[pu + k];
                    let q = model.item_factors[qi + k];
                    model.user_factors[pu + k] += lr * (err * q - reg * p);
                    model.item_factors[qi + k] += lr * (err * p - reg * q);
                }
            }
            let rmse = model.training_rmse();
            if !rmse.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            curve.push(rmse);
        }
        Ok((model, curve))
    }

    fn score(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        self.mu
            + self.user_bias[u]
            + self.item_bias[i]
            + dot(&self.user_factors[u * f..(u + 1) * f], &self.item_factors[i * f..(i + 1) * f])
    }

    pub fn predict(&self, user: &UserId, item: &ItemId) -> Option<f64> {
        let u = self.matrix.users.binary_search(user).ok()?;
        let i = *self.matrix.item_index.get(item)? as usize;
        Some(self.score(u, i))
    }

    pub fn user_factors(&self, user: &UserId) -> Option<&[f64]> {
        let u = self.matrix.users.binary_search(user).ok()?;
        Some(&self.user_factors[u * self.factors..(u + 1) * self.factors])
    }

    pub fn training_rmse(&self) -> f64 {
        let mut sse = 0.0;
        let mut count = 0usize;
        for (u, row) in self.matrix.rows.iter().enumerate() {
            for &(i, r) in row {
                sse += (r - self.score(u, i as usize)).powi(2);
                count += 1;
            }
        }
        (sse / count as f64).sqrt()
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

pub fn biased_mf(
    train: &InteractionSet,
    catalog: &ItemCatalog,
    params: &RecommenderParams,
    seed: u64,
    n: usize,
) -> Result<(Vec<RecommendationList>, Vec<f64>)> {
    let (model, curve) = BiasedMf::fit(train, params, seed)?;
    Ok((model.recommend(catalog, n)?, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Interaction, Split};
    use rand::Rng;

    fn params(factors: usize, lr: f64, reg: f64, epochs: usize) -> RecommenderParams {
        RecommenderParams { factors, lr, reg, epochs, ..Default::default() }
    }

    /// 50x50 ratings from a rank-2 model plus noise, 60% observed.
    fn low_rank(seed: u64, rank: usize, noise: f64) -> InteractionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users: Vec<Vec<f64>> = (0..50).map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let items: Vec<Vec<f64>> = (0..50).map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut rows = Vec::new();
        for (u, pu) in users.iter().enumerate() {
            for (i, qi) in items.iter().enumerate() {
                if rng.random::<f64>() < 0.6 {
                    let r = 3.0 + dot(pu, qi) + noise * rng.random_range(-1.0..1.0);
                    rows.push(Interaction::new(u as u64, i as u64, r));
                }
            }
        }
        InteractionSet::new(rows, Split::Train)
    }

    #[test]
    fn zero_learning_rate_leaves_initialisation() {
        let train = low_rank(1, 2, 0.0);
        let (model, _) = BiasedMf::fit(&train, &params(4, 0.0, 0.01, 3), 5).unwrap();
        assert!(model.user_bias.iter().chain(&model.item_bias).all(|b| *b == 0.0));
        let (fresh, _) = BiasedMf::fit(&train, &params(4, 0.0, 0.01, 0), 5).unwrap();
        let (u, i) = (UserId::from(3), ItemId::from(7));
        let p = model.user_factors(&u).unwrap();
        assert_eq!(p, fresh.user_factors(&u).unwrap());
        let q_dot = model.predict(&u, &i).unwrap() - model.mu;
        assert_eq!(model.predict(&u, &i), fresh.predict(&u, &i));
        assert!(q_dot.abs() < 1.0);
    }

    #[test]
    fn training_rmse_non_increasing() {
        let train = low_rank(2, 2, 0.1);
        let (_, curve) = BiasedMf::fit(&train, &params(4, 0.01, 0.01, 30), 11).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "curve {curve:?}");
        }
    }

    #[test]
    fn rank_one_ratings_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..40).map(|_| rng.random_range(0.5..1.5)).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.random_range(0.5..1.5)).collect();
        let rows = (0..40)
            .flat_map(|u| {
                let (a, b) = (&a, &b);
                (0..40).map(move |i| Interaction::new(u as u64, i as u64, 2.0 * a[u] * b[i]))
            })
            .collect();
        let train = InteractionSet::new(rows, Split::Train);
        let (_, curve) = BiasedMf::fit(&train, &params(1, 0.02, 0.0, 200), 4).unwrap();
        let last = *curve.last().unwrap();
        assert!(last < 0.05, "rmse {last}");
    }

    #[test]
    fn same_seed_same_model() {
        let train = low_rank(4, 2, 0.2);
        let (_, a) = BiasedMf::fit(&train, &params(3, 0.01, 0.01, 5), 9).unwrap();
        let (_, b) = BiasedMf::fit(&train, &params(3, 0.01, 0.01, 5), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let train = low_rank(5, 2, 0.0);
        let err = BiasedMf::fit(&train, &params(4, 1e6, 0.0, 5), 1).err().unwrap();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
