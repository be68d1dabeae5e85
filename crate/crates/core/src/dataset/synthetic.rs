//! Synthetic implicit-feedback generators with a power-law item popularity.
//!
//! Each item gets a Zipf weight `1 / rank^s` under a random rank permutation.
//! Users optionally carry a latent taste vector; an item's sampling weight for
//! a user is `zipf(i) * exp(strength * <x_u, z_i> / sqrt(r))`, so
//! `strength = 0` reduces to pure popularity sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Interactions;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    /// Zipf exponent `s` of item popularity.
    pub zipf_exponent: f64,
    pub mean_user_degree: f64,
    pub min_user_degree: usize,
    /// Rank of the latent taste model; 0 disables it.
    pub latent_dim: usize,
    pub strength: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Pure popularity sampling used for the magnitude-growth experiment.
    pub fn zipf(users: usize, items: usize, mean_user_degree: f64, seed: u64) -> Self {
        Self {
            users,
            items,
            zipf_exponent: 1.0,
            mean_user_degree,
            min_user_degree: 2,
            latent_dim: 0,
            strength: 0.0,
            seed,
        }
    }

    /// 943 users x 1682 items with ~100k interactions and latent structure.
    pub fn movielens_100k_scale(seed: u64) -> Self {
        Self {
            users: 943,
            items: 1682,
            zipf_exponent: 0.9,
            mean_user_degree: 106.0,
            min_user_degree: 20,
            latent_dim: 8,
            strength: 3.0,
            seed,
        }
    }
}

/// Zipf weights `1 / (rank + 1)^s` assigned to items through a random permutation.
pub fn zipf_weights(items: usize, exponent: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..items).collect();
    ranks.shuffle(rng);
    ranks
        .into_iter()
        .map(|r| ((r + 1) as f64).powf(-exponent))
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Interactions> {
    if cfg.users == 0 || cfg.items == 0 {
        return Err(Error::invalid("synthetic data needs at least one user and item"));
    }
    if cfg.min_user_degree > cfg.items {
        return Err(Error::invalid("min_user_degree exceeds the catalog size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let popularity = zipf_weights(cfg.items, cfg.zipf_exponent, &mut rng);
    let r = cfg.latent_dim;
    let item_taste: Vec<f64> = (0..cfg.items * r).map(|_| standard_normal(&mut rng)).collect();
    let scale = if r > 0 { cfg.strength / (r as f64).sqrt() } else { 0.0 };

    let mut pairs = Vec::new();
    let mut log_w = vec![0.0; cfg.items];
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(cfg.items);
    for u in 0..cfg.users {
        // Exponential degree spread around the mean, floored at the minimum.
        let draw = -cfg.mean_user_degree * (1.0 - rng.gen::<f64>()).ln();
        let degree = (draw.round() as usize).clamp(cfg.min_user_degree, cfg.items);

        let taste: Vec<f64> = (0..r).map(|_| standard_normal(&mut rng)).collect();
        for (i, lw) in log_w.iter_mut().enumerate() {
            let affinity: f64 = taste
                .iter()
                .zip(&item_taste[i * r..(i + 1) * r])
                .map(|(a, b)| a * b)
                .sum();
            *lw = popularity[i].ln() + scale * affinity;
        }
        // Weighted sampling without replacement via exponential keys.
        keys.clear();
        for (i, lw) in log_w.iter().enumerate() {
            let e = -(1.0 - rng.gen::<f64>()).ln();
            keys.push((e.ln() - lw, i));
        }
        keys.select_nth_unstable_by(degree - 1, |a, b| a.0.total_cmp(&b.0));
        let mut chosen: Vec<usize> = keys[..degree].iter().map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        pairs.extend(chosen.into_iter().map(|i| (u, i)));
    }
    Ok(Interactions::from_unique(cfg.users, cfg.items, pairs))
}

/// Box-Muller standard normal.
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
