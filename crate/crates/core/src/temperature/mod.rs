//! Adaptive temperatures.
//!
//! The global temperature `tau0` comes from the positive/overall cosine
//! statistics of the current embeddings:
//!
//! ```text
//! tau0 ≈ (mu+ - mu) / log(nm / 2|D|)                                  (simplified)
//! tau0 ≈ (s+ - s) / (-(mu+ - mu) + sqrt((mu+ - mu)^2 + 2 (s+ - s) log(nm / 2|D|)))
//! ```
//!
//! The second form is evaluated through its conjugate
//! `((mu+ - mu) + sqrt(disc)) / (2 log(nm / 2|D|))`, which is finite as
//! `s+ - s -> 0`. Per-user temperatures follow the SuperLoss closed form
//! `tau_u = tau0 exp(W(max(-1/e, (L(u) - m_u) / (2 beta))))`.

mod lambert;

use std::f64::consts::E;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use lambert::lambert_w;

use crate::dataset::Interactions;
use crate::embedding::{dot, EmbeddingTable, NormMode, ScoringRows};
use crate::error::{Error, Result};
use crate::loss::positive_mass;

/// Pair count above which `sigma^2` is estimated by sampling.
pub const EXACT_SIGMA_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for TauBounds {
    fn default() -> Self {
        Self { min: 0.02, max: 1.0 }
    }
}

impl TauBounds {
    pub fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(self.min, self.max)
    }
}

/// How a user's per-entry losses are folded into `L(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossAggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureConfig {
    pub bounds: TauBounds,
    pub beta: f64,
    pub aggregation: LossAggregation,
    /// Weight of the previous `L(u)` in an exponential moving average; 0 disables smoothing.
    pub smoothing: f64,
    /// Uniform pairs sampled for `sigma^2` on large catalogs.
    pub sigma_sample_size: usize,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            bounds: TauBounds::default(),
            beta: 1.0,
            aggregation: LossAggregation::Mean,
            smoothing: 0.0,
            sigma_sample_size: 100_000,
        }
    }
}

/// Distribution statistics of cosine scores behind `tau0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CosineStats {
    pub mu_plus: f64,
    pub mu: f64,
    pub sigma2_plus: f64,
    pub sigma2: f64,
}

/// Running per-user loss sums for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UserLossAccum {
    pub sum: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct TemperatureState {
    pub config: TemperatureConfig,
    pub tau0: f64,
    pub tau_user: Vec<f64>,
    /// `L(u)` at the common temperature; `None` until the user is seen.
    pub user_loss: Vec<Option<f64>>,
    /// Threshold `m_u` (mean of `L(u)` over active users).
    pub m_u: Option<f64>,
    pub stats: CosineStats,
}

impl TemperatureState {
    pub fn new(n: usize, config: TemperatureConfig, tau0: f64) -> Self {
        let tau0 = config.bounds.clamp(tau0);
        Self {
            config,
            tau0,
            tau_user: vec![tau0; n],
            user_loss: vec![None; n],
            m_u: None,
            stats: CosineStats::default(),
        }
    }

    pub fn set_tau0(&mut self, tau0: f64) {
        self.tau0 = self.config.bounds.clamp(tau0);
    }

    /// Recomputes every `tau_u` from the stored losses and current `tau0`.
    pub fn refresh_user_taus(&mut self) {
        for u in 0..self.tau_user.len() {
            self.tau_user[u] = tau_user(self, u);
        }
    }

    /// Sets all users to `tau0`.
    pub fn use_global_tau(&mut self) {
        let tau0 = self.tau0;
        self.tau_user.iter_mut().for_each(|t| *t = tau0);
    }

    pub fn tau_summary(&self) -> (f64, f64, f64) {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &t in &self.tau_user {
            lo = lo.min(t);
            hi = hi.max(t);
            sum += t;
        }
        (lo, sum / self.tau_user.len().max(1) as f64, hi)
    }
}

/// Per-user temperature from the SuperLoss closed form, clamped to the
/// configured bounds; users without a recorded loss get `tau0`.
pub fn tau_user(state: &TemperatureState, u: usize) -> f64 {
    match (state.user_loss[u], state.m_u) {
        (Some(loss), Some(threshold)) => {
            let tau = superloss_tau(loss, threshold, state.config.beta, state.tau0);
            state.config.bounds.clamp(tau)
        }
        _ => state.tau0,
    }
}

/// Unclamped `tau0 exp(W(max(-1/e, (loss - threshold) / (2 beta))))`.
pub fn superloss_tau(loss: f64, threshold: f64, beta: f64, tau0: f64) -> f64 {
    let z = ((loss - threshold) / (2.0 * beta)).max(-1.0 / E);
    let w = lambert_w(z).expect("argument clamped into the domain");
    tau0 * w.exp()
}

/// Folds one epoch of per-user losses (at the common temperature) into
/// `L(u)`, recomputes `m_u` over users seen this epoch and refreshes `tau_u`.
/// Users without entries keep their previous loss.
pub fn update_user_loss_stats(state: &mut TemperatureState, epoch_losses: &[UserLossAccum]) {
    let cfg = state.config;
    let mut total = 0.0;
    let mut active = 0usize;
    for (u, acc) in epoch_losses.iter().enumerate() {
        if acc.count == 0 {
            continue;
        }
        let fresh = match cfg.aggregation {
            LossAggregation::Mean => acc.sum / acc.count as f64,
            LossAggregation::Sum => acc.sum,
        };
        let value = match state.user_loss[u] {
            Some(prev) if cfg.smoothing > 0.0 => cfg.smoothing * prev + (1.0 - cfg.smoothing) * fresh,
            _ => fresh,
        };
        state.user_loss[u] = Some(value);
        total += value;
        active += 1;
    }
    if active > 0 {
        state.m_u = Some(total / active as f64);
    }
    state.refresh_user_taus();
}

fn cosine_rows(table: &EmbeddingTable) -> Result<ScoringRows> {
    if table.norm_mode == NormMode::Both {
        table.scoring_rows()
    } else {
        table.clone().with_norm_mode(NormMode::Both).scoring_rows()
    }
}

/// Mean cosine over training positives.
pub fn estimate_mu_plus(table: &EmbeddingTable, train: &Interactions) -> Result<f64> {
    let rows = cosine_rows(table)?;
    Ok(mu_plus_from_rows(&rows, train))
}

/// Mean over users of `e_u_hat . c` with `c` the (unnormalized) centroid of the
/// unit item rows; equals the mean cosine over all `n * m` pairs.
pub fn estimate_mu(table: &EmbeddingTable) -> Result<f64> {
    let rows = cosine_rows(table)?;
    Ok(mu_from_rows(&rows, table.n(), table.m()))
}

fn mu_plus_from_rows(rows: &ScoringRows, train: &Interactions) -> f64 {
    if train.is_empty() {
        return 0.0;
    }
    let total: f64 = train.pairs().iter().map(|&(u, i)| rows.score(u, i)).sum();
    total / train.len() as f64
}

fn mu_from_rows(rows: &ScoringRows, n: usize, m: usize) -> f64 {
    let d = rows.d;
    let mut centroid = vec![0.0; d];
    for i in 0..m {
        centroid.iter_mut().zip(rows.item_row(i)).for_each(|(c, v)| *c += v);
    }
    centroid.iter_mut().for_each(|c| *c /= m as f64);
    (0..n).map(|u| dot(rows.user_row(u), &centroid)).sum::<f64>() / n as f64
}

/// `(sigma^2, sigma+^2)`: population variances of cosine over all pairs and over
/// training positives. All pairs are enumerated when `n * m` is at most
/// [`EXACT_SIGMA_LIMIT`], otherwise `sample_size` uniform pairs are drawn.
pub fn estimate_sigmas(
    table: &EmbeddingTable,
    train: &Interactions,
    sample_size: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if sample_size < 2 {
        return Err(Error::invalid("sigma estimation needs sample_size >= 2"));
    }
    let rows = cosine_rows(table)?;
    let positive = variance(train.pairs().iter().map(|&(u, i)| rows.score(u, i)));
    let (n, m) = (table.n(), table.m());
    let overall = if n * m <= EXACT_SIGMA_LIMIT {
        variance((0..n).flat_map(|u| (0..m).map(move |i| (u, i))).map(|(u, i)| rows.score(u, i)))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        variance((0..sample_size).map(|_| rows.score(rng.gen_range(0..n), rng.gen_range(0..m))))
    };
    Ok((overall, positive))
}

fn variance(values: impl Iterator<Item = f64>) -> f64 {
    // Welford
    let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    if count == 0 {
        0.0
    } else {
        m2 / count as f64
    }
}

/// Computes the full set of cosine statistics in one call.
pub fn cosine_stats(table: &EmbeddingTable, train: &Interactions, sample_size: usize, seed: u64) -> Result<CosineStats> {
    let rows = cosine_rows(table)?;
    let (sigma2, sigma2_plus) = estimate_sigmas(table, train, sample_size, seed)?;
    Ok(CosineStats {
        mu_plus: mu_plus_from_rows(&rows, train),
        mu: mu_from_rows(&rows, table.n(), table.m()),
        sigma2_plus,
        sigma2,
    })
}

/// `(mu+, mu)` with the per-epoch cost `O((n + m) d + |D| d)`.
pub fn estimate_mus(table: &EmbeddingTable, train: &Interactions) -> Result<(f64, f64)> {
    let rows = cosine_rows(table)?;
    Ok((mu_plus_from_rows(&rows, train), mu_from_rows(&rows, table.n(), table.m())))
}

/// `log(n m / (2 |D|))`; requires `n m > 2 |D|`.
pub fn log_density_ratio(n: usize, m: usize, positives: usize) -> Result<f64> {
    let ratio = n as f64 * m as f64 / (2.0 * positives as f64);
    if !(ratio > 1.0) {
        return Err(Error::invalid(format!(
            "tau0 needs n*m > 2|D| (n={n}, m={m}, |D|={positives})"
        )));
    }
    Ok(ratio.ln())
}

/// Unclamped simplified form `(mu+ - mu) / log_ratio`.
pub fn tau0_simplified_raw(delta_mu: f64, log_ratio: f64) -> f64 {
    delta_mu / log_ratio
}

/// Unclamped quadratic-root form; `None` when the discriminant is negative.
pub fn tau0_full_raw(delta_mu: f64, delta_sigma2: f64, log_ratio: f64) -> Option<f64> {
    let disc = delta_mu * delta_mu + 2.0 * delta_sigma2 * log_ratio;
    if disc < 0.0 {
        return None;
    }
    Some((delta_mu + disc.sqrt()) / (2.0 * log_ratio))
}

pub fn tau0_simplified(mu_plus: f64, mu: f64, n: usize, m: usize, positives: usize, bounds: TauBounds) -> Result<f64> {
    let log_ratio = log_density_ratio(n, m, positives)?;
    if mu_plus <= mu {
        warn!("mu+ ({mu_plus:.6}) <= mu ({mu:.6}): positives not separated yet, using tau_min");
        return Ok(bounds.min);
    }
    Ok(bounds.clamp(tau0_simplified_raw(mu_plus - mu, log_ratio)))
}

#[allow(clippy::too_many_arguments)]
pub fn tau0_full(
    mu_plus: f64,
    mu: f64,
    sigma2_plus: f64,
    sigma2: f64,
    n: usize,
    m: usize,
    positives: usize,
    bounds: TauBounds,
) -> Result<f64> {
    let log_ratio = log_density_ratio(n, m, positives)?;
    if mu_plus <= mu {
        warn!("mu+ ({mu_plus:.6}) <= mu ({mu:.6}): positives not separated yet, using tau_min");
        return Ok(bounds.min);
    }
    match tau0_full_raw(mu_plus - mu, sigma2_plus - sigma2, log_ratio) {
        Some(tau) => Ok(bounds.clamp(tau)),
        None => {
            warn!("negative discriminant in the full tau0 form, falling back to the simplified form");
            tau0_simplified(mu_plus, mu, n, m, positives, bounds)
        }
    }
}

/// Full-catalog score matrix for exact evaluation of `E_u[sum_{i in P_u} p_ui]`.
pub struct ConditionCurve<'a> {
    scores: Vec<f64>,
    m: usize,
    train: &'a Interactions,
}

impl<'a> ConditionCurve<'a> {
    pub fn new(table: &EmbeddingTable, train: &'a Interactions) -> Result<Self> {
        let rows = cosine_rows(table)?;
        let (n, m) = (table.n(), table.m());
        let mut scores = vec![0.0; n * m];
        for u in 0..n {
            for i in 0..m {
                scores[u * m + i] = rows.score(u, i);
            }
        }
        Ok(Self { scores, m, train })
    }

    /// Mean positive mass over users with at least one positive.
    pub fn mean_positive_mass(&self, tau: f64) -> f64 {
        let mut total = 0.0;
        let mut users = 0;
        for u in 0..self.train.n() {
            let positives = self.train.user_items(u);
            if positives.is_empty() {
                continue;
            }
            total += positive_mass(&self.scores[u * self.m..(u + 1) * self.m], positives, tau);
            users += 1;
        }
        total / users.max(1) as f64
    }
}

/// Bisects `E_u[sum_{i in P_u} p_ui(tau)] = 1/2` on the bounds until the
/// condition holds within `tol`.
pub fn tau0_oracle_bisect(table: &EmbeddingTable, train: &Interactions, bounds: TauBounds, tol: f64) -> Result<f64> {
    let curve = ConditionCurve::new(table, train)?;
    let f = |tau: f64| curve.mean_positive_mass(tau) - 0.5;
    let (mut lo, mut hi) = (bounds.min, bounds.max);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo.abs() < tol {
        return Ok(lo);
    }
    if f_hi.abs() < tol {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NotBracketed {
            lo,
            hi,
            at_lo: f_lo + 0.5,
            at_hi: f_hi + 0.5,
        });
    }
    let lo_positive = f_lo > 0.0;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < tol {
            return Ok(mid);
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::xavier_init;
    use approx::assert_abs_diff_eq;

    fn state_with(losses: &[f64], tau0: f64) -> TemperatureState {
        let mut s = TemperatureState::new(losses.len(), TemperatureConfig::default(), tau0);
        let acc: Vec<_> = losses.iter().map(|&l| UserLossAccum { sum: l, count: 1 }).collect();
        update_user_loss_stats(&mut s, &acc);
        s
    }

    #[test]
    fn tau_user_at_threshold_is_tau0() {
        let s = state_with(&[0.75, 0.75, 0.75], 0.1);
        assert_eq!(s.m_u, Some(0.75));
        assert!(s.tau_user.iter().all(|&t| t == 0.1));
    }

    #[test]
    fn tau_user_w_of_e() {
        // (L - m)/(2 beta) = e
        let tau = superloss_tau(1.0 + 2.0 * E, 1.0, 1.0, 0.1);
        assert_abs_diff_eq!(tau, 0.1 * E, epsilon = 1e-15);
    }

    #[test]
    fn two_users_example() {
        let s = state_with(&[1.0, 3.0], 0.1);
        assert_eq!(s.m_u, Some(2.0));
        let expected = 0.1 * lambert_w(0.5).unwrap().exp();
        assert_abs_diff_eq!(s.tau_user[1], expected, epsilon = 1e-15);
        assert!(s.tau_user[1] > s.tau0);
        assert!(s.tau_user[0] < s.tau0);
    }

    #[test]
    fn clamp_active_gives_boundary_solution() {
        let tau = superloss_tau(0.0, 10.0, 1.0, 0.5);
        assert_abs_diff_eq!(tau, 0.5 / E, epsilon = 1e-15);
    }

    #[test]
    fn unseen_users_keep_loss_and_fallback() {
        let mut s = TemperatureState::new(3, TemperatureConfig::default(), 0.2);
        update_user_loss_stats(&mut s, &[UserLossAccum { sum: 2.0, count: 2 }, UserLossAccum::default(), UserLossAccum { sum: 3.0, count: 1 }]);
        assert_eq!(s.user_loss, vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(s.tau_user[1], 0.2);
        update_user_loss_stats(&mut s, &[UserLossAccum::default(), UserLossAccum::default(), UserLossAccum { sum: 5.0, count: 1 }]);
        assert_eq!(s.user_loss, vec![Some(1.0), None, Some(5.0)]);
        assert_eq!(s.m_u, Some(5.0));
    }

    #[test]
    fn sum_aggregation_and_smoothing() {
        let cfg = TemperatureConfig {
            aggregation: LossAggregation::Sum,
            smoothing: 0.5,
            ..TemperatureConfig::default()
        };
        let mut s = TemperatureState::new(1, cfg, 0.2);
        update_user_loss_stats(&mut s, &[UserLossAccum { sum: 4.0, count: 2 }]);
        assert_eq!(s.user_loss[0], Some(4.0));
        update_user_loss_stats(&mut s, &[UserLossAccum { sum: 2.0, count: 2 }]);
        assert_eq!(s.user_loss[0], Some(3.0));
    }

    #[test]
    fn large_beta_degenerates_to_tau0() {
        let mut s = TemperatureState::new(4, TemperatureConfig { beta: 1e9, ..Default::default() }, 0.15);
        let acc: Vec<_> = [0.1, 2.0, 5.0, 9.0].iter().map(|&l| UserLossAccum { sum: l, count: 1 }).collect();
        update_user_loss_stats(&mut s, &acc);
        assert!(s.tau_user.iter().all(|t| (t - 0.15).abs() < 1e-6));
    }

    #[test]
    fn mu_estimators_identical_rows() {
        let t = EmbeddingTable::from_parts(2, 3, 2, vec![1.0, 1.0, 2.0, 2.0], vec![3.0, 3.0, 0.5, 0.5, 1.0, 1.0]).unwrap();
        let train = Interactions::from_pairs(2, 3, [(0, 0), (1, 2)]).unwrap().0;
        assert_abs_diff_eq!(estimate_mu_plus(&t, &train).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(estimate_mu(&t).unwrap(), 1.0, epsilon = 1e-15);
        let (s2, s2p) = estimate_sigmas(&t, &train, 10, 0).unwrap();
        assert_abs_diff_eq!(s2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s2p, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mu_plus_mean_of_two() {
        // user (1,0); items at cosine 0.4 and 0.6
        let c = |v: f64| [v, (1.0 - v * v).sqrt()];
        let item: Vec<f64> = [c(0.4), c(0.6)].concat();
        let t = EmbeddingTable::from_parts(1, 2, 2, vec![1.0, 0.0], item).unwrap();
        let train = Interactions::from_pairs(1, 2, [(0, 0), (0, 1)]).unwrap().0;
        assert_abs_diff_eq!(estimate_mu_plus(&t, &train).unwrap(), 0.5, epsilon = 1e-15);
        let (_, s2p) = estimate_sigmas(&t, &train, 2, 0).unwrap();
        assert_abs_diff_eq!(s2p, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn mu_near_zero_for_symmetric_items() {
        let item = vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let t = EmbeddingTable::from_parts(2, 4, 2, vec![0.3, 0.9, -2.0, 1.0], item).unwrap();
        assert_abs_diff_eq!(estimate_mu(&t).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn random_init_mu_plus_near_zero() {
        let data = crate::dataset::synthetic::generate(&crate::dataset::synthetic::SyntheticConfig::zipf(400, 300, 30.0, 2)).unwrap();
        assert!(data.len() >= 10_000);
        let t = xavier_init(400, 300, 64, 7).unwrap();
        assert!(estimate_mu_plus(&t, &data).unwrap().abs() < 0.05);
    }

    #[test]
    fn sigma_sampling_path_close_to_exact() {
        let t = xavier_init(1100, 1000, 16, 3).unwrap();
        let train = Interactions::from_pairs(1100, 1000, [(0, 0), (1, 1)]).unwrap().0;
        let (sampled, _) = estimate_sigmas(&t, &train, 100_000, 4).unwrap();
        // unit-vector cosines in 16 dims have variance 1/16
        assert!((sampled - 1.0 / 16.0).abs() < 0.003, "{sampled}");
    }

    #[test]
    fn simplified_tau0_examples() {
        let b = TauBounds::default();
        let (n, m, d) = (31831, 40841, 1_666_869);
        let l = log_density_ratio(n, m, d).unwrap();
        assert_abs_diff_eq!(l, 5.966, epsilon = 1e-3);
        let tau = tau0_simplified(0.5922, 0.0, n, m, d, b).unwrap();
        assert_abs_diff_eq!(tau, 0.0993, epsilon = 1e-4);
        assert_eq!(tau0_simplified(0.3, 0.3, n, m, d, b).unwrap(), b.min);
        assert_abs_diff_eq!(tau0_simplified_raw(0.4, l), 2.0 * tau0_simplified_raw(0.2, l), epsilon = 1e-15);
        assert!(tau0_simplified(0.5, 0.0, 2, 2, 2, b).is_err());
    }

    #[test]
    fn full_tau0_limit_and_fallback() {
        let (n, m, d) = (1000, 2000, 20_000);
        let b = TauBounds::default();
        let simple = tau0_simplified(0.6, 0.1, n, m, d, b).unwrap();
        let full = tau0_full(0.6, 0.1, 0.02, 0.02, n, m, d, b).unwrap();
        assert_abs_diff_eq!(full, simple, epsilon = 1e-12);
        let l = log_density_ratio(n, m, d).unwrap();
        for eps in [1e-8, -1e-8] {
            let f = tau0_full_raw(0.5, eps, l).unwrap();
            let s = tau0_simplified_raw(0.5, l);
            assert!(((f - s) / s).abs() < 1e-6);
        }
        // discriminant < 0 falls back
        let fb = tau0_full(0.2, 0.1, 0.0, 1.0, n, m, d, b).unwrap();
        assert_eq!(fb, tau0_simplified(0.2, 0.1, n, m, d, b).unwrap());
    }

    #[test]
    fn bisection_requires_bracket() {
        // all cosines equal: E_u[S] = |P_u|/m regardless of tau
        let t = EmbeddingTable::from_parts(1, 4, 1, vec![1.0], vec![1.0; 4]).unwrap();
        let train = Interactions::from_pairs(1, 4, [(0, 0)]).unwrap().0;
        assert!(matches!(
            tau0_oracle_bisect(&t, &train, TauBounds::default(), 1e-6),
            Err(Error::NotBracketed { .. })
        ));
    }
}
