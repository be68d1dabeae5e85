//! Epoch loop: temperature refresh, negative sampling, batched updates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Interactions, PopularityGrouping, SplitPair};
use crate::embedding::{xavier_init, BackboneConfig, BackboneKind, EmbeddingTable, NormMode, Propagation};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::loss::{accumulate, add_l2, BatchTriples, GradientRecord};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::temperature::{
    estimate_mus, estimate_sigmas, log_density_ratio, tau0_full, tau0_simplified, update_user_loss_stats,
    CosineStats, TemperatureConfig, TemperatureState, UserLossAccum,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Raw inner product, temperature 1.
    NoNorm,
    FixedTau(f64),
    /// Global closed-form temperature for every user.
    AdapTau0,
    /// Global temperature plus per-user SuperLoss adjustment.
    AdapTau,
}

impl Strategy {
    /// Parses a strategy name; `fixed-tau` takes its value from `tau`.
    pub fn parse(name: &str, tau: Option<f64>) -> Result<Self> {
        match name {
            "no-norm" => Ok(Strategy::NoNorm),
            "fixed-tau" => tau
                .map(Strategy::FixedTau)
                .ok_or_else(|| Error::invalid("fixed-tau needs a temperature (--tau)")),
            "adap-tau0" => Ok(Strategy::AdapTau0),
            "adap-tau" => Ok(Strategy::AdapTau),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::NoNorm => "no-norm",
            Strategy::FixedTau(_) => "fixed-tau",
            Strategy::AdapTau0 => "adap-tau0",
            Strategy::AdapTau => "adap-tau",
        }
    }

    pub fn norm_mode(&self) -> NormMode {
        match self {
            Strategy::NoNorm => NormMode::None,
            _ => NormMode::Both,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Strategy::AdapTau0 | Strategy::AdapTau)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::FixedTau(t) => write!(f, "fixed-tau({t})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Which closed form produces the epoch's global temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tau0Form {
    #[default]
    Simplified,
    /// Includes the variance correction; needs an extra `O(nm d)` (or sampled) pass.
    Full,
}

impl FromStr for Tau0Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(Tau0Form::Simplified),
            "full" => Ok(Tau0Form::Full),
            other => Err(Error::invalid(format!("unknown tau0 form {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub backbone: BackboneConfig,
    pub seed: u64,
    /// Evaluate every this many epochs; 0 evaluates only after the last one.
    pub eval_interval: usize,
    /// Stop after this many epochs without a recall improvement.
    pub patience: Option<usize>,
    pub k: usize,
    pub temperature: TemperatureConfig,
    pub tau0_form: Tau0Form,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::AdapTau,
            dim: 64,
            lr: 1e-3,
            l2: 0.0,
            batch_size: 1024,
            negatives: 256,
            epochs: 50,
            optimizer: OptimizerKind::default(),
            backbone: BackboneConfig::mf(),
            seed: 0,
            eval_interval: 5,
            patience: None,
            k: 20,
            temperature: TemperatureConfig::default(),
            tau0_form: Tau0Form::Simplified,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.negatives == 0 || self.batch_size == 0 || self.dim == 0 || self.k == 0 {
            return Err(Error::invalid("negatives, batch size, dimension and k must be >= 1"));
        }
        if let Strategy::FixedTau(t) = self.strategy {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("fixed temperature must be > 0, got {t}")));
            }
        }
        let b = self.temperature.bounds;
        if !(b.min > 0.0 && b.min <= b.max) {
            return Err(Error::invalid("temperature bounds need 0 < tau_min <= tau_max"));
        }
        if !(self.temperature.beta > 0.0) {
            return Err(Error::invalid("beta must be > 0"));
        }
        if !(0.0..1.0).contains(&self.temperature.smoothing) {
            return Err(Error::invalid("smoothing must be in [0, 1)"));
        }
        self.backbone.validate()
    }
}

/// Draws `count` items uniformly from the catalog, redrawing any positive of `u`.
pub fn sample_negatives(
    train: &Interactions,
    u: usize,
    count: usize,
    rng: &mut impl Rng,
    out: &mut Vec<usize>,
) -> Result<()> {
    let m = train.m();
    if train.user_degree(u) >= m {
        return Err(Error::NoNegatives { user: u });
    }
    out.clear();
    while out.len() < count {
        let j = rng.gen_range(0..m);
        if !train.contains(u, j) {
            out.push(j);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean softmax loss per training pair (regularization excluded).
    pub mean_loss: f64,
    pub tau0: f64,
    /// Present for adaptive strategies; variances only under [`Tau0Form::Full`].
    pub cosine: Option<CosineStats>,
    pub m_u: Option<f64>,
    pub tau_min: f64,
    pub tau_mean: f64,
    pub tau_max: f64,
    pub tau0_seconds: f64,
    pub seconds: f64,
}

/// Mutable training state for one model; drives [`Trainer::train_epoch`].
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    train: Interactions,
    table: EmbeddingTable,
    temperature: TemperatureState,
    optimizer: OptimizerState,
    propagation: Option<Propagation>,
    rng: ChaCha8Rng,
    epoch: usize,
    record: GradientRecord,
}

impl Trainer {
    /// Xavier-initialized trainer seeded from `config.seed`.
    pub fn new(train: &Interactions, config: TrainConfig) -> Result<Self> {
        let table = xavier_init(train.n(), train.m(), config.dim, config.seed)?;
        Self::with_table(train, config, table)
    }

    pub fn with_table(train: &Interactions, config: TrainConfig, table: EmbeddingTable) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyInput("training interactions".into()));
        }
        if (table.n(), table.m(), table.d()) != (train.n(), train.m(), config.dim) {
            return Err(Error::invalid("embedding table shape does not match the data and dimension"));
        }
        if config.strategy.is_adaptive() {
            log_density_ratio(train.n(), train.m(), train.len())?;
        }
        let table = table.with_norm_mode(config.strategy.norm_mode());
        let propagation = match config.backbone.kind {
            BackboneKind::Mf => None,
            BackboneKind::LightGcn => Some(Propagation::new(train, config.backbone.layers)?),
        };
        let mut temperature = TemperatureState::new(train.n(), config.temperature, config.temperature.bounds.min);
        let fixed = match config.strategy {
            Strategy::NoNorm => Some(1.0),
            Strategy::FixedTau(t) => Some(t),
            _ => None,
        };
        if let Some(t) = fixed {
            // Fixed temperatures bypass the adaptive clamp.
            temperature.tau0 = t;
            temperature.use_global_tau();
        }
        let optimizer = OptimizerState::new(config.optimizer, config.lr, &table)?;
        let record = GradientRecord::new(train.n(), train.m(), config.dim);
        // Offset the stream so sampling does not reuse the initialization draws.
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_5a3b1e5);
        Ok(Self {
            config,
            train: train.clone(),
            table,
            temperature,
            optimizer,
            propagation,
            rng,
            epoch: 0,
            record,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Stored (base) embeddings.
    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn into_table(self) -> EmbeddingTable {
        self.table
    }

    pub fn train_set(&self) -> &Interactions {
        &self.train
    }

    pub fn temperature(&self) -> &TemperatureState {
        &self.temperature
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// The table used for scoring: propagated for LightGCN, the base table otherwise.
    pub fn scoring_table(&self) -> EmbeddingTable {
        match &self.propagation {
            Some(p) => p.propagate(&self.table),
            None => self.table.clone(),
        }
    }

    pub fn evaluate(&self, test: &Interactions, grouping: Option<&PopularityGrouping>) -> Result<EvalReport> {
        evaluate(&self.scoring_table(), &self.train, test, self.config.k, grouping)
    }

    /// Recomputes `tau0` from the current scoring embeddings and refreshes the
    /// per-user temperatures. Returns the statistics and the elapsed seconds.
    fn refresh_temperature(&mut self) -> Result<(Option<CosineStats>, f64)> {
        if !self.config.strategy.is_adaptive() {
            return Ok((None, 0.0));
        }
        let start = Instant::now();
        let seed = self.config.seed ^ self.epoch as u64;
        let (tau0, stats) = estimate_tau0(&self.scoring_table(), &self.train, &self.config, seed)?;
        self.temperature.set_tau0(tau0);
        self.temperature.stats = stats;
        match self.config.strategy {
            Strategy::AdapTau => self.temperature.refresh_user_taus(),
            _ => self.temperature.use_global_tau(),
        }
        Ok((Some(stats), start.elapsed().as_secs_f64()))
    }

    /// One pass over every training pair in shuffled mini-batches.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let (cosine, tau0_seconds) = self.refresh_temperature()?;
        let (tau_min, tau_mean, tau_max) = self.temperature.tau_summary();

        let common_tau = self.temperature.tau0;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut batch = BatchTriples::with_capacity(self.config.negatives, self.config.batch_size)?;
        let mut negatives = Vec::with_capacity(self.config.negatives);
        let mut user_losses = vec![UserLossAccum::default(); self.train.n()];
        let mut loss_sum = 0.0;

        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            batch.clear();
            for &idx in chunk {
                let (u, i) = self.train.pairs()[idx];
                sample_negatives(&self.train, u, self.config.negatives, &mut self.rng, &mut negatives)?;
                batch.push(u, i, &negatives)?;
            }
            self.batch_gradients(&batch, common_tau)?;
            let rec = &self.record;
            if !rec.loss.is_finite() {
                let mut users = batch.users().to_vec();
                users.sort_unstable();
                users.dedup();
                users.truncate(16);
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    tau_min,
                    tau_max,
                    users,
                });
            }
            loss_sum += rec.loss * chunk.len() as f64;
            for &(u, l) in &rec.common_losses {
                user_losses[u].sum += l;
                user_losses[u].count += 1;
            }
            self.optimizer.apply(&mut self.table, &self.record);
        }

        if self.config.strategy.is_adaptive() {
            update_user_loss_stats(&mut self.temperature, &user_losses);
            if self.config.strategy == Strategy::AdapTau0 {
                self.temperature.use_global_tau();
            }
        }
        self.epoch = epoch;
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / self.train.len() as f64,
            tau0: self.temperature.tau0,
            cosine,
            m_u: self.temperature.m_u,
            tau_min,
            tau_mean,
            tau_max,
            tau0_seconds,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!("epoch {epoch}: {stats:?}");
        Ok(stats)
    }

    /// Fills `self.record` with the batch gradients w.r.t. the base embeddings.
    fn batch_gradients(&mut self, batch: &BatchTriples, common_tau: f64) -> Result<()> {
        self.record.clear();
        let taus = &self.temperature.tau_user;
        match &self.propagation {
            None => {
                let rows = self.table.scoring_rows()?;
                accumulate(&rows, batch, taus, Some(common_tau), &mut self.record)?;
            }
            Some(prop) => {
                let rows = prop.propagate(&self.table).scoring_rows()?;
                accumulate(&rows, batch, taus, Some(common_tau), &mut self.record)?;
                // The mean-of-layers map is symmetric, so it is its own transpose.
                let d = self.table.d();
                let (gu, gi) = prop.apply(d, &self.record.user_grad, &self.record.item_grad);
                self.record.user_grad = gu;
                self.record.item_grad = gi;
                self.record.mark_all_touched();
            }
        }
        add_l2(&self.table, self.config.l2, &mut self.record);
        Ok(())
    }
}

/// Global temperature from the current scoring embeddings, in the form
/// selected by `config.tau0_form`. Costs `O((n + m) d + |D| d)` for the
/// simplified form plus a fixed-size sample for the variance terms.
pub fn estimate_tau0(
    scoring: &EmbeddingTable,
    train: &Interactions,
    config: &TrainConfig,
    seed: u64,
) -> Result<(f64, CosineStats)> {
    let (n, m, positives) = (train.n(), train.m(), train.len());
    let bounds = config.temperature.bounds;
    let (mu_plus, mu) = estimate_mus(scoring, train)?;
    let mut stats = CosineStats {
        mu_plus,
        mu,
        sigma2_plus: f64::NAN,
        sigma2: f64::NAN,
    };
    let tau0 = match config.tau0_form {
        Tau0Form::Simplified => tau0_simplified(mu_plus, mu, n, m, positives, bounds)?,
        Tau0Form::Full => {
            let (s2, s2p) = estimate_sigmas(scoring, train, config.temperature.sigma_sample_size, seed)?;
            stats.sigma2 = s2;
            stats.sigma2_plus = s2p;
            tau0_full(mu_plus, mu, s2p, s2, n, m, positives, bounds)?
        }
    };
    Ok((tau0, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub tau0: f64,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Base embeddings of the best evaluated epoch (final epoch if none was evaluated).
    pub table: EmbeddingTable,
    /// Scoring embeddings matching `table` (propagated under LightGCN).
    pub scoring_table: EmbeddingTable,
    pub history: Vec<HistoryRow>,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub report: Option<EvalReport>,
    /// Temperature state after the final epoch.
    pub temperature: TemperatureState,
}

/// Runs up to `config.epochs` epochs with periodic evaluation on `split.test`,
/// keeping the embeddings with the best recall.
pub fn train(split: &SplitPair, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_grouping(split, config, None)
}

pub fn train_with_grouping(
    split: &SplitPair,
    config: &TrainConfig,
    grouping: Option<&PopularityGrouping>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(&split.train, config.clone())?;
    let mut history = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, EmbeddingTable, EvalReport)> = None;

    for epoch in 1..=config.epochs {
        let stats = trainer.train_epoch()?;
        let due = if config.eval_interval == 0 {
            epoch == config.epochs
        } else {
            epoch % config.eval_interval == 0 || epoch == config.epochs
        };
        let mut row = HistoryRow {
            epoch,
            mean_loss: stats.mean_loss,
            tau0: stats.tau0,
            recall: None,
            ndcg: None,
            seconds: stats.seconds,
        };
        let mut stop = false;
        if due {
            let report = trainer.evaluate(&split.test, grouping)?;
            row.recall = Some(report.recall);
            row.ndcg = Some(report.ndcg);
            info!(
                "{} epoch {epoch}: loss {:.5} tau0 {:.4} recall@{} {:.5} ndcg {:.5}",
                config.strategy, stats.mean_loss, stats.tau0, report.k, report.recall, report.ndcg
            );
            if best.as_ref().map_or(true, |b| report.recall > b.0) {
                best = Some((report.recall, epoch, trainer.table().clone(), report));
            } else if let (Some(p), Some(b)) = (config.patience, &best) {
                stop = epoch - b.1 >= p;
            }
        }
        history.push(row);
        epochs.push(stats);
        if stop {
            info!("early stop at epoch {epoch}");
            break;
        }
    }

    let temperature = trainer.temperature().clone();
    let (table, best_epoch, report) = match best {
        Some((_, epoch, table, report)) => (table, epoch, Some(report)),
        None => (trainer.table().clone(), trainer.epochs_done(), None),
    };
    let scoring_table = match config.backbone.kind {
        BackboneKind::Mf => table.clone(),
        BackboneKind::LightGcn => Propagation::new(&split.train, config.backbone.layers)?.propagate(&table),
    };
    Ok(TrainOutcome {
        table,
        scoring_table,
        history,
        epochs,
        best_epoch,
        report,
        temperature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Interactions {
        Interactions::from_pairs(4, 6, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 4), (3, 4), (3, 5)])
            .unwrap()
            .0
    }

    fn cfg(strategy: Strategy) -> TrainConfig {
        TrainConfig {
            strategy,
            dim: 8,
            lr: 0.05,
            batch_size: 4,
            negatives: 3,
            epochs: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn forced_negative() {
        let train = Interactions::from_pairs(1, 2, [(0, 0)]).unwrap().0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::new();
        for _ in 0..20 {
            sample_negatives(&train, 0, 1, &mut rng, &mut out).unwrap();
            assert_eq!(out, vec![1]);
        }
        let full = Interactions::from_pairs(1, 2, [(0, 0), (0, 1)]).unwrap().0;
        assert!(matches!(
            sample_negatives(&full, 0, 1, &mut rng, &mut out),
            Err(Error::NoNegatives { user: 0 })
        ));
    }

    #[test]
    fn zero_lr_keeps_table() {
        for strategy in [Strategy::NoNorm, Strategy::FixedTau(0.5), Strategy::AdapTau] {
            let mut t = Trainer::new(&toy(), TrainConfig { lr: 0.0, ..cfg(strategy) }).unwrap();
            let before = t.table().clone();
            let stats = t.train_epoch().unwrap();
            assert_eq!(t.table().user, before.user);
            assert_eq!(t.table().item, before.item);
            assert!(stats.mean_loss.is_finite() && stats.mean_loss > 0.0);
        }
    }

    #[test]
    fn fixed_tau_reduces_loss() {
        let mut t = Trainer::new(&toy(), TrainConfig { lr: 0.05, ..cfg(Strategy::FixedTau(1.0)) }).unwrap();
        let first = t.train_epoch().unwrap().mean_loss;
        let mut last = first;
        for _ in 0..30 {
            last = t.train_epoch().unwrap().mean_loss;
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn first_epoch_adaptive_strategies_agree() {
        let mut a = Trainer::new(&toy(), cfg(Strategy::AdapTau0)).unwrap();
        let mut b = Trainer::new(&toy(), cfg(Strategy::AdapTau)).unwrap();
        a.train_epoch().unwrap();
        b.train_epoch().unwrap();
        assert_eq!(a.table(), b.table());
    }

    #[test]
    fn deterministic_under_sgd_and_adam() {
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::adam()] {
            let run = || {
                let mut t = Trainer::new(&toy(), TrainConfig { optimizer, ..cfg(Strategy::AdapTau) }).unwrap();
                for _ in 0..3 {
                    t.train_epoch().unwrap();
                }
                t.into_table()
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn zero_epochs_returns_initial_table() {
        let split = SplitPair::new(toy(), Interactions::from_pairs(4, 6, [(0, 2)]).unwrap().0).unwrap();
        let out = train(&split, &TrainConfig { epochs: 0, ..cfg(Strategy::AdapTau) }).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.table.user, xavier_init(4, 6, 8, 0).unwrap().user);
    }

    #[test]
    fn lightgcn_trains() {
        let split = SplitPair::new(toy(), Interactions::from_pairs(4, 6, [(0, 2)]).unwrap().0).unwrap();
        let config = TrainConfig {
            backbone: BackboneConfig::lightgcn(2),
            epochs: 3,
            ..cfg(Strategy::AdapTau)
        };
        let out = train(&split, &config).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(out.history.iter().all(|h| h.mean_loss.is_finite()));
    }

    #[test]
    fn parse_strategies() {
        assert_eq!(Strategy::parse("fixed-tau", Some(0.1)).unwrap(), Strategy::FixedTau(0.1));
        assert!(Strategy::parse("fixed-tau", None).is_err());
        assert_eq!(Strategy::parse("adap-tau", None).unwrap(), Strategy::AdapTau);
        assert!(Strategy::parse("bogus", None).is_err());
    }
}
