//! Experiment plumbing shared by the command-line runner and the tests.

use std::fmt;
use std::str::FromStr;

use crate::dataset::synthetic::{generate, SyntheticConfig};
use crate::dataset::{
    inject_noise_grouped, inject_noise_uniform, k_core_filter, train_test_split, Interactions, SplitPair,
};
use crate::error::{Error, Result};
use crate::temperature::TemperatureState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

impl DatasetStats {
    pub fn of(data: &Interactions) -> Self {
        Self {
            users: data.n(),
            items: data.m(),
            interactions: data.len(),
            density: data.density(),
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} density={:.6}",
            self.users, self.items, self.interactions, self.density
        )
    }
}

/// k-core filter followed by a per-user random split.
pub fn prepare(data: &Interactions, k_core: usize, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    let filtered = if k_core <= 1 { data.clone() } else { k_core_filter(data, k_core)? };
    train_test_split(&filtered, train_fraction, seed)
}

/// Synthetic stand-in with MovieLens-100k proportions: 10-core, 80/20 split.
pub fn movielens_scale_split(seed: u64) -> Result<SplitPair> {
    let data = generate(&SyntheticConfig::movielens_100k_scale(seed))?;
    prepare(&data, 10, 0.8, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Uniform,
    Grouped,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseMode::Uniform),
            "grouped" => Ok(NoiseMode::Grouped),
            other => Err(Error::invalid(format!("unknown noise mode {other:?}"))),
        }
    }
}

/// Training side corrupted with false positives; injected pairs are removed
/// from the test truth. `groups` is empty in uniform mode.
#[derive(Debug, Clone)]
pub struct NoisySplit {
    pub split: SplitPair,
    pub fake: Vec<(usize, usize)>,
    pub groups: Vec<usize>,
}

pub fn noisy_split(split: &SplitPair, mode: NoiseMode, ratios: &[f64], seed: u64) -> Result<NoisySplit> {
    let (noisy, groups) = match mode {
        NoiseMode::Uniform => {
            let &[ratio] = ratios else {
                return Err(Error::invalid("uniform noise takes exactly one ratio"));
            };
            (inject_noise_uniform(&split.train, ratio, seed)?, Vec::new())
        }
        NoiseMode::Grouped => inject_noise_grouped(&split.train, ratios, seed)?,
    };
    Ok(NoisySplit {
        split: split.with_noisy_train(&noisy)?,
        fake: noisy.fake,
        groups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupTau {
    pub group: usize,
    pub users: usize,
    pub mean_tau: f64,
    pub mean_loss: Option<f64>,
}

/// Mean per-user temperature (and recorded loss) for each user group.
pub fn group_mean_taus(state: &TemperatureState, groups: &[usize], count: usize) -> Vec<GroupTau> {
    let mut tau_sum = vec![0.0; count];
    let mut loss_sum = vec![0.0; count];
    let mut loss_n = vec![0usize; count];
    let mut users = vec![0usize; count];
    for (u, &g) in groups.iter().enumerate() {
        tau_sum[g] += state.tau_user[u];
        users[g] += 1;
        if let Some(l) = state.user_loss[u] {
            loss_sum[g] += l;
            loss_n[g] += 1;
        }
    }
    (0..count)
        .map(|g| GroupTau {
            group: g,
            users: users[g],
            mean_tau: tau_sum[g] / users[g].max(1) as f64,
            mean_loss: (loss_n[g] > 0).then(|| loss_sum[g] / loss_n[g] as f64),
        })
        .collect()
}
