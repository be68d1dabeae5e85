//! Implicit-feedback interaction data: the positive pair set `D` together with
//! per-user (`P_u`) and per-item (`P_i`) adjacency.

mod io;
pub mod synthetic;

use std::collections::HashSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use io::{
    load_split, parse_interactions, parse_interactions_str, write_adjacency_list,
    write_noisy_dataset, Format, IdMap, Parsed,
};

/// Binary interaction matrix stored as a positive-pair list plus both
/// adjacency directions. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interactions {
    n: usize,
    m: usize,
    pairs: Vec<(usize, usize)>,
    user_items: Vec<Vec<usize>>,
    item_users: Vec<Vec<usize>>,
}

impl Interactions {
    /// Builds the matrix from a pair list. Duplicate pairs are dropped (first
    /// occurrence kept) and their count is returned alongside.
    pub fn from_pairs(
        n: usize,
        m: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Self, usize)> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut duplicates = 0;
        for (u, i) in pairs {
            if u >= n || i >= m {
                return Err(Error::invalid(format!(
                    "pair ({u}, {i}) out of range for {n} users x {m} items"
                )));
            }
            if seen.insert((u, i)) {
                kept.push((u, i));
            } else {
                duplicates += 1;
            }
        }
        Ok((Self::from_unique(n, m, kept), duplicates))
    }

    /// Caller guarantees the pairs are unique and in range.
    pub(crate) fn from_unique(n: usize, m: usize, pairs: Vec<(usize, usize)>) -> Self {
        let mut user_items = vec![Vec::new(); n];
        let mut item_users = vec![Vec::new(); m];
        for &(u, i) in &pairs {
            user_items[u].push(i);
            item_users[i].push(u);
        }
        for row in user_items.iter_mut().chain(item_users.iter_mut()) {
            row.sort_unstable();
        }
        Self {
            n,
            m,
            pairs,
            user_items,
            item_users,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `|D|`
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Sorted positive items of `u`.
    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.user_items[u]
    }

    /// Sorted positive users of `i`.
    pub fn item_users(&self, i: usize) -> &[usize] {
        &self.item_users[i]
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_items[u].len()
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_users[i].len()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        self.item_users.iter().map(Vec::len).collect()
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        u < self.n && self.user_items[u].binary_search(&i).is_ok()
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.n as f64 * self.m as f64)
    }

    /// Same pair set re-indexed into a wider id space; used to align a test
    /// set with a training set that saw more ids.
    pub fn with_shape(&self, n: usize, m: usize) -> Result<Self> {
        if n < self.n || m < self.m {
            return Err(Error::invalid("with_shape cannot shrink the id space"));
        }
        Ok(Self::from_unique(n, m, self.pairs.clone()))
    }
}

/// Disjoint train/test partition over the same id space.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Interactions,
    pub test: Interactions,
}

impl SplitPair {
    pub fn new(train: Interactions, test: Interactions) -> Result<Self> {
        if train.n() != test.n() || train.m() != test.m() {
            return Err(Error::invalid(format!(
                "train is {}x{} but test is {}x{}",
                train.n(),
                train.m(),
                test.n(),
                test.m()
            )));
        }
        Ok(Self { train, test })
    }

    /// Replaces the training side with `noisy` (built from `self.train`) and
    /// drops injected pairs from the test truth.
    pub fn with_noisy_train(&self, noisy: &NoisyInteractions) -> Result<Self> {
        let fake: HashSet<(usize, usize)> = noisy.fake.iter().copied().collect();
        let test: Vec<_> = self.test.pairs().iter().copied().filter(|p| !fake.contains(p)).collect();
        Self::new(
            noisy.data.clone(),
            Interactions::from_unique(self.test.n(), self.test.m(), test),
        )
    }
}

/// Removes users and items with fewer than `k` interactions until every
/// remaining node has degree at least `k`; surviving ids are re-densified in
/// their original order.
pub fn k_core_filter(data: &Interactions, k: usize) -> Result<Interactions> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut user_alive = vec![true; data.n()];
    let mut item_alive = vec![true; data.m()];
    let mut user_deg: Vec<usize> = (0..data.n()).map(|u| data.user_degree(u)).collect();
    let mut item_deg: Vec<usize> = data.item_degrees();

    let mut changed = true;
    while changed {
        changed = false;
        for u in 0..data.n() {
            if user_alive[u] && user_deg[u] < k {
                user_alive[u] = false;
                changed = true;
                for &i in data.user_items(u) {
                    if item_alive[i] {
                        item_deg[i] -= 1;
                    }
                }
            }
        }
        for i in 0..data.m() {
            if item_alive[i] && item_deg[i] < k {
                item_alive[i] = false;
                changed = true;
                for &u in data.item_users(i) {
                    if user_alive[u] {
                        user_deg[u] -= 1;
                    }
                }
            }
        }
    }

    let user_map = dense_map(&user_alive);
    let item_map = dense_map(&item_alive);
    let pairs: Vec<(usize, usize)> = data
        .pairs()
        .iter()
        .filter_map(|&(u, i)| Some((user_map[u]?, item_map[i]?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::KCoreEmpty { k });
    }
    let n = user_alive.iter().filter(|&&a| a).count();
    let m = item_alive.iter().filter(|&&a| a).count();
    Ok(Interactions::from_unique(n, m, pairs))
}

fn dense_map(alive: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    alive
        .iter()
        .map(|&a| {
            a.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Per-user random split. Each user with at least two interactions keeps
/// `round(train_fraction * |P_u|)` items for training, clamped to leave at
/// least one item on each side; single-interaction users go entirely to train.
pub fn train_test_split(data: &Interactions, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut singletons = 0;
    for u in 0..data.n() {
        let mut items = data.user_items(u).to_vec();
        if items.is_empty() {
            continue;
        }
        items.shuffle(&mut rng);
        let keep = if items.len() == 1 {
            singletons += 1;
            1
        } else {
            let target = (train_fraction * items.len() as f64).round() as usize;
            target.clamp(1, items.len() - 1)
        };
        train.extend(items[..keep].iter().map(|&i| (u, i)));
        test.extend(items[keep..].iter().map(|&i| (u, i)));
    }
    if singletons > 0 {
        warn!("{singletons} users with a single interaction were assigned entirely to train");
    }
    SplitPair::new(
        Interactions::from_unique(data.n(), data.m(), train),
        Interactions::from_unique(data.n(), data.m(), test),
    )
}

/// Interactions with injected false positives. `fake` lists exactly the
/// added pairs so they can be excluded from evaluation truth.
#[derive(Debug, Clone)]
pub struct NoisyInteractions {
    pub data: Interactions,
    pub fake: Vec<(usize, usize)>,
}

/// `ceil(ratio * degree)`, tolerant of the representation error in products
/// such as `0.3 * 10`.
pub fn noise_count(ratio: f64, degree: usize) -> usize {
    let exact = ratio * degree as f64;
    (exact - 1e-9).ceil().max(0.0) as usize
}

/// Adds `ceil(ratio * |P_u|)` uniformly sampled non-interacted items to every user.
pub fn inject_noise_uniform(data: &Interactions, ratio: f64, seed: u64) -> Result<NoisyInteractions> {
    let ratios = vec![ratio; data.n()];
    inject_per_user(data, &ratios, seed)
}

/// Randomly partitions users into `ratios.len()` equal groups (remainder users
/// go to the last groups) and applies `ratios[g]` to group `g`. Returns the
/// noisy data and the group of each user.
pub fn inject_noise_grouped(
    data: &Interactions,
    ratios: &[f64],
    seed: u64,
) -> Result<(NoisyInteractions, Vec<usize>)> {
    if ratios.is_empty() {
        return Err(Error::invalid("noise ratios must be non-empty"));
    }
    let groups = ratios.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<usize> = (0..data.n()).collect();
    users.shuffle(&mut rng);

    let base = data.n() / groups;
    let remainder = data.n() % groups;
    let mut group_of_user = vec![0; data.n()];
    let mut cursor = 0;
    for g in 0..groups {
        let size = base + usize::from(g >= groups - remainder);
        for &u in &users[cursor..cursor + size] {
            group_of_user[u] = g;
        }
        cursor += size;
    }
    let per_user: Vec<f64> = group_of_user.iter().map(|&g| ratios[g]).collect();
    let noisy = inject_per_user(data, &per_user, rng.gen())?;
    Ok((noisy, group_of_user))
}

fn inject_per_user(data: &Interactions, ratios: &[f64], seed: u64) -> Result<NoisyInteractions> {
    if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::invalid(format!("noise ratio {r} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = data.pairs().to_vec();
    let mut fake = Vec::new();
    for (u, &ratio) in ratios.iter().enumerate() {
        let positives = data.user_items(u);
        let count = noise_count(ratio, positives.len());
        if count == 0 {
            continue;
        }
        let free = data.m() - positives.len();
        if free < count {
            return Err(Error::invalid(format!(
                "user {u} needs {count} fake items but only {free} are free"
            )));
        }
        let mut chosen = HashSet::with_capacity(count);
        if count * 4 <= free {
            while chosen.len() < count {
                let i = rng.gen_range(0..data.m());
                if positives.binary_search(&i).is_err() && chosen.insert(i) {
                    fake.push((u, i));
                }
            }
        } else {
            let mut complement: Vec<usize> = (0..data.m())
                .filter(|i| positives.binary_search(i).is_err())
                .collect();
            let (picked, _) = complement.partial_shuffle(&mut rng, count);
            for &mut i in picked {
                fake.push((u, i));
            }
        }
    }
    pairs.extend_from_slice(&fake);
    Ok(NoisyInteractions {
        data: Interactions::from_unique(data.n(), data.m(), pairs),
        fake,
    })
}

/// Items bucketed by training frequency; group `G - 1` holds the most popular.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityGrouping {
    group_of_item: Vec<usize>,
    groups: usize,
}

impl PopularityGrouping {
    pub fn group_of(&self, item: usize) -> usize {
        self.group_of_item[item]
    }

    pub fn group_of_item(&self) -> &[usize] {
        &self.group_of_item
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups];
        for &g in &self.group_of_item {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Sorts items by (training frequency, index) ascending and cuts them into
/// `groups` contiguous buckets whose sizes differ by at most one.
pub fn popularity_grouping(train: &Interactions, groups: usize) -> Result<PopularityGrouping> {
    if groups == 0 {
        return Err(Error::invalid("group count must be at least 1"));
    }
    if groups > train.m() {
        return Err(Error::invalid(format!(
            "{groups} groups requested for only {} items",
            train.m()
        )));
    }
    let degrees = train.item_degrees();
    let mut order: Vec<usize> = (0..train.m()).collect();
    order.sort_by_key(|&i| (degrees[i], i));
    let m = train.m();
    let mut group_of_item = vec![0; m];
    for (rank, &item) in order.iter().enumerate() {
        group_of_item[item] = rank * groups / m;
    }
    Ok(PopularityGrouping {
        group_of_item,
        groups,
    })
}
