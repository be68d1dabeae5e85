//! User/item embedding tables, scoring, the LightGCN propagation backbone and
//! binary checkpoints.
//!
//! Embeddings are stored unnormalized. Normalization happens at scoring time
//! according to [`NormMode`], so one table serves both the raw inner-product
//! baseline and the cosine model, and raw magnitudes stay observable.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Interactions, PopularityGrouping};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    None,
    UserOnly,
    ItemOnly,
    #[default]
    Both,
}

impl NormMode {
    pub fn normalizes_users(self) -> bool {
        matches!(self, NormMode::UserOnly | NormMode::Both)
    }

    pub fn normalizes_items(self) -> bool {
        matches!(self, NormMode::ItemOnly | NormMode::Both)
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "N-N" => Ok(NormMode::None),
            "user" | "user-only" | "Y-N" => Ok(NormMode::UserOnly),
            "item" | "item-only" | "N-Y" => Ok(NormMode::ItemOnly),
            "both" | "Y-Y" => Ok(NormMode::Both),
            other => Err(Error::invalid(format!("unknown norm mode {other:?}"))),
        }
    }
}

/// Dense row-major `n x d` user and `m x d` item matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    n: usize,
    m: usize,
    d: usize,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub norm_mode: NormMode,
}

impl EmbeddingTable {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            n,
            m,
            d,
            user: vec![0.0; n * d],
            item: vec![0.0; m * d],
            norm_mode: NormMode::Both,
        }
    }

    pub fn from_parts(n: usize, m: usize, d: usize, user: Vec<f64>, item: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("embedding dimension must be >= 1"));
        }
        if user.len() != n * d || item.len() != m * d {
            return Err(Error::invalid(format!(
                "expected {}+{} values for {n}x{d} users and {m}x{d} items, got {}+{}",
                n * d,
                m * d,
                user.len(),
                item.len()
            )));
        }
        if user.iter().chain(&item).any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding entries must be finite"));
        }
        Ok(Self {
            n,
            m,
            d,
            user,
            item,
            norm_mode: NormMode::Both,
        })
    }

    pub fn with_norm_mode(mut self, mode: NormMode) -> Self {
        self.norm_mode = mode;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user[u * self.d..(u + 1) * self.d]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item[i * self.d..(i + 1) * self.d]
    }

    pub fn user_row_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user[u * self.d..(u + 1) * self.d]
    }

    pub fn item_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item[i * self.d..(i + 1) * self.d]
    }

    pub fn user_norm(&self, u: usize) -> f64 {
        norm(self.user_row(u))
    }

    pub fn item_norm(&self, i: usize) -> f64 {
        norm(self.item_row(i))
    }

    /// Score under the table's own normalization mode.
    pub fn score(&self, u: usize, i: usize) -> Result<f64> {
        let raw = raw_score(self, u, i);
        let mut denom = 1.0;
        if self.norm_mode.normalizes_users() {
            denom *= nonzero(self.user_norm(u), "user", u)?;
        }
        if self.norm_mode.normalizes_items() {
            denom *= nonzero(self.item_norm(i), "item", i)?;
        }
        Ok(raw / denom)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.user.iter_mut().chain(self.item.iter_mut()) {
            *v *= factor;
        }
    }

    /// Copy of the table with every row scaled as the norm mode prescribes
    /// (unit rows on normalized sides). Scoring the result by raw inner
    /// product equals [`EmbeddingTable::score`] on `self`.
    pub fn scoring_rows(&self) -> Result<ScoringRows> {
        let mut user = self.user.clone();
        let mut user_norms = vec![1.0; self.n];
        if self.norm_mode.normalizes_users() {
            for u in 0..self.n {
                let nrm = nonzero(self.user_norm(u), "user", u)?;
                user_norms[u] = nrm;
                user[u * self.d..(u + 1) * self.d].iter_mut().for_each(|v| *v /= nrm);
            }
        }
        let mut item = self.item.clone();
        let mut item_norms = vec![1.0; self.m];
        if self.norm_mode.normalizes_items() {
            for i in 0..self.m {
                let nrm = nonzero(self.item_norm(i), "item", i)?;
                item_norms[i] = nrm;
                item[i * self.d..(i + 1) * self.d].iter_mut().for_each(|v| *v /= nrm);
            }
        }
        Ok(ScoringRows {
            d: self.d,
            user,
            item,
            user_norms,
            item_norms,
            normalize_users: self.norm_mode.normalizes_users(),
            normalize_items: self.norm_mode.normalizes_items(),
        })
    }
}

/// Rows as used in scoring: unit rows on normalized sides, raw rows otherwise.
/// `*_norms` holds the divisor that was applied (1 for raw sides).
#[derive(Debug, Clone)]
pub struct ScoringRows {
    pub d: usize,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub user_norms: Vec<f64>,
    pub item_norms: Vec<f64>,
    pub normalize_users: bool,
    pub normalize_items: bool,
}

impl ScoringRows {
    #[inline]
    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user[u * self.d..(u + 1) * self.d]
    }

    #[inline]
    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user_row(u), self.item_row(i))
    }
}

fn nonzero(norm: f64, side: &'static str, index: usize) -> Result<f64> {
    if norm > 0.0 && norm.is_finite() {
        Ok(norm)
    } else {
        Err(Error::ZeroNorm { side, index })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Uniform Xavier initialization with `fan_in = fan_out = d`, i.e. entries in
/// `[-sqrt(3/d), sqrt(3/d)]`.
pub fn xavier_init(n: usize, m: usize, d: usize, seed: u64) -> Result<EmbeddingTable> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::invalid("xavier_init needs n, m, d >= 1"));
    }
    let bound = xavier_bound(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user = (0..n * d).map(|_| rng.gen_range(-bound..=bound)).collect();
    let item = (0..m * d).map(|_| rng.gen_range(-bound..=bound)).collect();
    EmbeddingTable::from_parts(n, m, d, user, item)
}

pub fn xavier_bound(d: usize) -> f64 {
    (6.0 / (2 * d) as f64).sqrt()
}

/// `e_u . e_i / (|e_u| |e_i|)`
pub fn cosine_score(table: &EmbeddingTable, u: usize, i: usize) -> Result<f64> {
    let nu = nonzero(table.user_norm(u), "user", u)?;
    let ni = nonzero(table.item_norm(i), "item", i)?;
    Ok(raw_score(table, u, i) / (nu * ni))
}

/// `e_u . e_i`
pub fn raw_score(table: &EmbeddingTable, u: usize, i: usize) -> f64 {
    dot(table.user_row(u), table.item_row(i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackboneKind {
    #[default]
    Mf,
    LightGcn,
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(BackboneKind::Mf),
            "lightgcn" | "lgn" => Ok(BackboneKind::LightGcn),
            other => Err(Error::invalid(format!("unknown backbone {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub layers: usize,
}

impl BackboneConfig {
    pub fn mf() -> Self {
        Self {
            kind: BackboneKind::Mf,
            layers: 0,
        }
    }

    pub fn lightgcn(layers: usize) -> Self {
        Self {
            kind: BackboneKind::LightGcn,
            layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackboneKind::LightGcn && !(1..=3).contains(&self.layers) {
            return Err(Error::invalid(format!(
                "LightGCN layers must be in 1..=3, got {}",
                self.layers
            )));
        }
        Ok(())
    }
}

/// Symmetric-normalized bipartite adjacency used by LightGCN. Edge weights are
/// `1 / sqrt(|P_u| |P_i|)`; isolated nodes map to themselves.
#[derive(Debug, Clone)]
pub struct Propagation {
    n: usize,
    m: usize,
    layers: usize,
    user_adj: Vec<Vec<(usize, f64)>>,
    item_adj: Vec<Vec<(usize, f64)>>,
}

impl Propagation {
    pub fn new(train: &Interactions, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("propagation needs at least one layer"));
        }
        let weight = |u: usize, i: usize| {
            1.0 / ((train.user_degree(u) * train.item_degree(i)) as f64).sqrt()
        };
        let user_adj = (0..train.n())
            .map(|u| train.user_items(u).iter().map(|&i| (i, weight(u, i))).collect())
            .collect();
        let item_adj = (0..train.m())
            .map(|i| train.item_users(i).iter().map(|&u| (u, weight(u, i))).collect())
            .collect();
        Ok(Self {
            n: train.n(),
            m: train.m(),
            layers,
            user_adj,
            item_adj,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// One application of the adjacency: users gather from items and vice versa.
    fn step(&self, d: usize, user: &[f64], item: &[f64], out_user: &mut [f64], out_item: &mut [f64]) {
        for u in 0..self.n {
            let out = &mut out_user[u * d..(u + 1) * d];
            if self.user_adj[u].is_empty() {
                out.copy_from_slice(&user[u * d..(u + 1) * d]);
                continue;
            }
            out.fill(0.0);
            for &(i, w) in &self.user_adj[u] {
                axpy(w, &item[i * d..(i + 1) * d], out);
            }
        }
        for i in 0..self.m {
            let out = &mut out_item[i * d..(i + 1) * d];
            if self.item_adj[i].is_empty() {
                out.copy_from_slice(&item[i * d..(i + 1) * d]);
                continue;
            }
            out.fill(0.0);
            for &(u, w) in &self.item_adj[i] {
                axpy(w, &user[u * d..(u + 1) * d], out);
            }
        }
    }

    /// Mean of layers `0..=L`. The map is linear and symmetric, so it also
    /// serves as its own transpose when back-propagating gradients.
    pub fn apply(&self, d: usize, user: &[f64], item: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut acc_user = user.to_vec();
        let mut acc_item = item.to_vec();
        let mut cur_user = user.to_vec();
        let mut cur_item = item.to_vec();
        let mut next_user = vec![0.0; user.len()];
        let mut next_item = vec![0.0; item.len()];
        for _ in 0..self.layers {
            self.step(d, &cur_user, &cur_item, &mut next_user, &mut next_item);
            std::mem::swap(&mut cur_user, &mut next_user);
            std::mem::swap(&mut cur_item, &mut next_item);
            acc_user.iter_mut().zip(&cur_user).for_each(|(a, c)| *a += c);
            acc_item.iter_mut().zip(&cur_item).for_each(|(a, c)| *a += c);
        }
        let inv = 1.0 / (self.layers + 1) as f64;
        acc_user.iter_mut().for_each(|v| *v *= inv);
        acc_item.iter_mut().for_each(|v| *v *= inv);
        (acc_user, acc_item)
    }

    pub fn propagate(&self, table: &EmbeddingTable) -> EmbeddingTable {
        let (user, item) = self.apply(table.d, &table.user, &table.item);
        EmbeddingTable {
            user,
            item,
            ..table.clone()
        }
    }
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub fn lightgcn_propagate(table: &EmbeddingTable, train: &Interactions, layers: usize) -> Result<EmbeddingTable> {
    if train.n() != table.n() || train.m() != table.m() {
        return Err(Error::invalid("interaction shape does not match the table"));
    }
    Ok(Propagation::new(train, layers)?.propagate(table))
}

/// Mean item-embedding L2 norm per popularity group.
pub fn magnitude_report(table: &EmbeddingTable, grouping: &PopularityGrouping) -> Vec<f64> {
    let mut sums = vec![0.0; grouping.groups()];
    let mut counts = vec![0usize; grouping.groups()];
    for i in 0..table.m() {
        let g = grouping.group_of(i);
        sums[g] += table.item_norm(i);
        counts[g] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect()
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ADTAUEMB";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Header: magic, n, m, d (u64 each), precision byte count (u64), then the
/// row-major user matrix and item matrix. Little-endian throughout.
pub fn save_checkpoint(table: &EmbeddingTable, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let width: u64 = match precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    for v in [table.n as u64, table.m as u64, table.d as u64, width] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &v in table.user.iter().chain(&table.item) {
        match precision {
            Precision::F32 => out.write_all(&(v as f32).to_le_bytes())?,
            Precision::F64 => out.write_all(&v.to_le_bytes())?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let mut input = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut header = [0u64; 4];
    for h in &mut header {
        let mut buf = [0u8; 8];
        input.read_exact(&mut buf)?;
        *h = u64::from_le_bytes(buf);
    }
    let [n, m, d, width] = header.map(|v| v as usize);
    let total = (n + m)
        .checked_mul(d)
        .ok_or_else(|| Error::Checkpoint("header overflow".into()))?;
    let mut values = Vec::with_capacity(total);
    match width {
        4 => {
            let mut buf = [0u8; 4];
            for _ in 0..total {
                input.read_exact(&mut buf)?;
                values.push(f32::from_le_bytes(buf) as f64);
            }
        }
        8 => {
            let mut buf = [0u8; 8];
            for _ in 0..total {
                input.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
        }
        other => return Err(Error::Checkpoint(format!("unsupported precision width {other}"))),
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after item matrix".into()));
    }
    let item = values.split_off(n * d);
    EmbeddingTable::from_parts(n, m, d, values, item)
}
