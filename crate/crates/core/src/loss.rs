//! Softmax losses over (normalized) inner-product scores and their analytic
//! gradients.
//!
//! With `q = softmax(f / tau)` over `{pos} ∪ negatives` the per-entry loss is
//! `-log q_pos`, whose score gradient is `(q_j - [j = pos]) / tau`. Through a
//! normalized side the chain rule contributes `(y - f x) / |e|`, where `x` is
//! the unit row being differentiated and `y` the (possibly raw) partner row.

use crate::dataset::Interactions;
use crate::embedding::{axpy, dot, EmbeddingTable, NormMode, ScoringRows};
use crate::error::{Error, Result};

/// Per-triple training instances: one positive with its own negative set.
#[derive(Debug, Clone, Default)]
pub struct BatchTriples {
    users: Vec<usize>,
    positives: Vec<usize>,
    negatives: Vec<usize>,
    num_negatives: usize,
}

impl BatchTriples {
    pub fn new(num_negatives: usize) -> Result<Self> {
        if num_negatives == 0 {
            return Err(Error::invalid("a batch needs at least one negative per entry"));
        }
        Ok(Self {
            num_negatives,
            ..Self::default()
        })
    }

    pub fn with_capacity(num_negatives: usize, entries: usize) -> Result<Self> {
        let mut b = Self::new(num_negatives)?;
        b.users.reserve(entries);
        b.positives.reserve(entries);
        b.negatives.reserve(entries * num_negatives);
        Ok(b)
    }

    pub fn push(&mut self, user: usize, positive: usize, negatives: &[usize]) -> Result<()> {
        if negatives.len() != self.num_negatives {
            return Err(Error::invalid(format!(
                "expected {} negatives, got {}",
                self.num_negatives,
                negatives.len()
            )));
        }
        if negatives.contains(&positive) {
            return Err(Error::invalid(format!(
                "negative set of user {user} contains its positive item {positive}"
            )));
        }
        self.users.push(user);
        self.positives.push(positive);
        self.negatives.extend_from_slice(negatives);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.users.clear();
        self.positives.clear();
        self.negatives.clear();
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn num_negatives(&self) -> usize {
        self.num_negatives
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    /// `(user, positive, negatives)` of entry `k`.
    pub fn entry(&self, k: usize) -> (usize, usize, &[usize]) {
        let m = self.num_negatives;
        (self.users[k], self.positives[k], &self.negatives[k * m..(k + 1) * m])
    }
}

/// Accumulated gradients for one batch. Only touched rows are non-zero.
#[derive(Debug, Clone)]
pub struct GradientRecord {
    d: usize,
    pub user_grad: Vec<f64>,
    pub item_grad: Vec<f64>,
    user_touched: Vec<bool>,
    item_touched: Vec<bool>,
    touched_users: Vec<usize>,
    touched_items: Vec<usize>,
    /// Mean softmax loss over the batch entries.
    pub loss: f64,
    /// L2 penalty `l2 * sum |e|^2` over touched rows (zero unless requested).
    pub reg_loss: f64,
    /// `(user, loss)` per entry, evaluated at the common temperature.
    pub common_losses: Vec<(usize, f64)>,
}

impl GradientRecord {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        Self {
            d,
            user_grad: vec![0.0; n * d],
            item_grad: vec![0.0; m * d],
            user_touched: vec![false; n],
            item_touched: vec![false; m],
            touched_users: Vec::new(),
            touched_items: Vec::new(),
            loss: 0.0,
            reg_loss: 0.0,
            common_losses: Vec::new(),
        }
    }

    /// Zeroes the rows touched by the previous batch.
    pub fn clear(&mut self) {
        let d = self.d;
        for &u in &self.touched_users {
            self.user_grad[u * d..(u + 1) * d].fill(0.0);
            self.user_touched[u] = false;
        }
        for &i in &self.touched_items {
            self.item_grad[i * d..(i + 1) * d].fill(0.0);
            self.item_touched[i] = false;
        }
        self.touched_users.clear();
        self.touched_items.clear();
        self.loss = 0.0;
        self.reg_loss = 0.0;
        self.common_losses.clear();
    }

    pub fn touched_users(&self) -> &[usize] {
        &self.touched_users
    }

    pub fn touched_items(&self) -> &[usize] {
        &self.touched_items
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_grad[u * self.d..(u + 1) * self.d]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item_grad[i * self.d..(i + 1) * self.d]
    }

    fn user_row_mut(&mut self, u: usize) -> &mut [f64] {
        if !self.user_touched[u] {
            self.user_touched[u] = true;
            self.touched_users.push(u);
        }
        &mut self.user_grad[u * self.d..(u + 1) * self.d]
    }

    fn item_row_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.item_touched[i] {
            self.item_touched[i] = true;
            self.touched_items.push(i);
        }
        &mut self.item_grad[i * self.d..(i + 1) * self.d]
    }

    /// Marks every row touched; used after a dense backward map spreads the
    /// gradient beyond the batch rows.
    pub(crate) fn mark_all_touched(&mut self) {
        for u in 0..self.user_touched.len() {
            if !self.user_touched[u] {
                self.user_touched[u] = true;
                self.touched_users.push(u);
            }
        }
        for i in 0..self.item_touched.len() {
            if !self.item_touched[i] {
                self.item_touched[i] = true;
                self.touched_items.push(i);
            }
        }
    }
}

/// `softmax(scores / tau)` with max subtraction.
pub fn logits(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let lse = log_sum_exp(scores, tau);
    Ok(scores.iter().map(|s| (s / tau - lse).exp()).collect())
}

/// `log sum_j exp(s_j / tau)`
pub fn log_sum_exp(scores: &[f64], tau: f64) -> f64 {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / tau;
    let sum: f64 = scores.iter().map(|s| (s / tau - max).exp()).sum();
    max + sum.ln()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {tau}")))
    }
}

/// Full-catalog softmax loss `-(1/|D|) sum_{(u,i) in D} log p_ui(tau_u)`.
/// Scores follow the table's norm mode.
pub fn full_softmax_loss(table: &EmbeddingTable, train: &Interactions, taus: &[f64]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let rows = table.scoring_rows()?;
    let mut scores = vec![0.0; table.m()];
    let mut total = 0.0;
    for u in 0..train.n() {
        let positives = train.user_items(u);
        if positives.is_empty() {
            continue;
        }
        check_tau(taus[u])?;
        fill_scores(&rows, u, &mut scores);
        let lse = log_sum_exp(&scores, taus[u]);
        total += positives.iter().map(|&i| lse - scores[i] / taus[u]).sum::<f64>();
    }
    Ok(total / train.len() as f64)
}

fn fill_scores(rows: &ScoringRows, u: usize, out: &mut [f64]) {
    let x = rows.user_row(u);
    for (i, s) in out.iter_mut().enumerate() {
        *s = dot(x, rows.item_row(i));
    }
}

/// Sampled softmax loss and gradients w.r.t. the raw embedding rows.
/// `common_tau`, when given, additionally records each entry's loss at that
/// temperature.
pub fn sampled_softmax_loss(
    table: &EmbeddingTable,
    batch: &BatchTriples,
    taus: &[f64],
    common_tau: Option<f64>,
) -> Result<GradientRecord> {
    let rows = table.scoring_rows()?;
    let mut rec = GradientRecord::new(table.n(), table.m(), table.d());
    accumulate(&rows, batch, taus, common_tau, &mut rec)?;
    Ok(rec)
}

/// Gradients of the unnormalized model (`f = e_u . e_i`, temperature 1) plus
/// the L2 term `2 l2 e` on every touched row.
pub fn no_norm_gradients(table: &EmbeddingTable, batch: &BatchTriples, l2: f64) -> Result<GradientRecord> {
    let raw = EmbeddingTable::clone(table).with_norm_mode(NormMode::None);
    let rows = raw.scoring_rows()?;
    let mut rec = GradientRecord::new(table.n(), table.m(), table.d());
    let ones = vec![1.0; table.n()];
    accumulate(&rows, batch, &ones, Some(1.0), &mut rec)?;
    add_l2(table, l2, &mut rec);
    Ok(rec)
}

/// Adds `l2 * |e|^2` for each touched row to the record (loss and gradient).
pub fn add_l2(table: &EmbeddingTable, l2: f64, rec: &mut GradientRecord) {
    if l2 == 0.0 {
        return;
    }
    let d = table.d();
    for k in 0..rec.touched_users.len() {
        let u = rec.touched_users[k];
        let row = table.user_row(u);
        rec.reg_loss += l2 * dot(row, row);
        axpy(2.0 * l2, row, &mut rec.user_grad[u * d..(u + 1) * d]);
    }
    for k in 0..rec.touched_items.len() {
        let i = rec.touched_items[k];
        let row = table.item_row(i);
        rec.reg_loss += l2 * dot(row, row);
        axpy(2.0 * l2, row, &mut rec.item_grad[i * d..(i + 1) * d]);
    }
}

/// Core batch pass over precomputed scoring rows. Gradients are w.r.t. the
/// rows the scoring rows were derived from and are averaged over entries.
pub(crate) fn accumulate(
    rows: &ScoringRows,
    batch: &BatchTriples,
    taus: &[f64],
    common_tau: Option<f64>,
    rec: &mut GradientRecord,
) -> Result<()> {
    if batch.is_empty() {
        return Ok(());
    }
    let d = rows.d;
    let scale = 1.0 / batch.len() as f64;
    let width = batch.num_negatives() + 1;
    let mut items = vec![0usize; width];
    let mut scores = vec![0.0; width];
    let mut grad_f = vec![0.0; width];
    let mut user_acc = vec![0.0; d];
    let mut loss_sum = 0.0;

    for k in 0..batch.len() {
        let (u, pos, negs) = batch.entry(k);
        let tau = taus[u];
        check_tau(tau)?;
        items[0] = pos;
        items[1..].copy_from_slice(negs);
        let x = rows.user_row(u);
        for (s, &j) in scores.iter_mut().zip(&items) {
            *s = dot(x, rows.item_row(j));
        }
        let lse = log_sum_exp(&scores, tau);
        loss_sum += lse - scores[0] / tau;
        if let Some(tc) = common_tau {
            let common = if tc == tau { lse - scores[0] / tau } else { log_sum_exp(&scores, tc) - scores[0] / tc };
            rec.common_losses.push((u, common));
        }
        for (g, s) in grad_f.iter_mut().zip(&scores) {
            *g = (s / tau - lse).exp() / tau * scale;
        }
        grad_f[0] -= scale / tau;

        // d loss / d e_u
        user_acc.fill(0.0);
        let mut weighted_f = 0.0;
        for ((&j, &g), &s) in items.iter().zip(&grad_f).zip(&scores) {
            axpy(g, rows.item_row(j), &mut user_acc);
            weighted_f += g * s;
        }
        let user_norm = rows.user_norms[u];
        {
            let out = rec.user_row_mut(u);
            if rows.normalize_users {
                for ((o, a), xv) in out.iter_mut().zip(&user_acc).zip(x) {
                    *o += (a - weighted_f * xv) / user_norm;
                }
            } else {
                out.iter_mut().zip(&user_acc).for_each(|(o, a)| *o += a);
            }
        }

        // d loss / d e_j
        for ((&j, &g), &s) in items.iter().zip(&grad_f).zip(&scores) {
            let y = rows.item_row(j);
            let item_norm = rows.item_norms[j];
            let normalize = rows.normalize_items;
            let out = rec.item_row_mut(j);
            if normalize {
                let c = g / item_norm;
                for ((o, xv), yv) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (xv - s * yv);
                }
            } else {
                axpy(g, x, out);
            }
        }
    }
    rec.loss += loss_sum * scale;
    Ok(())
}

/// Positive-mass gradient over the whole catalog for user `u`:
/// `p_ui (1 - S) / tau` on positives and `-p_ui S / tau` elsewhere, with
/// `S = sum_{k in P_u} p_uk`.
pub fn gradient_wrt_f_full(table: &EmbeddingTable, train: &Interactions, u: usize, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let rows = table.scoring_rows()?;
    let mut scores = vec![0.0; table.m()];
    fill_scores(&rows, u, &mut scores);
    let p = logits(&scores, tau)?;
    let positives = train.user_items(u);
    let mass: f64 = positives.iter().map(|&i| p[i]).sum();
    let mut grad: Vec<f64> = p.iter().map(|pi| -pi * mass / tau).collect();
    for &i in positives {
        grad[i] = p[i] * (1.0 - mass) / tau;
    }
    Ok(grad)
}

/// Positive probability mass `S_u(tau)` for one user's full score vector.
pub fn positive_mass(scores: &[f64], positives: &[usize], tau: f64) -> f64 {
    let lse = log_sum_exp(scores, tau);
    positives.iter().map(|&i| (scores[i] / tau - lse).exp()).sum()
}

/// `(2 / (m tau)) sum_{i in P_u} p_ui (1 - S_u)`, the mean absolute score
/// gradient over the catalog.
pub fn expected_grad_magnitude(table: &EmbeddingTable, train: &Interactions, u: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let rows = table.scoring_rows()?;
    let mut scores = vec![0.0; table.m()];
    fill_scores(&rows, u, &mut scores);
    let mass = positive_mass(&scores, train.user_items(u), tau);
    Ok(expected_magnitude_from_mass(mass, table.m(), tau))
}

pub fn expected_magnitude_from_mass(mass: f64, m: usize, tau: f64) -> f64 {
    2.0 / (m as f64 * tau) * mass * (1.0 - mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradSweepRow {
    pub tau: f64,
    pub mean_expected_grad_magnitude: f64,
}

/// Mean over users with at least one positive of the expected gradient
/// magnitude at each temperature.
pub fn grad_sweep(table: &EmbeddingTable, train: &Interactions, tau_grid: &[f64]) -> Result<Vec<GradSweepRow>> {
    for &t in tau_grid {
        check_tau(t)?;
    }
    let rows = table.scoring_rows()?;
    let mut sums = vec![0.0; tau_grid.len()];
    let mut users = 0usize;
    let mut scores = vec![0.0; table.m()];
    for u in 0..train.n() {
        let positives = train.user_items(u);
        if positives.is_empty() {
            continue;
        }
        users += 1;
        fill_scores(&rows, u, &mut scores);
        for (acc, &t) in sums.iter_mut().zip(tau_grid) {
            *acc += expected_magnitude_from_mass(positive_mass(&scores, positives, t), table.m(), t);
        }
    }
    let denom = users.max(1) as f64;
    Ok(tau_grid
        .iter()
        .zip(sums)
        .map(|(&tau, s)| GradSweepRow {
            tau,
            mean_expected_grad_magnitude: s / denom,
        })
        .collect())
}
