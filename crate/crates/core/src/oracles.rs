//! Brute-force references for the analytic code paths. Everything here uses
//! plain enumeration and scalar math so it can be audited line by line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::synthetic::{generate, standard_normal, SyntheticConfig};
use crate::dataset::{popularity_grouping, Interactions, SplitPair};
use crate::embedding::{magnitude_report, EmbeddingTable, NormMode};
use crate::error::{Error, Result};
use crate::loss::{
    expected_grad_magnitude, gradient_wrt_f_full, no_norm_gradients, sampled_softmax_loss, BatchTriples,
    GradientRecord,
};
use crate::optim::OptimizerKind;
use crate::temperature::{estimate_mu, lambert_w, superloss_tau, tau0_oracle_bisect, TauBounds};
use crate::trainer::{Strategy, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub cases: usize,
    pub pass: bool,
}

impl OracleReport {
    /// Folds per-case errors; `pass` compares the relative error with `tol`.
    pub fn from_errors(name: impl Into<String>, errors: impl IntoIterator<Item = (f64, f64)>, tol: f64) -> Self {
        let (mut max_abs, mut max_rel, mut cases) = (0.0f64, 0.0f64, 0usize);
        for (abs, rel) in errors {
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            cases += 1;
        }
        Self {
            name: name.into(),
            max_abs_err: max_abs,
            max_rel_err: max_rel,
            cases,
            pass: max_rel < tol && max_rel.is_finite(),
        }
    }
}

/// Entries whose magnitude is below this floor are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// `(|a - b|, |a - b| / max(|a|, |b|, floor))`.
pub fn rel_error(a: f64, b: f64, floor: f64) -> (f64, f64) {
    let abs = (a - b).abs();
    (abs, abs / a.abs().max(b.abs()).max(floor))
}

fn row<'a>(v: &'a [f64], k: usize, d: usize) -> &'a [f64] {
    &v[k * d..(k + 1) * d]
}

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Scalar re-implementation of the mean sampled softmax loss, honoring the
/// table's normalization mode.
pub fn reference_sampled_loss(table: &EmbeddingTable, batch: &BatchTriples, taus: &[f64]) -> f64 {
    let d = table.d();
    let mode = table.norm_mode;
    let score = |u: usize, i: usize| {
        let (x, y) = (row(&table.user, u, d), row(&table.item, i, d));
        let mut s = naive_dot(x, y);
        if mode.normalizes_users() {
            s /= naive_dot(x, x).sqrt();
        }
        if mode.normalizes_items() {
            s /= naive_dot(y, y).sqrt();
        }
        s
    };
    let mut total = 0.0;
    for k in 0..batch.len() {
        let (u, pos, negs) = batch.entry(k);
        let tau = taus[u];
        let z: Vec<f64> = std::iter::once(pos).chain(negs.iter().copied()).map(|i| score(u, i) / tau).collect();
        let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        total += lse - z[0];
    }
    total / batch.len() as f64
}

/// Raw-score reference with temperature 1 plus `l2 |e|^2` over the batch rows.
pub fn reference_no_norm_loss(table: &EmbeddingTable, batch: &BatchTriples, l2: f64) -> f64 {
    let raw = table.clone().with_norm_mode(NormMode::None);
    let ones = vec![1.0; table.n()];
    let mut loss = reference_sampled_loss(&raw, batch, &ones);
    let d = table.d();
    let mut users: Vec<usize> = batch.users().to_vec();
    let mut items: Vec<usize> = Vec::new();
    for k in 0..batch.len() {
        let (_, pos, negs) = batch.entry(k);
        items.push(pos);
        items.extend_from_slice(negs);
    }
    users.sort_unstable();
    users.dedup();
    items.sort_unstable();
    items.dedup();
    for &u in &users {
        let r = row(&table.user, u, d);
        loss += l2 * naive_dot(r, r);
    }
    for &i in &items {
        let r = row(&table.item, i, d);
        loss += l2 * naive_dot(r, r);
    }
    loss
}

/// Central differences of `loss` over every coordinate of the rows touched by
/// `rec`, compared with the analytic gradient in `rec`.
fn central_difference_errors(
    table: &EmbeddingTable,
    rec: &GradientRecord,
    step: f64,
    loss: impl Fn(&EmbeddingTable) -> f64,
) -> Vec<(f64, f64)> {
    let d = table.d();
    let mut probe = table.clone();
    let mut errors = Vec::new();
    let mut diff = |probe: &mut EmbeddingTable, user_side: bool, idx: usize, analytic: &[f64]| {
        for c in 0..d {
            let pos = idx * d + c;
            let buf = if user_side { &mut probe.user } else { &mut probe.item };
            let orig = buf[pos];
            buf[pos] = orig + step;
            let plus = loss(probe);
            let buf = if user_side { &mut probe.user } else { &mut probe.item };
            buf[pos] = orig - step;
            let minus = loss(probe);
            let buf = if user_side { &mut probe.user } else { &mut probe.item };
            buf[pos] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            errors.push(rel_error(analytic[c], numeric, REL_ERR_FLOOR));
        }
    };
    for &u in rec.touched_users() {
        diff(&mut probe, true, u, rec.user_row(u));
    }
    for &i in rec.touched_items() {
        diff(&mut probe, false, i, rec.item_row(i));
    }
    errors
}

/// Gradient check of the normalized sampled softmax loss.
pub fn finite_difference_check(
    table: &EmbeddingTable,
    batch: &BatchTriples,
    taus: &[f64],
    step: f64,
    tol: f64,
) -> Result<OracleReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    let rec = sampled_softmax_loss(table, batch, taus, None)?;
    let errors = central_difference_errors(table, &rec, step, |t| reference_sampled_loss(t, batch, taus));
    Ok(OracleReport::from_errors("sampled_softmax_gradient", errors, tol))
}

/// Gradient check of the unnormalized path including the L2 term.
pub fn finite_difference_check_no_norm(
    table: &EmbeddingTable,
    batch: &BatchTriples,
    l2: f64,
    step: f64,
    tol: f64,
) -> Result<OracleReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    let rec = no_norm_gradients(table, batch, l2)?;
    let errors = central_difference_errors(table, &rec, step, |t| reference_no_norm_loss(t, batch, l2));
    Ok(OracleReport::from_errors("no_norm_gradient", errors, tol))
}

/// Mean cosine over all `n * m` pairs by enumeration.
pub fn all_pairs_mean_cosine(table: &EmbeddingTable) -> f64 {
    let d = table.d();
    let mut total = 0.0;
    for u in 0..table.n() {
        let x = row(&table.user, u, d);
        for i in 0..table.m() {
            let y = row(&table.item, i, d);
            total += naive_dot(x, y) / (naive_dot(x, x).sqrt() * naive_dot(y, y).sqrt());
        }
    }
    total / (table.n() * table.m()) as f64
}

/// Per-user positive mass `S_u(tau)` over the full catalog, by enumeration.
pub fn positive_masses(table: &EmbeddingTable, train: &Interactions, tau: f64) -> Vec<f64> {
    let d = table.d();
    let mut out = Vec::with_capacity(train.n());
    for u in 0..train.n() {
        let positives = train.user_items(u);
        if positives.is_empty() {
            continue;
        }
        let x = row(&table.user, u, d);
        let xn = naive_dot(x, x).sqrt();
        let z: Vec<f64> = (0..table.m())
            .map(|i| {
                let y = row(&table.item, i, d);
                naive_dot(x, y) / (xn * naive_dot(y, y).sqrt()) / tau
            })
            .collect();
        let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v - top).exp()).sum();
        out.push(positives.iter().map(|&i| (z[i] - top).exp()).sum::<f64>() / denom);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionRow {
    pub tau: f64,
    /// `E_u[sum_{i in P_u} p_ui(tau)]`.
    pub mean_mass: f64,
    /// `(2 / (m T)) (S - S^2)` with `T` the lower temperature bound.
    pub bound: f64,
}

/// Exact positive-mass condition and its upper bound across a temperature grid.
pub fn condition_scan(
    table: &EmbeddingTable,
    train: &Interactions,
    grid: &[f64],
    lower: f64,
) -> Result<Vec<ConditionRow>> {
    if grid.iter().any(|&t| !(t > 0.0)) || !(lower > 0.0) {
        return Err(Error::invalid("temperatures must be > 0"));
    }
    Ok(grid
        .iter()
        .map(|&tau| {
            let masses = positive_masses(table, train, tau);
            let s = masses.iter().sum::<f64>() / masses.len().max(1) as f64;
            ConditionRow {
                tau,
                mean_mass: s,
                bound: mass_gap_bound(s, table.m(), lower),
            }
        })
        .collect())
}

pub fn mass_gap_bound(mean_mass: f64, m: usize, lower: f64) -> f64 {
    2.0 / (m as f64 * lower) * (mean_mass - mean_mass * mean_mass)
}

/// Convenience for the default lower temperature bound.
pub fn default_lower_bound() -> f64 {
    TauBounds::default().min
}

/// The SuperLoss objective with confidence `sigma = tau0 / tau`:
/// `J(tau) = (L - m_u) tau0 / tau + beta (log tau - log tau0)^2`.
pub fn superloss_objective(tau: f64, loss: f64, threshold: f64, beta: f64, tau0: f64) -> f64 {
    let s = (tau / tau0).ln();
    (loss - threshold) * tau0 / tau + beta * s * s
}

/// Golden-section minimization of [`superloss_objective`] over `log tau`.
///
/// The upper end is `10 e tau0`. For `L >= m_u` the search starts at `1e-4`;
/// for `L < m_u` the objective is unbounded below as `tau -> 0`, so the
/// search is confined to the basin `[tau0 / e, 10 e tau0]` that contains the
/// local minimum.
pub fn superloss_minimizer(loss: f64, threshold: f64, beta: f64, tau0: f64) -> Result<f64> {
    if !(tau0 > 0.0 && beta > 0.0) {
        return Err(Error::invalid("tau0 and beta must be > 0"));
    }
    let hi = (10.0 * std::f64::consts::E * tau0).ln();
    let lo = if loss >= threshold { 1e-4f64.ln() } else { tau0.ln() - 1.0 };
    let f = |s: f64| superloss_objective(s.exp(), loss, threshold, beta, tau0);
    Ok(golden_section(f, lo, hi, 1e-10).exp())
}

/// Minimizes a unimodal `f` on `[a, b]` until the bracket is narrower than `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Ranks with ties averaged (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[derive(Debug, Clone)]
pub struct DriftConfig {
    pub data: SyntheticConfig,
    pub strategy: Strategy,
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub groups: usize,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            data: SyntheticConfig::zipf(500, 1000, 20.0, 11),
            strategy: Strategy::NoNorm,
            dim: 64,
            // Gradients are batch means, so the per-interaction step is
            // lr / batch_size ~ 0.31; much smaller steps leave the norm
            // change dominated by the random-sign 2 e_i . delta term.
            lr: 20.0,
            l2: 0.0,
            batch_size: 64,
            negatives: 64,
            groups: 10,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// `None` when every item's squared norm is unchanged (e.g. zero learning rate).
    pub spearman: Option<f64>,
    pub delta_sq_norm: Vec<f64>,
    pub item_degree: Vec<usize>,
    pub magnitude_before: Vec<f64>,
    pub magnitude_after: Vec<f64>,
}

/// One SGD epoch from Xavier initialization, then the rank correlation between
/// each item's change in squared norm and its training popularity.
pub fn magnitude_drift_experiment(config: &DriftConfig) -> Result<DriftReport> {
    let data = generate(&config.data)?;
    let train_cfg = TrainConfig {
        strategy: config.strategy,
        dim: config.dim,
        lr: config.lr,
        l2: config.l2,
        batch_size: config.batch_size,
        negatives: config.negatives,
        epochs: 1,
        optimizer: OptimizerKind::Sgd,
        seed: config.seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&data, train_cfg)?;
    let before = trainer.table().clone();
    trainer.train_epoch()?;
    let after = trainer.table();
    let delta: Vec<f64> = (0..data.m())
        .map(|i| after.item_norm(i).powi(2) - before.item_norm(i).powi(2))
        .collect();
    let degree = data.item_degrees();
    let corr = if delta.iter().all(|&v| v == 0.0) {
        None
    } else {
        spearman(&delta, &degree.iter().map(|&v| v as f64).collect::<Vec<_>>())
    };
    let grouping = popularity_grouping(&data, config.groups)?;
    Ok(DriftReport {
        spearman: corr,
        delta_sq_norm: delta,
        item_degree: degree,
        magnitude_before: magnitude_report(&before, &grouping),
        magnitude_after: magnitude_report(after, &grouping),
    })
}

/// Small split for smoke tests and the diagnose command when no data is given.
pub fn synthetic_split(users: usize, items: usize, mean_degree: f64, seed: u64) -> Result<SplitPair> {
    let cfg = SyntheticConfig {
        latent_dim: 8,
        strength: 3.0,
        ..SyntheticConfig::zipf(users, items, mean_degree, seed)
    };
    crate::dataset::train_test_split(&generate(&cfg)?, 0.8, seed)
}

/// Random normalized-model instance: N(0, 1) rows, `entries` batch entries
/// with `negatives` distinct-from-positive negatives, temperatures in [0.2, 1).
pub fn random_gradient_instance(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    d: usize,
    negatives: usize,
    entries: usize,
) -> Result<(EmbeddingTable, BatchTriples, Vec<f64>)> {
    if m < 2 {
        return Err(Error::invalid("need at least two items"));
    }
    let user = (0..n * d).map(|_| standard_normal(rng)).collect();
    let item = (0..m * d).map(|_| standard_normal(rng)).collect();
    let table = EmbeddingTable::from_parts(n, m, d, user, item)?;
    let mut batch = BatchTriples::new(negatives)?;
    let mut negs = Vec::with_capacity(negatives);
    for _ in 0..entries {
        let u = rng.gen_range(0..n);
        let pos = rng.gen_range(0..m);
        negs.clear();
        while negs.len() < negatives {
            let j = rng.gen_range(0..m);
            if j != pos {
                negs.push(j);
            }
        }
        batch.push(u, pos, &negs)?;
    }
    let taus = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    Ok((table, batch, taus))
}

/// Finite-difference check over `instances` random instances (d, M as given).
pub fn gradient_suite(instances: usize, d: usize, negatives: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::new();
    for _ in 0..instances {
        let (table, batch, taus) = random_gradient_instance(&mut rng, 4, 12, d, negatives, 3)?;
        let rec = sampled_softmax_loss(&table, &batch, &taus, None)?;
        errors.extend(central_difference_errors(&table, &rec, 1e-5, |t| {
            reference_sampled_loss(t, &batch, &taus)
        }));
    }
    Ok(OracleReport::from_errors("sampled_softmax_gradient", errors, 1e-5))
}

/// `|W(x) e^W(x) - x|` on a uniform grid over `[-1/e, 10]` plus the fixed points.
pub fn lambert_suite(points: usize) -> Result<OracleReport> {
    let lo = -(-1.0f64).exp();
    let mut errors = Vec::with_capacity(points + 3);
    for k in 0..points {
        let x = lo + (10.0 - lo) * k as f64 / (points - 1).max(1) as f64;
        let w = lambert_w(x)?;
        let r = (w * w.exp() - x).abs();
        errors.push((r, r));
    }
    for (x, expected) in [(0.0, 0.0), (std::f64::consts::E, 1.0), (lo, -1.0)] {
        let e = (lambert_w(x)? - expected).abs();
        errors.push((e, e));
    }
    Ok(OracleReport::from_errors("lambert_w", errors, 1e-12))
}

/// Closed-form per-user temperature against the numeric SuperLoss minimizer on
/// random parameters with the `-1/e` clamp inactive.
pub fn superloss_suite(draws: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(draws);
    while errors.len() < draws {
        let tau0 = rng.gen_range(0.02..1.0);
        let beta = rng.gen_range(0.1..5.0);
        let threshold = rng.gen_range(0.0..8.0);
        let loss = rng.gen_range(0.0..8.0);
        let z = (loss - threshold) / (2.0 * beta);
        if z <= -(-1.0f64).exp() + 1e-3 {
            continue;
        }
        let closed = superloss_tau(loss, threshold, beta, tau0);
        let numeric = superloss_minimizer(loss, threshold, beta, tau0)?;
        errors.push(rel_error(closed, numeric, 0.0));
    }
    Ok(OracleReport::from_errors("superloss_closed_form", errors, 1e-6))
}

/// Centroid estimator of `mu` against all-pairs enumeration.
pub fn mu_estimator_check(table: &EmbeddingTable) -> Result<OracleReport> {
    let fast = estimate_mu(table)?;
    let exact = all_pairs_mean_cosine(table);
    let abs = (fast - exact).abs();
    Ok(OracleReport::from_errors("mu_centroid", [(abs, abs)], 1e-12))
}

/// Expected gradient magnitude against the enumerated mean |dL/df| per user.
pub fn magnitude_check(table: &EmbeddingTable, train: &Interactions, tau: f64, users: usize) -> Result<OracleReport> {
    let mut errors = Vec::new();
    for u in (0..train.n()).filter(|&u| train.user_degree(u) > 0).take(users) {
        let grad = gradient_wrt_f_full(table, train, u, tau)?;
        let enumerated = grad.iter().map(|g| g.abs()).sum::<f64>() / grad.len() as f64;
        let closed = expected_grad_magnitude(table, train, u, tau)?;
        let abs = (closed - enumerated).abs();
        errors.push((abs, abs));
    }
    Ok(OracleReport::from_errors("expected_grad_magnitude", errors, 1e-12))
}

/// Bisection temperature satisfies the positive-mass condition and maximizes
/// the bound against `tau*/2` and `2 tau*`.
pub fn condition_check(table: &EmbeddingTable, train: &Interactions) -> Result<(f64, OracleReport)> {
    let bounds = TauBounds::default();
    let tau = tau0_oracle_bisect(table, train, bounds, 1e-9)?;
    let rows = condition_scan(table, train, &[tau / 2.0, tau, 2.0 * tau], bounds.min)?;
    let gap = (rows[1].mean_mass - 0.5).abs();
    let bound_ok = rows[1].bound > rows[0].bound && rows[1].bound > rows[2].bound;
    let mut report = OracleReport::from_errors("mass_gap_condition", [(gap, gap)], 1e-6);
    report.pass &= bound_ok;
    Ok((tau, report))
}
