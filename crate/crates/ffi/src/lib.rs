//! C ABI over the adaptau training library.
//!
//! Every fallible function returns an [`AdaptauStatus`] and writes results
//! through out-pointers. On failure, [`adaptau_last_error`] describes the most
//! recent error on the calling thread. Handles returned by `*_new`/`*_load`
//! functions must be released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use adaptau::dataset::synthetic::{generate, SyntheticConfig};
use adaptau::dataset::{load_split, parse_interactions, train_test_split, Format, SplitPair};
use adaptau::evaluation::evaluate;
use adaptau::embedding::{load_checkpoint, save_checkpoint, EmbeddingTable, Precision};
use adaptau::temperature::{lambert_w, superloss_tau, tau0_simplified, TauBounds};
use adaptau::trainer::{Strategy, TrainConfig, Trainer};
use adaptau::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptauStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptauStrategy {
    NoNorm = 0,
    FixedTau = 1,
    AdapTau0 = 2,
    AdapTau = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptauFormat {
    AdjacencyList = 0,
    PairList = 1,
}

/// Training settings; start from [`adaptau_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AdaptauTrainConfig {
    pub strategy: AdaptauStrategy,
    /// Only used by `FixedTau`.
    pub tau: f64,
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub seed: u64,
}

/// Train/test split.
pub struct AdaptauDataset {
    split: SplitPair,
}

pub struct AdaptauTrainer {
    trainer: Trainer,
    test: adaptau::dataset::Interactions,
}

pub struct AdaptauTable {
    table: EmbeddingTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> AdaptauStatus {
    match err {
        Error::Io(_) | Error::Checkpoint(_) => AdaptauStatus::Io,
        Error::Parse { .. } | Error::EmptyInput(_) | Error::Config(_) => AdaptauStatus::Parse,
        Error::NonFiniteLoss { .. } | Error::ZeroNorm { .. } | Error::NotBracketed { .. } => AdaptauStatus::Numerical,
        _ => AdaptauStatus::InvalidArgument,
    }
}

struct Fail(AdaptauStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AdaptauStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AdaptauStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AdaptauStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdaptauStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AdaptauStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn format_of(f: AdaptauFormat) -> Format {
    match f {
        AdaptauFormat::AdjacencyList => Format::AdjacencyList,
        AdaptauFormat::PairList => Format::PairList,
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn adaptau_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn adaptau_train_config_default() -> AdaptauTrainConfig {
    let c = TrainConfig::default();
    AdaptauTrainConfig {
        strategy: AdaptauStrategy::AdapTau,
        tau: 0.1,
        dim: c.dim,
        lr: c.lr,
        l2: c.l2,
        batch_size: c.batch_size,
        negatives: c.negatives,
        seed: c.seed,
    }
}

/// Loads `dir/train.txt` and `dir/test.txt` when `path` is a directory,
/// otherwise reads one file and splits it per user with `train_fraction`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_dataset_load(
    path: *const c_char,
    format: AdaptauFormat,
    train_fraction: f64,
    seed: u64,
    out_dataset: *mut *mut AdaptauDataset,
) -> AdaptauStatus {
    guard(|| {
        let path = path_arg(path)?;
        let slot = out(out_dataset, "out_dataset")?;
        let format = format_of(format);
        let split = if path.is_dir() {
            load_split(path.join("train.txt"), path.join("test.txt"), format)?
        } else {
            train_test_split(&parse_interactions(&path, format)?.data, train_fraction, seed)?
        };
        *slot = Box::into_raw(Box::new(AdaptauDataset { split }));
        Ok(())
    })
}

/// Zipf-popularity synthetic interactions split 80/20.
///
/// # Safety
/// `out_dataset` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_dataset_synthetic(
    users: usize,
    items: usize,
    mean_degree: f64,
    seed: u64,
    out_dataset: *mut *mut AdaptauDataset,
) -> AdaptauStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let data = generate(&SyntheticConfig::zipf(users, items, mean_degree, seed))?;
        let split = train_test_split(&data, 0.8, seed)?;
        *slot = Box::into_raw(Box::new(AdaptauDataset { split }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; the out-pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn adaptau_dataset_shape(
    dataset: *const AdaptauDataset,
    users: *mut usize,
    items: *mut usize,
    train_pairs: *mut usize,
    test_pairs: *mut usize,
) -> AdaptauStatus {
    guard(|| {
        let s = &handle(dataset, "dataset")?.split;
        for (p, v) in [(users, s.train.n()), (items, s.train.m()), (train_pairs, s.train.len()), (test_pairs, s.test.len())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptau_dataset_free(dataset: *mut AdaptauDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// The trainer copies what it needs; `dataset` may be freed afterwards.
///
/// # Safety
/// `dataset` and `config` must be valid; `out_trainer` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_new(
    dataset: *const AdaptauDataset,
    config: *const AdaptauTrainConfig,
    out_trainer: *mut *mut AdaptauTrainer,
) -> AdaptauStatus {
    guard(|| {
        let split = &handle(dataset, "dataset")?.split;
        let c = handle(config, "config")?;
        let slot = out(out_trainer, "out_trainer")?;
        let strategy = match c.strategy {
            AdaptauStrategy::NoNorm => Strategy::NoNorm,
            AdaptauStrategy::FixedTau => Strategy::FixedTau(c.tau),
            AdaptauStrategy::AdapTau0 => Strategy::AdapTau0,
            AdaptauStrategy::AdapTau => Strategy::AdapTau,
        };
        let cfg = TrainConfig {
            strategy,
            dim: c.dim,
            lr: c.lr,
            l2: c.l2,
            batch_size: c.batch_size,
            negatives: c.negatives,
            seed: c.seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        let trainer = Trainer::new(&split.train, cfg)?;
        *slot = Box::into_raw(Box::new(AdaptauTrainer {
            trainer,
            test: split.test.clone(),
        }));
        Ok(())
    })
}

/// One pass over the training pairs. `mean_loss` and `tau0` may be null.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_epoch(
    trainer: *mut AdaptauTrainer,
    mean_loss: *mut f64,
    tau0: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let t = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let stats = t.trainer.train_epoch()?;
        if let Some(p) = mean_loss.as_mut() {
            *p = stats.mean_loss;
        }
        if let Some(p) = tau0.as_mut() {
            *p = stats.tau0;
        }
        Ok(())
    })
}

/// Full-ranking recall@k and NDCG@k on the test split.
///
/// # Safety
/// `trainer` must be a live handle; out-pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_evaluate(
    trainer: *const AdaptauTrainer,
    k: usize,
    recall: *mut f64,
    ndcg: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        let tr = &t.trainer;
        let report = evaluate(&tr.scoring_table(), tr.train_set(), &t.test, k, None)?;
        if let Some(p) = recall.as_mut() {
            *p = report.recall;
        }
        if let Some(p) = ndcg.as_mut() {
            *p = report.ndcg;
        }
        Ok(())
    })
}

/// Current temperature of `user` (the global one for non-adaptive strategies).
///
/// # Safety
/// `trainer` must be a live handle; `out_tau` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_user_tau(
    trainer: *const AdaptauTrainer,
    user: usize,
    out_tau: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        let slot = out(out_tau, "out_tau")?;
        let taus = &t.trainer.temperature().tau_user;
        *slot = *taus
            .get(user)
            .ok_or_else(|| invalid(format!("user {user} out of range (n = {})", taus.len())))?;
        Ok(())
    })
}

/// Snapshot of the scoring embeddings.
///
/// # Safety
/// `trainer` must be a live handle; `out_table` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_table(
    trainer: *const AdaptauTrainer,
    out_table: *mut *mut AdaptauTable,
) -> AdaptauStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        let slot = out(out_table, "out_table")?;
        *slot = Box::into_raw(Box::new(AdaptauTable {
            table: t.trainer.scoring_table(),
        }));
        Ok(())
    })
}

/// # Safety
/// `trainer` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptau_trainer_free(trainer: *mut AdaptauTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_table` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_table_load(path: *const c_char, out_table: *mut *mut AdaptauTable) -> AdaptauStatus {
    guard(|| {
        let path = path_arg(path)?;
        let slot = out(out_table, "out_table")?;
        *slot = Box::into_raw(Box::new(AdaptauTable {
            table: load_checkpoint(path)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn adaptau_table_save(table: *const AdaptauTable, path: *const c_char) -> AdaptauStatus {
    guard(|| {
        let t = handle(table, "table")?;
        save_checkpoint(&t.table, path_arg(path)?, Precision::F64)?;
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle; out-pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn adaptau_table_shape(
    table: *const AdaptauTable,
    users: *mut usize,
    items: *mut usize,
    dim: *mut usize,
) -> AdaptauStatus {
    guard(|| {
        let t = &handle(table, "table")?.table;
        for (p, v) in [(users, t.n()), (items, t.m()), (dim, t.d())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Score of `(user, item)` under the table's normalization mode.
///
/// # Safety
/// `table` must be a live handle; `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_table_score(
    table: *const AdaptauTable,
    user: usize,
    item: usize,
    out_score: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let t = &handle(table, "table")?.table;
        let slot = out(out_score, "out_score")?;
        if user >= t.n() || item >= t.m() {
            return Err(invalid(format!("({user}, {item}) outside {}x{}", t.n(), t.m())));
        }
        *slot = t.score(user, item)?;
        Ok(())
    })
}

/// # Safety
/// `table` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptau_table_free(table: *mut AdaptauTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Principal branch of the Lambert W function.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_lambert_w(x: f64, out_w: *mut f64) -> AdaptauStatus {
    guard(|| {
        let slot = out(out_w, "out_w")?;
        *slot = lambert_w(x)?;
        Ok(())
    })
}

/// Global temperature from positive / overall mean cosine, clamped to
/// `[tau_min, tau_max]`.
///
/// # Safety
/// `out_tau` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_tau0(
    mu_plus: f64,
    mu: f64,
    users: usize,
    items: usize,
    positives: usize,
    tau_min: f64,
    tau_max: f64,
    out_tau: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let slot = out(out_tau, "out_tau")?;
        if !(tau_min > 0.0 && tau_min <= tau_max) {
            return Err(invalid(format!("bad bounds [{tau_min}, {tau_max}]")));
        }
        let bounds = TauBounds { min: tau_min, max: tau_max };
        *slot = tau0_simplified(mu_plus, mu, users, items, positives, bounds)?;
        Ok(())
    })
}

/// Per-user temperature for a user with mean loss `loss` when the population
/// mean is `threshold`.
///
/// # Safety
/// `out_tau` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptau_tau_user(
    loss: f64,
    threshold: f64,
    beta: f64,
    tau0: f64,
    out_tau: *mut f64,
) -> AdaptauStatus {
    guard(|| {
        let slot = out(out_tau, "out_tau")?;
        if !(beta > 0.0 && tau0 > 0.0) || !loss.is_finite() || !threshold.is_finite() {
            return Err(invalid("beta and tau0 must be positive, losses finite"));
        }
        *slot = superloss_tau(loss, threshold, beta, tau0);
        Ok(())
    })
}
