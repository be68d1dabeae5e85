use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use log::{info, warn};

use adaptau::config::{parse_list, ConfigFile, Snapshot};
use adaptau::dataset::synthetic::{generate, SyntheticConfig};
use adaptau::dataset::{load_split, parse_interactions, popularity_grouping, write_adjacency_list, Format, SplitPair};
use adaptau::embedding::{load_checkpoint, magnitude_report, save_checkpoint, BackboneConfig, BackboneKind, Precision};
use adaptau::evaluation::{default_tau_grid, fine_tau_grid, tau_sensitivity_sweep};
use adaptau::loss::grad_sweep;
use adaptau::optim::OptimizerKind;
use adaptau::oracles::{self, OracleReport};
use adaptau::report;
use adaptau::runs::{group_mean_taus, noisy_split, prepare, DatasetStats, NoiseMode};
use adaptau::temperature::{cosine_stats, log_density_ratio, tau0_full, tau0_simplified, LossAggregation};
use adaptau::trainer::{train_with_grouping, Strategy, Tau0Form, TrainConfig};

#[derive(Parser)]
#[command(name = "adaptau", version, about = "Adaptive-temperature collaborative filtering")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// k-core filter and split a dataset into train.txt / test.txt.
    Prepare(PrepareArgs),
    /// Train one model and write history, temperatures and metrics.
    Train(RunArgs),
    /// Train one fixed-temperature model per grid point.
    SweepTau(SweepArgs),
    /// Compare strategies on noise-corrupted training data.
    Noise(NoiseArgs),
    /// Run the oracle suite and gradient / magnitude diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw interaction file.
    #[arg(long, required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "adjacency")]
    format: Format,
    /// Generate data instead of reading it: `movielens-100k-scale` or `zipf`.
    #[arg(long, conflicts_with = "dataset")]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 10)]
    k_core: usize,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Directory with train.txt/test.txt, or a single file split 80/20.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// no-norm | fixed-tau | adap-tau0 | adap-tau
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// mf | lightgcn
    #[arg(long)]
    backbone: Option<BackboneKind>,
    #[arg(long)]
    layers: Option<usize>,
    /// adam | sgd
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// simplified | full
    #[arg(long)]
    tau0_form: Option<Tau0Form>,
    /// Cut-off for recall@k and NDCG@k.
    #[arg(long)]
    k: Option<usize>,
    /// Number of item popularity groups in the breakdown.
    #[arg(long)]
    groups: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `default` (0.05..1.0 step 0.05), `fine` (0.02..1.0 step 0.02) or a comma list.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    run: RunArgs,
    /// uniform | grouped
    #[arg(long)]
    noise_mode: Option<NoiseMode>,
    /// Comma list; one ratio for uniform mode, one per user group for grouped mode.
    #[arg(long)]
    ratios: Option<String>,
    /// Grid for the fixed-temperature baseline (uniform mode).
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Temperatures for the gradient-magnitude sweep.
    #[arg(long)]
    grid: Option<String>,
    /// Embeddings to diagnose instead of training a model first.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Flags and config file merged into concrete settings.
struct Resolved {
    dataset: Option<PathBuf>,
    format: Format,
    out: PathBuf,
    groups: usize,
    train: TrainConfig,
    file: ConfigFile,
    snapshot: Snapshot,
}

fn pick<T>(flag: Option<T>, file: &mut ConfigFile, key: &str) -> anyhow::Result<Option<T>>
where
    T: std::str::FromStr,
{
    let from_file = file.take::<T>(key)?;
    Ok(flag.or(from_file))
}

fn resolve(args: &RunArgs) -> anyhow::Result<Resolved> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = TrainConfig::default();
    let dataset = args.dataset.clone().or(file.take_string("data.dataset").map(PathBuf::from));
    let format = pick(args.format, &mut file, "data.format")?.unwrap_or_default();
    let out = args.out.clone().or(file.take_string("run.out").map(PathBuf::from)).unwrap_or_else(|| "runs".into());
    let groups = pick(args.groups, &mut file, "eval.groups")?.unwrap_or(10);

    let tau = pick(args.tau, &mut file, "train.tau")?;
    let strategy = args.strategy.clone().or(file.take_string("train.strategy"));
    if let Some(name) = strategy {
        cfg.strategy = Strategy::parse(&name, tau)?;
    } else if let Some(t) = tau {
        cfg.strategy = Strategy::FixedTau(t);
    }
    if let Some(v) = pick(args.epochs, &mut file, "train.epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = pick(args.dim, &mut file, "train.dim")? {
        cfg.dim = v;
    }
    if let Some(v) = pick(args.lr, &mut file, "train.lr")? {
        cfg.lr = v;
    }
    if let Some(v) = pick(args.l2, &mut file, "train.l2")? {
        cfg.l2 = v;
    }
    if let Some(v) = pick(args.negatives, &mut file, "train.negatives")? {
        cfg.negatives = v;
    }
    if let Some(v) = pick(args.batch, &mut file, "train.batch")? {
        cfg.batch_size = v;
    }
    if let Some(v) = pick(args.seed, &mut file, "train.seed")? {
        cfg.seed = v;
    }
    if let Some(v) = pick(args.optimizer, &mut file, "train.optimizer")? {
        cfg.optimizer = v;
    }
    if let Some(v) = pick(args.eval_interval, &mut file, "train.eval_interval")? {
        cfg.eval_interval = v;
    }
    cfg.patience = pick(args.patience, &mut file, "train.patience")?;
    if let Some(v) = pick(args.k, &mut file, "train.k")? {
        cfg.k = v;
    }
    if let Some(v) = pick(args.tau0_form, &mut file, "temperature.tau0_form")? {
        cfg.tau0_form = v;
    }
    if let Some(v) = pick(args.beta, &mut file, "temperature.beta")? {
        cfg.temperature.beta = v;
    }
    if let Some(v) = file.take::<f64>("temperature.tau_min")? {
        cfg.temperature.bounds.min = v;
    }
    if let Some(v) = file.take::<f64>("temperature.tau_max")? {
        cfg.temperature.bounds.max = v;
    }
    if let Some(v) = file.take::<f64>("temperature.smoothing")? {
        cfg.temperature.smoothing = v;
    }
    if let Some(v) = file.take_string("temperature.aggregation") {
        cfg.temperature.aggregation = match v.as_str() {
            "mean" => LossAggregation::Mean,
            "sum" => LossAggregation::Sum,
            other => bail!("temperature.aggregation must be mean or sum, got {other:?}"),
        };
    }
    let kind = pick(args.backbone, &mut file, "train.backbone")?.unwrap_or(BackboneKind::Mf);
    let layers = pick(args.layers, &mut file, "train.layers")?;
    cfg.backbone = match kind {
        BackboneKind::Mf => BackboneConfig::mf(),
        BackboneKind::LightGcn => BackboneConfig::lightgcn(layers.unwrap_or(2)),
    };
    cfg.validate()?;

    let mut snapshot = Snapshot::default();
    if let Some(d) = &dataset {
        snapshot.push("data.dataset", d.display());
    }
    snapshot.push(
        "data.format",
        match format {
            Format::AdjacencyList => "adjacency-list",
            Format::PairList => "pair-list",
        },
    );
    snapshot.push("run.out", out.display());
    snapshot.push("eval.groups", groups);
    push_train_config(&mut snapshot, &cfg);
    Ok(Resolved {
        dataset,
        format,
        out,
        groups,
        train: cfg,
        file,
        snapshot,
    })
}

fn push_train_config(s: &mut Snapshot, cfg: &TrainConfig) {
    s.push("train.strategy", cfg.strategy.name());
    if let Strategy::FixedTau(t) = cfg.strategy {
        s.push("train.tau", t);
    }
    s.push("train.epochs", cfg.epochs);
    s.push("train.dim", cfg.dim);
    s.push("train.lr", cfg.lr);
    s.push("train.l2", cfg.l2);
    s.push("train.negatives", cfg.negatives);
    s.push("train.batch", cfg.batch_size);
    s.push("train.seed", cfg.seed);
    s.push(
        "train.optimizer",
        match cfg.optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        },
    );
    s.push(
        "train.backbone",
        match cfg.backbone.kind {
            BackboneKind::Mf => "mf",
            BackboneKind::LightGcn => "lightgcn",
        },
    );
    s.push("train.layers", cfg.backbone.layers);
    s.push("train.eval_interval", cfg.eval_interval);
    if let Some(p) = cfg.patience {
        s.push("train.patience", p);
    }
    s.push("train.k", cfg.k);
    s.push(
        "temperature.tau0_form",
        match cfg.tau0_form {
            Tau0Form::Simplified => "simplified",
            Tau0Form::Full => "full",
        },
    );
    let t = &cfg.temperature;
    s.push("temperature.beta", t.beta);
    s.push("temperature.tau_min", t.bounds.min);
    s.push("temperature.tau_max", t.bounds.max);
    s.push("temperature.smoothing", t.smoothing);
    s.push(
        "temperature.aggregation",
        match t.aggregation {
            LossAggregation::Mean => "mean",
            LossAggregation::Sum => "sum",
        },
    );
}

fn missing_dataset() -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, "--dataset is required (or data.dataset in --config)")
        .exit()
}

fn load_dataset(path: &Path, format: Format, seed: u64) -> anyhow::Result<SplitPair> {
    if path.is_dir() {
        let split = load_split(path.join("train.txt"), path.join("test.txt"), format)
            .with_context(|| format!("loading {}", path.display()))?;
        return Ok(split);
    }
    if !path.exists() {
        bail!("dataset {} does not exist", path.display());
    }
    let parsed = parse_interactions(path, format)?;
    Ok(prepare(&parsed.data, 1, 0.8, seed)?)
}

fn parse_grid(spec: Option<&str>) -> anyhow::Result<Vec<f64>> {
    Ok(match spec {
        None | Some("default") => default_tau_grid(),
        Some("fine") => fine_tau_grid(),
        Some(list) => parse_list(list)?,
    })
}

fn cmd_prepare(args: PrepareArgs) -> anyhow::Result<()> {
    let data = match (&args.dataset, args.synthetic.as_deref()) {
        (Some(path), _) => parse_interactions(path, args.format)?.data,
        (None, Some("movielens-100k-scale")) => generate(&SyntheticConfig::movielens_100k_scale(args.seed))?,
        (None, Some("zipf")) => generate(&SyntheticConfig::zipf(500, 1000, 20.0, args.seed))?,
        (None, Some(other)) => bail!("unknown synthetic dataset {other:?}"),
        (None, None) => missing_dataset(),
    };
    let raw = DatasetStats::of(&data);
    let split = prepare(&data, args.k_core, args.split, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write_adjacency_list(args.out.join("train.txt"), &split.train)?;
    write_adjacency_list(args.out.join("test.txt"), &split.test)?;
    let mut all = split.train.pairs().to_vec();
    all.extend_from_slice(split.test.pairs());
    let filtered = DatasetStats::of(&adaptau::dataset::Interactions::from_pairs(split.train.n(), split.train.m(), all)?.0);
    let text = format!(
        "raw: {raw}\nfiltered: {filtered}\nk_core: {}\nsplit: {}\nseed: {}\ntrain_pairs: {}\ntest_pairs: {}\n",
        args.k_core,
        args.split,
        args.seed,
        split.train.len(),
        split.test.len()
    );
    fs::write(args.out.join("stats.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_train(args: RunArgs) -> anyhow::Result<()> {
    let r = resolve(&args)?;
    r.file.finish()?;
    let dataset = r.dataset.clone().unwrap_or_else(|| missing_dataset());
    let split = load_dataset(&dataset, r.format, r.train.seed)?;
    let grouping = popularity_grouping(&split.train, r.groups.min(split.train.m()))?;
    let dir = report::create_run_dir(&r.out, &format!("train-{}", r.train.strategy.name()))?;
    r.snapshot.write(dir.join("config.txt"))?;

    let outcome = train_with_grouping(&split, &r.train, Some(&grouping))?;
    report::write_history(dir.join("history.csv"), &outcome.history)?;
    report::write_temperature_log(dir.join("temperature.csv"), &outcome.epochs)?;
    report::write_user_taus(dir.join("user_tau.csv"), &outcome.temperature, &[])?;
    save_checkpoint(&outcome.table, dir.join("embeddings.bin"), Precision::F64)?;
    let mut summary = vec![
        ("strategy".to_string(), r.train.strategy.to_string()),
        ("epochs".to_string(), outcome.history.len().to_string()),
        ("best_epoch".to_string(), outcome.best_epoch.to_string()),
        ("final_tau0".to_string(), outcome.temperature.tau0.to_string()),
    ];
    if let Some(rep) = &outcome.report {
        report::write_metrics(dir.join("metrics.csv"), rep)?;
        report::write_group_recall(dir.join("group_recall.csv"), rep)?;
        summary.push(("recall@20".into(), rep.recall.to_string()));
        summary.push(("ndcg@20".into(), rep.ndcg.to_string()));
        println!("recall@{} {:.5} ndcg@{} {:.5}", rep.k, rep.recall, rep.k, rep.ndcg);
    }
    report::write_summary(dir.join("summary.json"), &summary)?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut r = resolve(&args.run)?;
    let grid = parse_grid(args.grid.or(r.file.take_string("sweep.grid")).as_deref())?;
    r.file.finish()?;
    let dataset = r.dataset.clone().unwrap_or_else(|| missing_dataset());
    let split = load_dataset(&dataset, r.format, r.train.seed)?;
    let dir = report::create_run_dir(&r.out, "sweep-tau")?;
    let mut snapshot = r.snapshot;
    snapshot.push("sweep.grid", grid.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    snapshot.write(dir.join("config.txt"))?;

    let sweep = tau_sensitivity_sweep(&split, &r.train, &grid)?;
    report::write_sweep(dir.join("sweep.csv"), &sweep)?;
    let best = sweep.best_row();
    report::write_summary(
        dir.join("summary.json"),
        &[
            ("best_tau".into(), best.tau.to_string()),
            ("best_recall@20".into(), best.recall.to_string()),
            ("best_ndcg@20".into(), best.ndcg.to_string()),
            ("relative_spread".into(), sweep.relative_spread().to_string()),
            ("runs".into(), sweep.rows.len().to_string()),
        ],
    )?;
    for row in &sweep.rows {
        println!("tau {:.3} recall@20 {:.5} ndcg@20 {:.5}", row.tau, row.recall, row.ndcg);
    }
    println!("best tau {} recall@20 {:.5}", best.tau, best.recall);
    println!("{}", dir.display());
    Ok(())
}

fn cmd_noise(args: NoiseArgs) -> anyhow::Result<()> {
    let mut r = resolve(&args.run)?;
    let mode = pick(args.noise_mode, &mut r.file, "noise.mode")?.unwrap_or(NoiseMode::Uniform);
    let ratios = match args.ratios.or(r.file.take_string("noise.ratios")) {
        Some(s) => parse_list(&s)?,
        None => match mode {
            NoiseMode::Uniform => vec![0.2],
            NoiseMode::Grouped => vec![0.1, 0.2, 0.3, 0.4],
        },
    };
    let grid = parse_grid(args.grid.or(r.file.take_string("sweep.grid")).as_deref())?;
    r.file.finish()?;
    let dataset = r.dataset.clone().unwrap_or_else(|| missing_dataset());
    let clean = load_dataset(&dataset, r.format, r.train.seed)?;
    let noisy = noisy_split(&clean, mode, &ratios, r.train.seed)?;
    let dir = report::create_run_dir(&r.out, "noise")?;
    let mut snapshot = r.snapshot;
    snapshot.push("noise.mode", format!("{mode:?}").to_lowercase());
    snapshot.push("noise.ratios", ratios.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    snapshot.write(dir.join("config.txt"))?;
    info!("injected {} fake pairs", noisy.fake.len());

    let adaptive = TrainConfig {
        strategy: Strategy::AdapTau,
        ..r.train.clone()
    };
    let adap = train_with_grouping(&noisy.split, &adaptive, None)?;
    report::write_history(dir.join("adap_tau_history.csv"), &adap.history)?;
    report::write_temperature_log(dir.join("temperature.csv"), &adap.epochs)?;
    report::write_user_taus(dir.join("user_tau.csv"), &adap.temperature, &noisy.groups)?;
    let adap_recall = adap.report.as_ref().map_or(f64::NAN, |r| r.recall);
    let adap_ndcg = adap.report.as_ref().map_or(f64::NAN, |r| r.ndcg);

    let mut rows = Vec::new();
    match mode {
        NoiseMode::Grouped => {
            let taus = group_mean_taus(&adap.temperature, &noisy.groups, ratios.len());
            report::write_csv(
                dir.join("group_tau.csv"),
                "group,ratio,users,mean_tau_u,mean_loss_u",
                taus.iter().map(|g| {
                    format!(
                        "{},{},{},{},{}",
                        g.group,
                        ratios[g.group],
                        g.users,
                        g.mean_tau,
                        g.mean_loss.map_or_else(String::new, |v| v.to_string())
                    )
                }),
            )?;
            for g in &taus {
                println!("group {} ratio {} mean tau_u {:.5}", g.group, ratios[g.group], g.mean_tau);
            }
        }
        NoiseMode::Uniform => {
            let sweep = tau_sensitivity_sweep(&noisy.split, &r.train, &grid)?;
            report::write_sweep(dir.join("baseline_sweep.csv"), &sweep)?;
            let best = sweep.best_row();
            rows.push(format!("fixed-tau,{},{},{}", best.tau, best.recall, best.ndcg));
        }
    }
    rows.push(format!("adap-tau,{},{adap_recall},{adap_ndcg}", adap.temperature.tau0));
    report::write_csv(dir.join("comparison.csv"), "strategy,tau,recall@20,ndcg@20", rows.iter())?;
    for row in &rows {
        println!("{row}");
    }
    println!("{}", dir.display());
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> anyhow::Result<()> {
    let mut r = resolve(&args.run)?;
    let grid = match args.grid.or(r.file.take_string("diagnose.grid")) {
        Some(s) => parse_grid(Some(&s))?,
        None => (1..=50).map(|k| k as f64 * 0.02).collect(),
    };
    r.file.finish()?;
    let split = match &r.dataset {
        Some(path) => load_dataset(path, r.format, r.train.seed)?,
        None => {
            warn!("no dataset given, diagnosing a small synthetic split");
            oracles::synthetic_split(200, 400, 20.0, r.train.seed)?
        }
    };
    let dir = report::create_run_dir(&r.out, "diagnose")?;
    r.snapshot.write(dir.join("config.txt"))?;

    let table = match &args.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => train_with_grouping(&split, &r.train, None)?.scoring_table,
    }
    .with_norm_mode(adaptau::embedding::NormMode::Both);
    let train = &split.train;

    let mut reports: Vec<OracleReport> = vec![
        oracles::gradient_suite(20, 8, 5, r.train.seed)?,
        oracles::lambert_suite(1000)?,
        oracles::superloss_suite(100, r.train.seed)?,
    ];
    if table.n() * table.m() <= 4_000_000 {
        reports.push(oracles::mu_estimator_check(&table)?);
    }
    reports.push(oracles::magnitude_check(&table, train, 0.1, 50)?);
    let bisect = match oracles::condition_check(&table, train) {
        Ok((tau, rep)) => {
            reports.push(rep);
            Some(tau)
        }
        Err(e) => {
            warn!("bisection oracle skipped: {e}");
            None
        }
    };
    report::write_oracles(dir.join("oracles.csv"), &reports)?;

    let sweep = grad_sweep(&table, train, &grid)?;
    report::write_grad_sweep(dir.join("grad_sweep.csv"), &sweep)?;
    let grouping = popularity_grouping(train, r.groups.min(train.m()))?;
    let magnitudes = magnitude_report(&table, &grouping);
    report::write_csv(
        dir.join("magnitude.csv"),
        "group,mean_item_norm",
        magnitudes.iter().enumerate().map(|(g, v)| format!("{g},{v}")),
    )?;

    let stats = cosine_stats(&table, train, r.train.temperature.sigma_sample_size, r.train.seed)?;
    let bounds = r.train.temperature.bounds;
    let (n, m, d) = (train.n(), train.m(), train.len());
    let simplified = tau0_simplified(stats.mu_plus, stats.mu, n, m, d, bounds)?;
    let full = tau0_full(stats.mu_plus, stats.mu, stats.sigma2_plus, stats.sigma2, n, m, d, bounds)?;
    let mut rows = vec![
        format!("mu_plus,{}", stats.mu_plus),
        format!("mu,{}", stats.mu),
        format!("sigma2_plus_minus_sigma2,{}", stats.sigma2_plus - stats.sigma2),
        format!("log_ratio,{}", log_density_ratio(n, m, d)?),
        format!("tau0_full,{full}"),
        format!("tau0_simplified,{simplified}"),
    ];
    if let Some(t) = bisect {
        rows.push(format!("tau0_bisection,{t}"));
    }
    report::write_csv(dir.join("tau0.csv"), "quantity,value", rows.iter())?;

    println!("{:<28} {:>12} {:>12} {:>6} {:>5}", "oracle", "max_abs", "max_rel", "cases", "pass");
    for rep in &reports {
        println!(
            "{:<28} {:>12.3e} {:>12.3e} {:>6} {:>5}",
            rep.name, rep.max_abs_err, rep.max_rel_err, rep.cases, rep.pass
        );
    }
    println!("sigma2+ - sigma2 = {:.6}", stats.sigma2_plus - stats.sigma2);
    println!("tau0 full = {full:.6}  tau0 simplified = {simplified:.6}");
    println!("{}", dir.display());
    if let Some(failed) = reports.iter().find(|r| !r.pass) {
        bail!("oracle {} failed", failed.name);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::SweepTau(a) => cmd_sweep(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
