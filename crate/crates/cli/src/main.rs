//! `sarcue` — run cue-based sarcasm detection strategies over datasets,
//! train the ToC head, compute dataset statistics, drive ablations and
//! assemble reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{
    load_config, load_cues, load_prompts, resolve_backend, BackendProfile, CliError,
    ConfigSource, FileConfig, RunConfig,
};
use sarcue::cues::CueCategory;
use sarcue::data::{DataFormat, Dataset, LoadOptions, Split};
use sarcue::eval::report::{attach_significance, load_report, write_report};
use sarcue::eval::{evaluate, run_ablation, EvalConfig};
use sarcue::toc::{train_toc, TocConfig};
use sarcue::types::StrategyKind;

#[derive(Parser)]
#[command(name = "sarcue", version, about = "Cue-based sarcasm detection over LLM backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a strategy over a dataset's test split.
    Run(RunArgs),
    /// Train the ToC projections and head; saves a parameter file.
    TrainToc(TrainTocArgs),
    /// Print dataset statistics (average length, split sizes).
    Stats(StatsArgs),
    /// Ablate one cue category (pool removal + prompt-away) and evaluate.
    Ablate(AblateArgs),
    /// Combine saved JSON reports into a table, with optional significance.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Strategy: io, cot, coc, goc, boc or toc.
    #[arg(long)]
    strategy: Option<String>,
    /// Dataset file (jsonl or csv).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Backend profile name (built-in: fixture, fixture-strict, openai,
    /// anthropic; more via the config file).
    #[arg(long)]
    backend: Option<String>,
    /// TOML config file, or the JSON report of a previous run to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Demonstrations per prompt (0, 1, 5 or 10 are conventional).
    #[arg(long)]
    k: Option<usize>,
    /// Repeated runs to average over.
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit per-run seeds, comma separated; overrides --seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// GoC confidence gate in [0,1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_cues: Option<usize>,
    #[arg(long)]
    start_cue: Option<String>,
    /// BoC subset count.
    #[arg(long)]
    t: Option<usize>,
    /// BoC cues per subset.
    #[arg(long)]
    q: Option<usize>,
    /// ToC projection dims as "d_l,d_c,d_e".
    #[arg(long)]
    toc_dims: Option<String>,
    /// Truncate the fused vector to its first d entries.
    #[arg(long)]
    truncate: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Evaluate samples sequentially even when parallel support is built in.
    #[arg(long)]
    no_parallel: bool,
    /// Also emit FP/FN chart data.
    #[arg(long)]
    chart_data: bool,
    /// Skip persisting prompt/response traces (saved under
    /// <out-dir>/traces by default).
    #[arg(long)]
    no_traces: bool,
    /// Prompt template file overriding the bundled set.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Cue definition file overriding the bundled pool.
    #[arg(long)]
    cues: Option<PathBuf>,
}

#[derive(Args)]
struct TrainTocArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    toc_dims: Option<String>,
    #[arg(long)]
    truncate: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    cues: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Category to remove: linguistic, contextual or emotional.
    #[arg(long)]
    remove: String,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved JSON reports to combine.
    #[arg(long, value_delimiter = ',', required = true)]
    inputs: Vec<PathBuf>,
    /// Baseline strategy for the significance column.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    chart_data: bool,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args, None),
        Command::TrainToc(args) => cmd_train_toc(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => {}
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn parse_format(s: &str) -> Result<DataFormat, CliError> {
    s.parse().map_err(|e: String| CliError::config(format!("--format: {e}")))
}

fn parse_strategy(s: &str) -> Result<StrategyKind, CliError> {
    s.parse().map_err(|e: String| CliError::config(format!("--strategy: {e}")))
}

fn parse_category(s: &str) -> Result<CueCategory, CliError> {
    s.parse().map_err(|e: String| CliError::config(format!("--remove: {e}")))
}

fn infer_format(path: &Path, flag: Option<&str>) -> Result<DataFormat, CliError> {
    match flag {
        Some(s) => parse_format(s),
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(DataFormat::Csv),
            _ => Ok(DataFormat::Jsonl),
        },
    }
}

fn parse_toc_dims(s: &str) -> Result<(usize, usize, usize), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::config("--toc-dims: expected \"d_l,d_c,d_e\""));
    }
    let dim = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| CliError::config(format!("--toc-dims: invalid dimension {p:?}")))
    };
    Ok((dim(parts[0])?, dim(parts[1])?, dim(parts[2])?))
}

/// Builds the effective run configuration: flags > config file > defaults,
/// or flags over a replayed report config.
fn resolve_run_config(args: &RunArgs, remove: Option<&str>) -> Result<RunConfig, CliError> {
    let source = match &args.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let (file, replay) = match source {
        Some(ConfigSource::File(f)) => (Some(f), None),
        Some(ConfigSource::Replay(r)) => (None, Some(*r)),
        None => (None, None),
    };
    let defaults = file.as_ref().map(|f| f.defaults.clone()).unwrap_or_default();

    let mut rc = match replay {
        Some(rc) => rc,
        None => {
            let strategy_name = args
                .strategy
                .as_deref()
                .ok_or_else(|| CliError::config("--strategy: required"))?;
            let dataset = args
                .dataset
                .clone()
                .or_else(|| defaults_dataset(&file))
                .ok_or_else(|| CliError::config("--dataset: required"))?;
            let backend_name = args
                .backend
                .as_deref()
                .or(defaults.backend.as_deref())
                .unwrap_or("fixture");
            let runs = args.runs.or(defaults.runs).unwrap_or(5);
            let base_seed = args.seed.unwrap_or(1);
            let seeds = args
                .seeds
                .clone()
                .or(defaults.seeds.clone())
                .unwrap_or_else(|| (base_seed..base_seed + runs as u64).collect());
            let mut toc = defaults.toc.clone().unwrap_or_default();
            toc.seed = base_seed;
            RunConfig {
                strategy: parse_strategy(strategy_name)?,
                format: infer_format(&dataset, args.format.as_deref())?,
                dataset,
                backend: resolve_backend(backend_name, file.as_ref())?,
                k: args.k.or(defaults.k).unwrap_or(0),
                runs,
                seeds,
                threshold: args.threshold.or(defaults.threshold).unwrap_or(0.95),
                max_cues: args.max_cues.or(defaults.max_cues).unwrap_or(10),
                start_cue: args.start_cue.clone().or(defaults.start_cue.clone()),
                t: args.t.or(defaults.t).unwrap_or(5),
                q: args.q.or(defaults.q).unwrap_or(3),
                toc,
                remove: None,
                cache_dir: args.cache_dir.clone().or(defaults.cache_dir.clone()),
                out_dir: args
                    .out_dir
                    .clone()
                    .or(defaults.out_dir.clone())
                    .unwrap_or_else(|| PathBuf::from("out")),
                parallel: !args.no_parallel && defaults.parallel.unwrap_or(true),
                chart_data: args.chart_data,
                save_traces: !args.no_traces,
                prompts_path: args.prompts.clone().or_else(|| file.as_ref().and_then(|f| f.prompts.clone())),
                cues_path: args.cues.clone().or_else(|| file.as_ref().and_then(|f| f.cues.clone())),
                dataset_options: file
                    .as_ref()
                    .and_then(|f| f.dataset.clone())
                    .unwrap_or_default(),
            }
        }
    };

    // flag overrides (apply on top of a replayed config too)
    if let Some(s) = &args.strategy {
        rc.strategy = parse_strategy(s)?;
    }
    if let Some(d) = &args.dataset {
        rc.dataset = d.clone();
        rc.format = infer_format(d, args.format.as_deref())?;
    }
    if let Some(b) = &args.backend {
        rc.backend = resolve_backend(b, file.as_ref())?;
    }
    if let Some(k) = args.k {
        rc.k = k;
    }
    if let Some(runs) = args.runs {
        rc.runs = runs;
        if args.seeds.is_none() {
            let base = args.seed.unwrap_or(1);
            rc.seeds = (base..base + runs as u64).collect();
        }
    }
    if let Some(seeds) = &args.seeds {
        rc.seeds = seeds.clone();
    } else if let Some(seed) = args.seed {
        rc.seeds = (seed..seed + rc.runs as u64).collect();
        rc.toc.seed = seed;
    }
    if let Some(v) = args.threshold {
        rc.threshold = v;
    }
    if let Some(v) = args.max_cues {
        rc.max_cues = v;
    }
    if let Some(v) = &args.start_cue {
        rc.start_cue = Some(v.clone());
    }
    if let Some(v) = args.t {
        rc.t = v;
    }
    if let Some(v) = args.q {
        rc.q = v;
    }
    if let Some(dims) = &args.toc_dims {
        let (d_l, d_c, d_e) = parse_toc_dims(dims)?;
        rc.toc.d_l = d_l;
        rc.toc.d_c = d_c;
        rc.toc.d_e = d_e;
    }
    if let Some(v) = args.truncate {
        rc.toc.truncate = Some(v);
    }
    if let Some(v) = args.lr {
        rc.toc.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        rc.toc.epochs = v;
    }
    if let Some(v) = args.patience {
        rc.toc.early_stop_patience = v;
    }
    if let Some(dir) = &args.cache_dir {
        rc.cache_dir = Some(dir.clone());
    }
    if let Some(dir) = &args.out_dir {
        rc.out_dir = dir.clone();
    }
    if args.no_parallel {
        rc.parallel = false;
    }
    if args.chart_data {
        rc.chart_data = true;
    }
    if args.no_traces {
        rc.save_traces = false;
    }
    if let Some(r) = remove {
        rc.remove = Some(parse_category(r)?);
    }

    validate_run_config(&rc)?;
    Ok(rc)
}

fn defaults_dataset(_file: &Option<FileConfig>) -> Option<PathBuf> {
    None
}

fn validate_run_config(rc: &RunConfig) -> Result<(), CliError> {
    if !rc.dataset.exists() {
        return Err(CliError::config(format!(
            "--dataset: file not found: {}",
            rc.dataset.display()
        )));
    }
    if rc.toc.learning_rate <= 0.0 {
        return Err(CliError::config("--lr: learning rate must be positive"));
    }
    if rc.toc.epochs == 0 {
        return Err(CliError::config("--epochs: must be at least 1"));
    }
    if rc.remove.is_some()
        && !matches!(rc.strategy, StrategyKind::Goc | StrategyKind::Boc | StrategyKind::Toc)
    {
        return Err(CliError::config(format!(
            "--remove: ablation applies to goc, boc or toc, not {}",
            rc.strategy
        )));
    }
    let pool = load_cues(rc.cues_path.as_deref())?;
    eval_config_of(rc)
        .validate(&pool)
        .map_err(|e| CliError::config(format!("run configuration: {e}")))?;
    Ok(())
}

fn eval_config_of(rc: &RunConfig) -> EvalConfig {
    EvalConfig {
        strategy: rc.strategy,
        k: rc.k,
        runs: rc.runs,
        seeds: rc.seeds.clone(),
        threshold: rc.threshold,
        max_cues: rc.max_cues,
        start_cue: rc.start_cue.clone(),
        t: rc.t,
        q: rc.q,
        toc: rc.toc.clone(),
        ablate: rc.remove,
        parallel: rc.parallel,
    }
}

fn cmd_run(args: RunArgs, remove: Option<String>) -> Result<(), CliError> {
    let rc = resolve_run_config(&args, remove.as_deref())?;
    let prompts = load_prompts(rc.prompts_path.as_deref())?;
    let pool = load_cues(rc.cues_path.as_deref())?;
    let dataset = Dataset::load(&rc.dataset, rc.format, &rc.dataset_options)
        .map_err(anyhow::Error::from)?;
    let backend = rc.backend.build(rc.cache_dir.as_deref())?;
    let eval_config = eval_config_of(&rc);
    let trace_dir = rc.save_traces.then(|| rc.out_dir.join("traces"));

    let mut report = match rc.remove {
        Some(category) => run_ablation(
            &dataset,
            backend.as_ref(),
            &prompts,
            &pool,
            &eval_config,
            category,
            trace_dir.as_deref(),
        ),
        None => evaluate(
            &dataset,
            backend.as_ref(),
            &prompts,
            &pool,
            &eval_config,
            trace_dir.as_deref(),
        ),
    }
    .map_err(anyhow::Error::from)?;
    report.run_config = Some(serde_json::to_value(&rc).map_err(anyhow::Error::from)?);

    let written = write_report(std::slice::from_ref(&report), &rc.out_dir, rc.chart_data)
        .map_err(anyhow::Error::from)?;
    println!(
        "strategy={} dataset={} k={} runs={} acc_mean={:.4} f1_mean={:.4}",
        report.strategy, report.dataset, report.k, report.runs.len(), report.acc_mean,
        report.f1_mean
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    cmd_run(args.run, Some(args.remove))
}

fn cmd_train_toc(args: TrainTocArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => match load_config(path)? {
            ConfigSource::File(f) => Some(f),
            ConfigSource::Replay(_) => {
                return Err(CliError::config("--config: train-toc takes a TOML config file"))
            }
        },
        None => None,
    };
    let backend_name = args.backend.as_deref().unwrap_or("fixture");
    let profile: BackendProfile = resolve_backend(backend_name, file.as_ref())?;
    let mut toc = TocConfig { seed: args.seed.unwrap_or(1), ..Default::default() };
    if let Some(dims) = &args.toc_dims {
        let (d_l, d_c, d_e) = parse_toc_dims(dims)?;
        toc.d_l = d_l;
        toc.d_c = d_c;
        toc.d_e = d_e;
    }
    if let Some(v) = args.truncate {
        toc.truncate = Some(v);
    }
    if let Some(v) = args.lr {
        toc.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        toc.epochs = v;
    }
    if let Some(v) = args.patience {
        toc.early_stop_patience = v;
    }
    if toc.learning_rate <= 0.0 {
        return Err(CliError::config("--lr: learning rate must be positive"));
    }
    if toc.epochs == 0 {
        return Err(CliError::config("--epochs: must be at least 1"));
    }
    toc.validate()
        .map_err(|e| CliError::config(format!("toc configuration: {e}")))?;
    if !args.dataset.exists() {
        return Err(CliError::config(format!(
            "--dataset: file not found: {}",
            args.dataset.display()
        )));
    }

    let format = infer_format(&args.dataset, args.format.as_deref())?;
    let options = file.as_ref().and_then(|f| f.dataset.clone()).unwrap_or_default();
    let dataset = Dataset::load(&args.dataset, format, &options).map_err(anyhow::Error::from)?;
    let prompts = load_prompts(
        args.prompts
            .as_deref()
            .or(file.as_ref().and_then(|f| f.prompts.as_deref())),
    )?;
    let pool = load_cues(
        args.cues
            .as_deref()
            .or(file.as_ref().and_then(|f| f.cues.as_deref())),
    )?;
    let backend = profile.build(args.cache_dir.as_deref())?;
    let ctx = sarcue::strategies::StrategyContext::new(backend.as_ref(), &prompts);

    let train: Vec<_> = dataset.split(Split::Train).into_iter().cloned().collect();
    let mut dev: Vec<_> = dataset.split(Split::Dev).into_iter().cloned().collect();
    let mut train = train;
    if dev.is_empty() && train.len() > 1 {
        let cut = train.len() - (train.len() / 10).max(1);
        dev = train.split_off(cut);
        println!("no dev split; holding out {} train samples for early stopping", dev.len());
    }

    let (model, history) =
        train_toc(&train, &dev, ctx, &pool, toc, None).map_err(anyhow::Error::from)?;
    std::fs::create_dir_all(&args.out_dir).map_err(anyhow::Error::from)?;
    let model_path = args.out_dir.join("toc_model.json");
    model.save(&model_path).map_err(anyhow::Error::from)?;

    for epoch in &history {
        match epoch.dev_macro_f1 {
            Some(f1) => println!(
                "epoch {:>4}  train_loss {:.6}  dev_macro_f1 {:.4}",
                epoch.epoch, epoch.train_loss, f1
            ),
            None => println!("epoch {:>4}  train_loss {:.6}", epoch.epoch, epoch.train_loss),
        }
    }
    println!("wrote {}", model_path.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    if !args.dataset.exists() {
        return Err(CliError::config(format!(
            "--dataset: file not found: {}",
            args.dataset.display()
        )));
    }
    let file = match &args.config {
        Some(path) => match load_config(path)? {
            ConfigSource::File(f) => Some(f),
            ConfigSource::Replay(_) => None,
        },
        None => None,
    };
    let format = infer_format(&args.dataset, args.format.as_deref())?;
    let options: LoadOptions =
        file.as_ref().and_then(|f| f.dataset.clone()).unwrap_or_default();
    let dataset = Dataset::load(&args.dataset, format, &options).map_err(anyhow::Error::from)?;
    let stats = dataset.stats().map_err(anyhow::Error::from)?;
    println!("{:<16} {:>12} {:>8} {:>6} {:>6}", "Dataset", "Avg. Length", "#Train", "#Dev", "#Test");
    println!(
        "{:<16} {:>12.2} {:>8} {:>6} {:>6}",
        dataset.name, stats.avg_token_length, stats.train, stats.dev, stats.test
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        if !path.exists() {
            return Err(CliError::config(format!("--inputs: file not found: {}", path.display())));
        }
        reports.push(load_report(path).map_err(anyhow::Error::from)?);
    }
    if let Some(baseline_name) = &args.baseline {
        let baseline_kind = parse_strategy(baseline_name)
            .map_err(|_| CliError::config(format!("--baseline: unknown strategy {baseline_name:?}")))?;
        let baselines: Vec<_> = reports
            .iter()
            .filter(|r| r.strategy == baseline_kind)
            .cloned()
            .collect();
        for report in reports.iter_mut() {
            if report.strategy == baseline_kind {
                continue;
            }
            if let Some(baseline) = baselines
                .iter()
                .find(|b| b.dataset == report.dataset && b.k == report.k)
            {
                attach_significance(report, baseline).map_err(anyhow::Error::from)?;
            }
        }
    }
    let written =
        write_report(&reports, &args.out_dir, args.chart_data).map_err(anyhow::Error::from)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
