//! Command-line driver: synthesize datasets, train online or in
//! batch, score stored mappings, run the MI-metric correlation study,
//! and sweep trigger parameters. Every subcommand takes an optional
//! TOML config file plus flag overrides; any validation failure exits
//! nonzero with a one-line diagnostic.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mihash::config::ExperimentConfig;
use mihash::experiments::{self, SweepParam};
use mihash::io;

#[derive(Parser)]
#[command(
    name = "mihash",
    version,
    about = "Streaming learned hashing with quality-triggered table updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster dataset
    Synth(SynthArgs),
    /// Stream examples through the online learner under a
    /// quality-triggered policy and a periodic baseline
    TrainOnline(RunArgs),
    /// Train a mapping by minibatch gradient descent
    TrainBatch(RunArgs),
    /// Score a stored mapping on a dataset
    Eval(EvalArgs),
    /// Correlate mapping quality (MI) with ranking metrics over
    /// random mappings
    Correlate(RunArgs),
    /// Rerun the streaming experiment across trigger margins or check
    /// intervals
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of examples
    #[arg(long)]
    n: usize,
    /// Feature dimensionality
    #[arg(long)]
    dim: usize,
    /// Number of Gaussian clusters (= classes)
    #[arg(long)]
    classes: usize,
    /// Per-cluster standard deviation
    #[arg(long)]
    spread: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output path; `.mihf` writes the binary format, anything else CSV
    #[arg(long)]
    out: PathBuf,
}

/// Config file plus per-key overrides; flags win over file values.
#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset path (`.mihf` or CSV); omitted = synthesize
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long)]
    sharpness: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    decay_factor: Option<f64>,
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    minibatch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    reservoir_capacity: Option<usize>,
    /// Trigger margin; accepts inf and -inf
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long)]
    update_interval: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    checkpoints: Option<usize>,
    /// Ground truth: `class` or `percentile:<p>`
    #[arg(long)]
    labeling: Option<String>,
    /// mAP ranking cutoff; 0 ranks everything
    #[arg(long)]
    map_cutoff: Option<usize>,
    #[arg(long)]
    n_mappings: Option<usize>,
    #[arg(long)]
    n_queries: Option<usize>,
    /// Report directory; overrides config and MIHASH_OUT_DIR
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Stored mapping (`.mhsh`)
    #[arg(long)]
    mapping: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Which trigger parameter to vary
    #[arg(long, value_parser = ["theta", "interval"])]
    param: String,
    /// Comma-separated values; theta accepts inf and -inf
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    values: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
}

impl RunArgs {
    /// Loads the config file (or defaults) and applies flag overrides.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        apply!(
            dim,
            classes,
            spread,
            test_size,
            train_size,
            bits,
            sharpness,
            learning_rate,
            momentum,
            decay_factor,
            decay_every,
            minibatch_size,
            epochs,
            reservoir_capacity,
            theta,
            update_interval,
            seed,
            trials,
            checkpoints,
            labeling,
            map_cutoff,
            n_mappings,
            n_queries,
        );
        if let Some(data) = &self.data {
            cfg.data = Some(data.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        cfg.resolve_out_dir(self.out_dir.as_deref())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let data = mihash::gaussian_clusters(args.n, args.dim, args.classes, args.spread, args.seed)?;
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("mihf") => io::write_mihf(&args.out, &data)?,
        _ => io::write_csv(&args.out, &data)?,
    }
    println!(
        "wrote {} examples (dim {}, {} classes) to {}",
        data.len(),
        data.dim(),
        args.classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_train_online(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let out_dir = args.out_dir(&cfg);
    let report = experiments::run_online(&cfg, &out_dir)?;
    let s = &report.summary;
    println!(
        "triggered {:.1} updates vs {:.1} baseline ({:.1}x reduction), \
         AUC {} vs {} (delta {}), reports in {}",
        s.mean_tu_updates,
        s.mean_baseline_updates,
        s.reduction,
        opt(s.mean_tu_auc),
        opt(s.mean_baseline_auc),
        opt(s.delta_auc),
        out_dir.display()
    );
    Ok(())
}

fn cmd_train_batch(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let out_dir = args.out_dir(&cfg);
    let report = experiments::run_batch(&cfg, &out_dir)?;
    println!(
        "test mAP {:.4} (random init {:.4}), overlap {:.4} -> {:.4}, reports in {}",
        report.mean_map_trained,
        report.mean_map_init,
        report.mean_overlap_init,
        report.mean_overlap_trained,
        out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.run.config()?;
    let out_dir = args.run.out_dir(&cfg);
    let mapping = io::read_mapping(&args.mapping)?;
    let report = experiments::eval_mapping(&cfg, &mapping, &out_dir)?;
    println!(
        "mAP {:.4} over {} queries against {} items",
        report.map, report.queries, report.items
    );
    Ok(())
}

fn cmd_correlate(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let out_dir = args.out_dir(&cfg);
    let study = experiments::run_correlation(&cfg, &out_dir)?;
    println!(
        "{} mappings: Pearson(MI, AP) {}, Pearson(MI, DCG) {}, Pearson(MI, NDCG) {}, reports in {}",
        study.rows.len(),
        opt(study.pearson_mi_ap),
        opt(study.pearson_mi_dcg),
        opt(study.pearson_mi_ndcg),
        out_dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.run.config()?;
    let out_dir = args.run.out_dir(&cfg);
    let param = match args.param.as_str() {
        "theta" => SweepParam::Theta(
            args.values
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| anyhow!("theta value is not a number: {v:?}"))
                })
                .collect::<Result<_>>()?,
        ),
        "interval" => SweepParam::Interval(
            args.values
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| anyhow!("interval value is not a positive integer: {v:?}"))
                })
                .collect::<Result<_>>()?,
        ),
        other => bail!("unknown sweep parameter {other:?}"),
    };
    let report = experiments::sweep(&cfg, &param, &out_dir)?;
    for row in &report.rows {
        println!(
            "{} = {}: {:.1} updates vs {:.1} baseline ({:.1}x), delta AUC {}",
            args.param,
            row.value,
            row.mean_updates,
            row.mean_baseline_updates,
            row.reduction,
            opt(row.delta_auc),
        );
    }
    println!("reports in {}", out_dir.display());
    Ok(())
}

fn run() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(args) => cmd_synth(args).context("synth"),
        Command::TrainOnline(args) => cmd_train_online(args).context("train-online"),
        Command::TrainBatch(args) => cmd_train_batch(args).context("train-batch"),
        Command::Eval(args) => cmd_eval(args).context("eval"),
        Command::Correlate(args) => cmd_correlate(args).context("correlate"),
        Command::Sweep(args) => cmd_sweep(args).context("sweep"),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
