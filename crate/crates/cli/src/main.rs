//! `ifm`: convert raw logs, split, train, evaluate and sweep interaction-aware
//! factorization machines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ifm::data::convert::{convert_file, ConvertOptions, TableFormat};
use ifm::data::{read_instances, split_dataset, write_instances, DatasetSplit, FieldSchema, DEFAULT_RATIOS};
use ifm::eval::{
    evaluate_model, field_importance_report, format_summary, run_experiment, EvalOptions, ExperimentConfig,
};
use ifm::model::{field_pair_count, load_model, save_model, IfmModel, Mode, PairPolicy};
use ifm::numeric::SeededRng;
use ifm::train::{train, train_from, OptimizerKind, TrainConfig, TrainOutcome};
use log::info;

#[derive(Parser)]
#[command(name = "ifm", version, about = "Interaction-aware factorization machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a Frappe log table into instances plus a schema.
    ConvertFrappe(ConvertArgs),
    /// Convert MovieLens `tags.csv` into instances plus a schema.
    ConvertMovielens(ConvertArgs),
    /// Split an instance file into train, probe and test files.
    Split(SplitArgs),
    /// Train an FM whose embeddings can seed other modes.
    Pretrain(TrainArgs),
    /// Train a model with early stopping on the probe set.
    Train(TrainArgs),
    /// Score a saved model on an instance file.
    Evaluate(EvaluateArgs),
    /// Print the per-field-pair importance table of a saved model.
    ReportFieldImportance(ReportArgs),
    /// Run every grid point and seed of an experiment file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// Raw log table.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `data.txt` and `schema.tsv`.
    #[arg(long)]
    out: PathBuf,
    /// Negatives drawn per log.
    #[arg(long, default_value_t = 2)]
    negatives: usize,
    /// Field corrupted by negative sampling.
    #[arg(long)]
    target_field: Option<String>,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    negative_label: f64,
    #[arg(long, default_value_t = 2019)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory for `train.txt`, `probe.txt` and `test.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2019)]
    seed: u64,
    /// Comma-separated train,probe,test ratios.
    #[arg(long, value_parser = parse_ratios, default_value = "0.7,0.2,0.1")]
    ratios: [f64; 3],
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fm,
    Ifm,
    Fa,
    Ia,
    IfmSampling,
    Inn,
    Deepifm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairsArg {
    Keep,
    Drop,
}

#[derive(Args)]
struct DataArgs {
    /// Full instance file, split with `--split-seed`.
    #[arg(long, conflicts_with = "split_dir")]
    data: Option<PathBuf>,
    /// Directory holding `train.txt`, `probe.txt` and `test.txt`.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 2019)]
    split_seed: u64,
}

#[derive(Args)]
struct ModelFlags {
    /// Base training config (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kf: Option<usize>,
    #[arg(long)]
    ka: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    keep_prob: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    /// Interactions kept per instance by norm-proportional sampling.
    #[arg(long)]
    sample_c: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Saved model whose FM parameters initialize this one.
    #[arg(long)]
    pretrain_from: Option<PathBuf>,
    /// Pretrain an FM first in the same run.
    #[arg(long)]
    pretrain: bool,
    /// Learn one free field importance vector per field pair.
    #[arg(long)]
    non_factorized_f: bool,
    #[arg(long, value_enum)]
    same_field_pairs: Option<PairsArg>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelFlags,
    /// Output directory for the model, checkpoint, log and report.
    #[arg(long)]
    out: PathBuf,
    /// Also report AUC on the test set.
    #[arg(long)]
    auc: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Write the report here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clamp predictions to `lo,hi` before scoring.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    clamp: Option<(f64, f64)>,
    #[arg(long)]
    auc: bool,
    /// Seed of the evaluation-time interaction sampler.
    #[arg(long, default_value_t = 2019)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the experiment's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> =
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected three comma-separated ratios".to_owned())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = match (e.downcast_ref::<ifm::Error>(), e.downcast_ref::<std::io::Error>()) {
                (Some(err), _) => err.category(),
                (None, Some(_)) => "io",
                (None, None) => "internal",
            };
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{category}]: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::ConvertFrappe(a) => convert(&a, TableFormat::frappe()),
        Command::ConvertMovielens(a) => convert(&a, TableFormat::movielens()),
        Command::Split(a) => split(&a),
        Command::Pretrain(a) => train_cmd(&a, true),
        Command::Train(a) => train_cmd(&a, false),
        Command::Evaluate(a) => evaluate(&a),
        Command::ReportFieldImportance(a) => report(&a),
        Command::Sweep(a) => sweep(&a),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn convert(a: &ConvertArgs, format: TableFormat) -> anyhow::Result<()> {
    let opts = ConvertOptions {
        negatives: a.negatives,
        target_field: a.target_field.clone(),
        negative_label: a.negative_label,
        seed: a.seed,
    };
    let out = convert_file(&a.input, &format, &opts)?;
    create_dir(&a.out)?;
    write_instances(&a.out.join("data.txt"), &out.instances)?;
    out.schema.write(&a.out.join("schema.tsv"))?;
    println!(
        "logs\t{}\nrecords\t{}\nskipped\t{}\nfields\t{}\nfeatures\t{}",
        out.stats.logs,
        out.instances.len(),
        out.stats.skipped,
        out.schema.n_fields(),
        out.schema.n_features()
    );
    Ok(())
}

fn split(a: &SplitArgs) -> anyhow::Result<()> {
    let schema = a.schema.as_deref().map(FieldSchema::read).transpose()?;
    let data = read_instances(&a.data, schema.as_ref())?;
    let split = split_dataset(data, a.ratios, &mut SeededRng::new(a.seed, "split"))?;
    create_dir(&a.out)?;
    write_split(&split, &a.out)?;
    let (tr, pr, te) = split.sizes();
    println!("train\t{tr}\nprobe\t{pr}\ntest\t{te}");
    Ok(())
}

fn write_split(split: &DatasetSplit, dir: &Path) -> anyhow::Result<()> {
    write_instances(&dir.join("train.txt"), &split.train)?;
    write_instances(&dir.join("probe.txt"), &split.probe)?;
    write_instances(&dir.join("test.txt"), &split.test)?;
    Ok(())
}

fn load_split(d: &DataArgs, schema: &FieldSchema) -> anyhow::Result<DatasetSplit> {
    match (&d.data, &d.split_dir) {
        (Some(path), None) => {
            let data = read_instances(path, Some(schema))?;
            Ok(split_dataset(data, DEFAULT_RATIOS, &mut SeededRng::new(d.split_seed, "split"))?)
        }
        (None, Some(dir)) => Ok(DatasetSplit {
            train: read_instances(&dir.join("train.txt"), Some(schema))?,
            probe: read_instances(&dir.join("probe.txt"), Some(schema))?,
            test: read_instances(&dir.join("test.txt"), Some(schema))?,
            ratios: DEFAULT_RATIOS,
        }),
        _ => Err(ifm::Error::Parameter("pass exactly one of --data and --split-dir".into()).into()),
    }
}

/// Base config from `--config`, overridden by the individual flags.
fn train_config(f: &ModelFlags, schema: &FieldSchema) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &f.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    let m = &mut cfg.model;
    if let Some(mode) = f.mode {
        m.mode = match mode {
            ModeArg::Fm => Mode::Fm,
            ModeArg::Ifm | ModeArg::IfmSampling => Mode::Ifm,
            ModeArg::Fa => Mode::FaOnly,
            ModeArg::Ia => Mode::IaOnly,
            ModeArg::Inn => Mode::Inn,
            ModeArg::Deepifm => Mode::DeepIfm,
        };
    }
    set(&mut m.k, f.k);
    set(&mut m.k_f, f.kf);
    set(&mut m.k_a, f.ka);
    set(&mut m.tau, f.tau);
    if let Some(h) = &f.hidden {
        m.hidden = h
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| ifm::Error::Parameter(format!("--hidden: {e}")))?;
    }
    if f.non_factorized_f {
        m.non_factorized_f = true;
    }
    if let Some(p) = f.same_field_pairs {
        m.same_field_pairs = match p {
            PairsArg::Keep => PairPolicy::Keep,
            PairsArg::Drop => PairPolicy::Drop,
        };
    }
    set(&mut cfg.keep_prob, f.keep_prob);
    set(&mut cfg.lambda_f, f.lambda_f);
    set(&mut cfg.batch_size, f.batch_size);
    set(&mut cfg.learning_rate, f.lr);
    set(&mut cfg.max_epochs, f.epochs);
    set(&mut cfg.patience, f.patience);
    set(&mut cfg.seed, f.seed);
    if let Some(o) = &f.optimizer {
        cfg.optimizer = o.parse::<OptimizerKind>()?;
    }
    if f.sample_c.is_some() {
        cfg.sample_c = f.sample_c;
    }
    if matches!(f.mode, Some(ModeArg::IfmSampling)) && cfg.sample_c.is_none() {
        // half of the cross-field pairs of a one-feature-per-field instance
        cfg.sample_c = Some(field_pair_count(schema.n_fields()).div_ceil(2).max(1));
    }
    if f.pretrain {
        cfg.pretrain = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn train_cmd(a: &TrainArgs, pretrain_only: bool) -> anyhow::Result<()> {
    let schema = FieldSchema::read(&a.data.schema)?;
    let split = load_split(&a.data, &schema)?;
    let mut cfg = train_config(&a.model, &schema)?;
    if pretrain_only {
        cfg.model.mode = Mode::Fm;
        cfg.sample_c = None;
        cfg.pretrain = false;
    }
    let (tr, pr, te) = split.sizes();
    info!("{} on {tr}/{pr}/{te} train/probe/test instances", cfg.model.mode);
    create_dir(&a.out)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml()?).context("writing config.toml")?;

    let outcome: TrainOutcome = match &a.model.pretrain_from {
        Some(p) => {
            let (pre, _) = load_model(p)?;
            let root = SeededRng::new(cfg.seed, "train");
            let mut model = IfmModel::new(schema.n_fields(), schema.n_features(), &cfg.model, &root.derive("init"))?;
            model.load_fm(&pre.fm)?;
            train_from(&cfg, model, &split)?
        }
        None => train(&cfg, &schema, &split)?,
    };
    let config_json = serde_json::to_value(&cfg)?;
    save_model(&outcome.model, config_json, &a.out.join("model.bin"))?;
    outcome.checkpoint(&cfg)?.save(&a.out.join("checkpoint.bin"))?;
    outcome.history.write_log(&a.out.join("train.log"))?;

    let opts = EvalOptions { sampling: cfg.sampling(), seed: cfg.seed, clamp: None, with_auc: a.auc };
    let mut report = evaluate_model(&outcome.model, &schema, &split.test, &opts, &cfg.model.mode.to_string())?;
    report.best_epoch = outcome.history.best_epoch;
    report.probe_rmse = outcome.history.best().map(|r| r.probe_rmse);
    report.runtime_seconds = outcome.history.epochs.iter().map(|e| e.seconds).sum();
    report.save(&a.out.join("report.txt"))?;
    print!("{}", report.to_text());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let schema = FieldSchema::read(&a.schema)?;
    let (model, meta) = load_model(&a.model)?;
    let data = read_instances(&a.data, Some(&schema))?;
    if data.is_empty() {
        bail!(ifm::Error::Parameter(format!("{} has no instances", a.data.display())));
    }
    let sampling = serde_json::from_value::<TrainConfig>(meta).ok().and_then(|c| c.sampling());
    let opts = EvalOptions { sampling, seed: a.seed, clamp: a.clamp, with_auc: a.auc };
    let run = a.model.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    let report = evaluate_model(&model, &schema, &data, &opts, &run)?;
    match &a.out {
        Some(p) => report.save(p)?,
        None => print!("{}", report.to_text()),
    }
    Ok(())
}

fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let schema = FieldSchema::read(&a.schema)?;
    let (model, _) = load_model(&a.model)?;
    println!("field_a\tfield_b\tnorm\tproportion");
    for row in field_importance_report(&model, &schema)? {
        println!("{}\t{}\t{:.6}\t{:.4}", row.field_a, row.field_b, row.norm, row.proportion);
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.out = out.clone();
    }
    let outcome = run_experiment(&cfg)?;
    print!("{}", format_summary(&outcome.summary));
    Ok(())
}
