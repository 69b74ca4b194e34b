//! The `wct` command-line tool.
//!
//! Exit codes: 0 on success, 2 for invalid flags or configuration, 1 for
//! failures while running.

mod config;

pub use config::parse_config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::seq::IndexedRandom;
use serde::Serialize;

use crate::baselines::{run_method, CoTeachingConfig, KeepSchedule, Method};
use crate::cartography::{self, DynamicsMap};
use crate::cotrain::{Predictor, RunConfig, RunOutcome, Seeds};
use crate::dataset::{self, Dataset, ExampleId, Format, NoiseSpec};
use crate::error::Error;
use crate::eval::{aggregate_seeds, MetricsReport, SeedSummary};
use crate::model::{load_checkpoint, save_checkpoint, Activation, ClassifierState, OptimizerKind};
use crate::rng::{self, derive_seed};
use crate::training::{self, write_log};
use crate::weighting::NormalizationSchedule;

#[derive(Debug, Parser)]
#[command(name = "wct", version, about = "Training-dynamics-weighted co-training for noisy labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Gaussian-cluster dataset (all examples auto, labels clean).
    Synth(SynthArgs),
    /// Move clean examples into the human set and corrupt auto labels.
    Corrupt(CorruptArgs),
    /// Train one classifier and export its data map as CSV.
    Cartography(CartographyArgs),
    /// Train a method over one or more seeds.
    Train(TrainArgs),
    /// Score one checkpoint, or the ensemble of two, on a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    classes: u64,
    #[arg(long, default_value_t = 250, value_parser = clap::value_parser!(u64).range(1..))]
    per_class: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Distance between class means.
    #[arg(long, default_value_t = 3.0, value_parser = non_negative)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also hold out this many examples per class as a test file.
    #[arg(long, requires = "test_out")]
    test_per_class: Option<usize>,
    #[arg(long, requires = "test_per_class")]
    test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of auto labels to corrupt.
    #[arg(long, value_parser = unit_interval)]
    rate: f64,
    /// Clean examples per class moved into the human set before corruption.
    #[arg(long, default_value_t = 0)]
    human_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Scope {
    Auto,
    Human,
    All,
}

#[derive(Debug, Args)]
struct CartographyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Examples the classifier is trained on.
    #[arg(long, value_enum, default_value_t = Scope::Auto)]
    train_on: Scope,
    /// Examples whose dynamics are recorded and exported.
    #[arg(long, value_enum, default_value_t = Scope::Auto)]
    scope: Scope,
    /// Export a random sample of this many rows.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Patience(Option<usize>);

impl FromStr for Patience {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Patience(None)),
            n => n.parse().map(|p| Patience(Some(p))).map_err(|_| format!("expected a count or `none`, got `{n}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Schedule(KeepSchedule);

impl FromStr for Schedule {
    type Err = String;

    /// `constant` or `linear:<epochs>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "constant" {
            return Ok(Schedule(KeepSchedule::Constant));
        }
        let k = s
            .strip_prefix("linear:")
            .and_then(|k| k.parse::<f64>().ok())
            .filter(|k| k.is_finite() && *k > 0.0)
            .ok_or_else(|| format!("expected `constant` or `linear:<epochs>`, got `{s}`"))?;
        Ok(Schedule(KeepSchedule::LinearDecay(k)))
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset with human and auto examples.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Clean test set scored at the end of every run.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output directory; one subdirectory per seed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "wct-cv")]
    method: Method,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Run seeds on separate threads; outputs are identical to a sequential run.
    #[arg(long)]
    parallel: bool,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    hidden: Vec<usize>,
    #[arg(long, default_value = "relu")]
    activation: Activation,
    #[arg(long, default_value = "adam")]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    finetune_learning_rate: f64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    #[arg(long, default_value_t = 10)]
    step1_epochs: usize,
    #[arg(long, default_value_t = 5)]
    cotrain_epochs: usize,
    #[arg(long, default_value_t = 10)]
    finetune_epochs: usize,
    #[arg(long, default_value_t = 10)]
    ds_epochs: usize,
    /// Early-stopping patience, or `none`.
    #[arg(long, default_value = "2")]
    patience: Patience,
    #[arg(long, default_value_t = 0.15, value_parser = unit_interval)]
    dev_fraction: f64,
    /// Weight normalization bounds refresh: `epoch` or `batch`.
    #[arg(long, default_value = "epoch")]
    normalization: NormalizationSchedule,
    /// Draw new human halves for fine-tuning.
    #[arg(long)]
    resplit_finetune: bool,
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval)]
    human_weight: f64,
    /// Co-teaching's estimated noise rate.
    #[arg(long, default_value_t = 0.15, value_parser = unit_interval)]
    noise_rate: f64,
    /// Co-teaching keep-rate schedule: `constant` or `linear:<epochs>`.
    #[arg(long, default_value = "linear:1")]
    keep_schedule: Schedule,
    #[arg(long, default_value_t = 5)]
    coteaching_epochs: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// One checkpoint, or two for the softmax-average ensemble.
    #[arg(long = "checkpoint", required = true, num_args = 1)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must not be negative"))
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<dataset::DatasetError> for Failure {
    fn from(e: dataset::DatasetError) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<crate::model::ModelError> for Failure {
    fn from(e: crate::model::ModelError) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cmd = Cli::command();
    let mut matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return clap_exit(e),
    };
    if let Some(("train", sub)) = matches.subcommand() {
        if let Some(path) = sub.get_one::<PathBuf>("config") {
            let train_cmd = cmd.find_subcommand("train").expect("train subcommand");
            match config::config_args(train_cmd, sub, path) {
                Ok(extra) if extra.is_empty() => {}
                Ok(extra) => {
                    argv.extend(extra);
                    matches = match cmd.clone().try_get_matches_from(&argv) {
                        Ok(m) => m,
                        Err(e) => return clap_exit(e),
                    };
                }
                Err(msg) => return report(Failure::Usage(msg)),
            }
        }
    }
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Cartography(a) => cmd_cartography(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => report(f),
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    if e.use_stderr() {
        2
    } else {
        0
    }
}

fn report(f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            2
        }
        Failure::Runtime(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(path: &Path) -> CliResult<Dataset> {
    dataset::load_dataset(path, Format::from_path(path), None)
        .map_err(|e| Failure::Runtime(Error::Config(format!("{}: {e}", path.display()))))
}

fn save(d: &Dataset, path: &Path) -> CliResult<()> {
    create_parent(path)?;
    Ok(dataset::save_dataset(d, path, Format::from_path(path))?)
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let extra = a.test_per_class.unwrap_or(0);
    let all = dataset::generate_synthetic(
        a.classes as usize,
        a.per_class as usize + extra,
        a.dim as usize,
        a.separation,
        a.seed,
    )?;
    let d = match (a.test_per_class, &a.test_out) {
        (Some(n), Some(test_out)) => {
            let (rest, held) = dataset::holdout_split(&all, n, derive_seed(a.seed, "test"))?;
            save(&held, test_out)?;
            rest
        }
        _ => all,
    };
    save(&d, &a.out)?;
    println!(
        "K={} n={} m={} dim={}",
        d.num_classes(),
        d.human_ids().len(),
        d.auto_ids().len(),
        d.dim()
    );
    Ok(())
}

fn cmd_corrupt(a: CorruptArgs) -> CliResult<()> {
    let d = load(&a.input)?;
    let carved = dataset::carve_human_set(&d, a.human_per_class, derive_seed(a.seed, "human"))?;
    let noisy = dataset::inject_noise(&carved, &NoiseSpec::symmetric(a.rate, derive_seed(a.seed, "noise")))?;
    let newly = noisy.corrupted_ids().difference(&carved.corrupted_ids()).count();
    save(&noisy, &a.out)?;
    println!("corrupted={} human={}", newly, noisy.human_ids().len());
    Ok(())
}

fn scope_ids(d: &Dataset, scope: Scope) -> BTreeSet<ExampleId> {
    match scope {
        Scope::Auto => d.auto_ids(),
        Scope::Human => d.human_ids(),
        Scope::All => d.examples().iter().map(|e| e.id).collect(),
    }
}

fn cmd_cartography(a: CartographyArgs) -> CliResult<()> {
    if a.hidden.contains(&0) {
        return Err(Failure::Usage("hidden layer widths must be positive".into()));
    }
    let d = load(&a.input)?;
    let train = scope_ids(&d, a.train_on);
    let tracked = scope_ids(&d, a.scope);
    if train.is_empty() || tracked.is_empty() {
        return Err(Error::Config("selected training or export set is empty".into()).into());
    }
    let mut sizes = vec![d.dim()];
    sizes.extend(&a.hidden);
    sizes.push(d.num_classes());
    let init = ClassifierState::init(&sizes, Activation::Relu, derive_seed(a.seed, "init1"))?;
    let opts = training::FitOptions {
        epochs: a.epochs,
        optimizer: OptimizerKind::Adam,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size as usize,
        patience: None,
    };
    let mut map = DynamicsMap::new();
    let mut rng = rng::seeded(derive_seed(a.seed, "shuffle"));
    training::fit(init, &d, &train, &BTreeSet::new(), &opts, "cartography", &mut rng, |_, s| {
        for (id, obs) in cartography::observe(s, &d, &tracked)? {
            cartography::record(&mut map, id, obs)?;
        }
        Ok(())
    })?;
    if let Some(n) = a.sample {
        let ids: Vec<ExampleId> = map.keys().copied().collect();
        let keep: BTreeSet<ExampleId> =
            ids.choose_multiple(&mut rng::seeded(derive_seed(a.seed, "sample")), n).copied().collect();
        map.retain(|id, _| keep.contains(id));
    }
    create_parent(&a.out)?;
    cartography::export_map_to_path(&map, &d, &a.out).map_err(Error::from)?;
    println!("rows={}", map.len());
    Ok(())
}

impl TrainArgs {
    fn run_config(&self) -> CliResult<RunConfig> {
        let cfg = RunConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            finetune_learning_rate: self.finetune_learning_rate,
            batch_size: self.batch_size as usize,
            step1_epochs: self.step1_epochs,
            cotrain_epochs: self.cotrain_epochs,
            finetune_epochs: self.finetune_epochs,
            ds_epochs: self.ds_epochs,
            patience: self.patience.0,
            dev_fraction: self.dev_fraction,
            seeds: Seeds::from_base(0),
            normalization: self.normalization,
            resplit_finetune: self.resplit_finetune,
            human_weight: self.human_weight,
            ..RunConfig::default()
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn coteaching(&self) -> CliResult<CoTeachingConfig> {
        let ct = CoTeachingConfig {
            noise_rate: self.noise_rate,
            schedule: self.keep_schedule.0,
            epochs: self.coteaching_epochs,
        };
        ct.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(ct)
    }
}

#[derive(Serialize)]
struct SeedReport<'a> {
    method: &'a str,
    seed: u64,
    dev: Option<MetricsReport>,
    test: Option<MetricsReport>,
}

#[derive(Serialize)]
struct Aggregate<'a> {
    method: &'a str,
    seeds: &'a [u64],
    dev: Option<SeedSummary>,
    test: Option<SeedSummary>,
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let input = a.input.clone().ok_or_else(|| Failure::Usage("--input is required".into()))?;
    let out = a.out.clone().ok_or_else(|| Failure::Usage("--out is required".into()))?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds needs at least one seed".into()));
    }
    let unique: BTreeSet<u64> = a.seeds.iter().copied().collect();
    if unique.len() != a.seeds.len() {
        return Err(Failure::Usage("--seeds contains duplicates".into()));
    }
    let base = a.run_config()?;
    let ct = a.coteaching()?;
    let d = load(&input)?;
    let test = a.test.as_deref().map(load).transpose()?;
    let method = a.method;

    let run_seed = |seed: u64| -> Result<SeedReport<'static>, Error> {
        let cfg = RunConfig { seeds: Seeds::from_base(seed), ..base.clone() };
        let outcome = run_method(method, &d, &cfg, &ct)?;
        let report = write_seed_outputs(&out.join(format!("seed-{seed}")), &d, test.as_ref(), method, seed, &outcome)?;
        log::info!("{method} seed {seed} done");
        Ok(report)
    };
    let reports: Vec<SeedReport> = if a.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = a.seeds.iter().map(|&seed| s.spawn(move || run_seed(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect::<Result<_, _>>()
        })?
    } else {
        a.seeds.iter().map(|&seed| run_seed(seed)).collect::<Result<_, _>>()?
    };

    let summarize = |pick: &dyn Fn(&SeedReport) -> Option<MetricsReport>| -> Result<Option<SeedSummary>, Error> {
        let rs: Option<Vec<MetricsReport>> = reports.iter().map(pick).collect();
        Ok(match rs {
            Some(rs) => Some(aggregate_seeds(&rs)?),
            None => None,
        })
    };
    let aggregate = Aggregate {
        method: method.name(),
        seeds: &a.seeds,
        dev: summarize(&|r| r.dev.clone())?,
        test: summarize(&|r| r.test.clone())?,
    };
    fs::create_dir_all(&out)?;
    write_json(&out.join("aggregate.json"), &aggregate)?;
    match &aggregate.test {
        Some(t) => println!(
            "{method}: {} seeds, test macro F1 {:.4} ± {:.4}",
            a.seeds.len(),
            t.macro_f1.mean,
            t.macro_f1.std
        ),
        None => println!("{method}: {} seeds done", a.seeds.len()),
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_seed_outputs(
    dir: &Path,
    d: &Dataset,
    test: Option<&Dataset>,
    method: Method,
    seed: u64,
    outcome: &RunOutcome,
) -> Result<SeedReport<'static>, Error> {
    fs::create_dir_all(dir.join("checkpoints"))?;
    let mut w = BufWriter::new(fs::File::create(dir.join("metrics.jsonl"))?);
    write_log(&outcome.log, &mut w)?;
    w.flush()?;
    if let Some(table) = &outcome.table {
        table.write_csv_to_path(dir.join("weights.csv"))?;
    }
    for (c, map) in outcome.dynamics.iter().enumerate() {
        cartography::export_map_to_path(map, d, dir.join(format!("cartography-{}.csv", c + 1)))?;
    }
    for (phase, states) in &outcome.checkpoints {
        for (c, s) in states.iter().enumerate() {
            save_checkpoint(s, dir.join("checkpoints").join(format!("{phase}-{}.json", c + 1)))?;
        }
    }
    for (c, s) in outcome.classifiers.iter().enumerate() {
        save_checkpoint(s, dir.join(format!("final-{}.json", c + 1)))?;
    }
    let predictor = outcome.predictor();
    let dev_ids = outcome.splits.all_dev();
    let dev = if dev_ids.is_empty() { None } else { Some(training::evaluate(&predictor, d, &dev_ids)?) };
    let test = test.map(|t| training::evaluate_all(&predictor, t)).transpose()?;
    let report = SeedReport { method: method.name(), seed, dev, test };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let states = a
        .checkpoints
        .iter()
        .map(|p| {
            load_checkpoint(p).map_err(|e| Failure::Runtime(Error::Config(format!("{}: {e}", p.display()))))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let predictor = match states.as_slice() {
        [s] => Predictor::Single(s.clone()),
        [s1, s2] => Predictor::Ensemble(s1.clone(), s2.clone()),
        _ => return Err(Failure::Usage("pass one or two --checkpoint files".into())),
    };
    let k = states[0].num_classes();
    let d = dataset::load_dataset(&a.data, Format::from_path(&a.data), Some(k))
        .map_err(|e| Failure::Runtime(Error::Config(format!("{}: {e}", a.data.display()))))?;
    if d.dim() != states[0].input_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects {} features but {} has {}",
            states[0].input_dim(),
            a.data.display(),
            d.dim()
        ))
        .into());
    }
    let report = training::evaluate_all(&predictor, &d)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    println!("{json}");
    if let Some(out) = &a.out {
        create_parent(out)?;
        fs::write(out, format!("{json}\n"))?;
    }
    Ok(())
}
