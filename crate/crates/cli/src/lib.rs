//! Command implementations behind the `diffhash` binary.

pub mod model_file;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diffhash::dataset::{load_csv, save_csv, DatasetPaths};
use diffhash::eval::{evaluate_cross_modal, evaluate_euclidean, format_metric, Direction, EvalReport};
use diffhash::index::{write_rankings_csv, CodeIndex};
use diffhash::mmkdif::{select_bases, train_mmkdif_with, Bandwidth, KernelTrainOptions};
use diffhash::{
    generate_synthetic, sample_pairs, train_cmdif, GammaWeighting, HashModel, HashParams, Modality,
    MultimodalDataset, ProjectionMode, RateEstimator, SynthConfig, ThresholdGrid,
};

use model_file::{ModelFile, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "diffhash", version, about = "Cross-modal diff-hash experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic two-modality dataset (train and test splits).
    Synth(SynthArgs),
    /// Train a hash model on a dataset directory.
    Train(TrainArgs),
    /// Encode one modality of a dataset with a trained model.
    Encode(EncodeArgs),
    /// Cross-modal retrieval metrics of a model on a dataset.
    Eval(EvalArgs),
    /// Train and evaluate over a list of hash lengths.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub nprime: u64,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Training points per class and modality.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub ppc: u64,
    /// Test points per class and modality.
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    pub test_ppc: u64,
    #[arg(long, default_value_t = 3.0)]
    pub noise_low: f64,
    #[arg(long, default_value_t = 6.0)]
    pub noise_high: f64,
    #[arg(long, default_value_t = 10.0)]
    pub center_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Cmdif,
    Mmkdif,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Self::Cmdif => "cmdif",
            Self::Mmkdif => "mmkdif",
        }
    }
}

/// Training options shared by `train` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct TrainOptions {
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    /// Threshold grid levels per modality.
    #[arg(long, default_value_t = 64)]
    pub levels: usize,
    #[arg(long, default_value = "min-trace")]
    pub mode: ProjectionMode,
    /// FN/FP estimator: joint pair counts or product of marginals.
    #[arg(long, default_value = "joint")]
    pub rates: RateEstimator,
    /// Threshold objective: per-pair (gamma |P| FN + |N| FP) or per-rate.
    #[arg(long, default_value = "per-pair")]
    pub weighting: GammaWeighting,
    /// Number of positive training pairs.
    #[arg(long = "pos", default_value_t = 1000)]
    pub positives: usize,
    /// Number of negative training pairs.
    #[arg(long = "neg", default_value_t = 10000)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub pair_seed: u64,
    /// Kernel basis size in modality X.
    #[arg(long, default_value_t = 200)]
    pub l: usize,
    /// Kernel basis size in modality Y.
    #[arg(long, default_value_t = 200)]
    pub lprime: usize,
    #[arg(long, default_value_t = 0)]
    pub basis_seed: u64,
    /// Kernel bandwidth: "median" or a positive number.
    #[arg(long, default_value = "median")]
    pub bandwidth: Bandwidth,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Dataset directory (x.csv, y.csv, labels_x.csv, labels_y.csv, manifest.txt).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub options: TrainOptions,
    #[arg(long)]
    pub out: PathBuf,
    /// Append `method,m,train_seconds` to this CSV.
    #[arg(long)]
    pub timing: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    X,
    Y,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::X => Modality::X,
            ModalityArg::Y => Modality::Y,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub modality: ModalityArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    X2y,
    Y2x,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::X2y => Direction::XToY,
            DirectionArg::Y2x => Direction::YToX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Euclidean,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "x2y")]
    pub direction: DirectionArg,
    /// Output directory for metrics.csv and roc.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the full ranking of every query to this CSV.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
    /// Also evaluate unimodal retrieval in the query modality.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated hash lengths.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub ms: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cmdif,mmkdif")]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, default_value = "x2y")]
    pub direction: DirectionArg,
    /// Run CM-DIF at its dimensionality cap instead of skipping capped rows.
    #[arg(long)]
    pub paper_figure: bool,
    #[command(flatten)]
    pub options: TrainOptions,
    /// Aggregated CSV, one row per (method, m).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let per_class = |v: u64| usize::try_from(v).context("count does not fit in memory");
    let (ppc, test_ppc) = (per_class(args.ppc)?, per_class(args.test_ppc)?);
    let config = SynthConfig {
        n: per_class(args.n)?,
        n_prime: per_class(args.nprime)?,
        num_classes: per_class(args.k)?,
        points_per_class_x: ppc + test_ppc,
        points_per_class_y: ppc + test_ppc,
        noise_std_range: (args.noise_low, args.noise_high),
        center_std: args.center_std,
        seed: args.seed,
    };
    let data = generate_synthetic(&config)?;
    let (train, test) = data.split_per_class(ppc, ppc)?;
    save_csv(&train, &args.out.join("train"))?;
    save_csv(&test, &args.out.join("test"))?;
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<MultimodalDataset> {
    load_csv(&DatasetPaths::in_dir(dir)).with_context(|| format!("cannot load dataset from {}", dir.display()))
}

fn hash_params(m: usize, options: &TrainOptions) -> Result<HashParams> {
    let params = HashParams {
        grid: ThresholdGrid::new(options.levels)?,
        gamma: options.gamma,
        mode: options.mode,
        rates: options.rates,
        weighting: options.weighting,
        ..HashParams::new(m)
    };
    params.validate()?;
    Ok(params)
}

/// Trains one model. Returns it with its config echo and the wall-clock
/// seconds spent inside the trainer.
pub fn train_model(
    data: &MultimodalDataset,
    method: Method,
    m: usize,
    options: &TrainOptions,
) -> Result<(ModelFile, f64)> {
    let params = hash_params(m, options)?;
    let pairs = sample_pairs(data, options.positives, options.negatives, options.pair_seed)?;
    let mut config = TrainConfig {
        method: method.name().into(),
        m,
        gamma: options.gamma,
        levels: options.levels,
        mode: options.mode.to_string(),
        rates: options.rates.to_string(),
        weighting: options.weighting.to_string(),
        positives: options.positives,
        negatives: options.negatives,
        pair_seed: options.pair_seed,
        l: None,
        l_prime: None,
        basis_seed: None,
        bandwidth: None,
        n: data.n(),
        n_prime: data.n_prime(),
        k: data.num_classes,
        data_seed: data.seed,
    };
    let (model, seconds): (HashModel, f64) = match method {
        Method::Cmdif => {
            let start = Instant::now();
            let model = train_cmdif(data, &pairs, &params)?;
            (model.into(), start.elapsed().as_secs_f64())
        }
        Method::Mmkdif => {
            config.l = Some(options.l);
            config.l_prime = Some(options.lprime);
            config.basis_seed = Some(options.basis_seed);
            config.bandwidth = Some(options.bandwidth.to_string());
            let bases = select_bases(data, options.l, options.lprime, options.basis_seed)?;
            let kernel_options = KernelTrainOptions {
                bandwidth: options.bandwidth,
                ..KernelTrainOptions::default()
            };
            let start = Instant::now();
            let model = train_mmkdif_with(data, &pairs, &bases, &params, kernel_options)?;
            (model.into(), start.elapsed().as_secs_f64())
        }
    };
    Ok((ModelFile::new(config, model), seconds))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let (file, seconds) = train_model(&data, args.method, args.m, &args.options)?;
    file.save(&args.out)?;
    if let Some(path) = &args.timing {
        append_timing(path, args.method, args.m, seconds)?;
    }
    Ok(())
}

fn append_timing(path: &Path, method: Method, m: usize, seconds: f64) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    if fresh {
        writeln!(f, "method,m,train_seconds")?;
    }
    writeln!(f, "{},{m},{seconds}", method.name())?;
    Ok(())
}

fn modality_points(data: &MultimodalDataset, modality: Modality) -> &diffhash::dataset::PointSet {
    match modality {
        Modality::X => &data.x,
        Modality::Y => &data.y,
    }
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let data = load_dataset(&args.data)?;
    let modality = Modality::from(args.modality);
    let set = modality_points(&data, modality);
    let codes = file.model.encode_all(set.points(), modality)?;
    let out = fs::File::create(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    let mut out = BufWriter::new(out);
    writeln!(out, "diffhash-codes m={} n={}", file.model.m(), codes.len())?;
    for c in &codes {
        writeln!(out, "{}", c.to_hex())?;
    }
    out.flush()?;
    Ok(())
}

fn write_report(dir: &Path, prefix: &str, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: String, f: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut out = BufWriter::new(file);
        f(&mut out)?;
        out.flush()?;
        Ok(())
    };
    write(format!("{prefix}metrics.csv"), &|o| report.write_metrics_csv(o))?;
    write(format!("{prefix}roc.csv"), &|o| report.write_roc_csv(o))
}

/// Cross-modal report with the model's training config echoed in front of
/// the metrics.
pub fn evaluate_model(file: &ModelFile, data: &MultimodalDataset, direction: Direction) -> Result<EvalReport> {
    let report = evaluate_cross_modal(&file.model, data, direction)?;
    let mut config = file.config.columns();
    config.push(("direction".into(), direction.to_string()));
    Ok(EvalReport { config, ..report })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let data = load_dataset(&args.data)?;
    let direction = Direction::from(args.direction);
    let report = evaluate_model(&file, &data, direction)?;
    write_report(&args.out, "", &report)?;

    if let Some(path) = &args.rankings {
        let query_set = modality_points(&data, direction.query());
        let db_set = modality_points(&data, direction.database());
        let queries = file.model.encode_all(query_set.points(), direction.query())?;
        let db = file.model.encode_all(db_set.points(), direction.database())?;
        let index = CodeIndex::from_codes(db, Some(db_set.labels().to_vec()))?;
        let rankings = index.rank_batch(&queries)?;
        let ids: Vec<u64> = (0..queries.len() as u64).collect();
        let out = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut out = BufWriter::new(out);
        write_rankings_csv(&mut out, &ids, &rankings)?;
        out.flush()?;
    }
    if let Some(Baseline::Euclidean) = args.baseline {
        let baseline = evaluate_euclidean(&data, direction.query())?;
        write_report(&args.out, "baseline_", &baseline)?;
    }
    Ok(())
}

const SWEEP_HEADER: &str = "method,m,k,status,map,eer";

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.ms.is_empty() {
        bail!("empty list of hash lengths");
    }
    let train = load_dataset(&args.train)?;
    let test = load_dataset(&args.test)?;
    let direction = Direction::from(args.direction);
    let cap = train.n().min(train.n_prime());
    let k = train.num_classes;

    let mut rows = vec![SWEEP_HEADER.to_string()];
    for &method in &args.methods {
        for &m in &args.ms {
            let mut effective = m;
            let mut status = String::from("ok");
            if method == Method::Cmdif && m > cap {
                if !args.paper_figure {
                    rows.push(format!("{},{m},{k},m capped at {cap},,", method.name()));
                    continue;
                }
                effective = cap;
                status = format!("m capped at {cap}");
            }
            let outcome = train_model(&train, method, effective, &args.options)
                .and_then(|(file, _)| evaluate_model(&file, &test, direction));
            rows.push(match outcome {
                Ok(r) => format!(
                    "{},{m},{k},{status},{},{}",
                    method.name(),
                    format_metric(r.map),
                    format_metric(r.eer)
                ),
                Err(e) => format!("{},{m},{k},{},,", method.name(), csv_field(&format!("error: {e:#}"))),
            });
        }
    }
    let mut text = rows.join("\n");
    text.push('\n');
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, text).with_context(|| format!("cannot write {}", args.out.display()))
}

fn csv_field(s: &str) -> String {
    let flat = s.replace(['\n', '\r'], " ");
    if flat.contains([',', '"']) {
        format!("\"{}\"", flat.replace('"', "\"\""))
    } else {
        flat
    }
}
