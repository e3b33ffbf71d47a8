//! Command line driver: dataset generators, model training, diagnostics,
//! and the end-to-end experiment reports. Every run resolves one master
//! seed, writes its artifacts under a single directory, and finishes with a
//! `manifest.json` recording the command, arguments, and full configuration,
//! so rerunning from the manifest reproduces the outputs byte for byte.
//!
//! On failure nothing is promised about partial artifacts; the process
//! prints a one-line error JSON to stderr and exits nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tailforge::data_io::{self, MixtureSpec};
use tailforge::diagnostics::{self, scale_barcode, tail_loss_curve, DiagnosticReport};
use tailforge::evt::{infinity_norm, probability_to_label};
use tailforge::experiments::{self, composite_sizes, prepare, DataSource, ExperimentConfig, Prepared};
use tailforge::heavy_tails::{sample_logistic, LogisticParams};
use tailforge::lhtr::{self, LhtrConfig, LhtrModel};
use tailforge::rng::RngStream;
use tailforge::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tailforge",
    version,
    about = "Heavy-tailed representation learning toolkit",
    propagate_version = true
)]
struct Cli {
    /// Master seed; every random draw in a run descends from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving artifacts and the run manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Experiment configuration JSON; explicit flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Architecture preset; the input layer adapts to the dataset dimension.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Toy,
    Small,
    Large,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the heavy-tailed multivariate logistic distribution to CSV.
    SampleLogistic {
        /// Dependence parameter in (0, 1]; 1 gives independent margins.
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Generate the two-component Gaussian mixture dataset.
    GenToy {
        /// Number of points; defaults to the configured source size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Generate the control dataset whose angles depend on the radius.
    GenDependent {
        #[arg(long, default_value_t = 3000)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Derive a token corpus from the rows of a labeled embedding CSV.
    GenSeqs {
        /// Embedding CSV whose points act as the latent codes.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        t_max: Option<usize>,
    },
    /// Train the two-head model and save it with its rank transform.
    TrainLhtr,
    /// Angle-radius independence report for a dataset or a model's codes.
    DiagnoseRv {
        /// Trained model JSON; when given, the report covers the latent
        /// codes of the training rows instead of the raw points.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Scale-invariance barcodes of the extreme head on extreme test points.
    Barcode {
        /// Trained model JSON; trained from the configuration when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Nested tail-loss curve of the extreme head over its test codes.
    TailCurve {
        /// Trained model JSON; trained from the configuration when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Decode scaled variants of every extreme training point.
    Augment,
    /// Train on the toy mixture and emit the full diagnostic report.
    ToyExperiment,
    /// Compare plain, single-head, and two-head models on tail losses.
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::InvalidParameter(_) => "invalid-parameter",
        Error::DimensionMismatch(_) => "dimension-mismatch",
        Error::Degenerate(_) => "degenerate",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Serde(_) => "serde",
    };
    json!({"error": {"kind": kind, "message": e.to_string()}}).to_string()
}

fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    let dir = cfg.out_dir.clone().expect("resolve_config fills out_dir");
    fs::create_dir_all(&dir)?;

    let (name, args, artifacts) = match &cli.command {
        Command::SampleLogistic { delta, dim, n } => {
            cmd_sample_logistic(&cfg, &dir, *delta, *dim, *n)?
        }
        Command::GenToy { n } => cmd_gen_toy(&cfg, &dir, *n)?,
        Command::GenDependent { n, dim } => cmd_gen_dependent(&cfg, &dir, *n, *dim)?,
        Command::GenSeqs { input, vocab, t_max } => {
            cmd_gen_seqs(&cfg, &dir, input, *vocab, *t_max)?
        }
        Command::TrainLhtr => cmd_train_lhtr(&cfg, &dir)?,
        Command::DiagnoseRv { model } => cmd_diagnose_rv(&cfg, &dir, model.as_deref())?,
        Command::Barcode { model } => cmd_barcode(&cfg, &dir, model.as_deref())?,
        Command::TailCurve { model } => cmd_tail_curve(&cfg, &dir, model.as_deref())?,
        Command::Augment => cmd_augment(&cfg)?,
        Command::ToyExperiment => cmd_toy_experiment(&cfg)?,
        Command::Compare => cmd_compare(&cfg)?,
    };

    let manifest = json!({
        "command": name,
        "args": args,
        "config": serde_json::to_value(&cfg)?,
        "seed": cfg.seed,
        "versions": {
            "tailforge": tailforge::VERSION,
            "tailforge-cli": env!("CARGO_PKG_VERSION"),
        },
        "artifacts": artifacts,
    });
    fs::write(dir.join("manifest.json"), format!("{:#}\n", manifest))?;

    Ok(json!({
        "command": name,
        "out_dir": dir,
        "artifacts": artifacts,
        "manifest": "manifest.json",
    })
    .to_string())
}

/// Configuration precedence: file given by `--config`, then defaults, with
/// the seed, output directory, and architecture preset flags on top.
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => config_from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("tailforge-out"));
    }
    if let Some(preset) = cli.preset {
        let dim = cfg.source.load(cfg.seed)?.dim();
        cfg.lhtr = match preset {
            Preset::Toy => LhtrConfig::toy(dim),
            Preset::Small => LhtrConfig::small(dim),
            Preset::Large => LhtrConfig::large(dim),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Accepts either a bare configuration file or a run manifest, whose
/// `config` field holds the configuration of the run that wrote it.
fn config_from_file(path: &Path) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let body = value.get("config").cloned().unwrap_or(value);
    ExperimentConfig::from_json(&body.to_string())
}

type CommandOutput = (&'static str, Value, Vec<String>);

fn cmd_sample_logistic(
    cfg: &ExperimentConfig,
    dir: &Path,
    delta: f64,
    dim: usize,
    n: usize,
) -> Result<CommandOutput> {
    let params = LogisticParams::new(delta, dim)?;
    let mut rng = RngStream::new(cfg.seed);
    let sample = sample_logistic(&params, n, &mut rng);

    let header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in &sample {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(dir.join("samples.csv"), out)?;

    let args = json!({"delta": delta, "dim": dim, "n": n});
    Ok(("sample-logistic", args, vec!["samples.csv".into()]))
}

fn cmd_gen_toy(cfg: &ExperimentConfig, dir: &Path, n: Option<usize>) -> Result<CommandOutput> {
    let (components, n_source) = match &cfg.source {
        DataSource::Mixture { components, n } => (components.clone(), *n),
        _ => (MixtureSpec::default_pair(), 3000),
    };
    let n = n.unwrap_or(n_source);
    let data = data_io::gen_gaussian_mixture(&components, n, cfg.seed)?;
    data_io::save_embeddings(&data, &dir.join("dataset.csv"))?;

    let args = json!({"n": n, "components": serde_json::to_value(&components)?});
    Ok(("gen-toy", args, vec!["dataset.csv".into()]))
}

fn cmd_gen_dependent(
    cfg: &ExperimentConfig,
    dir: &Path,
    n: usize,
    dim: usize,
) -> Result<CommandOutput> {
    let data = data_io::gen_dependent_embedding(n, dim, cfg.seed)?;
    data_io::save_embeddings(&data, &dir.join("dataset.csv"))?;
    Ok(("gen-dependent", json!({"n": n, "dim": dim}), vec!["dataset.csv".into()]))
}

fn cmd_gen_seqs(
    cfg: &ExperimentConfig,
    dir: &Path,
    input: &Path,
    vocab: Option<usize>,
    t_max: Option<usize>,
) -> Result<CommandOutput> {
    let data = data_io::load_embeddings(input)?;
    let vocab = vocab.unwrap_or(cfg.vocab);
    let t_max = t_max.unwrap_or(cfg.t_max);
    let corpus = data_io::gen_latent_sequences(data.points(), vocab, t_max, cfg.seed)?;
    corpus.save(&dir.join("corpus.json"))?;

    let args = json!({"input": input, "vocab": vocab, "t_max": t_max});
    Ok(("gen-seqs", args, vec!["corpus.json".into()]))
}

fn cmd_train_lhtr(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let model = lhtr::train_lhtr(&prep.train, &cfg.lhtr, cfg.seed)?;
    model.save(&dir.join("model.json"))?;
    fs::write(dir.join("rank.json"), serde_json::to_string(&prep.rank)?)?;

    let mut report = DiagnosticReport::new();
    report.set_meta("experiment", "train-lhtr");
    report.set_meta("seed", cfg.seed);
    report.set_meta("n_train", prep.train.len());
    report.set_meta(
        "architecture",
        composite_sizes(&cfg.lhtr).iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-"),
    );
    report.set_scalar("kappa", cfg.lhtr.kappa)?;
    report.set_scalar("latent_threshold", model.threshold.t)?;
    report.save(&dir.join("report.json"))?;

    let artifacts = vec!["model.json".into(), "rank.json".into(), "report.json".into()];
    Ok(("train-lhtr", json!({}), artifacts))
}

fn cmd_diagnose_rv(
    cfg: &ExperimentConfig,
    dir: &Path,
    model: Option<&Path>,
) -> Result<CommandOutput> {
    let (points, subject) = match model {
        Some(path) => {
            let m = LhtrModel::load(path)?;
            let prep = prepare(cfg)?;
            let codes: Vec<Vec<f64>> = prep.train.points().iter().map(|x| m.encode(x)).collect();
            (codes, "latent-codes")
        }
        None => (cfg.source.load(cfg.seed)?.points().to_vec(), "points"),
    };
    let rv = diagnostics::rv_report(&points, cfg.lhtr.kappa, cfg.method, cfg.permutations, cfg.seed)?;

    let mut report = DiagnosticReport::new();
    report.set_meta("experiment", "diagnose-rv");
    report.set_meta("seed", cfg.seed);
    report.set_meta("subject", subject);
    report.set_scalar("kappa", cfg.lhtr.kappa)?;
    if let Some(p) = rv.median_pvalue() {
        report.set_scalar("rv_median_pvalue", p)?;
    }
    report.set_pvalues("rv_pvalues", rv.pvalues.iter().flatten().copied().collect())?;
    let hist: Vec<(f64, f64)> = rv
        .histogram
        .iter()
        .enumerate()
        .map(|(b, &c)| (0.05 + 0.1 * b as f64, c as f64))
        .collect();
    report.set_series("rv_pvalue_histogram", hist)?;
    report.save(&dir.join("report.json"))?;
    report.export_series_csv(dir)?;

    let args = json!({"model": model});
    Ok(("diagnose-rv", args, vec!["report.json".into(), "rv_pvalue_histogram.csv".into()]))
}

fn load_or_train(cfg: &ExperimentConfig, prep: &Prepared, model: Option<&Path>) -> Result<LhtrModel> {
    match model {
        Some(path) => LhtrModel::load(path),
        None => lhtr::train_lhtr(&prep.train, &cfg.lhtr, cfg.seed),
    }
}

fn cmd_barcode(cfg: &ExperimentConfig, dir: &Path, model: Option<&Path>) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let m = load_or_train(cfg, &prep, model)?;
    let codes: Vec<Vec<f64>> = prep.test.points().iter().map(|x| m.encode(x)).collect();
    let extreme: Vec<usize> =
        (0..codes.len()).filter(|&i| infinity_norm(&codes[i]) >= m.threshold.t).collect();

    let classify = |z: &[f64]| probability_to_label(m.c_ext.forward(z)[0]);
    let mut out = String::from("point");
    for l in &cfg.lambda_grid {
        out.push_str(&format!(",l{l}"));
    }
    out.push('\n');
    let mut bars = Vec::with_capacity(extreme.len());
    for &i in &extreme {
        let bar = scale_barcode(classify, &codes[i], &cfg.lambda_grid)?;
        out.push_str(&i.to_string());
        for v in &bar {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
        bars.push(bar);
    }
    fs::write(dir.join("barcodes.csv"), out)?;

    let mut report = DiagnosticReport::new();
    report.set_meta("experiment", "barcode");
    report.set_meta("seed", cfg.seed);
    report.set_scalar("latent_threshold", m.threshold.t)?;
    report.set_scalar("extreme_count", extreme.len() as f64)?;
    report.set_scalar("constant_fraction", diagnostics::constant_fraction(&bars))?;
    report.save(&dir.join("report.json"))?;

    let args = json!({"model": model});
    Ok(("barcode", args, vec!["barcodes.csv".into(), "report.json".into()]))
}

fn cmd_tail_curve(cfg: &ExperimentConfig, dir: &Path, model: Option<&Path>) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let m = load_or_train(cfg, &prep, model)?;
    let codes: Vec<Vec<f64>> = prep.test.points().iter().map(|x| m.encode(x)).collect();
    let classify = |z: &[f64]| probability_to_label(m.c_ext.forward(z)[0]);
    let curve = tail_loss_curve(classify, &codes, prep.test.labels(), m.threshold.t, &cfg.lambda_grid)?;

    let mut report = DiagnosticReport::new();
    report.set_meta("experiment", "tail-curve");
    report.set_meta("seed", cfg.seed);
    report.set_scalar("latent_threshold", m.threshold.t)?;
    report.set_series("tail_loss", curve)?;
    report.save(&dir.join("report.json"))?;
    report.export_series_csv(dir)?;

    let args = json!({"model": model});
    Ok(("tail-curve", args, vec!["report.json".into(), "tail_loss.csv".into()]))
}

fn cmd_augment(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    experiments::run_augmentation(cfg)?;
    let artifacts = vec!["generated.csv".into(), "report.json".into()];
    Ok(("augment", json!({}), artifacts))
}

fn cmd_toy_experiment(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    experiments::run_toy_experiment(cfg)?;
    let artifacts = vec![
        "input_scatter.csv".into(),
        "latent_scatter.csv".into(),
        "input_latent_extremes.csv".into(),
        "report.json".into(),
    ];
    Ok(("toy-experiment", json!({}), artifacts))
}

fn cmd_compare(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    experiments::run_comparison(cfg)?;
    let artifacts = vec![
        "report.json".into(),
        "tail_loss_nn.csv".into(),
        "tail_loss_lhtr1.csv".into(),
        "tail_loss_lhtr.csv".into(),
    ];
    Ok(("compare", json!({}), artifacts))
}
