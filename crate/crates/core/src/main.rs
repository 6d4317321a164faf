use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lebed::error::{Error, Result};
use lebed::eval::{load_suite, run_experiment, save_suite, summary_table, ExperimentConfig, Report, RetrainOptions, ScoreSelection, SuiteEntry, SCORES};
use lebed::graph::synth::{CitationSbm, Environment};
use lebed::graph::{generate_test_suite, load_graph, save_graph, ShiftSpec};
use lebed::lebed::{score_graph, EpsilonSpec, DEFAULT_EPSILON, DEFAULT_Q_MAX};
use lebed::nn::{Architecture, ModelConfig, OptimizerKind};
use lebed::training::{train_model, TrainConfig};
use lebed::TrainedModel;

#[derive(Parser)]
#[command(name = "lebed", version, about = "Test-error estimation for GNNs on unlabeled shifted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic citation-style dataset (train, val and raw test graphs).
    GenDataset(GenDatasetArgs),
    /// Train a two-layer model on `<dataset>/train.json`, selecting on `<dataset>/val.json`.
    Train(TrainArgs),
    /// Generate a shifted test suite from one or more labeled graphs.
    GenShifts(GenShiftsArgs),
    /// Score one graph and print the result as JSON.
    Score(ScoreArgs),
    /// Score a whole suite with every model and write report CSVs.
    Evaluate(EvaluateArgs),
    /// Summarize report CSVs and optionally write scatter files.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of raw test graphs drawn from drifted environments.
    #[arg(long, default_value_t = 8)]
    raw_tests: usize,
    /// Class-prototype scale relative to unit feature noise.
    #[arg(long)]
    signal: Option<f64>,
    /// Fraction of intra-class edges in the training environment.
    #[arg(long)]
    homophily: Option<f64>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Number of undirected edges per graph.
    #[arg(long)]
    edges: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// Largest prototype drift of the raw test environments.
    #[arg(long, default_value_t = 0.8)]
    max_drift: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_arch)]
    model: Architecture,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    wd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    optimizer: Opt,
    #[arg(long, default_value_t = 300)]
    max_epochs: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    embed: usize,
    /// Model name used in reports; defaults to the architecture.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct GenShiftsArgs {
    /// Labeled source graphs.
    #[arg(long, num_args = 1.., required = true)]
    graph: Vec<PathBuf>,
    /// JSON list of `{kind, magnitude_range, count}` objects.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpsMode {
    Const,
    Ratio,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opt {
    Sgd,
    Adam,
}

impl From<Opt> for OptimizerKind {
    fn from(o: Opt) -> Self {
        match o {
            Opt::Sgd => OptimizerKind::Sgd,
            Opt::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Args)]
struct RetrainArgs {
    #[arg(long, value_enum, default_value_t = EpsMode::Const)]
    eps_mode: EpsMode,
    /// Stop tolerance; a plain constant, or a fraction of the reference term with `--eps-mode ratio`.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    qmax: usize,
    /// Re-training optimizer; defaults to the one the model was trained with.
    #[arg(long, value_enum)]
    retrain_optimizer: Option<Opt>,
    /// Re-training learning rate; defaults to the model's training rate.
    #[arg(long)]
    retrain_lr: Option<f64>,
    /// Re-training weight decay; defaults to the model's training value.
    #[arg(long)]
    retrain_wd: Option<f64>,
}

impl RetrainArgs {
    fn eps(&self) -> EpsilonSpec {
        match self.eps_mode {
            EpsMode::Const => EpsilonSpec::constant(self.eps),
            EpsMode::Ratio => EpsilonSpec::ratio(self.eps),
        }
    }

    fn options(&self) -> RetrainOptions {
        RetrainOptions {
            optimizer: self.retrain_optimizer.map(Into::into),
            lr: self.retrain_lr,
            weight_decay: self.retrain_wd,
            q_max: self.qmax,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    retrain: RetrainArgs,
    /// Also write the re-trained weights to this file.
    #[arg(long)]
    save_theta: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    All,
    Lebed,
    Baselines,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, num_args = 1.., required = true)]
    model_dirs: Vec<PathBuf>,
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    retrain: RetrainArgs,
    /// Report path. With several models, one file per model is written as
    /// `<stem>_<model>.csv` next to it.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory holding `val.json` for ATC calibration; defaults to
    /// the dataset recorded when the first model was trained.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Selection::All)]
    scores: Selection,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Directory for `<model>_<score>.csv` scatter files.
    #[arg(long)]
    scatter_dir: Option<PathBuf>,
    /// Also write the summary table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_arch(s: &str) -> std::result::Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_dataset(a: GenDatasetArgs) -> Result<()> {
    let mut sbm = CitationSbm::cora_scale();
    if let Some(v) = a.signal {
        sbm.signal = v;
    }
    if let Some(v) = a.homophily {
        sbm.homophily = v;
    }
    if let Some(v) = a.features {
        sbm.num_features = v;
    }
    if let Some(v) = a.nodes {
        sbm.num_nodes = v;
    }
    if let Some(v) = a.edges {
        sbm.num_edges = v;
    }
    if let Some(v) = a.classes {
        sbm.num_classes = v;
    }
    let world = a.seed;
    let sample = |k: u64, env: &Environment| sbm.sample(world, a.seed.wrapping_mul(1000).wrapping_add(k), env);
    save_graph(&sample(1, &Environment::none())?, a.out.join("train.json"))?;
    save_graph(&sample(2, &Environment::none())?, a.out.join("val.json"))?;
    for k in 0..a.raw_tests {
        let env = raw_environment(k, a.raw_tests, a.max_drift, sbm.homophily);
        save_graph(&sample(10 + k as u64, &env)?, a.out.join("raw").join(format!("raw_{k:02}.json")))?;
    }
    let meta = serde_json::json!({ "generator": sbm, "seed": a.seed, "raw_tests": a.raw_tests, "max_drift": a.max_drift });
    write_file(&a.out.join("dataset.json"), &serde_json::to_string_pretty(&meta).expect("metadata serializes"))
}

/// Raw test environments spread from mild to strong drift.
fn raw_environment(k: usize, n: usize, max_drift: f64, homophily: f64) -> Environment {
    let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
    Environment { drift: max_drift * (0.25 + 0.75 * t), homophily: Some(homophily * (1.0 - 0.25 * t)) }
}

fn train(a: TrainArgs) -> Result<()> {
    let train_g = load_graph(a.dataset.join("train.json"))?;
    let val_g = load_graph(a.dataset.join("val.json"))?;
    let config = ModelConfig::new(a.model, [train_g.num_features(), a.hidden, a.embed], train_g.num_classes())?;
    let tc = TrainConfig {
        optimizer: a.optimizer.into(),
        lr: a.lr,
        weight_decay: a.wd,
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed: a.seed,
    };
    let mut tm = train_model(&config, &tc, &train_g, &val_g)?;
    if let Some(name) = a.name {
        tm.name = name;
    }
    tm.save(&a.out, Some(&a.dataset))?;
    println!(
        "trained {} for {} epochs; best epoch {} with validation accuracy {:.4}",
        tm.name,
        tm.history.len(),
        tm.best_epoch,
        tm.best_val_accuracy().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn gen_shifts(a: GenShiftsArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let specs: Vec<ShiftSpec> = serde_json::from_str(&text).map_err(|e| Error::parse(&a.spec, e))?;
    let mut entries = Vec::new();
    for (gi, path) in a.graph.iter().enumerate() {
        let g = load_graph(path)?;
        g.require_labels()?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("g{gi}"));
        let seed = a.seed.wrapping_add(gi as u64);
        for (k, sg) in generate_test_suite(&g, &specs, seed)?.into_iter().enumerate() {
            entries.push(SuiteEntry {
                id: format!("{stem}-{k:04}"),
                shift_kind: sg.kind.to_string(),
                magnitude: sg.magnitude,
                graph: sg.graph,
            });
        }
    }
    save_suite(&entries, &a.out)?;
    println!("wrote {} graphs to {}", entries.len(), a.out.display());
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let (tm, _) = TrainedModel::load(&a.model_dir)?;
    let g = load_graph(&a.graph)?.without_labels();
    let rc = a.retrain.options().for_model(&tm);
    let res = score_graph(&tm, &g, &a.retrain.eps(), &rc)?;
    if let Some(p) = &a.save_theta {
        write_file(p, &res.theta_dagger.to_json(&tm.config))?;
    }
    println!("{}", res.to_json());
    Ok(())
}

fn report_path(out: &Path, model: &str, several: bool) -> PathBuf {
    if !several {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}_{model}.csv"))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut models = Vec::new();
    let mut recorded_dataset = None;
    for dir in &a.model_dirs {
        let (tm, ds) = TrainedModel::load(dir)?;
        recorded_dataset = recorded_dataset.or(ds);
        models.push(tm);
    }
    let scores = match a.scores {
        Selection::All => ScoreSelection { lebed: true, baselines: true },
        Selection::Lebed => ScoreSelection { lebed: true, baselines: false },
        Selection::Baselines => ScoreSelection { lebed: false, baselines: true },
    };
    let val = if scores.baselines {
        let ds = a.dataset.clone().or(recorded_dataset.map(PathBuf::from)).ok_or_else(|| {
            Error::Invalid("baselines need --dataset (a directory holding val.json)".into())
        })?;
        Some(load_graph(ds.join("val.json"))?)
    } else {
        None
    };
    let suite = load_suite(&a.suite)?;
    let cfg = ExperimentConfig { eps: a.retrain.eps(), retrain: a.retrain.options(), scores };
    let reports = run_experiment(&models, val.as_ref(), &suite, &cfg)?;
    let several = reports.len() > 1;
    for r in &reports {
        let path = report_path(&a.out, &r.model, several);
        r.save(&path)?;
        for f in r.failures() {
            eprintln!("{}: {}: {}", r.model, f.graph_id, f.error.as_deref().unwrap_or(""));
        }
        eprintln!("wrote {}", path.display());
    }
    print!("{}", summary_table(&reports));
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let reports = a.input.iter().map(Report::load).collect::<Result<Vec<_>>>()?;
    let table = summary_table(&reports);
    print!("{table}");
    for r in &reports {
        if let Some(mean) = r.mean_stop_iteration() {
            println!("{}: mean stop iteration {mean:.2}", r.model);
        }
    }
    if let Some(out) = &a.out {
        write_file(out, &table)?;
    }
    if let Some(dir) = &a.scatter_dir {
        for r in &reports {
            for s in SCORES {
                write_file(&dir.join(format!("{}_{s}.csv", r.model)), &r.scatter_csv(s))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::GenShifts(a) => gen_shifts(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant() { 2 } else { 1 })
        }
    }
}
