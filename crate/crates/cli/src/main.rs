mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsdc::dataset::{write_binary, write_csv};
use fsdc::statistics::similarity_report;
use fsdc::{
    build_base_stats_with, generate_synthetic, load_dataset, project_2d, BaseStatsTable, Benchmark, ClassStatistics,
    ClassifierKind, DataFormat, Dataset, SplitManifest, SweepParam, SyntheticSpec, TukeyParams,
};
use log::{info, warn};
use serde_json::{json, Value};

use config::{combine, load_layer, parse_assignment, Layer, RunConfig};
use output::{csv_bytes, write_atomic};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(fsdc::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => {
                write!(f, "{e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
        }
    }
}

impl From<fsdc::Error> for CliError {
    fn from(e: fsdc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Few-shot classification by distribution calibration.
#[derive(Parser, Debug)]
#[command(name = "fsdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset, its split and the generating parameters.
    Synth(SynthArgs),
    /// Compute base-class statistics.
    Stats(StatsArgs),
    /// Evaluate the pipeline over many episodes.
    Eval(EvalArgs),
    /// Evaluate once per value of one parameter on shared episodes.
    Sweep(SweepArgs),
    /// Project one calibrated episode to 2-D.
    Project(ProjectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 25)]
    classes: usize,
    /// Number of similarity groups; classes are split into contiguous groups.
    #[arg(long, default_value_t = 5)]
    groups: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 2.0)]
    skew_power: f64,
    #[arg(long, default_value_t = 1)]
    novel_per_group: usize,
    #[arg(long, default_value_t = 0)]
    val_per_group: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write the dataset as CSV instead of the binary format.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset file (binary, or CSV when the name ends in .csv).
    #[arg(long)]
    dataset: PathBuf,
    /// Split manifest JSON.
    #[arg(long)]
    split: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "base.fsst")]
    out: PathBuf,
    /// Power applied to base features before computing statistics.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Compute statistics on untransformed features.
    #[arg(long)]
    raw: bool,
    /// Also write pairwise class similarities (mean_sim, var_sim) as CSV.
    #[arg(long)]
    similarity_report: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct PipelineArgs {
    /// JSON file of config keys, flat (`{"calib.k": 3}`) or nested.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set any config key, e.g. `--set optimizer.epochs=300`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    no_tukey: bool,
    #[arg(long)]
    no_generation: bool,
    /// Calibrate means from base classes only.
    #[arg(long)]
    no_novel_feature: bool,
    /// Add alpha to the covariance diagonal only.
    #[arg(long)]
    alpha_diagonal: bool,
    /// Use base statistics of untransformed features.
    #[arg(long, conflicts_with = "tukey_base")]
    raw_base: bool,
    /// Use base statistics of transformed features (the default).
    #[arg(long)]
    tukey_base: bool,
    /// `none` or `nearest:<m>`.
    #[arg(long)]
    baseline: Option<String>,
    /// logistic, svm, max_likelihood or chance.
    #[arg(long)]
    classifier: Option<String>,
    /// max or mean.
    #[arg(long)]
    ml_aggregate: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Generated features per class.
    #[arg(long)]
    num_generated: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    sampler_seed: Option<u64>,
    #[arg(long)]
    optimizer_seed: Option<u64>,
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    k_shot: Option<usize>,
    /// Query samples per class.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Episode seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl PipelineArgs {
    fn flag_layer(&self) -> Layer {
        let mut l = Layer::new();
        let mut put = |k: &str, v: Value| {
            l.insert(k.to_string(), v);
        };
        if self.no_tukey {
            put("use_tukey", json!(false));
        }
        if self.no_generation {
            put("use_generation", json!(false));
        }
        if self.no_novel_feature {
            put("calib.use_novel_feature", json!(false));
        }
        if self.alpha_diagonal {
            put("calib.alpha_diagonal", json!(true));
        }
        if self.raw_base {
            put("tukey_base", json!(false));
        }
        if self.tukey_base {
            put("tukey_base", json!(true));
        }
        let strings = [
            ("baseline", &self.baseline),
            ("classifier", &self.classifier),
            ("ml_aggregate", &self.ml_aggregate),
        ];
        for (k, v) in strings {
            if let Some(v) = v {
                put(k, json!(v));
            }
        }
        let numbers = [
            ("tukey.lambda", self.lambda.map(|v| json!(v))),
            ("calib.k", self.k.map(|v| json!(v))),
            ("calib.alpha", self.alpha.map(|v| json!(v))),
            ("sampler.total_per_class", self.num_generated.map(|v| json!(v))),
            ("sampler.jitter", self.jitter.map(|v| json!(v))),
            ("sampler.seed", self.sampler_seed.map(|v| json!(v))),
            ("optimizer.learning_rate", self.learning_rate.map(|v| json!(v))),
            ("optimizer.epochs", self.epochs.map(|v| json!(v))),
            ("optimizer.batch_size", self.batch_size.map(|v| json!(v))),
            ("optimizer.l2", self.l2.map(|v| json!(v))),
            ("optimizer.seed", self.optimizer_seed.map(|v| json!(v))),
            ("episode.n_way", self.n_way.map(|v| json!(v))),
            ("episode.k_shot", self.k_shot.map(|v| json!(v))),
            ("episode.q_queries", self.queries.map(|v| json!(v))),
            ("episode.num_episodes", self.episodes.map(|v| json!(v))),
            ("episode.seed", self.seed.map(|v| json!(v))),
        ];
        for (k, v) in numbers {
            if let Some(v) = v {
                put(k, v);
            }
        }
        l
    }

    /// Defaults, then the config file, then `--set`, then named flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(load_layer(path)?);
        }
        let mut set = Layer::new();
        for s in &self.set {
            let (k, v) = parse_assignment(s)?;
            set.insert(k, v);
        }
        layers.push(set);
        layers.push(self.flag_layer());
        let cfg = RunConfig::merged(&layers)?;

        let all = layers.iter().fold(Layer::new(), |acc, l| combine(&acc, l));
        let touched_optimizer = all.keys().any(|k| k.starts_with("optimizer."));
        let untrained = matches!(
            cfg.pipeline.classifier,
            ClassifierKind::MaxLikelihood | ClassifierKind::Chance
        );
        if touched_optimizer && untrained {
            warn!(
                "optimizer settings are ignored by the {:?} classifier",
                cfg.pipeline.classifier
            );
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Precomputed base statistics, used as given for every setting.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "FSDC_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// lambda, num_generated, k, alpha or nearest_m.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long)]
    values: String,
    #[arg(long, default_value = "sweep.csv")]
    out_csv: PathBuf,
    #[arg(long, default_value = "sweep.json")]
    out_json: PathBuf,
    #[arg(long, env = "FSDC_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Which episode of the seeded sequence to project.
    #[arg(long, default_value_t = 0)]
    episode_index: u64,
    #[arg(long, default_value = "projection.csv")]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn load_data(args: &DataArgs) -> Result<(Dataset, SplitManifest)> {
    let ds = load_dataset(&args.dataset, DataFormat::from_path(&args.dataset))?;
    let split = SplitManifest::load(&args.split)?;
    split.check_against(&ds)?;
    Ok((ds, split))
}

fn benchmark<'a>(ds: &'a Dataset, split: &'a SplitManifest, stats: Option<&Path>) -> Result<Benchmark<'a>> {
    Ok(match stats {
        Some(path) => {
            info!("using base statistics from {} as given", path.display());
            Benchmark::with_stats(ds, split, BaseStatsTable::load(path)?)?
        }
        None => Benchmark::new(ds, split)?,
    })
}

fn init_workers(n: usize) {
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not size the worker pool: {e}");
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::grouped(a.classes, a.groups, a.dim, a.per_class, a.seed);
    spec.skew_power = a.skew_power;
    spec.novel_per_group = a.novel_per_group;
    spec.val_per_group = a.val_per_group;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (ds, split, truth) = generate_synthetic(&spec)?;

    let mut bytes = Vec::new();
    let name = if a.csv {
        write_csv(&ds, &mut bytes)?;
        "dataset.csv"
    } else {
        write_binary(&ds, &mut bytes)?;
        "dataset.fsdc"
    };
    write_atomic(&a.out_dir.join(name), &bytes)?;
    write_atomic(&a.out_dir.join("split.json"), (split.to_json() + "\n").as_bytes())?;
    let truth_json =
        serde_json::to_string_pretty(&json!({ "spec": spec, "truth": truth })).map_err(fsdc::Error::from)?;
    write_atomic(&a.out_dir.join("truth.json"), (truth_json + "\n").as_bytes())?;
    println!(
        "wrote {} samples of {} classes (d = {}) to {}",
        ds.len(),
        a.classes,
        a.dim,
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (ds, split) = load_data(&a.data)?;
    let transform = (!a.raw).then(|| TukeyParams::with_lambda(a.lambda));
    if let Some(t) = &transform {
        t.validate()?;
    }
    let table = build_base_stats_with(&ds, &split, transform.as_ref())?;
    let mut bytes = Vec::new();
    table.write_to(&mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    for s in table.iter() {
        println!("class {}: {} samples", s.class_id, ds.class_count(s.class_id));
    }
    println!(
        "wrote statistics of {} base classes ({}) to {}",
        table.len(),
        match &transform {
            Some(t) => format!("lambda = {}", t.lambda),
            None => "raw features".into(),
        },
        a.out.display()
    );

    if let Some(path) = &a.similarity_report {
        let role = |c: u32| {
            if split.base_classes.contains(&c) {
                "base"
            } else if split.novel_classes.contains(&c) {
                "novel"
            } else {
                "val"
            }
        };
        let classes: Vec<u32> = split
            .base_classes
            .iter()
            .chain(&split.val_classes)
            .chain(&split.novel_classes)
            .copied()
            .collect();
        let mut stats = Vec::with_capacity(classes.len());
        for c in classes {
            let mut feats = ds.class_features(c)?;
            if let Some(t) = &transform {
                for f in feats.iter_mut() {
                    fsdc::transform::tukey_transform_in_place(f, t)?;
                }
            }
            stats.push(ClassStatistics::from_features(c, &feats)?);
        }
        let rows = similarity_report(&stats)?;
        let bytes = csv_bytes(
            &["class_a", "split_a", "class_b", "split_b", "mean_sim", "var_sim"],
            |w| {
                for r in &rows {
                    w.write_record([
                        r.class_a.to_string(),
                        role(r.class_a).into(),
                        r.class_b.to_string(),
                        role(r.class_b).into(),
                        r.mean_sim.to_string(),
                        r.var_sim.to_string(),
                    ])?;
                }
                Ok(())
            },
        )?;
        write_atomic(path, &bytes)?;
        println!("wrote {} similarity rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    init_workers(a.workers);
    let (ds, split) = load_data(&a.data)?;
    let bench = benchmark(&ds, &split, a.stats.as_deref())?;
    let report = bench.evaluate(&cfg.episode, &cfg.pipeline)?;
    write_atomic(&a.out, (report.to_json() + "\n").as_bytes())?;
    println!(
        "{} ± {} ({} episodes)",
        pct(report.mean_accuracy),
        pct(report.ci95_halfwidth),
        report.num_episodes
    );
    if report.repaired_distributions > 0 {
        warn!(
            "{} covariance factorizations needed jitter (max {:e})",
            report.repaired_distributions, report.max_jitter
        );
    }
    Ok(())
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::Usage(format!("bad sweep value '{v}'"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    Ok(values)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let param: SweepParam = a
        .param
        .parse()
        .map_err(|e: fsdc::Error| CliError::Usage(e.to_string()))?;
    let values = parse_values(&a.values)?;
    let cfg = a.pipeline.resolve()?;
    init_workers(a.workers);
    let (ds, split) = load_data(&a.data)?;
    let bench = benchmark(&ds, &split, a.stats.as_deref())?;
    let mut points = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let cell = param.apply(&cfg.pipeline, v)?;
        let report = bench.evaluate(&cfg.episode, &cell)?;
        println!(
            "[{}/{}] {param} = {v}: {} ± {}",
            i + 1,
            values.len(),
            pct(report.mean_accuracy),
            pct(report.ci95_halfwidth)
        );
        points.push(fsdc::SweepPoint { value: v, report });
    }
    let bytes = csv_bytes(&["value", "mean", "ci95"], |w| {
        for p in &points {
            w.write_record([
                p.value.to_string(),
                p.report.mean_accuracy.to_string(),
                p.report.ci95_halfwidth.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&a.out_csv, &bytes)?;
    let doc = json!({ "param": param, "points": points });
    let text = serde_json::to_string_pretty(&doc).map_err(fsdc::Error::from)?;
    write_atomic(&a.out_json, (text + "\n").as_bytes())?;
    Ok(())
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let (ds, split) = load_data(&a.data)?;
    let bench = benchmark(&ds, &split, a.stats.as_deref())?;
    let ep = bench.episode(&cfg.episode, a.episode_index)?;
    let prepared = bench.prepare(&ep, &cfg.pipeline)?;
    let mut points = Vec::new();
    let mut roles = Vec::new();
    for (set, role) in [
        (&prepared.support, "support"),
        (&prepared.query, "query"),
        (&prepared.augmented, "generated"),
    ] {
        points.extend(set.iter().cloned());
        roles.extend(std::iter::repeat_n(role, set.len()));
    }
    let coords = project_2d(&points)?;
    let bytes = csv_bytes(&["x", "y", "label", "role"], |w| {
        for ((x, y, label), role) in coords.iter().zip(&roles) {
            w.write_record([
                x.to_string(),
                y.to_string(),
                ep.classes[*label].to_string(),
                role.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&a.out, &bytes)?;
    println!(
        "wrote {} support, {} query and {} generated points to {}",
        prepared.support.len(),
        prepared.query.len(),
        prepared.augmented.len(),
        a.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Project(a) => cmd_project(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}
