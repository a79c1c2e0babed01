use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use nonsens::bench::{read_records, run_bench, summarize, write_records, write_summary, BenchMode, ExperimentConfig};
use nonsens::datagen::{generate, read_csv, write_csv, GenConfig, LambdaScheme, MixingMode, SourceFamily, TruthFile};
use nonsens::methods::{method, Discovery, Finding, MethodSettings, METHOD_NAMES};
use nonsens::pipeline::{dag_metrics, Dag};

/// Bad input: unreadable or malformed files, invalid configuration.
const EXIT_INPUT: u8 = 2;
/// The method itself failed on valid input.
const EXIT_METHOD: u8 = 3;

#[derive(Parser)]
#[command(name = "nonsens", version, about = "Causal discovery on non-stationary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth file.
    Gen(GenArgs),
    /// Run one method on a dataset and print its verdict as JSON.
    Discover(DiscoverArgs),
    /// Run a seeded benchmark sweep.
    Bench(BenchArgs),
    /// Score an estimated graph against the truth, or summarize a results CSV.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON generator config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Number of segments E.
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    n_per_segment: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_parser = snake_case::<MixingMode>)]
    mode: Option<MixingMode>,
    #[arg(long, value_parser = snake_case::<SourceFamily>)]
    family: Option<SourceFamily>,
    #[arg(long, value_parser = snake_case::<LambdaScheme>)]
    scheme: Option<LambdaScheme>,
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Dataset CSV; the truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Dataset CSV with a leading segment column.
    data: PathBuf,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(METHOD_NAMES))]
    method: String,
    /// JSON method settings; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alpha: Option<f64>,
    /// Assume a causal effect exists: always pick a direction.
    #[arg(long)]
    assume_effect: bool,
    /// Hidden layers of the feature network.
    #[arg(long)]
    tcl_depth: Option<usize>,
    /// Exchange the two columns first, as a benchmark row with `swapped` set did.
    #[arg(long)]
    swap: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = snake_case::<BenchMode>)]
    mode: Option<BenchMode>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per grid cell.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Repeat or comma-separate to run several methods.
    #[arg(long, value_delimiter = ',', value_parser = clap::builder::PossibleValuesParser::new(METHOD_NAMES))]
    method: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Directory for `results.csv`, `summary.csv` and `config.json`.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Discovery JSON or edge list (`1 -> 2` per line) to score.
    estimate: Option<PathBuf>,
    /// Truth JSON written by `gen`.
    #[arg(long, requires = "estimate")]
    truth: Option<PathBuf>,
    /// Recompute the summary of a benchmark results CSV.
    #[arg(long, conflicts_with_all = ["estimate", "truth"])]
    results: Option<PathBuf>,
    /// Level behind the no-effect reference line.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome<T> = std::result::Result<T, Failure>;

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for std::result::Result<T, E> {
    fn exit_with(self, code: u8) -> Outcome<T> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn snake_case<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn truth_path(data: &Path) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    data.with_file_name(format!("{stem}.truth.json"))
}

fn cmd_gen(args: GenArgs) -> Outcome<()> {
    let mut cfg: GenConfig = match &args.config {
        Some(p) => read_json(p).exit_with(EXIT_INPUT)?,
        None => GenConfig::default(),
    };
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.dim = args.dim.unwrap_or(cfg.dim);
    cfg.n_segments = args.segments.unwrap_or(cfg.n_segments);
    cfg.n_per_segment = args.n_per_segment.unwrap_or(cfg.n_per_segment);
    cfg.depth = args.depth.unwrap_or(cfg.depth);
    cfg.mode = args.mode.unwrap_or(cfg.mode);
    cfg.family = args.family.unwrap_or(cfg.family);
    cfg.scheme = args.scheme.unwrap_or(cfg.scheme);
    cfg.edge_prob = args.edge_prob.or(cfg.edge_prob);

    let (data, truth) = generate(&cfg).exit_with(EXIT_INPUT)?;
    let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display())).exit_with(EXIT_INPUT)?;
    write_csv(&data, BufWriter::new(file)).exit_with(EXIT_INPUT)?;
    let truth_out = truth_path(&args.out);
    write_json(&TruthFile::new(&cfg, &truth), Some(&truth_out)).exit_with(EXIT_INPUT)?;
    eprintln!("wrote {} rows to {} and truth to {}", data.n(), args.out.display(), truth_out.display());
    Ok(())
}

fn cmd_discover(args: DiscoverArgs) -> Outcome<()> {
    let mut settings: MethodSettings = match &args.config {
        Some(p) => read_json(p).exit_with(EXIT_INPUT)?,
        None => MethodSettings::default(),
    };
    settings.alpha = args.alpha.unwrap_or(settings.alpha);
    settings.assume_effect |= args.assume_effect;
    if let Some(depth) = args.tcl_depth {
        settings.nonsens.tcl.depth = depth;
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(anyhow!("alpha must lie in (0, 1), got {}", settings.alpha)).exit_with(EXIT_INPUT);
    }

    let file = File::open(&args.data).with_context(|| format!("cannot open {}", args.data.display())).exit_with(EXIT_INPUT)?;
    let mut data = read_csv(BufReader::new(file)).with_context(|| format!("cannot read {}", args.data.display())).exit_with(EXIT_INPUT)?;
    if args.swap {
        if data.dim() != 2 {
            return Err(anyhow!("--swap needs exactly 2 variables, got {}", data.dim())).exit_with(EXIT_INPUT);
        }
        data = data.select_columns(&[1, 0]).exit_with(EXIT_INPUT)?;
    }

    let m = method(&args.method, &settings).exit_with(EXIT_INPUT)?;
    let discovery = m.run(&data, args.seed).with_context(|| format!("{} failed", args.method)).exit_with(EXIT_METHOD)?;
    write_json(&discovery, args.out.as_deref()).exit_with(EXIT_INPUT)
}

fn cmd_bench(args: BenchArgs) -> Outcome<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_json(p).exit_with(EXIT_INPUT)?,
        None => ExperimentConfig::default(),
    };
    cfg.mode = args.mode.unwrap_or(cfg.mode);
    cfg.base_seed = args.seed.unwrap_or(cfg.base_seed);
    cfg.seeds = args.seeds.unwrap_or(cfg.seeds);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    if !args.method.is_empty() {
        cfg.methods = args.method;
    }
    cfg.validate().exit_with(EXIT_INPUT)?;

    let result = run_bench(&cfg, args.jobs).exit_with(EXIT_METHOD)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display())).exit_with(EXIT_INPUT)?;
    let create = |name: &str| {
        let path = args.out.join(name);
        File::create(&path).map(BufWriter::new).with_context(|| format!("cannot create {}", path.display()))
    };
    write_records(&result.records, create("results.csv").exit_with(EXIT_INPUT)?).exit_with(EXIT_INPUT)?;
    write_summary(&result.summary, create("summary.csv").exit_with(EXIT_INPUT)?).exit_with(EXIT_INPUT)?;
    write_json(&cfg, Some(&args.out.join("config.json"))).exit_with(EXIT_INPUT)?;

    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} trial rows, {failed} failed; results in {}", result.records.len(), args.out.display());
    Ok(())
}

/// Estimated graph from a discovery JSON or an edge list.
fn read_estimate(path: &Path, d: usize) -> anyhow::Result<Dag> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let discovery: Discovery = serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        return match discovery.finding {
            Finding::Graph { dag, .. } => Ok(dag),
            Finding::Pair { decision } => {
                let mut g = Dag::empty(d);
                match decision.as_str() {
                    "x1_causes" => g.orient(0, 1),
                    "x2_causes" => g.orient(1, 0),
                    _ => g.set_undirected(0, 1),
                }
                Ok(g)
            }
        };
    }
    Ok(Dag::parse_edge_list(&text, d)?)
}

fn cmd_metrics(args: MetricsArgs) -> Outcome<()> {
    if let Some(results) = &args.results {
        let file = File::open(results).with_context(|| format!("cannot open {}", results.display())).exit_with(EXIT_INPUT)?;
        let records = read_records(BufReader::new(file)).exit_with(EXIT_INPUT)?;
        let mode = records.first().map(|r| r.mode).ok_or_else(|| anyhow!("{} has no rows", results.display())).exit_with(EXIT_INPUT)?;
        let rows = summarize(&records, mode, args.alpha);
        return match &args.out {
            Some(path) => {
                let file = File::create(path).with_context(|| format!("cannot create {}", path.display())).exit_with(EXIT_INPUT)?;
                write_summary(&rows, BufWriter::new(file)).exit_with(EXIT_INPUT)
            }
            None => write_summary(&rows, std::io::stdout().lock()).exit_with(EXIT_INPUT),
        };
    }
    let (Some(estimate), Some(truth)) = (&args.estimate, &args.truth) else {
        return Err(anyhow!("give an estimate with --truth, or --results")).exit_with(EXIT_INPUT);
    };
    let truth: TruthFile = read_json(truth).exit_with(EXIT_INPUT)?;
    let true_dag = Dag::from_adjacency(&truth.dag).exit_with(EXIT_INPUT)?;
    let est = read_estimate(estimate, true_dag.dim()).exit_with(EXIT_INPUT)?;
    let metrics = dag_metrics(&est, &true_dag).exit_with(EXIT_INPUT)?;
    write_json(&metrics, args.out.as_deref()).exit_with(EXIT_INPUT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Discover(a) => cmd_discover(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
