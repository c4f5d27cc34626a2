//! Command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::datasets;
use crate::error::{FdError, Result};
use crate::eval::{score, silhouette, sweep_p, ReplicationConfig, SweepRow};
use crate::experiment::{run_experiment, scenario_sweep, write_summary_csv, ExperimentConfig};
use crate::fdata::FunctionalSample;
use crate::io;
use crate::kmeans::{run_kmeans, KMeansConfig, DEFAULT_MAX_ITER};
use crate::metrics::MetricChoice;
use crate::simgen::{generate, Case, ScenarioOverrides, ScenarioSpec};
use crate::spectral::{sample_spectrum, Spectrum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INGESTION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const DEFAULT_SWEEP_GRID: [f64; 8] = [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0];

#[derive(Debug, Parser)]
#[command(name = "mfkmeans", version, about = "k-means for multivariate functional data")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Where to write the run manifest (defaults to `<primary output>.manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated two-group sample.
    Simulate(SimulateArgs),
    /// Cluster a sample and write curve assignments.
    Cluster(ClusterArgs),
    /// Replicated simulation study with aggregated confusion matrices.
    Experiment(ExperimentArgs),
    /// Silhouette values for one or more cluster counts.
    Silhouette(SilhouetteArgs),
    /// Misclassification as a function of log10 p.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Dp,
    Truncated,
    L2,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricArgs {
    #[arg(long, value_enum)]
    pub metric: MetricName,
    /// log10 of p for `--metric dp`.
    #[arg(long = "log10p", allow_hyphen_values = true)]
    pub log10p: Option<f64>,
    /// Number of leading components for `--metric truncated`.
    #[arg(long = "K")]
    pub truncation: Option<usize>,
}

impl MetricArgs {
    pub fn choice(&self) -> Result<MetricChoice> {
        match self.metric {
            MetricName::Dp => {
                let log10_p = self.log10p.ok_or_else(|| FdError::arg("--metric dp needs --log10p"))?;
                Ok(MetricChoice::Dp { log10_p })
            }
            MetricName::Truncated => {
                let k = self.truncation.ok_or_else(|| FdError::arg("--metric truncated needs --K"))?;
                Ok(MetricChoice::Truncated { k })
            }
            MetricName::L2 => Ok(MetricChoice::L2),
        }
    }
}

/// A sample on disk or a bundled data set.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Long-format curve CSV (`curve_id,component,t_index,value`).
    #[arg(long, conflicts_with = "dataset")]
    pub input: Option<PathBuf>,
    /// Grid JSON for `--input`; defaults to `[0, 1]`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Bundled data set.
    #[arg(long, value_parser = ["growth"])]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = Case::from_str)]
    pub case: Case,
    #[arg(long)]
    pub seed: u64,
    /// JSON overriding `T`, `K`, `n1`, `n2`.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Group labels CSV (`curve_id,label`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Grid JSON describing the sample's grid.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub seed: u64,
    /// Assignments CSV (`curve_id,cluster`).
    #[arg(long)]
    pub out: PathBuf,
    /// Run report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Eigenvalue CSV (`k,eigenvalue`).
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Known labels (`curve_id,label`) to score against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long, value_parser = Case::from_str)]
    pub case: Case,
    /// Comma-separated metrics: `l2`, `truncated:K`, `dp:LOG10P`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_value = "l2,truncated:3,dp:-2,dp:8", value_parser = parse_metric)]
    pub metrics: Vec<MetricChoice>,
    /// Number of replicated data sets.
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output prefix; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SilhouetteArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Existing assignments (`curve_id,cluster`) instead of clustering.
    #[arg(long)]
    pub assignments: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for `silhouette_k<k>.csv` files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Simulate fresh data per replicate from this case.
    #[arg(long, value_parser = Case::from_str, conflicts_with_all = ["input", "dataset"])]
    pub case: Option<Case>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Known labels for `--input`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Comma-separated log10 p values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-6,-4,-2,0,2,4,6,8")]
    pub log10p: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Sweep CSV (`log10_p,misclassified_proportion,sd`).
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `l2`, `truncated:K` or `dp:LOG10P`.
pub fn parse_metric(s: &str) -> std::result::Result<MetricChoice, String> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    match (name, arg) {
        ("l2", None) => Ok(MetricChoice::L2),
        ("truncated", Some(a)) => a
            .parse()
            .map(|k| MetricChoice::Truncated { k })
            .map_err(|_| format!("bad truncation '{a}'")),
        ("dp", Some(a)) => a
            .parse()
            .map(|log10_p| MetricChoice::Dp { log10_p })
            .map_err(|_| format!("bad log10 p '{a}'")),
        _ => Err(format!("unknown metric '{s}' (expected l2, truncated:K or dp:LOG10P)")),
    }
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub version: String,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path)?;
    Ok(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Collects inputs and outputs while a command runs.
struct Run {
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    fn new() -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new() }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<BufWriter<File>> {
        self.outputs.push(path.display().to_string());
        create(path)
    }
}

fn load_sample(args: &InputArgs, run: &mut Run) -> Result<FunctionalSample> {
    match (&args.input, args.dataset.as_deref()) {
        (Some(path), _) => {
            run.input(path)?;
            let grid = match &args.grid {
                Some(g) => {
                    run.input(g)?;
                    Some(io::read_grid_file(g)?)
                }
                None => None,
            };
            io::read_curves_file(path, grid)
        }
        (None, Some("growth")) => match &args.grid {
            Some(g) => {
                run.input(g)?;
                datasets::growth_on(io::read_grid_file(g)?)
            }
            None => datasets::growth(),
        },
        _ => Err(FdError::arg("give --input or --dataset")),
    }
}

/// Truth labels from a file, or those carried by the sample.
fn load_truth(sample: &FunctionalSample, path: Option<&Path>, run: &mut Run) -> Result<Option<Vec<String>>> {
    match path {
        Some(p) => {
            run.input(p)?;
            Ok(Some(io::read_labels_file(p, sample.ids())?))
        }
        None => Ok(sample.labels().map(<[String]>::to_vec)),
    }
}

fn load_scenario(case: Case, path: Option<&Path>, run: &mut Run) -> Result<ScenarioSpec> {
    let base = ScenarioSpec::new(case, 0);
    match path {
        Some(p) => {
            run.input(p)?;
            let o: ScenarioOverrides = serde_json::from_reader(File::open(p)?)
                .map_err(|e| FdError::Validation(format!("bad scenario JSON: {e}")))?;
            Ok(o.apply(base))
        }
        None => Ok(base),
    }
}

fn spectrum_for(sample: &FunctionalSample, choice: &MetricChoice) -> Result<Option<Arc<Spectrum>>> {
    if choice.needs_spectrum() {
        Ok(Some(Arc::new(sample_spectrum(sample)?)))
    } else {
        Ok(None)
    }
}

fn write_json<T: Serialize>(w: impl std::io::Write, value: &T) -> Result<()> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| FdError::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, run: &mut Run) -> Result<PathBuf> {
    let spec = load_scenario(a.case, a.scenario.as_deref(), run)?.with_seed(a.seed);
    let sample = generate(&spec)?;
    io::write_curves(run.output(&a.out)?, &sample)?;
    if let Some(p) = &a.labels {
        io::write_labels(run.output(p)?, sample.ids(), sample.labels().expect("generated labels"))?;
    }
    if let Some(p) = &a.grid_out {
        io::write_grid_json(run.output(p)?, &sample.grid().spec())?;
    }
    Ok(a.out.clone())
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    metric: String,
    k: usize,
    n: usize,
    objective: f64,
    iterations: usize,
    converged: bool,
    best_restart: usize,
    cluster_sizes: Vec<usize>,
    objective_trace: Vec<f64>,
    confusion: Option<crate::eval::ConfusionReport>,
}

fn cmd_cluster(a: &ClusterArgs, run: &mut Run) -> Result<PathBuf> {
    let sample = load_sample(&a.input, run)?;
    let choice = a.metric.choice()?;
    let spectrum = spectrum_for(&sample, &choice)?;
    if let (Some(p), Some(s)) = (&a.spectrum, &spectrum) {
        io::write_spectrum(run.output(p)?, s)?;
    }
    let k = usize::try_from(a.k).map_err(|_| FdError::arg("k too large"))?;
    let cfg = KMeansConfig::new(k, choice.bind(spectrum)?, a.seed)
        .with_restarts(a.restarts)
        .with_max_iter(a.max_iter);
    let res = run_kmeans(&sample, &cfg)?;
    io::write_assignments(run.output(&a.out)?, sample.ids(), &res.labels)?;

    let confusion = match load_truth(&sample, a.truth.as_deref(), run)? {
        Some(t) if k <= crate::eval::MAX_MATCH_CLUSTERS => Some(score(&res.labels, &t)?),
        _ => None,
    };
    let report = ClusterReport {
        metric: choice.to_string(),
        k,
        n: sample.len(),
        objective: res.objective,
        iterations: res.iterations,
        converged: res.converged,
        best_restart: res.restart,
        cluster_sizes: res.cluster_sizes(),
        objective_trace: res.objective_trace.clone(),
        confusion,
    };
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write_json(run.output(&report_path)?, &report)?;
    Ok(a.out.clone())
}

fn cmd_experiment(a: &ExperimentArgs, run: &mut Run) -> Result<PathBuf> {
    let scenario = load_scenario(a.case, a.scenario.as_deref(), run)?;
    let mut cfg = ExperimentConfig::new(scenario, a.metrics.clone(), a.replicates, a.seed);
    cfg.n_restarts = a.restarts;
    cfg.max_iter = a.max_iter;
    let report = run_experiment(&cfg)?;
    let json_path = with_suffix(&a.out, ".json");
    write_json(run.output(&json_path)?, &report)?;
    write_summary_csv(run.output(&with_suffix(&a.out, ".csv"))?, &report)?;
    for s in &report.summaries {
        log::info!("{}: mean correct rate {:.4} (sd {:.4})", s.name, s.mean_correct_rate, s.sd_correct_rate);
    }
    Ok(json_path)
}

fn cmd_silhouette(a: &SilhouetteArgs, run: &mut Run) -> Result<PathBuf> {
    let sample = load_sample(&a.input, run)?;
    let choice = a.metric.choice()?;
    let metric = choice.bind(spectrum_for(&sample, &choice)?)?;
    fs::create_dir_all(&a.out_dir)?;

    let runs: Vec<(usize, Vec<usize>)> = match &a.assignments {
        Some(p) => {
            run.input(p)?;
            let raw = io::read_labels_file(p, sample.ids())?;
            let labels = raw
                .iter()
                .map(|s| s.parse::<usize>().ok().filter(|&l| l >= 1))
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| FdError::Validation("cluster labels must be positive integers".into()))?;
            let k = labels.iter().copied().max().unwrap_or(1);
            vec![(k, labels)]
        }
        None => {
            let seed = a.seed.ok_or_else(|| FdError::arg("clustering needs --seed"))?;
            a.ks.iter()
                .map(|&k| {
                    let cfg = KMeansConfig::new(k, metric.clone(), seed)
                        .with_restarts(a.restarts)
                        .with_max_iter(a.max_iter);
                    Ok((k, run_kmeans(&sample, &cfg)?.labels))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut summary = Vec::new();
    for (k, labels) in &runs {
        let report = silhouette(&sample, labels, &metric)?;
        let path = a.out_dir.join(format!("silhouette_k{k}.csv"));
        io::write_silhouette(run.output(&path)?, sample.ids(), &report)?;
        summary.push(json!({ "k": k, "overall_mean": report.overall_mean, "cluster_means": report.cluster_means }));
    }
    let path = a.out_dir.join("silhouette_summary.json");
    write_json(run.output(&path)?, &summary)?;
    Ok(path)
}

fn cmd_sweep(a: &SweepArgs, run: &mut Run) -> Result<PathBuf> {
    let rows: Vec<SweepRow> = match a.case {
        Some(case) => {
            if a.k != 2 {
                return Err(FdError::arg("simulated sweeps have two groups; use --k 2"));
            }
            let scenario = load_scenario(case, a.scenario.as_deref(), run)?;
            scenario_sweep(scenario, &a.log10p, a.replicates, a.seed)?
        }
        None => {
            let sample = load_sample(&a.input, run)?;
            let truth = load_truth(&sample, a.truth.as_deref(), run)?
                .ok_or_else(|| FdError::arg("sweeping a sample needs --truth labels"))?;
            let spectrum = Arc::new(sample_spectrum(&sample)?);
            let rep = ReplicationConfig {
                replicates: a.replicates,
                n_restarts: a.restarts,
                max_iter: a.max_iter,
                seed: a.seed,
            };
            sweep_p(&sample, &truth, a.k, spectrum, &a.log10p, &rep)?
        }
    };
    io::write_sweep(run.output(&a.out)?, &rows)?;
    Ok(a.out.clone())
}

fn exit_code(e: &FdError) -> i32 {
    match e {
        FdError::Argument(_) => EXIT_USAGE,
        FdError::Ingestion { .. } | FdError::Validation(_) | FdError::Io(_) => EXIT_INGESTION,
        FdError::Dimension(_)
        | FdError::Index { .. }
        | FdError::InsufficientSample { .. }
        | FdError::Numerical(_) => EXIT_NUMERICAL,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let mut run = Run::new();
    let (name, params, seed, primary) = match &cli.command {
        Command::Simulate(a) => ("simulate", json!(a), Some(a.seed), cmd_simulate(a, &mut run)?),
        Command::Cluster(a) => ("cluster", json!(a), Some(a.seed), cmd_cluster(a, &mut run)?),
        Command::Experiment(a) => ("experiment", json!(a), Some(a.seed), cmd_experiment(a, &mut run)?),
        Command::Silhouette(a) => ("silhouette", json!(a), a.seed, cmd_silhouette(a, &mut run)?),
        Command::Sweep(a) => ("sweep", json!(a), Some(a.seed), cmd_sweep(a, &mut run)?),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        params,
        seed,
        inputs: run.inputs,
        outputs: run.outputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        started_unix_ms,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let path = cli.manifest.clone().unwrap_or_else(|| with_suffix(&primary, ".manifest.json"));
    write_json(create(&path)?, &manifest)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        // fails only if a pool already exists, e.g. on repeated in-process calls
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
