//! `slice-arena`: run slice-contention experiments, calibrate the model and
//! render reports.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use slice_arena::experiments::{
    calibrate, constituents_label, default_anchors, experiment, load_catalog, run_experiment, CalibrationOptions,
    CalibrationParams, ExperimentConfig, ExperimentResult,
};
use slice_arena::metrics::export::{write_samples_csv, ExperimentSummary};
use slice_arena::report::build_report;
use slice_arena::{Granularity, RunAudit, Window};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "slice-arena", version, about = "Simulate network-slice contention at an edge UPF node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the 26 built-in experiments.
    Catalog(CatalogArgs),
    /// Run one experiment.
    Run(RunArgs),
    /// Run every catalog experiment.
    All(AllArgs),
    /// Fit the model parameters to the anchor results.
    Calibrate(CalibrateArgs),
    /// Summarize run outputs against the baselines.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CatalogFormat {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct CatalogArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: CatalogFormat,
    /// Also write each experiment as DIR/expN.json.
    #[arg(long, value_name = "DIR")]
    dump: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GranularityArg {
    Frame,
    Packet,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Frame => Granularity::Frame,
            GranularityArg::Packet => Granularity::Packet,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CommonRunArgs {
    /// Repetitions per experiment [default: from the config].
    #[arg(long)]
    reps: Option<u32>,
    /// Base seed; run k uses seed + k.
    #[arg(long, env = "SLICE_ARENA_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Calibration params JSON [default: built-in calibration].
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum)]
    granularity: Option<GranularityArg>,
    /// Worker threads [default: available processors].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Catalog experiment id (1-26).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=26), required_unless_present = "config", conflicts_with = "config")]
    exp: Option<u32>,
    /// Experiment config JSON instead of a catalog id.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args, Debug)]
struct AllArgs {
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Where to write the fitted params.
    #[arg(long, value_name = "FILE", default_value = "params.json")]
    out: PathBuf,
    #[arg(long, env = "SLICE_ARENA_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Simulated-run budget.
    #[arg(long, default_value_t = 500)]
    max_runs: u32,
    /// Target max relative error on the throughput anchors.
    #[arg(long, default_value_t = 0.005)]
    tolerance: f64,
    /// Grid points for cost, capacity and per-UPF ceiling.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 5, 3])]
    grid: Vec<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Last5m,
    Full,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Last5m => Window::Last5Min,
            WindowArg::Full => Window::Full,
        }
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding expN/summary.json outputs.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "last5m")]
    window: WindowArg,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Write to FILE instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Everything needed to reproduce an output directory.
#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    invocation: Vec<String>,
    experiment: u32,
    seed: u64,
    seeds: &'a [u64],
    params: &'a CalibrationParams,
    config: &'a ExperimentConfig,
}

/// Exit status of a command that ran to completion.
enum Outcome {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Output piped into `head` and the like.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Catalog(a) => catalog(&a).map(|()| Outcome::Done),
        Command::Run(a) => with_jobs(a.common.jobs, || run(&a)).map(|()| Outcome::Done),
        Command::All(a) => with_jobs(a.common.jobs, || all(&a)).map(|()| Outcome::Done),
        Command::Calibrate(a) => with_jobs(a.jobs, || calibrate_cmd(&a)),
        Command::Report(a) => report(&a).map(|()| Outcome::Done),
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match jobs {
        Some(0) => bail!("--jobs must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
        None => f(),
    }
}

fn invocation() -> Vec<String> {
    std::env::args().skip(1).collect()
}

fn catalog(args: &CatalogArgs) -> Result<()> {
    let catalog = load_catalog();
    if let Some(dir) = &args.dump {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for c in &catalog {
            c.save(&dir.join(format!("exp{}.json", c.id)))?;
        }
    }
    let mut out = io::stdout().lock();
    match args.format {
        CatalogFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &catalog)?;
            writeln!(out)?;
        }
        CatalogFormat::Table => {
            writeln!(out, "{:>3}  {:<14} {:>6}  {:<28} {}", "id", "constituents", "slices", "slice1", "others")?;
            for c in &catalog {
                writeln!(
                    out,
                    "{:>3}  {:<14} {:>6}  {:<28} {}",
                    c.id,
                    constituents_label(c),
                    c.slice_count,
                    c.slice1.describe(),
                    c.others.describe()
                )?;
            }
        }
    }
    Ok(())
}

fn load_params(path: Option<&Path>) -> Result<CalibrationParams> {
    match path {
        Some(p) => CalibrationParams::load(p).with_context(|| format!("loading params {}", p.display())),
        None => Ok(CalibrationParams::default()),
    }
}

fn prepare(config: &mut ExperimentConfig, common: &CommonRunArgs) {
    if let Some(g) = common.granularity {
        config.workload.traffic.granularity = g.into();
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let mut config = match (&args.exp, &args.config) {
        (Some(id), _) => experiment(*id)?,
        (None, Some(path)) => {
            ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        (None, None) => bail!("either --exp or --config is required"),
    };
    prepare(&mut config, &args.common);
    let params = load_params(args.common.params.as_deref())?;
    let reps = args.common.reps.unwrap_or(config.repetitions);
    let result = run_experiment(&config, &params, reps, args.common.seed)?;
    let dir = write_outputs(&args.common.out, &result, args.common.seed)?;
    eprintln!("experiment {}: {reps} runs written to {}", config.id, dir.display());
    Ok(())
}

fn all(args: &AllArgs) -> Result<()> {
    let params = load_params(args.common.params.as_deref())?;
    let catalog = load_catalog();
    let total = catalog.len();
    for (i, mut config) in catalog.into_iter().enumerate() {
        prepare(&mut config, &args.common);
        let reps = args.common.reps.unwrap_or(config.repetitions);
        let result = run_experiment(&config, &params, reps, args.common.seed)?;
        write_outputs(&args.common.out, &result, args.common.seed)?;
        eprintln!("[{:>2}/{total}] experiment {} done ({reps} runs)", i + 1, config.id);
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, samples: &[slice_arena::MetricSample]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_samples_csv(io::BufWriter::new(file), samples)?;
    Ok(())
}

/// Writes `DIR/expN/{samples.csv, summary.json, boxplot.json, audit.json,
/// provenance.json, runs/run-K.csv}`.
fn write_outputs(out: &Path, result: &ExperimentResult, seed: u64) -> Result<PathBuf> {
    let dir = out.join(format!("exp{}", result.config.id));
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    for run in &result.runs {
        write_csv(&runs_dir.join(format!("run-{:02}.csv", run.audit.run)), &run.samples)?;
    }
    write_csv(&dir.join("samples.csv"), &result.all_samples())?;
    write_json(&dir.join("summary.json"), &result.summary())?;
    write_json(&dir.join("boxplot.json"), &result.boxplots())?;
    let audits: Vec<&RunAudit> = result.audits();
    write_json(&dir.join("audit.json"), &audits)?;
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            invocation: invocation(),
            experiment: result.config.id,
            seed,
            seeds: &result.seeds,
            params: &result.params,
            config: &result.config,
        },
    )?;
    Ok(dir)
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<Outcome> {
    let grid: [usize; 3] = args
        .grid
        .as_slice()
        .try_into()
        .context("--grid takes three comma-separated counts")?;
    if grid.contains(&0) {
        bail!("--grid counts must be positive");
    }
    let opts = CalibrationOptions {
        grid,
        tolerance: args.tolerance,
        max_runs: args.max_runs,
        seed: args.seed,
        ..CalibrationOptions::default()
    };
    let params = calibrate(&default_anchors(), &opts)?;
    params.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    for (a, e) in params.anchors.iter().zip(&params.errors) {
        eprintln!("{:<45} target {:>8.2}  error {:+.3}%", a.label(), a.target, e * 100.0);
    }
    eprintln!(
        "cost_per_byte {:.6e}  cpu_capacity_cores {:.4}  upf_max_cores {:.4}  base_one_way_delay {:.3} ms  ({} runs)",
        params.cost_per_byte,
        params.cpu_capacity_cores,
        params.upf_max_cores,
        params.base_one_way_delay_s * 1e3,
        params.runs
    );
    if params.converged {
        eprintln!("converged; params written to {}", args.out.display());
        Ok(Outcome::Done)
    } else {
        eprintln!("did not converge; best-effort params written to {}", args.out.display());
        Ok(Outcome::NotConverged)
    }
}

fn read_summaries(dir: &Path) -> Result<Vec<ExperimentSummary>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut summaries = Vec::new();
    for entry in entries {
        let path = entry?.path().join("summary.json");
        if path.is_file() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            summaries.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
        }
    }
    if summaries.is_empty() {
        bail!("no expN/summary.json found under {}", dir.display());
    }
    Ok(summaries)
}

fn report(args: &ReportArgs) -> Result<()> {
    let summaries = read_summaries(&args.input)?;
    let report = build_report(&summaries, args.window.into())?;
    let mut buf = Vec::new();
    match args.format {
        ReportFormat::Json => report.write_json(&mut buf)?,
        ReportFormat::Csv => report.write_csv(&mut buf)?,
    }
    match &args.out {
        Some(path) => fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}
