mod artifacts;
mod config;
mod error;
mod pipeline;
mod range;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use blecte::simgen::Obstacle;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::FileConfig;
use error::{CliError, Result};

/// BLE constant tone extension AoA and RSS ranging pipeline.
#[derive(Debug, Parser)]
#[command(name = "blecte", version)]
struct Cli {
    /// TOML (or .json) file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for per-experiment parallelism.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory [env: BLECTE_OUT_DIR] [default: blecte-out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse signal and GT logs listed in a conversion dictionary and reassemble packets.
    Ingest(IngestArgs),
    /// Attach interpolated ground-truth angles and distances to packets.
    Label(LabelArgs),
    /// Estimate angles of arrival per packet, select sub-arrays and smooth.
    Estimate(EstimateArgs),
    /// Compute error metrics and CDFs from estimates.
    Evaluate(ExperimentFilter),
    /// Aggregate evaluations into a height × obstacle table.
    Report(ReportArgs),
    /// RSS ranging models.
    Range {
        #[command(subcommand)]
        command: RangeCommand,
    },
    /// Generate synthetic experiments.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ExperimentFilter {
    /// Restrict to these experiments (repeatable). Default: all ingested.
    #[arg(long = "experiment", value_name = "NAME")]
    experiments: Vec<String>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory holding the conversion dictionary and the logs it names.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Conversion dictionary file name inside the dataset directory.
    #[arg(long, default_value = "conversion.json", value_name = "FILE")]
    conversion: PathBuf,
    #[command(flatten)]
    filter: ExperimentFilter,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DistanceModeArg {
    Spatial,
    Planar,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Anchor x, mm.
    #[arg(long, allow_hyphen_values = true)]
    anchor_x: Option<f64>,
    /// Anchor y, mm.
    #[arg(long, allow_hyphen_values = true)]
    anchor_y: Option<f64>,
    /// Anchor height, mm.
    #[arg(long)]
    anchor_height: Option<f64>,
    /// Boresight rotation from the room x axis, degrees.
    #[arg(long, allow_hyphen_values = true)]
    misalignment: Option<f64>,
    /// Largest GT gap bridged by interpolation, seconds.
    #[arg(long)]
    max_gap: Option<f64>,
    #[arg(long, value_enum)]
    distance_mode: Option<DistanceModeArg>,
    #[command(flatten)]
    filter: ExperimentFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Pdoa,
    Ti,
    Music,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    /// Moving-average window, in selected estimates.
    #[arg(long)]
    window: Option<usize>,
    /// Element spacing, meters.
    #[arg(long)]
    spacing: Option<f64>,
    /// Per-antenna, per-channel phase calibration (JSON).
    #[arg(long, value_name = "FILE")]
    calib: Option<PathBuf>,
    /// MUSIC grid step, degrees.
    #[arg(long)]
    grid: Option<f64>,
    /// Largest time between paired sub-array estimates, seconds.
    #[arg(long)]
    pairing_window: Option<f64>,
    /// Also dump slot phases of the first N packets of each experiment.
    #[arg(long, value_name = "N")]
    dump_phases: Option<usize>,
    #[command(flatten)]
    filter: ExperimentFilter,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output CSV. Default: OUT/table2.csv.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Ll,
    Chill,
    Gpr,
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::Ll => "ll",
            ModelArg::Chill => "chill",
            ModelArg::Gpr => "gpr",
        }
    }
}

#[derive(Debug, Subcommand)]
enum RangeCommand {
    /// Assemble 37-channel feature rows, split, and fit a model.
    Fit(RangeFitArgs),
    /// Evaluate a fitted model on the held-out rows.
    Eval(RangeEvalArgs),
}

#[derive(Debug, Args)]
struct RangeFitArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Rows drawn for training; the rest are held out.
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gap threshold for clearing a partial row, seconds. Default: mean timestep of the input.
    #[arg(long)]
    mean_timestep: Option<f64>,
    /// labeled.jsonl or observations.jsonl files. Default: every labeled experiment.
    #[arg(long = "input", value_name = "FILE")]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct RangeEvalArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Stopping,
    Continuous,
    Zigzag,
    RssWorld,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Experiment name. Default derived from scenario, height and obstacles.
    #[arg(long)]
    name: Option<String>,
    /// Tag height, mm.
    #[arg(long)]
    height: Option<f64>,
    /// Horizontal tag distance, mm.
    #[arg(long)]
    distance: Option<f64>,
    /// Per-sample SNR, dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Carrier frequency offset, Hz.
    #[arg(long, allow_hyphen_values = true)]
    cfo: Option<f64>,
    /// Azimuth sweep as LO:HI degrees.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    sweep: Option<[f64; 2]>,
    /// Angular speed, degrees per second.
    #[arg(long)]
    speed: Option<f64>,
    /// Attenuating sector FROM:TO:DB (repeatable).
    #[arg(long = "obstacle", value_parser = parse_obstacle, allow_hyphen_values = true)]
    obstacles: Vec<Obstacle>,
    /// Sector LO:HI where sub-array RSS dominance is swapped.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    anomaly: Option<[f64; 2]>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != n {
        return Err(format!("expected {n} values separated by ':'"));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect()
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v = parse_numbers(s, 2)?;
    Ok([v[0], v[1]])
}

fn parse_obstacle(s: &str) -> std::result::Result<Obstacle, String> {
    let v = parse_numbers(s, 3)?;
    Ok(Obstacle {
        from_deg: v[0],
        to_deg: v[1],
        attenuation_db: v[2],
    })
}

/// Settings shared by every command.
pub struct Context {
    pub out: PathBuf,
    pub config: FileConfig,
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let jobs = cli.jobs.or(config.jobs);
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Context {
        out: config::out_dir(cli.out, &config),
        config,
    };
    match cli.command {
        Command::Ingest(a) => pipeline::ingest(&ctx, a),
        Command::Label(a) => pipeline::label(&ctx, a),
        Command::Estimate(a) => pipeline::estimate(&ctx, a),
        Command::Evaluate(a) => pipeline::evaluate(&ctx, a),
        Command::Report(a) => pipeline::report(&ctx, a),
        Command::Range { command } => match command {
            RangeCommand::Fit(a) => range::fit(&ctx, a),
            RangeCommand::Eval(a) => range::eval(&ctx, a),
        },
        Command::Simulate(a) => simulate::simulate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}\n\nFor more information, try '--help'."),
                CliError::Data(d) => eprintln!("{}", serde_json::to_string(d).unwrap_or_else(|_| d.message.clone())),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
