//! Command-line front end: one subcommand per pipeline stage.
//!
//! Every subcommand reads the same YAML configuration (`--config`); explicit
//! flags override config values. Failures print a single line
//!
//! ```text
//! error: code=<code> [fitness=<f>] msg="<message>"
//! ```
//!
//! and exit with [`EXIT_USAGE`], [`EXIT_IO`], [`EXIT_INIT`] or [`EXIT_OTHER`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cloudio::{load_cloud, save_cloud, write_tum, CloudFormat, RigidTransform};
use crate::config::from_yaml_str;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, DEFAULT_OUTLIER_THRESHOLD};
use crate::ground::{csf_extract, CsfParams};
use crate::localization::{initialize_pose, run_sequence, LocalizerConfig};
use crate::mapcraft::{craft_map, MlsParams, UniformSamplingParams};
use crate::simulation::{load_scans, save_sequence, simulate, SceneSpec};
use crate::spatial::SpatialIndex;
use crate::traversability::{build_traversability, export_costmap, TraversabilityParams};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INIT: i32 = 4;
pub const EXIT_OTHER: i32 = 5;

/// Initial pose as `[x, y, z, roll, pitch, yaw]` (m, rad).
pub type PoseVector = [f64; 6];

pub fn pose_from_vector(v: &PoseVector) -> RigidTransform {
    RigidTransform::from_euler(v[3], v[4], v[5], nalgebra::Vector3::new(v[0], v[1], v[2]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Cloud-to-cloud matches farther than this are ignored (m).
    pub outlier_threshold: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
        }
    }
}

/// All module parameters plus the seed and thread count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the scene's lidar seed when set.
    pub seed: Option<u64>,
    /// Worker threads; all cores when unset.
    pub threads: Option<usize>,
    pub uniform_sampling: UniformSamplingParams,
    pub mls: MlsParams,
    pub csf: CsfParams,
    pub traversability: TraversabilityParams,
    pub localizer: LocalizerConfig,
    pub initial_guess: PoseVector,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            threads: None,
            uniform_sampling: UniformSamplingParams::default(),
            mls: MlsParams::default(),
            csf: CsfParams::default(),
            traversability: TraversabilityParams::default(),
            localizer: LocalizerConfig::default(),
            initial_guess: [0.0; 6],
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let cfg: Self = from_yaml_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config {
                field: "threads".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.initial_guess.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config {
                field: "initial_guess".into(),
                message: "must be six finite numbers".into(),
            });
        }
        if !(self.evaluation.outlier_threshold > 0.0) {
            return Err(Error::Config {
                field: "evaluation.outlier_threshold".into(),
                message: "must be positive".into(),
            });
        }
        self.uniform_sampling.validate()?;
        self.mls.validate()?;
        self.csf.validate()?;
        self.traversability.validate()?;
        self.localizer.validate()
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "lidarmap", version, about = "Lidar map crafting, ground and traversability mapping, prior-map localization")]
pub struct Cli {
    /// YAML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed for the simulator (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap (overrides the config).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scan sequence with ground truth from a scene file.
    Simulate(SimulateArgs),
    /// Uniform sampling followed by MLS smoothing.
    Craft(CraftArgs),
    /// Cloth-simulation ground extraction.
    Ground(GroundArgs),
    /// Elevation grid layers and an occupancy costmap from a ground cloud.
    Traverse(TraverseArgs),
    /// Align the first static scans to a prior map.
    InitPose(InitPoseArgs),
    /// Track a scan sequence on a prior map, optionally extending it.
    Localize(LocalizeArgs),
    /// Cloud-to-cloud and trajectory error report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene YAML.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CraftArgs {
    /// Input cloud (.ply or .pcd).
    #[arg(long)]
    pub input: PathBuf,
    /// Output cloud (.ply or .pcd).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    /// Input cloud (.ply or .pcd).
    #[arg(long)]
    pub input: PathBuf,
    /// Receives ground.ply and nonground.ply.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraverseArgs {
    /// Ground cloud.
    #[arg(long)]
    pub input: PathBuf,
    /// Receives costmap.pgm, costmap.yaml and one CSV per layer.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitPoseArgs {
    /// Sequence directory written by `simulate`.
    #[arg(long)]
    pub scans: PathBuf,
    /// Prior map cloud.
    #[arg(long)]
    pub map: PathBuf,
    /// `x,y,z,roll,pitch,yaw` (overrides the config).
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub guess: Option<PoseVector>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Sequence directory written by `simulate`.
    #[arg(long)]
    pub scans: PathBuf,
    /// Prior map cloud.
    #[arg(long)]
    pub map: PathBuf,
    /// `x,y,z,roll,pitch,yaw` (overrides the config).
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub guess: Option<PoseVector>,
    /// Scan timestamp from which map insertion is enabled (overrides the config).
    #[arg(long)]
    pub map_update_enable_time: Option<f64>,
    /// Receives trajectory.txt, registered.ply, map.ply and summary.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prior map.
    #[arg(long)]
    pub map: PathBuf,
    /// Registered scan cloud written by `localize`.
    #[arg(long)]
    pub registered: PathBuf,
    /// Estimated trajectory (TUM).
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Ground-truth trajectory (TUM).
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_pose(s: &str) -> std::result::Result<PoseVector, String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let arr: PoseVector = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 6 comma-separated values, got {}", v.len()))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(arr)
}

/// Clap command with the default configuration appended to every help page.
pub fn command() -> clap::Command {
    let help = format!(
        "Configuration keys (YAML for --config) with their defaults:\n\n{}",
        PipelineConfig::default().to_yaml()
    );
    let mut cmd = Cli::command().after_long_help(help.clone());
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let h = help.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_long_help(h));
    }
    cmd
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::UnsupportedFormat(_) => EXIT_IO,
        Error::InitializationFailed { .. } => EXIT_INIT,
        _ => EXIT_OTHER,
    }
}

/// The one-line diagnostic printed on failure.
pub fn error_line(err: &Error) -> String {
    let mut line = format!("error: code={}", err.code());
    if let Error::InitializationFailed { fitness, .. } = err {
        line.push_str(&format!(" fitness={fitness}"));
    }
    line.push_str(&format!(" msg={:?}", err.to_string()));
    line
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config {
                field: "threads".into(),
                message: "must be at least 1".into(),
            });
        }
        // a pool that already exists (e.g. a second call in one process) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    init_logging(cli.verbose);
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    init_threads(cfg.threads)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Craft(a) => cmd_craft(a, &cfg),
        Command::Ground(a) => cmd_ground(a, &cfg),
        Command::Traverse(a) => cmd_traverse(a, &cfg),
        Command::InitPose(a) => cmd_init_pose(a, &cfg),
        Command::Localize(a) => cmd_localize(a, &cfg),
        Command::Eval(a) => cmd_eval(a, &cfg),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_of(path: &Path) -> Result<CloudFormat> {
    CloudFormat::from_path(path).ok_or_else(|| {
        Error::UnsupportedFormat(format!("{}: output must end in .ply or .pcd", path.display()))
    })
}

#[derive(Serialize)]
struct SimulationMetadata {
    seed: u64,
    scans: usize,
    version: &'static str,
}

pub fn cmd_simulate(args: &SimulateArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut spec = SceneSpec::load(&args.scene)?;
    if let Some(seed) = cfg.seed {
        spec.lidar.seed = seed;
    }
    log::info!("simulating {} with seed {}", args.scene.display(), spec.lidar.seed);
    let seq = simulate(&spec)?;
    create_dir(&args.out_dir)?;
    save_sequence(&seq, &args.out_dir)?;
    let meta = SimulationMetadata {
        seed: spec.lidar.seed,
        scans: seq.scans.len(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_text(
        &args.out_dir.join("metadata.json"),
        &(serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"),
    )?;
    println!("scans: {}", seq.scans.len());
    Ok(())
}

pub fn cmd_craft(args: &CraftArgs, cfg: &PipelineConfig) -> Result<()> {
    let format = format_of(&args.output)?;
    let cloud = load_cloud(&args.input)?;
    let out = craft_map(&cloud, &cfg.uniform_sampling, &cfg.mls)?;
    save_cloud(&out.cloud, &args.output, format)?;
    println!("points: {} -> {} ({} passed through)", cloud.len(), out.cloud.len(), out.passthrough);
    Ok(())
}

pub fn cmd_ground(args: &GroundArgs, cfg: &PipelineConfig) -> Result<()> {
    let cloud = load_cloud(&args.input)?;
    let split = csf_extract(&cloud, &cfg.csf)?;
    create_dir(&args.out_dir)?;
    save_cloud(&split.ground, args.out_dir.join("ground.ply"), CloudFormat::Ply)?;
    save_cloud(&split.nonground, args.out_dir.join("nonground.ply"), CloudFormat::Ply)?;
    println!(
        "ground: {} nonground: {} iterations: {} converged: {}",
        split.ground.len(),
        split.nonground.len(),
        split.iterations,
        split.converged
    );
    Ok(())
}

pub fn cmd_traverse(args: &TraverseArgs, cfg: &PipelineConfig) -> Result<()> {
    let ground = load_cloud(&args.input)?;
    let grid = build_traversability(&ground, &cfg.traversability)?;
    create_dir(&args.out_dir)?;
    export_costmap(&grid, args.out_dir.join("costmap"), &cfg.traversability)?;
    for name in grid.layer_names() {
        write_text(&args.out_dir.join(format!("{name}.csv")), &grid.layer_csv(name)?)?;
    }
    println!("grid: {} x {} cells of {} m", grid.width(), grid.height(), grid.cell_size());
    Ok(())
}

pub fn cmd_init_pose(args: &InitPoseArgs, cfg: &PipelineConfig) -> Result<()> {
    let scans = load_scans(&args.scans)?;
    let map = load_cloud(&args.map)?;
    let guess = pose_from_vector(args.guess.as_ref().unwrap_or(&cfg.initial_guess));
    let index = SpatialIndex::build(map.points());
    let init = initialize_pose(&scans, &index, &guess, &cfg.localizer)?;
    let t = init.pose.translation();
    let q = init.pose.quaternion();
    println!("pose: {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w);
    println!("fitness: {}", init.fitness);
    println!("iterations: {}", init.iterations);
    Ok(())
}

#[derive(Serialize)]
struct LocalizationSummary {
    scans: usize,
    degraded: usize,
    inserted_points: usize,
    init_fitness: f64,
    init_iterations: usize,
}

pub fn cmd_localize(args: &LocalizeArgs, cfg: &PipelineConfig) -> Result<()> {
    let scans = load_scans(&args.scans)?;
    let map = load_cloud(&args.map)?;
    let guess = pose_from_vector(args.guess.as_ref().unwrap_or(&cfg.initial_guess));
    let mut config = cfg.localizer;
    if let Some(t) = args.map_update_enable_time {
        config.map_update_enable_time = t;
    }
    let out = run_sequence(&map, &scans, &guess, &config)?;
    create_dir(&args.out_dir)?;
    write_tum(args.out_dir.join("trajectory.txt"), &out.stamped_poses())?;
    save_cloud(&out.registered, args.out_dir.join("registered.ply"), CloudFormat::Ply)?;
    save_cloud(&out.map, args.out_dir.join("map.ply"), CloudFormat::Ply)?;
    let summary = LocalizationSummary {
        scans: out.trajectory.len(),
        degraded: out.degraded_count(),
        inserted_points: out.inserted,
        init_fitness: out.initialization.fitness,
        init_iterations: out.initialization.iterations,
    };
    write_text(
        &args.out_dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    println!(
        "scans: {} degraded: {} inserted: {} init fitness: {}",
        summary.scans, summary.degraded, summary.inserted_points, summary.init_fitness
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, cfg: &PipelineConfig) -> Result<()> {
    let map = load_cloud(&args.map)?;
    let registered = load_cloud(&args.registered)?;
    let trajectory = crate::cloudio::read_tum(&args.trajectory)?;
    let truth = crate::cloudio::read_tum(&args.truth)?;
    let report = evaluate_run(&map, &registered, &trajectory, &truth, cfg.evaluation.outlier_threshold)?;
    if let Some(path) = &args.output {
        write_text(path, &(report.to_json() + "\n"))?;
    }
    print!("{report}");
    Ok(())
}
