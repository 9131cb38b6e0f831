//! Command-line workflow around the prediction pipeline: data generation,
//! training, sampling, density grids, and virtual-target clustering.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

pub mod manifest;
pub mod run;
pub mod svg;
pub mod targets;

use clap::{Args, Parser, Subcommand};
use trajflow_core::Error;

#[derive(Parser)]
#[command(name = "trajflow", version, about = "Stochastic target trajectory prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate Monte Carlo trajectory datasets.
    Simulate(SimulateArgs),
    /// Train a conditional flow on a dataset.
    Train(TrainArgs),
    /// Draw future-position samples for a set of targets.
    Sample(SampleArgs),
    /// Evaluate the learned density over a 2-D grid.
    Density(DensityArgs),
    /// Cluster sampled futures into virtual-target trajectories.
    Cluster(ClusterArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario: simple, deterministic, or ballistic.
    pub scenario: String,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output base path; writes <out>.csv, <out>.json, and a manifest.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Trajectory duration in seconds.
    #[arg(long, default_value_t = 100.0)]
    pub duration: f64,
    /// Time discretization in seconds.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Target speed in m/s (simple/deterministic scenarios).
    #[arg(long, default_value_t = 200.0)]
    pub speed: f64,
    /// Minimum maneuver duration in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub min_maneuver: f64,
    /// Maximum maneuver duration in seconds.
    #[arg(long, default_value_t = 50.0)]
    pub max_maneuver: f64,
    /// Minimum lateral acceleration in m/s^2.
    #[arg(long, default_value_t = 3.0)]
    pub min_accel: f64,
    /// Maximum lateral acceleration in m/s^2.
    #[arg(long, default_value_t = 20.0)]
    pub max_accel: f64,
    /// Air density in kg/m^3 (ballistic).
    #[arg(long, default_value_t = 1.225)]
    pub air_density: f64,
    /// Minimum ballistic coefficient in kg/m^2.
    #[arg(long, default_value_t = 200.0)]
    pub bc_min: f64,
    /// Maximum ballistic coefficient in kg/m^2.
    #[arg(long, default_value_t = 800.0)]
    pub bc_max: f64,
    /// Diagonal disturbance covariance in m^2/s^4 (ballistic).
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Gravitational acceleration in m/s^2.
    #[arg(long, default_value_t = 9.81)]
    pub gravity: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset base path (without .csv/.json extension).
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out_model: std::path::PathBuf,
    /// Per-epoch report CSV path.
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.003)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    /// Uniform random fraction of (x, t) rows kept for desk-scale runs.
    #[arg(long, default_value_t = 1.0)]
    pub subsample_points: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flow layers.
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Hidden layers per conditioner net.
    #[arg(long, default_value_t = 2)]
    pub hidden_layers: usize,
    /// Hidden units per hidden layer.
    #[arg(long, default_value_t = 32)]
    pub hidden_units: usize,
    /// Spline bins.
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Spline tail bound.
    #[arg(long, default_value_t = 3.0)]
    pub tail_bound: f64,
    /// Also write <out-model>.epoch<N>.json every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Args)]
pub struct SampleArgs {
    /// Model checkpoint path.
    #[arg(long)]
    pub model: std::path::PathBuf,
    /// Targets CSV path.
    #[arg(long)]
    pub targets: std::path::PathBuf,
    /// Comma-separated prediction times in seconds, e.g. "30,60,90".
    #[arg(long)]
    pub times: String,
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise-injection standard deviation used for the outlier bound.
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    /// Reuse one latent set for all targets (same-type targets only).
    #[arg(long, default_value_t = false)]
    pub share_samples: bool,
    /// Draw an independent latent per time step (not the reference
    /// fixed-latent construction).
    #[arg(long, default_value_t = false)]
    pub fresh_latents: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Optional SVG scatter rendering.
    #[arg(long)]
    pub svg: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    /// Evaluation time in seconds.
    #[arg(long)]
    pub t: f64,
    /// Comma-separated dynamics parameters.
    #[arg(long, default_value = "")]
    pub psi: String,
    /// Optional target "p0,p1,v0,v1" (world meters and m/s) whose pose the
    /// density is placed at.
    #[arg(long)]
    pub target: Option<String>,
    /// Grid "xmin:xmax:nx,ymin:ymax:ny".
    #[arg(long)]
    pub grid: String,
    /// Grid frame: world (meters) or normalized.
    #[arg(long, default_value = "world")]
    pub frame: String,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Optional SVG heatmap rendering.
    #[arg(long)]
    pub svg: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub targets: std::path::PathBuf,
    #[arg(long, default_value_t = 3)]
    pub n_virtual: usize,
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,
    /// Number of equally spaced time steps up to the trained horizon.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Explicit comma-separated times (overrides --steps).
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    /// Relative inertia decrease that stops Lloyd iterations.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = false)]
    pub share_samples: bool,
    /// Virtual-target CSV output path.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Cluster summary JSON path.
    #[arg(long)]
    pub summary: std::path::PathBuf,
    /// Optional SVG rendering of samples and virtual trajectories.
    #[arg(long)]
    pub svg: Option<std::path::PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 3,
        Error::Numeric(_) => 4,
    }
}

pub fn dispatch(command: Command) -> trajflow_core::Result<()> {
    match command {
        Command::Simulate(args) => run::simulate(&args),
        Command::Train(args) => run::train(&args),
        Command::Sample(args) => run::sample(&args),
        Command::Density(args) => run::density(&args),
        Command::Cluster(args) => run::cluster(&args),
    }
}
