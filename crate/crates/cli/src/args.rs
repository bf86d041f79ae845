use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kmreg::dataset::{PerturbationSpec, Shape, SynthParams};
use kmreg::registration::{DEFAULT_CLUSTERS, DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS};
use kmreg::{RegistrationConfig, RegistrationError};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "kmreg",
    version,
    about = "Multi-view rigid point-set registration by joint K-means"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Base seed; every perturbation and synthetic sample derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register the views of a manifest from perturbed ground-truth poses.
    Register(RegisterArgs),
    /// Write a synthetic multi-view scene as PLY files plus a manifest.
    Synth(SynthArgs),
    /// Sweep the cluster count.
    Ksweep(KsweepArgs),
    /// Compare runs with and without elimination of sparse clusters.
    Ablate(AblateArgs),
    /// Sweep the perturbation amplitude.
    NoiseSweep(NoiseSweepArgs),
    /// Export the points of a posed scene that fall inside a slab.
    Slice(SliceArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Scene manifest (JSON); its poses are the ground truth.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Keep every S-th point of each view.
    #[arg(long, default_value_t = 8)]
    pub downsample: usize,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Number of clusters K.
    #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
    pub k: usize,

    /// Iteration cap Q.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,

    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Keep points of under-populated clusters in the fit.
    #[arg(long)]
    pub no_eliminate: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    /// Half-width of the uniform pose perturbation (radians and model units).
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,

    /// Also write the registered cloud as registered.ply.
    #[arg(long)]
    pub write_ply: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "sphere", value_parser = parse_shape)]
    pub shape: Shape,

    #[arg(long, default_value_t = 8)]
    pub views: usize,

    /// Points per view.
    #[arg(long, default_value_t = 2500)]
    pub points: usize,

    /// Fraction of a sector's width shared with each neighbour.
    #[arg(long, default_value_t = 0.3)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct KsweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(
        long,
        value_delimiter = ',',
        default_value = "500,1000,1500,2000,2500,3000,3500"
    )]
    pub k_values: Vec<usize>,

    #[arg(long, default_value_t = 0.02)]
    pub amplitude: f64,

    #[arg(long, default_value_t = 20)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, value_delimiter = ',', default_value = "0.02")]
    pub amplitudes: Vec<f64>,

    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct NoiseSweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.03,0.04")]
    pub amplitudes: Vec<f64>,

    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Manifest whose poses place the views, e.g. a transforms.json.
    #[command(flatten)]
    pub scene: SceneArgs,

    #[arg(long, value_enum, default_value = "z")]
    pub axis: Axis,

    #[arg(long, default_value_t = 0.0)]
    pub position: f64,

    #[arg(long)]
    pub thickness: f64,
}

pub fn config_error(e: RegistrationError) -> CliError {
    match e {
        RegistrationError::Config(msg) => CliError::Config(msg),
        other => CliError::Config(other.to_string()),
    }
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse()
        .map_err(|e: kmreg::dataset::SynthError| e.to_string())
}

impl SceneArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.downsample == 0 {
            return Err(CliError::Config("--downsample must be at least 1".into()));
        }
        Ok(())
    }
}

impl SolverArgs {
    pub fn config(&self) -> Result<RegistrationConfig, CliError> {
        let config = RegistrationConfig {
            clusters: self.k,
            max_iterations: self.max_iters,
            epsilon: self.epsilon,
            eliminate_invalid: !self.no_eliminate,
        };
        config.validate().map_err(config_error)?;
        Ok(config)
    }
}

impl SynthArgs {
    pub fn params(&self, seed: u64) -> Result<SynthParams, CliError> {
        let params = SynthParams {
            shape: self.shape,
            points_per_view: self.points,
            views: self.views,
            overlap: self.overlap,
            seed,
        };
        params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }
}

pub fn check_amplitudes(amplitudes: &[f64]) -> Result<(), CliError> {
    if amplitudes.is_empty() {
        return Err(CliError::Config(
            "at least one amplitude is required".into(),
        ));
    }
    for &a in amplitudes {
        PerturbationSpec::new(a, 0).map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn check_trials(trials: usize) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    Ok(())
}
