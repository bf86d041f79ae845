//! Pose error metrics and Monte Carlo experiment harnesses.
//!
//! Every harness derives one child seed per trial index from a base seed, so
//! trial `j` can be replayed alone and the same trial index sees the same
//! random draws across noise levels and variants.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{perturb, PerturbationSpec, SamplingError};
use crate::geometry::{Point3, PointSet, RigidTransform, Scene};
use crate::registration::{register, PhaseTimings, RegistrationConfig, RegistrationOutcome};

/// Version tag written into every serialized [`RegistrationReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("measured has {measured} poses but ground truth has {ground_truth}")]
    LengthMismatch {
        measured: usize,
        ground_truth: usize,
    },
    #[error("no poses to compare")]
    Empty,
    #[error("reference pose differs between measured and ground truth")]
    GaugeMismatch,
    #[error("slab thickness must be positive, got {0}")]
    BadThickness(f64),
    #[error("axis must be 0, 1 or 2, got {0}")]
    BadAxis(usize),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

fn check_lengths(measured: &[RigidTransform], gt: &[RigidTransform]) -> Result<(), EvalError> {
    if measured.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            measured: measured.len(),
            ground_truth: gt.len(),
        });
    }
    if measured.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// `E_R = (1/N) sum_i |R_i,m - R_i,g|_F`
pub fn rotation_error(
    measured: &[RigidTransform],
    gt: &[RigidTransform],
) -> Result<f64, EvalError> {
    check_lengths(measured, gt)?;
    Ok(measured
        .iter()
        .zip(gt)
        .map(|(m, g)| m.rotation_distance(g))
        .sum::<f64>()
        / measured.len() as f64)
}

/// `E_t = (1/N) sum_i |t_i,m - t_i,g|_2`
pub fn translation_error(
    measured: &[RigidTransform],
    gt: &[RigidTransform],
) -> Result<f64, EvalError> {
    check_lengths(measured, gt)?;
    Ok(measured
        .iter()
        .zip(gt)
        .map(|(m, g)| m.translation_distance(g))
        .sum::<f64>()
        / measured.len() as f64)
}

/// `(E_R, E_t)` after checking that view 1 is pinned identically in both lists.
pub fn score(measured: &[RigidTransform], gt: &[RigidTransform]) -> Result<(f64, f64), EvalError> {
    check_lengths(measured, gt)?;
    if measured[0] != gt[0] {
        return Err(EvalError::GaugeMismatch);
    }
    Ok((
        rotation_error(measured, gt)?,
        translation_error(measured, gt)?,
    ))
}

/// SplitMix64 finalizer over `(base, stream, index)`.
pub fn child_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo trial `trial` under `base`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    child_seed(base, 0, trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub config: RegistrationConfig,
    pub amplitude: f64,
    pub seed: u64,
    pub e_r: f64,
    pub e_t: f64,
    /// E_R and E_t of the perturbed starting poses.
    pub initial_e_r: f64,
    pub initial_e_t: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub phase_seconds: PhaseTimings,
    pub objective: Vec<f64>,
    pub transforms: Vec<RigidTransform>,
}

impl RegistrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// One Monte Carlo run. Registration failures are kept as data, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub amplitude: f64,
    pub clusters: usize,
    pub eliminate: bool,
    pub e_r: f64,
    pub e_t: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Perturbs `ground_truth`, registers from there and scores the result.
pub fn run_registration(
    sets: &[PointSet],
    ground_truth: &[RigidTransform],
    config: &RegistrationConfig,
    spec: &PerturbationSpec,
) -> Result<(RegistrationReport, RegistrationOutcome), crate::Error> {
    let initial = perturb(ground_truth, spec);
    let scene = Scene::new(sets.to_vec(), initial.clone())?;
    let started = Instant::now();
    let outcome = register(&scene, config)?;
    let seconds = started.elapsed().as_secs_f64();
    let (e_r, e_t) = score(&outcome.transforms, ground_truth)?;
    let (initial_e_r, initial_e_t) = score(&initial, ground_truth)?;
    let report = RegistrationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: None,
        config: *config,
        amplitude: spec.amplitude,
        seed: spec.seed,
        e_r,
        e_t,
        initial_e_r,
        initial_e_t,
        iterations: outcome.iterations(),
        converged: outcome.converged,
        seconds,
        phase_seconds: outcome.total_timings(),
        objective: outcome.traces.iter().map(|t| t.objective).collect(),
        transforms: outcome.transforms.clone(),
    };
    Ok((report, outcome))
}

pub fn run_trial(
    sets: &[PointSet],
    ground_truth: &[RigidTransform],
    config: &RegistrationConfig,
    amplitude: f64,
    trial: usize,
    seed: u64,
) -> TrialResult {
    let mut result = TrialResult {
        trial,
        seed,
        amplitude,
        clusters: config.clusters,
        eliminate: config.eliminate_invalid,
        e_r: f64::NAN,
        e_t: f64::NAN,
        iterations: 0,
        converged: false,
        seconds: 0.0,
        error: None,
    };
    let outcome = PerturbationSpec::new(amplitude, seed)
        .map_err(crate::Error::from)
        .and_then(|spec| run_registration(sets, ground_truth, config, &spec));
    match outcome {
        Ok((report, _)) => {
            result.e_r = report.e_r;
            result.e_t = report.e_t;
            result.iterations = report.iterations;
            result.converged = report.converged;
            result.seconds = report.seconds;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Mean, sample standard deviation and median of the successful trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Self { mean, std, median }
    }
}

/// Aggregate over the trials of one experimental cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub clusters: usize,
    pub eliminate: bool,
    pub amplitude: f64,
    pub trials: usize,
    pub failures: usize,
    pub e_r: Summary,
    pub e_t: Summary,
    pub seconds: Summary,
    pub results: Vec<TrialResult>,
}

impl CellSummary {
    pub fn from_trials(
        config: &RegistrationConfig,
        amplitude: f64,
        results: Vec<TrialResult>,
    ) -> Self {
        let pick = |f: fn(&TrialResult) -> f64| -> Vec<f64> {
            results.iter().filter(|r| r.ok()).map(f).collect()
        };
        Self {
            clusters: config.clusters,
            eliminate: config.eliminate_invalid,
            amplitude,
            trials: results.len(),
            failures: results.iter().filter(|r| !r.ok()).count(),
            e_r: Summary::of(&pick(|r| r.e_r)),
            e_t: Summary::of(&pick(|r| r.e_t)),
            seconds: Summary::of(&pick(|r| r.seconds)),
            results,
        }
    }
}

/// Common inputs of the sweep harnesses.
#[derive(Debug, Clone, Copy)]
pub struct SweepSetup<'a> {
    pub sets: &'a [PointSet],
    pub ground_truth: &'a [RigidTransform],
    pub config: RegistrationConfig,
    pub trials: usize,
    pub base_seed: u64,
}

impl SweepSetup<'_> {
    fn cell(&self, config: &RegistrationConfig, amplitude: f64) -> CellSummary {
        let results = (0..self.trials)
            .map(|j| {
                run_trial(
                    self.sets,
                    self.ground_truth,
                    config,
                    amplitude,
                    j,
                    trial_seed(self.base_seed, j),
                )
            })
            .collect();
        CellSummary::from_trials(config, amplitude, results)
    }
}

/// One row per cluster count, each from `trials` perturbations of size `amplitude`.
pub fn k_sweep(
    setup: &SweepSetup<'_>,
    cluster_counts: &[usize],
    amplitude: f64,
) -> Vec<CellSummary> {
    cluster_counts
        .iter()
        .map(|&k| {
            let config = RegistrationConfig {
                clusters: k,
                ..setup.config
            };
            setup.cell(&config, amplitude)
        })
        .collect()
}

/// Two rows per noise level, with and without elimination, on matched seeds.
pub fn ablation_elimination(setup: &SweepSetup<'_>, amplitudes: &[f64]) -> Vec<CellSummary> {
    let mut rows = Vec::with_capacity(2 * amplitudes.len());
    for &a in amplitudes {
        for eliminate in [true, false] {
            let config = RegistrationConfig {
                eliminate_invalid: eliminate,
                ..setup.config
            };
            rows.push(setup.cell(&config, a));
        }
    }
    rows
}

/// One row per perturbation amplitude.
pub fn noise_sweep(setup: &SweepSetup<'_>, amplitudes: &[f64]) -> Vec<CellSummary> {
    amplitudes
        .iter()
        .map(|&a| setup.cell(&setup.config, a))
        .collect()
}

/// Points of every view, under its pose, whose coordinate along `axis` lies
/// within `position +- thickness / 2`.
pub fn cross_section(
    scene: &Scene,
    axis: usize,
    position: f64,
    thickness: f64,
) -> Result<Vec<(usize, Point3)>, EvalError> {
    if axis > 2 {
        return Err(EvalError::BadAxis(axis));
    }
    if thickness.is_nan() || thickness <= 0.0 {
        return Err(EvalError::BadThickness(thickness));
    }
    let half = thickness / 2.0;
    Ok(scene
        .sets()
        .iter()
        .zip(scene.transforms())
        .flat_map(|(set, tf)| set.transformed(tf).map(move |p| (set.id(), p)))
        .filter(|(_, p)| (p[axis] - position).abs() <= half)
        .collect())
}
