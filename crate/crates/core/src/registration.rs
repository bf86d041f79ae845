//! The registration driver: alternate nearest-centroid assignment, centroid
//! update and per-view rigid re-estimation until the poses stop moving.

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{solve_pairs, AlignmentError};
use crate::clustering::{
    assign, compute_weights, full_objective, objective, seed_centroids, unit_weights,
    update_centroids, ClusterError, ClusterState,
};
use crate::geometry::{RigidTransform, Scene};
use crate::spatial_index::{IndexError, NnIndex};

pub const DEFAULT_CLUSTERS: usize = 1500;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("view {view} could not be estimated in any iteration: {reason}")]
    ViewNeverEstimated { view: usize, reason: AlignmentError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Number of clusters K.
    pub clusters: usize,
    /// Iteration cap Q.
    pub max_iterations: usize,
    /// Threshold on the per-iteration pose change.
    pub epsilon: f64,
    /// Zero the weight of points in under-populated clusters.
    pub eliminate_invalid: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            epsilon: DEFAULT_EPSILON,
            eliminate_invalid: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.clusters == 0 {
            return Err(RegistrationError::Config("K must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::Config("Q must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(RegistrationError::Config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in each phase of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub index_build: f64,
    pub assignment: f64,
    pub centroid_update: f64,
    pub estimation: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.index_build + self.assignment + self.centroid_update + self.estimation
    }

    pub fn accumulate(&mut self, other: &PhaseTimings) {
        self.index_build += other.index_build;
        self.assignment += other.assignment;
        self.centroid_update += other.centroid_update;
        self.estimation += other.estimation;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Joint objective over views 2..N with the weights in force, after estimation.
    pub objective: f64,
    /// The same sum over all views, view 1 included.
    pub full_objective: f64,
    /// `max_i |dR_i|_F + |dt_i| / D`
    pub max_change: f64,
    pub timings: PhaseTimings,
    pub empty_clusters: usize,
    pub eliminated_points: usize,
    pub skipped_views: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RegistrationOutcome {
    /// Final poses in view order; entry 0 is the input pose of view 1.
    pub transforms: Vec<RigidTransform>,
    pub traces: Vec<IterationTrace>,
    pub converged: bool,
    /// Clustering state of the last iteration.
    pub state: ClusterState,
}

impl RegistrationOutcome {
    pub fn iterations(&self) -> usize {
        self.traces.len()
    }

    pub fn total_timings(&self) -> PhaseTimings {
        let mut t = PhaseTimings::default();
        for tr in &self.traces {
            t.accumulate(&tr.timings);
        }
        t
    }
}

/// Registers all views of `scene`, starting from its current poses.
///
/// View 1 is the reference frame and keeps its pose. Each iteration builds a
/// k-d tree over the centroids, labels every point, recomputes the centroids
/// from all views, then re-solves views 2..N against the new centroids.
pub fn register(
    scene: &Scene,
    config: &RegistrationConfig,
) -> Result<RegistrationOutcome, RegistrationError> {
    config.validate()?;
    let n = scene.num_views();
    let diagonal = match scene.bbox_diagonal() {
        d if d > 0.0 => d,
        _ => 1.0,
    };

    let mut current = scene.clone();
    let mut centroids = seed_centroids(scene, config.clusters)?;
    let mut traces = Vec::new();
    let mut ever_estimated = vec![false; n];
    let mut last_failure: Vec<Option<AlignmentError>> = vec![None; n];
    let mut converged = false;
    let mut q = 0usize;

    let state = loop {
        q += 1;
        let mut timings = PhaseTimings::default();

        let t = Instant::now();
        let index = NnIndex::build(&centroids)?;
        timings.index_build = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let assignment = assign(&current, &index);
        timings.assignment = t.elapsed().as_secs_f64();

        let t = Instant::now();
        centroids = update_centroids(&current, &assignment, &centroids);
        let weights = if config.eliminate_invalid {
            compute_weights(&assignment)
        } else {
            unit_weights(&assignment)
        };
        timings.centroid_update = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let estimates: Vec<Result<RigidTransform, AlignmentError>> = (1..n)
            .into_par_iter()
            .map(|i| {
                let pairs = current.sets()[i]
                    .points()
                    .iter()
                    .zip(&assignment.labels[i])
                    .zip(&weights[i])
                    .filter(|(_, &w)| w)
                    .map(|((p, &l), _)| (p, &centroids[l]));
                solve_pairs(pairs)
            })
            .collect();
        timings.estimation = t.elapsed().as_secs_f64();

        let mut next = current.transforms().to_vec();
        let mut skipped_views = Vec::new();
        let mut max_change = 0.0f64;
        for (i, est) in (1..n).zip(estimates) {
            match est {
                Ok(tf) => {
                    let old = &next[i];
                    let change =
                        tf.rotation_distance(old) + tf.translation_distance(old) / diagonal;
                    max_change = max_change.max(change);
                    next[i] = tf;
                    ever_estimated[i] = true;
                }
                Err(e) => {
                    warn!("iteration {q}: view {i} skipped: {e}");
                    skipped_views.push(i);
                    last_failure[i] = Some(e);
                }
            }
        }
        current
            .set_transforms(next)
            .expect("transform count is preserved");

        let empty_clusters = assignment.empty_clusters();
        let state = ClusterState {
            centroids: centroids.clone(),
            assignment,
            weights,
        };
        let trace = IterationTrace {
            iteration: q,
            objective: objective(&current, &state),
            full_objective: full_objective(&current, &state),
            max_change,
            timings,
            empty_clusters,
            eliminated_points: state.eliminated(),
            skipped_views,
        };
        debug!(
            "iteration {q}: objective {:.6e}, change {:.3e}, empty {}, eliminated {}",
            trace.objective, trace.max_change, trace.empty_clusters, trace.eliminated_points
        );
        traces.push(trace);

        if max_change < config.epsilon {
            converged = true;
            break state;
        }
        if q > config.max_iterations {
            break state;
        }
    };

    if let Some(view) = (1..n).find(|&i| !ever_estimated[i]) {
        return Err(RegistrationError::ViewNeverEstimated {
            view,
            reason: last_failure[view]
                .clone()
                .expect("a view that was never estimated has a failure"),
        });
    }

    Ok(RegistrationOutcome {
        transforms: current.transforms().to_vec(),
        traces,
        converged,
        state,
    })
}
