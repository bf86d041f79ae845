//! Multi-view rigid point-set registration as joint K-means clustering.
//!
//! All views are pooled into a coarse model, K centroids are stride-sampled
//! from it, and the driver then alternates three steps until the poses settle:
//! label every transformed point with its nearest centroid (k-d tree search),
//! move each centroid to the mean of its members, and re-fit every view but the
//! first against the centroids with a weighted Kabsch solve. Points in
//! under-populated clusters can be excluded from the fit, which keeps regions
//! seen by a single view from pulling that view towards itself.
//!
//! ```
//! use kmreg::{register, RegistrationConfig, Scene};
//! use kmreg::dataset::{perturb, synth_scene, PerturbationSpec, Shape, SynthParams};
//!
//! let synth = synth_scene(&SynthParams {
//!     shape: Shape::Cube,
//!     points_per_view: 500,
//!     views: 3,
//!     overlap: 0.5,
//!     seed: 1,
//! })
//! .unwrap();
//! let start = perturb(&synth.ground_truth, &PerturbationSpec::new(0.01, 7).unwrap());
//! let scene = synth.scene.clone().with_transforms(start).unwrap();
//! let config = RegistrationConfig { clusters: 100, max_iterations: 50, ..Default::default() };
//! let outcome = register(&scene, &config).unwrap();
//! assert_eq!(outcome.transforms.len(), 3);
//! ```

pub mod alignment;
pub mod clustering;
pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod registration;
pub mod spatial_index;

pub use alignment::{solve_rigid, AlignmentError, Correspondences};
pub use clustering::{ClusterError, ClusterState};
pub use evaluation::{rotation_error, translation_error, EvalError, RegistrationReport};
pub use geometry::{GeometryError, Point3, PointSet, RigidTransform, Scene};
pub use registration::{
    register, IterationTrace, RegistrationConfig, RegistrationError, RegistrationOutcome,
};
pub use spatial_index::{IndexError, NnIndex};

use thiserror::Error;

/// Any error the library can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ply(#[from] dataset::PlyError),
    #[error(transparent)]
    Manifest(#[from] dataset::ManifestError),
    #[error(transparent)]
    Sampling(#[from] dataset::SamplingError),
    #[error(transparent)]
    Synth(#[from] dataset::SynthError),
}
