//! Scan ingestion, manifests, down-sampling, perturbation and synthetic scenes.

mod manifest;
mod ply;
mod sampling;
mod synth;

pub use manifest::{load_scene, LoadedScene, ManifestError, ManifestView, SceneManifest};
pub use ply::{load_ply, parse_ply, write_ply, write_ply_to, PlyError, PlyFormat, PlyPrecision};
pub use sampling::{downsample, perturb, PerturbationSpec, SamplingError};
pub use synth::{save_scene, synth_scene, Shape, SynthError, SynthParams, SynthScene};
