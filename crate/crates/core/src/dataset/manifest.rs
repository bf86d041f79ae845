//! Scene manifests: a JSON list of PLY files with ground-truth poses.
//!
//! ```json
//! {
//!   "name": "bunny",
//!   "units": "metres",
//!   "views": [
//!     { "path": "bun000.ply", "pose": [1, 0, 0, 0,  0, 1, 0, 0,  0, 0, 1, 0] }
//!   ]
//! }
//! ```
//!
//! `pose` is the row-major 3x4 matrix `[R | t]` mapping the view's points into
//! the common frame. Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ply::{load_ply, PlyError};
use crate::geometry::{GeometryError, PointSet, RigidTransform};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest lists {0} views; at least 2 are required")]
    TooFewViews(usize),
    #[error("view {view}: {source}")]
    Pose {
        view: usize,
        #[source]
        source: GeometryError,
    },
    #[error("view {view} ({path}): {source}")]
    Ply {
        view: usize,
        path: PathBuf,
        #[source]
        source: PlyError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub path: PathBuf,
    pub pose: [f64; 12],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    pub views: Vec<ManifestView>,
}

/// Point sets and their ground-truth poses, as loaded from a manifest.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub name: Option<String>,
    pub sets: Vec<PointSet>,
    pub ground_truth: Vec<RigidTransform>,
}

impl SceneManifest {
    pub fn new(
        name: Option<String>,
        units: Option<String>,
        entries: impl IntoIterator<Item = (PathBuf, RigidTransform)>,
    ) -> Self {
        Self {
            name,
            units,
            views: entries
                .into_iter()
                .map(|(path, tf)| ManifestView {
                    path,
                    pose: tf.to_row_major_3x4(),
                })
                .collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: SceneManifest =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        if manifest.views.len() < 2 {
            return Err(ManifestError::TooFewViews(manifest.views.len()));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn poses(&self) -> Result<Vec<RigidTransform>, ManifestError> {
        self.views
            .iter()
            .enumerate()
            .map(|(view, v)| {
                RigidTransform::from_row_major_3x4(&v.pose)
                    .map_err(|source| ManifestError::Pose { view, source })
            })
            .collect()
    }

    /// Loads every listed PLY, resolving relative paths against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<LoadedScene, ManifestError> {
        if self.views.len() < 2 {
            return Err(ManifestError::TooFewViews(self.views.len()));
        }
        let ground_truth = self.poses()?;
        let sets = self
            .views
            .iter()
            .enumerate()
            .map(|(view, v)| {
                let path = if v.path.is_absolute() {
                    v.path.clone()
                } else {
                    base_dir.join(&v.path)
                };
                load_ply(&path, view).map_err(|source| ManifestError::Ply { view, path, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LoadedScene {
            name: self.name.clone(),
            sets,
            ground_truth,
        })
    }
}

/// Reads a manifest file and every PLY it lists.
pub fn load_scene(manifest_path: impl AsRef<Path>) -> Result<LoadedScene, ManifestError> {
    let manifest_path = manifest_path.as_ref();
    let manifest = SceneManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest.load(base)
}
