//! Synthetic multi-view scans of simple closed surfaces.
//!
//! The surface is sampled once with a jittered stratified grid, then split into
//! `N` azimuthal sectors around the z axis. Sectors are widened so that
//! neighbouring views share `overlap` of a sector's width; shared regions hold
//! the very same sample points in every view that covers them. All views are
//! emitted in the common frame, so the ground truth is the identity.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::SceneManifest;
use super::ply::{write_ply, PlyError, PlyFormat, PlyPrecision};
use crate::geometry::{Point3, PointSet, RigidTransform, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("overlap fraction must lie in (0, 1], got {0}")]
    BadOverlap(f64),
    #[error("need at least 16 points per view, got {0}")]
    TooFewPoints(usize),
    #[error("unknown shape '{0}' (expected sphere, cube or helix)")]
    UnknownShape(String),
    #[error("view {0} received no points")]
    EmptyView(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Unit sphere at the origin.
    Sphere,
    /// Surface of the cube `[-1, 1]^3`.
    Cube,
    /// A closed tube of radius 0.3 wound twice around a unit-radius helix.
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Sphere, Shape::Cube, Shape::Helix];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Helix => "helix",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| SynthError::UnknownShape(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub shape: Shape,
    pub points_per_view: usize,
    pub views: usize,
    pub overlap: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.views < 2 {
            return Err(SynthError::TooFewViews(self.views));
        }
        if !(self.overlap > 0.0 && self.overlap <= 1.0) {
            return Err(SynthError::BadOverlap(self.overlap));
        }
        if self.points_per_view < 16 {
            return Err(SynthError::TooFewPoints(self.points_per_view));
        }
        Ok(())
    }

    /// Fraction of the whole surface each view covers.
    pub fn coverage(&self) -> f64 {
        ((1.0 + self.overlap) / self.views as f64).min(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    /// Views in the common frame, all poses identity.
    pub scene: Scene,
    pub ground_truth: Vec<RigidTransform>,
    /// Every sample of the surface once, in generation order.
    pub surface: Vec<Point3>,
}

pub fn synth_scene(params: &SynthParams) -> Result<SynthScene, SynthError> {
    params.validate()?;
    let total = (params.points_per_view as f64 / params.coverage()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let surface = match params.shape {
        Shape::Sphere => sample_sphere(total, &mut rng),
        Shape::Cube => sample_cube(total, &mut rng),
        Shape::Helix => sample_helix(total, &mut rng),
    };

    // Rank samples by azimuth so sector widths are measured in sample count.
    let mut order: Vec<usize> = (0..surface.len()).collect();
    let azimuth = |p: &Point3| p.y.atan2(p.x).rem_euclid(TAU);
    order.sort_by(|&a, &b| {
        azimuth(&surface[a])
            .total_cmp(&azimuth(&surface[b]))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0.0; surface.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as f64 / surface.len() as f64;
    }

    let n = params.views;
    let width = params.coverage();
    let mut sets = Vec::with_capacity(n);
    for v in 0..n {
        let start = (v as f64 - params.overlap / 2.0) / n as f64;
        let points: Vec<Point3> = surface
            .iter()
            .zip(&rank)
            .filter(|(_, &u)| width >= 1.0 || (u - start).rem_euclid(1.0) < width)
            .map(|(p, _)| *p)
            .collect();
        if points.is_empty() {
            return Err(SynthError::EmptyView(v));
        }
        sets.push(PointSet::new(v, points).expect("non-empty finite samples"));
    }
    let scene = Scene::with_identity(sets).expect("at least two views");
    Ok(SynthScene {
        ground_truth: vec![RigidTransform::identity(); n],
        scene,
        surface,
    })
}

/// Writes each view as `view_XX.ply` plus `manifest.json` into `dir`.
pub fn save_scene(
    dir: &Path,
    name: &str,
    sets: &[PointSet],
    ground_truth: &[RigidTransform],
) -> Result<SceneManifest, PlyError> {
    let mut entries = Vec::with_capacity(sets.len());
    for (set, tf) in sets.iter().zip(ground_truth) {
        let file = format!("view_{:02}.ply", set.id());
        write_ply(
            set,
            dir.join(&file),
            PlyFormat::BinaryLittleEndian,
            PlyPrecision::Float64,
        )?;
        entries.push((file.into(), *tf));
    }
    Ok(SceneManifest::new(
        Some(name.to_string()),
        Some("model units".to_string()),
        entries,
    ))
}

fn jitter(rng: &mut ChaCha8Rng, cell: usize, cells: usize) -> f64 {
    (cell as f64 + rng.random::<f64>()) / cells as f64
}

/// Equal-area (z, azimuth) grid, one jittered sample per cell.
fn sample_sphere(total: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let rows = ((total as f64 / PI).sqrt().round() as usize).max(1);
    let cols = ((total as f64 / rows as f64).round() as usize).max(1);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let z = 2.0 * jitter(rng, i, rows) - 1.0;
            let phi = TAU * jitter(rng, j, cols);
            let r = (1.0 - z * z).max(0.0).sqrt();
            out.push(Point3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    out
}

fn sample_cube(total: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let side = ((total as f64 / 6.0).sqrt().round() as usize).max(1);
    let mut out = Vec::with_capacity(6 * side * side);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            for i in 0..side {
                for j in 0..side {
                    let a = 2.0 * jitter(rng, i, side) - 1.0;
                    let b = 2.0 * jitter(rng, j, side) - 1.0;
                    let mut p = [0.0; 3];
                    p[axis] = sign;
                    p[(axis + 1) % 3] = a;
                    p[(axis + 2) % 3] = b;
                    out.push(Point3::new(p[0], p[1], p[2]));
                }
            }
        }
    }
    out
}

const HELIX_RADIUS: f64 = 1.0;
const HELIX_TURNS: f64 = 2.0;
const HELIX_HEIGHT: f64 = 1.6;
const TUBE_RADIUS: f64 = 0.3;

fn helix_frame(s: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let theta = TAU * HELIX_TURNS * s;
    let center = Vector3::new(
        HELIX_RADIUS * theta.cos(),
        HELIX_RADIUS * theta.sin(),
        HELIX_HEIGHT * (s - 0.5),
    );
    let tangent = Vector3::new(
        -TAU * HELIX_TURNS * HELIX_RADIUS * theta.sin(),
        TAU * HELIX_TURNS * HELIX_RADIUS * theta.cos(),
        HELIX_HEIGHT,
    )
    .normalize();
    let radial = Vector3::new(theta.cos(), theta.sin(), 0.0);
    let binormal = tangent.cross(&radial);
    (center, radial, binormal)
}

/// Tube around the helix plus two flat end caps.
fn sample_helix(total: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let length = ((TAU * HELIX_TURNS * HELIX_RADIUS).powi(2) + HELIX_HEIGHT.powi(2)).sqrt();
    let tube_area = TAU * TUBE_RADIUS * length;
    let cap_area = PI * TUBE_RADIUS * TUBE_RADIUS;
    let spacing = ((tube_area + 2.0 * cap_area) / total as f64).sqrt();

    let along = ((length / spacing).round() as usize).max(1);
    let around = ((TAU * TUBE_RADIUS / spacing).round() as usize).max(3);
    let mut out = Vec::with_capacity(total);
    for i in 0..along {
        for j in 0..around {
            let s = jitter(rng, i, along);
            let psi = TAU * jitter(rng, j, around);
            let (c, u, w) = helix_frame(s);
            out.push(Point3::from(
                c + TUBE_RADIUS * (psi.cos() * u + psi.sin() * w),
            ));
        }
    }
    // Caps: equal-area rings in (r^2, angle).
    let rings = ((TUBE_RADIUS / spacing).round() as usize).max(1);
    for s in [0.0, 1.0] {
        let (c, u, w) = helix_frame(s);
        for i in 0..rings {
            let ring_cells = ((TAU * TUBE_RADIUS * (i as f64 + 0.5) / rings as f64 / spacing)
                .round() as usize)
                .max(1);
            for j in 0..ring_cells {
                let r = TUBE_RADIUS * jitter(rng, i, rings).sqrt();
                let psi = TAU * jitter(rng, j, ring_cells);
                out.push(Point3::from(c + r * (psi.cos() * u + psi.sin() * w)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial_index::NnIndex;

    fn params(shape: Shape, views: usize, overlap: f64) -> SynthParams {
        SynthParams {
            shape,
            points_per_view: 2000,
            views,
            overlap,
            seed: 5,
        }
    }

    #[test]
    fn full_overlap_pair_is_identical() {
        for shape in Shape::ALL {
            let s = synth_scene(&params(shape, 2, 1.0)).unwrap();
            assert_eq!(s.scene.sets()[0].points(), s.scene.sets()[1].points());
        }
    }

    #[test]
    fn view_sizes_near_target() {
        for shape in Shape::ALL {
            for (views, overlap) in [(2, 0.5), (8, 0.3), (6, 1.0)] {
                let s = synth_scene(&params(shape, views, overlap)).unwrap();
                for set in s.scene.sets() {
                    let ratio = set.len() as f64 / 2000.0;
                    assert!(
                        (0.9..=1.1).contains(&ratio),
                        "{shape} {views} {overlap}: {}",
                        set.len()
                    );
                }
            }
        }
    }

    #[test]
    fn sphere_union_covers_surface() {
        let s = synth_scene(&params(Shape::Sphere, 8, 0.3)).unwrap();
        let union: Vec<Point3> = s
            .scene
            .sets()
            .iter()
            .flat_map(|v| v.points().iter().copied())
            .collect();
        let distinct = s.surface.len();
        let spacing = (4.0 * PI / distinct as f64).sqrt();
        let index = NnIndex::build(&union).unwrap();
        // Dense Fibonacci reference sampling of the sphere.
        let golden = PI * (3.0 - 5f64.sqrt());
        let dense = 50_000;
        let mut worst = 0.0f64;
        for k in 0..dense {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / dense as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            let q = Point3::new(r * phi.cos(), r * phi.sin(), z);
            worst = worst.max(index.nearest(&q).1.sqrt());
        }
        assert!(worst < 2.0 * spacing, "gap {worst} vs spacing {spacing}");
    }

    #[test]
    fn adjacent_views_share_points() {
        let s = synth_scene(&params(Shape::Cube, 4, 0.5)).unwrap();
        let a = s.scene.sets()[0].points();
        let b = s.scene.sets()[1].points();
        let shared = a.iter().filter(|p| b.contains(p)).count();
        // Neighbours share half a sector, i.e. a third of each view.
        let expected = a.len() as f64 / 3.0;
        assert!(
            (shared as f64 - expected).abs() < 0.05 * a.len() as f64,
            "{shared}"
        );
    }

    #[test]
    fn samples_lie_on_the_surface() {
        let sphere = synth_scene(&params(Shape::Sphere, 3, 0.5)).unwrap();
        assert!(sphere
            .surface
            .iter()
            .all(|p| (p.coords.norm() - 1.0).abs() < 1e-12));
        let cube = synth_scene(&params(Shape::Cube, 3, 0.5)).unwrap();
        assert!(cube
            .surface
            .iter()
            .all(|p| (p.coords.amax() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_scene(&params(Shape::Helix, 4, 0.3)).unwrap();
        let b = synth_scene(&params(Shape::Helix, 4, 0.3)).unwrap();
        assert_eq!(a.scene, b.scene);
        let mut p = params(Shape::Helix, 4, 0.3);
        p.seed = 6;
        assert_ne!(synth_scene(&p).unwrap().scene, a.scene);
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(
            synth_scene(&params(Shape::Sphere, 1, 0.3)).unwrap_err(),
            SynthError::TooFewViews(1)
        );
        assert_eq!(
            synth_scene(&params(Shape::Sphere, 4, 0.0)).unwrap_err(),
            SynthError::BadOverlap(0.0)
        );
        assert_eq!(
            synth_scene(&params(Shape::Sphere, 4, 1.5)).unwrap_err(),
            SynthError::BadOverlap(1.5)
        );
        assert!("torus".parse::<Shape>().is_err());
        assert_eq!("cube".parse::<Shape>().unwrap(), Shape::Cube);
    }
}
