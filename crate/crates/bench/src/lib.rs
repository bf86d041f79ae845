//! Shared fixtures for the benchmarks.

use kmreg::dataset::{perturb, synth_scene, PerturbationSpec, Shape, SynthParams};
use kmreg::{Point3, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points in `[-1, 1]^3`.
pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

/// 8-view synthetic sphere with perturbed starting poses.
pub fn sphere_scene(points_per_view: usize, amplitude: f64) -> Scene {
    let synth = synth_scene(&SynthParams {
        shape: Shape::Sphere,
        points_per_view,
        views: 8,
        overlap: 0.3,
        seed: 1,
    })
    .expect("valid parameters");
    let start = perturb(
        &synth.ground_truth,
        &PerturbationSpec::new(amplitude, 7).expect("valid amplitude"),
    );
    synth
        .scene
        .with_transforms(start)
        .expect("one pose per view")
}
