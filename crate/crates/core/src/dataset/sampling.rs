//! Down-sampling and pose perturbation.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointSet, RigidTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("down-sampling factor must be at least 1")]
    ZeroFactor,
    #[error("perturbation amplitude must be finite and non-negative, got {0}")]
    BadAmplitude(f64),
}

/// Keeps points `0, S, 2S, ...` in order.
pub fn downsample(ps: &PointSet, factor: usize) -> Result<PointSet, SamplingError> {
    if factor == 0 {
        return Err(SamplingError::ZeroFactor);
    }
    let points = ps.points().iter().step_by(factor).copied().collect();
    Ok(PointSet::new(ps.id(), points).expect("the first point is always kept"))
}

/// Uniform noise of half-width `amplitude`, shared by Euler angles (radians)
/// and translations (model units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(amplitude: f64, seed: u64) -> Result<Self, SamplingError> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(SamplingError::BadAmplitude(amplitude));
        }
        Ok(Self { amplitude, seed })
    }
}

/// Offsets every pose except the first by a random rigid motion.
///
/// For view `i >= 2` six values are drawn from `U[-a, a]`: three Euler XYZ
/// angles for a rotation left-multiplied onto `R_i`, and three offsets added
/// to `t_i`.
pub fn perturb(poses: &[RigidTransform], spec: &PerturbationSpec) -> Vec<RigidTransform> {
    let a = spec.amplitude;
    if a == 0.0 {
        return poses.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    poses
        .iter()
        .enumerate()
        .map(|(i, tf)| {
            if i == 0 {
                return *tf;
            }
            let mut draw = || rng.random_range(-a..=a);
            let (rx, ry, rz) = (draw(), draw(), draw());
            let dt = Vector3::new(draw(), draw(), draw());
            let delta = RigidTransform::from_euler_xyz(rx, ry, rz, Vector3::zeros());
            RigidTransform::from_parts(delta.rotation() * tf.rotation(), tf.translation() + dt)
                .expect("product of rotations is a rotation")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn poses(n: usize) -> Vec<RigidTransform> {
        (0..n)
            .map(|i| {
                RigidTransform::from_euler_xyz(
                    0.1 * i as f64,
                    -0.2,
                    0.05 * i as f64,
                    Vector3::new(i as f64, 0.5, -1.0),
                )
            })
            .collect()
    }

    #[test]
    fn downsample_cases() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let ps = PointSet::new(2, pts).unwrap();
        assert_eq!(downsample(&ps, 1).unwrap(), ps);
        let d = downsample(&ps, 8).unwrap();
        assert_eq!(d.points(), &[Point3::origin(), Point3::new(8.0, 0.0, 0.0)]);
        assert_eq!(d.id(), 2);
        assert_eq!(downsample(&ps, 0).unwrap_err(), SamplingError::ZeroFactor);
    }

    #[test]
    fn downsample_bunny_scale_count() {
        let ps = PointSet::new(0, vec![Point3::origin(); 1_362_272]).unwrap();
        assert_eq!(downsample(&ps, 8).unwrap().len(), 170_284);
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let p = poses(5);
        assert_eq!(perturb(&p, &PerturbationSpec::new(0.0, 3).unwrap()), p);
    }

    #[test]
    fn seeded_and_deterministic() {
        let p = poses(6);
        let spec = PerturbationSpec::new(0.02, 77).unwrap();
        let a = perturb(&p, &spec);
        assert_eq!(a, perturb(&p, &spec));
        assert_eq!(a[0], p[0]);
        assert!(a[1..].iter().zip(&p[1..]).all(|(x, y)| x != y));
        assert_ne!(a, perturb(&p, &PerturbationSpec::new(0.02, 78).unwrap()));
    }

    #[test]
    fn perturbation_is_bounded() {
        let p = poses(3);
        let a = 0.02;
        for seed in 0..1000 {
            let out = perturb(&p, &PerturbationSpec::new(a, seed).unwrap());
            for (x, y) in out[1..].iter().zip(&p[1..]) {
                assert!(x.rotation_distance(y) <= 2.0 * 3f64.sqrt() * a);
                assert!(x.translation_distance(y) <= 3f64.sqrt() * a + 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_amplitude() {
        assert!(PerturbationSpec::new(-0.1, 0).is_err());
        assert!(PerturbationSpec::new(f64::NAN, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn downsample_length(n in 1usize..500, s in 1usize..40) {
                let ps = PointSet::new(0, vec![Point3::origin(); n]).unwrap();
                prop_assert_eq!(downsample(&ps, s).unwrap().len(), n.div_ceil(s));
            }
        }
    }
}
