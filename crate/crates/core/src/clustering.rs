//! K-means machinery over a multi-view scene: centroid seeding, nearest-centroid
//! assignment, centroid update, validity weights, and the joint objective.
//!
//! A plain Lloyd's K-means over a single point list is kept here as well; it is
//! the reference the scene kernels are checked against.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Point3, Scene};
use crate::spatial_index::NnIndex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },
}

/// Per-view labels plus the cluster sizes they imply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// `labels[i][j]` is the cluster of point `j` in view `i`.
    pub labels: Vec<Vec<usize>>,
    pub cardinalities: Vec<usize>,
}

impl Assignment {
    pub fn num_clusters(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn num_points(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }

    pub fn empty_clusters(&self) -> usize {
        self.cardinalities.iter().filter(|&&c| c == 0).count()
    }
}

/// Full clustering state: centroids, labels, sizes and binary validity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centroids: Vec<Point3>,
    pub assignment: Assignment,
    /// `weights[i][j]` is `w_ij`.
    pub weights: Vec<Vec<bool>>,
}

impl ClusterState {
    pub fn eliminated(&self) -> usize {
        self.weights.iter().flatten().filter(|w| !**w).count()
    }
}

/// Stride-samples `k` initial centroids from the coarse model built from the
/// scene's current poses: entries `floor(m * M / k)` for `m = 0..k`.
pub fn seed_centroids(scene: &Scene, k: usize) -> Result<Vec<Point3>, ClusterError> {
    let model = scene.coarse_model();
    stride_sample(&model, k)
}

pub(crate) fn stride_sample(points: &[Point3], k: usize) -> Result<Vec<Point3>, ClusterError> {
    let m = points.len();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > m {
        return Err(ClusterError::TooManyClusters { k, points: m });
    }
    Ok((0..k)
        .map(|i| points[((i as u128 * m as u128) / k as u128) as usize])
        .collect())
}

/// Labels every transformed point with its nearest centroid.
///
/// Runs on the current rayon pool; the result does not depend on its size.
pub fn assign(scene: &Scene, index: &NnIndex) -> Assignment {
    let labels: Vec<Vec<usize>> = scene
        .sets()
        .iter()
        .zip(scene.transforms())
        .map(|(set, tf)| {
            set.points()
                .par_iter()
                .with_min_len(1024)
                .map(|p| index.nearest(&tf.apply(p)).0)
                .collect()
        })
        .collect();
    let cardinalities = count_labels(&labels, index.len());
    Assignment {
        labels,
        cardinalities,
    }
}

pub(crate) fn count_labels(labels: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &l in labels.iter().flatten() {
        counts[l] += 1;
    }
    counts
}

/// Mean of the transformed points in each cluster, over every view. Empty
/// clusters keep their entry from `previous`.
pub fn update_centroids(
    scene: &Scene,
    assignment: &Assignment,
    previous: &[Point3],
) -> Vec<Point3> {
    let k = previous.len();
    let mut sums = vec![Vector3::<f64>::zeros(); k];
    for ((set, tf), labels) in scene
        .sets()
        .iter()
        .zip(scene.transforms())
        .zip(&assignment.labels)
    {
        for (p, &l) in set.points().iter().zip(labels) {
            sums[l] += tf.apply(p).coords;
        }
    }
    sums.iter()
        .zip(&assignment.cardinalities)
        .zip(previous)
        .map(|((s, &n), old)| {
            if n == 0 {
                *old
            } else {
                Point3::from(s / n as f64)
            }
        })
        .collect()
}

/// `w_ij = 0` iff the point's cluster holds fewer than four fifths of the mean
/// cluster size `M / K` (empty clusters included in the mean).
pub fn compute_weights(assignment: &Assignment) -> Vec<Vec<bool>> {
    let k = assignment.num_clusters() as u128;
    let m = assignment.num_points() as u128;
    // card < (4/5)(M/K)  <=>  5 K card < 4 M
    let valid: Vec<bool> = assignment
        .cardinalities
        .iter()
        .map(|&c| 5 * k * c as u128 >= 4 * m)
        .collect();
    assignment
        .labels
        .iter()
        .map(|view| view.iter().map(|&l| valid[l]).collect())
        .collect()
}

/// All-ones weights shaped like `assignment`.
pub fn unit_weights(assignment: &Assignment) -> Vec<Vec<bool>> {
    assignment
        .labels
        .iter()
        .map(|v| vec![true; v.len()])
        .collect()
}

/// `sum_{i >= 2} sum_j w_ij |R_i p_ij + t_i - mu_c(ij)|^2`; view 1 is the
/// fixed reference and does not contribute.
pub fn objective(scene: &Scene, state: &ClusterState) -> f64 {
    view_objective_sum(scene, state, 1)
}

/// The same sum taken over every view, view 1 included.
pub fn full_objective(scene: &Scene, state: &ClusterState) -> f64 {
    view_objective_sum(scene, state, 0)
}

fn view_objective_sum(scene: &Scene, state: &ClusterState, first_view: usize) -> f64 {
    scene
        .sets()
        .iter()
        .zip(scene.transforms())
        .zip(state.assignment.labels.iter().zip(&state.weights))
        .skip(first_view)
        .map(|((set, tf), (labels, weights))| {
            set.points()
                .iter()
                .zip(labels)
                .zip(weights)
                .filter(|(_, &w)| w)
                .map(|((p, &l), _)| (tf.apply(p) - state.centroids[l]).norm_squared())
                .sum::<f64>()
        })
        .sum()
}

/// Outcome of a plain Lloyd's K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydResult {
    pub centroids: Vec<Point3>,
    pub labels: Vec<usize>,
    /// Sum of squared point-to-centroid distances after each iteration.
    pub distortion: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's K-means from stride-sampled seeds.
pub fn lloyd_kmeans(
    data: &[Point3],
    k: usize,
    max_iter: usize,
) -> Result<LloydResult, ClusterError> {
    let seeds = stride_sample(data, k)?;
    Ok(lloyd_kmeans_from(data, seeds, max_iter))
}

/// Lloyd's K-means from explicit seeds, by exhaustive scan. Stops once the
/// labels repeat or after `max_iter` iterations.
pub fn lloyd_kmeans_from(data: &[Point3], seeds: Vec<Point3>, max_iter: usize) -> LloydResult {
    let k = seeds.len();
    let mut centroids = seeds;
    let mut labels: Vec<usize> = Vec::new();
    let mut distortion = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next: Vec<usize> = data
            .iter()
            .map(|x| {
                let mut best = (0, f64::INFINITY);
                for (c, mu) in centroids.iter().enumerate() {
                    let d = (x - mu).norm_squared();
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best.0
            })
            .collect();
        let mut sums = vec![Vector3::<f64>::zeros(); k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&next) {
            sums[l] += x.coords;
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = Point3::from(sums[c] / counts[c] as f64);
            }
        }
        distortion.push(
            data.iter()
                .zip(&next)
                .map(|(x, &l)| (x - centroids[l]).norm_squared())
                .sum(),
        );
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
    }
    LloydResult {
        centroids,
        labels,
        distortion,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointSet, RigidTransform};
    use crate::spatial_index::brute_force_nearest;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, center: [f64; 3], spread: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    center[0] + rng.random_range(-spread..spread),
                    center[1] + rng.random_range(-spread..spread),
                    center[2] + rng.random_range(-spread..spread),
                )
            })
            .collect()
    }

    fn random_scene(seed: u64, views: usize, per_view: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets = (0..views)
            .map(|i| PointSet::new(i, cloud(&mut rng, per_view, [0.0; 3], 1.0)).unwrap())
            .collect();
        let tfs = (0..views)
            .map(|_| {
                RigidTransform::from_euler_xyz(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    Vector3::new(
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ),
                )
            })
            .collect();
        Scene::new(sets, tfs).unwrap()
    }

    fn indexed(n: usize) -> Vec<Point3> {
        (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()
    }

    fn state_for(scene: &Scene, centroids: Vec<Point3>) -> ClusterState {
        let idx = NnIndex::build(&centroids).unwrap();
        let assignment = assign(scene, &idx);
        let weights = unit_weights(&assignment);
        ClusterState {
            centroids,
            assignment,
            weights,
        }
    }

    #[test]
    fn seeding_stride() {
        let a = PointSet::new(0, indexed(2)).unwrap();
        let b = PointSet::new(
            1,
            indexed(2)
                .into_iter()
                .map(|p| p + Vector3::new(2.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let scene = Scene::with_identity(vec![a, b]).unwrap();
        assert_eq!(seed_centroids(&scene, 4).unwrap(), indexed(4));

        let a = PointSet::new(0, indexed(4)).unwrap();
        let b = PointSet::new(
            1,
            indexed(4)
                .into_iter()
                .map(|p| p + Vector3::new(4.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let scene = Scene::with_identity(vec![a, b]).unwrap();
        let xs: Vec<f64> = seed_centroids(&scene, 4)
            .unwrap()
            .iter()
            .map(|p| p.x)
            .collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0]);

        assert_eq!(
            seed_centroids(&scene, 0).unwrap_err(),
            ClusterError::ZeroClusters
        );
        assert_eq!(
            seed_centroids(&scene, 9).unwrap_err(),
            ClusterError::TooManyClusters { k: 9, points: 8 }
        );
    }

    #[test]
    fn seeds_come_from_the_transformed_model() {
        let scene = random_scene(5, 2, 37);
        // Independent reconstruction of the coarse model.
        let mut model = Vec::new();
        for (s, tf) in scene.sets().iter().zip(scene.transforms()) {
            for p in s.points() {
                model.push(tf.rotation() * p.coords + tf.translation());
            }
        }
        for c in seed_centroids(&scene, 20).unwrap() {
            assert!(model.contains(&c.coords));
        }
    }

    #[test]
    fn assign_single_cluster() {
        let scene = random_scene(1, 3, 50);
        let idx = NnIndex::build(&[Point3::origin()]).unwrap();
        let a = assign(&scene, &idx);
        assert!(a.labels.iter().flatten().all(|&l| l == 0));
        assert_eq!(a.cardinalities, vec![150]);
    }

    #[test]
    fn assign_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = PointSet::new(
            0,
            [
                cloud(&mut rng, 20, [0.0; 3], 0.5),
                cloud(&mut rng, 20, [10.0, 0.0, 0.0], 0.5),
            ]
            .concat(),
        )
        .unwrap();
        let b = PointSet::new(1, cloud(&mut rng, 20, [10.0, 0.0, 0.0], 0.5)).unwrap();
        let scene = Scene::with_identity(vec![a, b]).unwrap();
        let idx = NnIndex::build(&[Point3::origin(), Point3::new(10.0, 0.0, 0.0)]).unwrap();
        let asg = assign(&scene, &idx);
        assert!(asg.labels[0][..20].iter().all(|&l| l == 0));
        assert!(asg.labels[0][20..].iter().all(|&l| l == 1));
        assert!(asg.labels[1].iter().all(|&l| l == 1));
        assert_eq!(asg.cardinalities, vec![20, 40]);
    }

    #[test]
    fn assign_matches_brute_force() {
        let scene = random_scene(9, 4, 500);
        let centroids = seed_centroids(&scene, 100).unwrap();
        let idx = NnIndex::build(&centroids).unwrap();
        let a = assign(&scene, &idx);
        for ((set, tf), labels) in scene.sets().iter().zip(scene.transforms()).zip(&a.labels) {
            for (p, &l) in set.points().iter().zip(labels) {
                assert_eq!(l, brute_force_nearest(&centroids, &tf.apply(p)).0);
            }
        }
        assert_eq!(a.cardinalities.iter().sum::<usize>(), scene.num_points());
    }

    #[test]
    fn update_simple_means() {
        let a = PointSet::new(0, vec![Point3::origin(), Point3::new(5.0, 5.0, 5.0)]).unwrap();
        let b = PointSet::new(1, vec![Point3::new(2.0, 0.0, 0.0)]).unwrap();
        let shift = RigidTransform::from_translation(Vector3::new(0.0, 1.0, 0.0));
        let scene = Scene::new(vec![a, b], vec![RigidTransform::identity(), shift]).unwrap();
        let asg = Assignment {
            labels: vec![vec![0, 1], vec![0]],
            cardinalities: vec![2, 1, 0],
        };
        let old = vec![
            Point3::origin(),
            Point3::origin(),
            Point3::new(-7.0, 0.0, 0.0),
        ];
        let c = update_centroids(&scene, &asg, &old);
        assert_eq!(c[0], Point3::new(1.0, 0.5, 0.0));
        assert_eq!(c[1], Point3::new(5.0, 5.0, 5.0));
        assert_eq!(c[2], old[2], "empty cluster keeps its centroid");
    }

    #[test]
    fn update_matches_kahan_reference() {
        let scene = random_scene(21, 5, 400);
        let centroids = seed_centroids(&scene, 60).unwrap();
        let idx = NnIndex::build(&centroids).unwrap();
        let asg = assign(&scene, &idx);
        let got = update_centroids(&scene, &asg, &centroids);

        // Reverse-order compensated summation, per axis.
        let mut sum = vec![[0.0f64; 3]; 60];
        let mut comp = vec![[0.0f64; 3]; 60];
        let mut count = vec![0usize; 60];
        for i in (0..scene.num_views()).rev() {
            let tf = scene.transforms()[i];
            let pts = scene.sets()[i].points();
            for j in (0..pts.len()).rev() {
                let l = asg.labels[i][j];
                let q = tf.apply(&pts[j]);
                for a in 0..3 {
                    let y = q[a] - comp[l][a];
                    let t = sum[l][a] + y;
                    comp[l][a] = (t - sum[l][a]) - y;
                    sum[l][a] = t;
                }
                count[l] += 1;
            }
        }
        for k in 0..60 {
            if count[k] == 0 {
                assert_eq!(got[k], centroids[k]);
                continue;
            }
            for a in 0..3 {
                assert!((got[k][a] - sum[k][a] / count[k] as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weights_equal_sizes() {
        let asg = Assignment {
            labels: vec![vec![0, 1, 2], vec![2, 1, 0]],
            cardinalities: vec![2, 2, 2],
        };
        assert!(compute_weights(&asg).iter().flatten().all(|&w| w));
    }

    #[test]
    fn weights_strict_threshold() {
        // M = 100, K = 10: mean 10, threshold 8.
        let sizes = [7usize, 8, 10, 10, 10, 10, 10, 10, 12, 13];
        assert_eq!(sizes.iter().sum::<usize>(), 100);
        let mut labels = Vec::new();
        for (k, &n) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(k, n));
        }
        let asg = Assignment {
            labels: vec![labels[..50].to_vec(), labels[50..].to_vec()],
            cardinalities: sizes.to_vec(),
        };
        let w = compute_weights(&asg);
        let flat: Vec<bool> = w.iter().flatten().copied().collect();
        for (j, &l) in labels.iter().enumerate() {
            assert_eq!(flat[j], l != 0, "cluster {l}");
        }
        assert_eq!(compute_weights(&asg), w, "idempotent");
    }

    #[test]
    fn objective_cases() {
        let a = PointSet::new(0, vec![Point3::new(9.0, 9.0, 9.0)]).unwrap();
        let b = PointSet::new(1, vec![Point3::new(2.0, 0.0, 0.0)]).unwrap();
        let scene = Scene::with_identity(vec![a, b]).unwrap();
        let state = ClusterState {
            centroids: vec![Point3::origin()],
            assignment: Assignment {
                labels: vec![vec![0], vec![0]],
                cardinalities: vec![2],
            },
            weights: vec![vec![true], vec![true]],
        };
        // View 1 is excluded even though it is far from its centroid.
        assert_eq!(objective(&scene, &state), 4.0);

        let mut exact = state.clone();
        exact.centroids = vec![Point3::new(2.0, 0.0, 0.0)];
        assert_eq!(objective(&scene, &exact), 0.0);
    }

    #[test]
    fn objective_matches_flat_loop() {
        let scene = random_scene(4, 3, 200);
        let centroids = seed_centroids(&scene, 30).unwrap();
        let mut state = state_for(&scene, centroids);
        state.weights = compute_weights(&state.assignment);
        let mut reference = 0.0;
        for i in 1..scene.num_views() {
            let (r, t) = (
                scene.transforms()[i].rotation(),
                scene.transforms()[i].translation(),
            );
            for (j, p) in scene.sets()[i].points().iter().enumerate() {
                if state.weights[i][j] {
                    let mu = state.centroids[state.assignment.labels[i][j]];
                    let d = r * p.coords + t - mu.coords;
                    reference += d.x * d.x + d.y * d.y + d.z * d.z;
                }
            }
        }
        assert!((objective(&scene, &state) - reference).abs() < 1e-9);
    }

    #[test]
    fn assignment_and_update_do_not_increase_objective() {
        for seed in 0..10 {
            let scene = random_scene(100 + seed, 3, 300);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centroids = cloud(&mut rng, 40, [0.0; 3], 1.0);
            // Arbitrary labels as the starting point.
            let labels: Vec<Vec<usize>> = scene
                .sets()
                .iter()
                .map(|s| (0..s.len()).map(|_| rng.random_range(0..40)).collect())
                .collect();
            let cardinalities = count_labels(&labels, 40);
            let arbitrary = ClusterState {
                centroids: centroids.clone(),
                weights: labels.iter().map(|v| vec![true; v.len()]).collect(),
                assignment: Assignment {
                    labels,
                    cardinalities,
                },
            };
            let assigned = state_for(&scene, centroids);
            assert!(objective(&scene, &assigned) <= objective(&scene, &arbitrary) + 1e-9);

            let updated = ClusterState {
                centroids: update_centroids(&scene, &assigned.assignment, &assigned.centroids),
                ..assigned.clone()
            };
            assert!(full_objective(&scene, &updated) <= full_objective(&scene, &assigned) + 1e-9);
        }
    }

    #[test]
    fn lloyd_distinct_points() {
        let data = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.0),
        ];
        let r = lloyd_kmeans(&data, 3, 10).unwrap();
        assert_eq!(*r.distortion.last().unwrap(), 0.0);
        let mut l = r.labels.clone();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 3);
        assert!(lloyd_kmeans(&data, 4, 10).is_err());
    }

    #[test]
    fn lloyd_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = cloud(&mut rng, 30, [0.0; 3], 1.0);
        let b = cloud(&mut rng, 30, [20.0, 0.0, 0.0], 1.0);
        let data = [a.clone(), b.clone()].concat();
        let r = lloyd_kmeans_from(&data, vec![a[0], b[0]], 50);
        let mean = |v: &[Point3]| {
            Point3::from(v.iter().map(|p| p.coords).sum::<Vector3<f64>>() / v.len() as f64)
        };
        assert!((r.centroids[0] - mean(&a)).norm() < 1e-12);
        assert!((r.centroids[1] - mean(&b)).norm() < 1e-12);
    }

    #[test]
    fn lloyd_monotone_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data = cloud(&mut rng, 100, [0.0; 3], 1.0);
        let r = lloyd_kmeans(&data, 5, 100).unwrap();
        for w in r.distortion.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for (x, &l) in data.iter().zip(&r.labels) {
            assert_eq!(brute_force_nearest(&r.centroids, x).0, l);
        }
    }

    #[test]
    fn scene_kernels_agree_with_lloyd() {
        // One Lloyd step on the coarse model equals assign + update on the scene.
        let scene = random_scene(31, 3, 150);
        let seeds = seed_centroids(&scene, 12).unwrap();
        let oracle = lloyd_kmeans_from(&scene.coarse_model(), seeds.clone(), 1);
        let idx = NnIndex::build(&seeds).unwrap();
        let asg = assign(&scene, &idx);
        let flat: Vec<usize> = asg.labels.iter().flatten().copied().collect();
        assert_eq!(flat, oracle.labels);
        let updated = update_centroids(&scene, &asg, &seeds);
        for (a, b) in updated.iter().zip(&oracle.centroids) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
