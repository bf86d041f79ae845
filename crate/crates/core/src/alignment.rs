//! Closed-form weighted rigid alignment of corresponding point pairs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Point3, RigidTransform};

/// Relative singular-value ratio below which a rotation axis is unobservable.
pub const DEGENERACY_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error(
        "sources, targets and weights have different lengths ({sources}, {targets}, {weights})"
    )]
    LengthMismatch {
        sources: usize,
        targets: usize,
        weights: usize,
    },
    #[error("need at least 3 weighted correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("correspondences are collinear or coincident (singular values {0:?})")]
    Degenerate([f64; 3]),
}

/// Borrowed view of weighted point pairs `(p_j, mu_j, w_j)` with binary weights.
#[derive(Debug, Clone, Copy)]
pub struct Correspondences<'a> {
    sources: &'a [Point3],
    targets: &'a [Point3],
    weights: &'a [bool],
}

impl<'a> Correspondences<'a> {
    pub fn new(
        sources: &'a [Point3],
        targets: &'a [Point3],
        weights: &'a [bool],
    ) -> Result<Self, AlignmentError> {
        if sources.len() != targets.len() || sources.len() != weights.len() {
            return Err(AlignmentError::LengthMismatch {
                sources: sources.len(),
                targets: targets.len(),
                weights: weights.len(),
            });
        }
        Ok(Self {
            sources,
            targets,
            weights,
        })
    }

    fn active(&self) -> impl Iterator<Item = (&'a Point3, &'a Point3)> + Clone + 'a {
        let (s, t, w) = (self.sources, self.targets, self.weights);
        s.iter()
            .zip(t)
            .zip(w)
            .filter_map(|((p, q), &w)| w.then_some((p, q)))
    }
}

/// Least-squares rigid transform mapping weighted sources onto targets.
pub fn solve_rigid(c: &Correspondences<'_>) -> Result<RigidTransform, AlignmentError> {
    solve_pairs(c.active())
}

/// Same as [`solve_rigid`] over an iterator of weight-1 pairs `(source, target)`.
///
/// The iterator is walked twice: once for the centroids and once for the
/// cross-covariance of the centred pairs.
pub fn solve_pairs<'p, I>(pairs: I) -> Result<RigidTransform, AlignmentError>
where
    I: Iterator<Item = (&'p Point3, &'p Point3)> + Clone,
{
    let mut n = 0usize;
    let mut src_sum = Vector3::zeros();
    let mut dst_sum = Vector3::zeros();
    for (p, q) in pairs.clone() {
        n += 1;
        src_sum += p.coords;
        dst_sum += q.coords;
    }
    if n < 3 {
        return Err(AlignmentError::InsufficientCorrespondences(n));
    }
    let src_mean = src_sum / n as f64;
    let dst_mean = dst_sum / n as f64;

    // H = sum (p - p_bar)(q - q_bar)^T
    let mut h = Matrix3::zeros();
    for (p, q) in pairs {
        let a = p.coords - src_mean;
        let b = q.coords - dst_mean;
        h += a * b.transpose();
    }

    let rotation = kabsch_rotation(&h)?;
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidTransform::from_parts(rotation, translation)
        .expect("Kabsch reconstruction is orthonormal with det +1"))
}

/// `R = V diag(1, 1, det(V U^T)) U^T` for `H = U S V^T`.
fn kabsch_rotation(h: &Matrix3<f64>) -> Result<Matrix3<f64>, AlignmentError> {
    let svd = h.svd(true, true);
    let s = svd.singular_values;
    let mut sorted = [s[0], s[1], s[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[0].is_nan() || sorted[0] <= 0.0 || sorted[1] < DEGENERACY_RATIO * sorted[0] {
        return Err(AlignmentError::Degenerate(sorted));
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let mut diag = Vector3::new(1.0, 1.0, 1.0);
    diag[s.imin()] = d;
    Ok(v * Matrix3::from_diagonal(&diag) * u.transpose())
}

/// `sum w_j |R p_j + t - mu_j|^2`
pub fn weighted_residual(c: &Correspondences<'_>, tf: &RigidTransform) -> f64 {
    c.active()
        .map(|(p, q)| (tf.apply(p) - q).norm_squared())
        .sum()
}
