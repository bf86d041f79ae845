//! Points, point sets, scenes and rigid motions.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3D point in model units.
pub type Point3 = nalgebra::Point3<f64>;

/// Largest orthonormality/determinant violation that [`RigidTransform::from_parts`]
/// will silently project away.
pub const REPAIR_TOLERANCE: f64 = 1e-6;

/// Tolerance on `R^T R = I` and `det R = 1` for a stored rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (|R^T R - I|_F = {orthonormality:e}, det = {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point set {id} is empty")]
    EmptyPointSet { id: usize },
    #[error("point set {id} has a non-finite coordinate at index {index}")]
    NonFinitePoint { id: usize, index: usize },
    #[error("a scene needs at least two point sets, got {0}")]
    TooFewViews(usize),
    #[error("scene has {sets} point sets but {transforms} transforms")]
    LengthMismatch { sets: usize, transforms: usize },
}

/// A proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a raw matrix, projecting onto SO(3) when the
    /// input is within [`REPAIR_TOLERANCE`] of a rotation and rejecting it otherwise.
    pub fn from_parts(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        let orthonormality = orthonormality_error(&rotation);
        let det = rotation.determinant();
        if orthonormality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE {
            return Ok(Self {
                rotation,
                translation,
            });
        }
        if orthonormality > REPAIR_TOLERANCE || (det - 1.0).abs() > REPAIR_TOLERANCE {
            return Err(GeometryError::NotARotation {
                orthonormality,
                det,
            });
        }
        Ok(Self {
            rotation: nearest_rotation(&rotation),
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self::from_rotation(Rotation3::from_axis_angle(&axis, angle), translation)
    }

    /// Extrinsic X-then-Y-then-Z rotation, `R = Rz(rz) Ry(ry) Rx(rx)`.
    pub fn from_euler_xyz(rx: f64, ry: f64, rz: f64, translation: Vector3<f64>) -> Self {
        Self::from_rotation(Rotation3::from_euler_angles(rx, ry, rz), translation)
    }

    /// Parses a row-major 3x4 `[R | t]` matrix.
    pub fn from_row_major_3x4(m: &[f64; 12]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self::from_parts(rotation, translation)
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ]
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `a.compose(b)` applies `b` first, then `a`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `|R_a - R_b|_F`
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        (self.rotation - other.rotation).norm()
    }

    /// `|t_a - t_b|_2`
    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// `|R^T R - I|_F`
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Closest proper rotation in the Frobenius sense, `U diag(1, 1, det(U V^T)) V^T`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 SVD always yields U");
    let v_t = svd.v_t.expect("3x3 SVD always yields V^T");
    let d = (u * v_t).determinant().signum();
    // The smallest singular value's column absorbs the sign flip.
    let smallest = svd.singular_values.imin();
    let mut diag = Vector3::new(1.0, 1.0, 1.0);
    diag[smallest] = d;
    u * Matrix3::from_diagonal(&diag) * v_t
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for RawTransform {
    fn from(tf: RigidTransform) -> Self {
        let r = tf.rotation;
        Self {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: tf.translation.into(),
        }
    }
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = GeometryError;

    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        let r = raw.rotation;
        RigidTransform::from_parts(
            Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            Vector3::from(raw.translation),
        )
    }
}

/// One scan: an ordered, non-empty list of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    id: usize,
    points: Vec<Point3>,
}

impl PointSet {
    pub fn new(id: usize, points: Vec<Point3>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyPointSet { id });
        }
        if let Some(index) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::NonFinitePoint { id, index });
        }
        Ok(Self { id, points })
    }

    #[inline]
    pub fn id(&self) -> usize {
        self.id
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn transformed(&self, tf: &RigidTransform) -> impl Iterator<Item = Point3> + '_ {
        let tf = *tf;
        self.points.iter().map(move |p| tf.apply(p))
    }
}

/// N >= 2 point sets and their current poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    sets: Vec<PointSet>,
    transforms: Vec<RigidTransform>,
}

impl Scene {
    pub fn new(
        sets: Vec<PointSet>,
        transforms: Vec<RigidTransform>,
    ) -> Result<Self, GeometryError> {
        if sets.len() < 2 {
            return Err(GeometryError::TooFewViews(sets.len()));
        }
        if sets.len() != transforms.len() {
            return Err(GeometryError::LengthMismatch {
                sets: sets.len(),
                transforms: transforms.len(),
            });
        }
        Ok(Self { sets, transforms })
    }

    /// Scene whose views all start at the identity.
    pub fn with_identity(sets: Vec<PointSet>) -> Result<Self, GeometryError> {
        let n = sets.len();
        Self::new(sets, vec![RigidTransform::identity(); n])
    }

    #[inline]
    pub fn sets(&self) -> &[PointSet] {
        &self.sets
    }

    #[inline]
    pub fn transforms(&self) -> &[RigidTransform] {
        &self.transforms
    }

    #[inline]
    pub fn num_views(&self) -> usize {
        self.sets.len()
    }

    /// Total point count M.
    pub fn num_points(&self) -> usize {
        self.sets.iter().map(PointSet::len).sum()
    }

    /// Replaces all poses; the count must match the number of views.
    pub fn set_transforms(&mut self, transforms: Vec<RigidTransform>) -> Result<(), GeometryError> {
        if transforms.len() != self.sets.len() {
            return Err(GeometryError::LengthMismatch {
                sets: self.sets.len(),
                transforms: transforms.len(),
            });
        }
        self.transforms = transforms;
        Ok(())
    }

    pub fn with_transforms(
        mut self,
        transforms: Vec<RigidTransform>,
    ) -> Result<Self, GeometryError> {
        self.set_transforms(transforms)?;
        Ok(self)
    }

    /// Offset of each view's first point in the concatenated point order.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sets
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.len();
                o
            })
            .collect()
    }

    /// The coarse model: every point mapped through its view's pose, in view order.
    pub fn coarse_model(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.num_points());
        for (set, tf) in self.sets.iter().zip(&self.transforms) {
            out.extend(set.transformed(tf));
        }
        out
    }

    /// Diagonal length of the axis-aligned bounding box of the coarse model.
    pub fn bbox_diagonal(&self) -> f64 {
        bounding_box_diagonal(
            self.sets
                .iter()
                .zip(&self.transforms)
                .flat_map(|(s, tf)| s.transformed(tf)),
        )
    }
}

pub fn bounding_box_diagonal(points: impl IntoIterator<Item = Point3>) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}
