//! Exact nearest-centroid search.
//!
//! A median-split k-d tree with cycling split axes. Ties on squared distance
//! resolve to the smallest original index, so results match a linear scan
//! bit for bit.

use thiserror::Error;

use crate::geometry::Point3;

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("cannot build a nearest-neighbour index over zero points")]
    Empty,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable search structure over a snapshot of centroid positions.
#[derive(Debug, Clone)]
pub struct NnIndex {
    nodes: Vec<Node>,
    /// Coordinates permuted into tree order, stored flat for locality.
    coords: Vec<[f64; 3]>,
    /// Original index of each entry in `coords`.
    ids: Vec<usize>,
}

impl NnIndex {
    pub fn build(points: &[Point3]) -> Result<Self, IndexError> {
        if points.is_empty() {
            return Err(IndexError::Empty);
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(IndexError::NonFinite(i));
        }
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(points, &mut ids, 0, 0, &mut nodes);
        let coords = ids
            .iter()
            .map(|&i| [points[i].x, points[i].y, points[i].z])
            .collect();
        Ok(Self { nodes, coords, ids })
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Returns `(index, squared distance)` of the closest indexed point.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let q = [q.x, q.y, q.z];
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, &q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start..end {
                    let c = &self.coords[k];
                    let dx = c[0] - q[0];
                    let dy = c[1] - q[1];
                    let dz = c[2] - q[2];
                    let d = dx * dx + dy * dy + dz * dz;
                    let id = self.ids[k];
                    if d < best.1 || (d == best.1 && id < best.0) {
                        *best = (id, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // `<=` so equal-distance candidates with a smaller id are still visited.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(
    points: &[Point3],
    ids: &mut [usize],
    offset: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    if ids.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + ids.len(),
        });
        return me;
    }
    let axis = depth % 3;
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[ids[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = ids.split_at_mut(mid);
    let left = build_node(points, lo, offset, depth + 1, nodes);
    let right = build_node(points, hi, offset + mid, depth + 1, nodes);
    nodes[me] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    me
}

/// Linear-scan reference with the same tie rule.
pub fn brute_force_nearest(points: &[Point3], q: &Point3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let dx = p.x - q.x;
        let dy = p.y - q.y;
        let dz = p.z - q.z;
        let d = dx * dx + dy * dy + dz * dz;
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
