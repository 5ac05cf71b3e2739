use crate::error::{Error, Result};
use crate::geom::{dist2, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Static k-d tree over a point set. Queries return the lowest-index point
/// among those at the minimum squared distance, matching
/// [`brute_force_nearest`] exactly.
#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointIndex {
    pub fn build(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point index"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_rec(&points, &mut order, 0, points.len(), &mut nodes);
        Ok(PointIndex {
            points,
            order,
            nodes,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest stored point and its Euclidean distance.
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        let (i, d2) = self.nearest_sq(query);
        (i, d2.sqrt())
    }

    pub fn nearest_sq(&self, query: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        best
    }

    fn search(&self, node: usize, q: Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &ix in &self.order[start..end] {
                    let ix = ix as usize;
                    let d = dist2(q, self.points[ix]);
                    if d < best.1 || (d == best.1 && ix < best.0) {
                        *best = (ix, d);
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
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near as usize, q, best);
                // Equal-distance subtrees are still visited so the lowest
                // index wins ties.
                if diff * diff <= best.1 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

fn build_rec(
    points: &[Vec3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &ix in slice {
        let p = points[ix as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // all points identical
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_rec(points, order, start, mid, nodes);
    let right = build_rec(points, order, mid, end, nodes);
    nodes[id as usize] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Exhaustive scan with the same arithmetic and tie rule as [`PointIndex`].
pub fn brute_force_nearest(points: &[Vec3], query: Vec3) -> Result<(usize, f64)> {
    if points.is_empty() {
        return Err(Error::Empty("point set"));
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, &p) in points.iter().enumerate() {
        let d = dist2(query, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((best.0, best.1.sqrt()))
}
