//! Exact radius-neighborhood search over a static point set.
//!
//! A bucketed k-d tree: internal nodes split on the axis of largest extent at
//! the median, leaves hold up to [`LEAF_SIZE`] points. Queries never
//! approximate; every returned index satisfies `||x_j - x_i|| <= r`.

use crate::cloud::{check_finite, Point3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

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

/// Static spatial index answering exact radius and nearest-point queries.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NeighborhoodIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_finite(points)?;
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Indices `j != i` within distance `radius` of point `i`, sorted ascending.
    pub fn radius_query(&self, i: usize, radius: f64) -> Vec<usize> {
        let mut out = self.radius_query_point(&self.points[i], radius);
        out.retain(|&j| j != i);
        out
    }

    /// All indices within distance `radius` of an arbitrary location, sorted.
    pub fn radius_query_point(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if radius < 0.0 || radius.is_nan() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &j in &self.order[start..end] {
                        if dist2(&self.points[j], query) <= r2 {
                            out.push(j);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    // Left holds coordinates <= value, right holds >= value.
                    let delta = query[axis] - value;
                    if delta <= radius {
                        stack.push(left);
                    }
                    if -delta <= radius {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Neighbor lists for every point, self excluded.
    pub fn all_neighbors(&self, radius: f64) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.radius_query(i, radius)).collect()
    }

    /// Index of the closest point to `query`; ties resolve to the lowest index.
    pub fn nearest(&self, query: &Point3) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &j in &self.order[start..end] {
                        let d = dist2(&self.points[j], query);
                        if d < best.0 || (d == best.0 && j < best.1) {
                            best = (d, j);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let delta = query[axis] - value;
                    let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                    if delta * delta <= best.0 {
                        stack.push(far);
                    }
                    stack.push(near);
                }
            }
        }
        best.1
    }
}

pub(crate) fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
