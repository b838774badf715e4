//! Point storage, axis-aligned boxes and nearest-neighbour search.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Squared Euclidean distance.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x * x).sum())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finite set of points in ℝⁿ stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "ambient dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(invalid("coords", "length is not a multiple of the dimension"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut coords = Vec::new();
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    /// Points on the real line.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            dim: 1,
            coords: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    /// Smallest box containing every point.
    pub fn bounding_box(&self) -> Option<BoxDomain> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some(BoxDomain { lo, hi })
    }

    /// Cartesian product of two point sets.
    pub fn product(&self, other: &PointSet) -> PointSet {
        let dim = self.dim + other.dim;
        let mut coords = Vec::with_capacity(self.len() * other.len() * dim);
        for a in self.iter() {
            for b in other.iter() {
                coords.extend_from_slice(a);
                coords.extend_from_slice(b);
            }
        }
        PointSet { dim, coords }
    }

    /// Appends zero coordinates so the set lives in ℝ^`dim`.
    pub fn embed(&self, dim: usize) -> Result<PointSet> {
        if dim < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            });
        }
        let mut coords = Vec::with_capacity(self.len() * dim);
        for p in self.iter() {
            coords.extend_from_slice(p);
            coords.extend(core::iter::repeat_n(0.0, dim - self.dim));
        }
        Ok(PointSet { dim, coords })
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("domain", "lo/hi must have equal positive length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(invalid("domain", "every side must have positive length"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn inflate(&self, r: f64) -> BoxDomain {
        BoxDomain {
            lo: self.lo.iter().map(|a| a - r).collect(),
            hi: self.hi.iter().map(|b| b + r).collect(),
        }
    }

    /// Largest side length; used as the domain scale.
    pub fn scale(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b) && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }
}

const LEAF: usize = 8;

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

/// Static k-d tree for exact nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: PointSet,
    order: Vec<usize>,
    nodes: Vec<Node>,
    bounds: Option<BoxDomain>,
}

impl KdTree {
    pub fn build(points: PointSet) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = order.len();
            build_node(&points, &mut order, 0, n, &mut nodes);
        }
        let bounds = points.bounding_box();
        Self {
            points,
            order,
            nodes,
            bounds,
        }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        // per-axis offsets from the query to the current cell
        let mut stack = [0.0f64; 8];
        let mut heap;
        let off: &mut [f64] = if q.len() <= stack.len() {
            &mut stack[..q.len()]
        } else {
            heap = vec![0.0; q.len()];
            &mut heap
        };
        // axes that are never split (flat point sets) still bound the search
        let mut rd = 0.0;
        if let Some(b) = &self.bounds {
            for k in 0..off.len() {
                off[k] = if q[k] < b.lo[k] {
                    q[k] - b.lo[k]
                } else if q[k] > b.hi[k] {
                    q[k] - b.hi[k]
                } else {
                    0.0
                };
                rd += off[k] * off[k];
            }
        }
        self.search(0, q, rd, off, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64], rd: f64, off: &mut [f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(self.points.point(i), q);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
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
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, rd, off, best);
                let old = off[axis];
                let far_rd = rd - old * old + diff * diff;
                if far_rd <= best.1 {
                    off[axis] = diff;
                    self.search(far, q, far_rd, off, best);
                    off[axis] = old;
                }
            }
        }
    }
}

fn build_node(points: &PointSet, order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let dim = points.dim();
    let slice = &mut order[start..end];
    // split on the widest axis
    let mut axis = 0;
    let mut widest = -1.0;
    for k in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in slice.iter() {
            let v = points.point(i)[k];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = k;
        }
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points.point(a)[axis].total_cmp(&points.point(b)[axis]));
    let value = points.point(slice[mid])[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed, uniform};

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = keyed(1, 0);
        let mut pts = PointSet::new(3, Vec::new()).unwrap();
        for _ in 0..500 {
            let p = [
                uniform(&mut rng, -1.0, 1.0),
                uniform(&mut rng, -1.0, 1.0),
                uniform(&mut rng, -1.0, 1.0),
            ];
            pts.push(&p);
        }
        let tree = KdTree::build(pts.clone());
        for _ in 0..200 {
            let q = [
                uniform(&mut rng, -1.5, 1.5),
                uniform(&mut rng, -1.5, 1.5),
                uniform(&mut rng, -1.5, 1.5),
            ];
            let brute = pts.iter().map(|p| dist2(p, &q)).fold(f64::INFINITY, f64::min);
            let (_, d) = tree.nearest(&q).unwrap();
            assert_eq!(d, brute);
        }
    }

    #[test]
    fn box_rejects_degenerate_sides() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        let b = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(b.volume(), 4.0);
        assert!(b.contains(&[0.5, -1.0]));
        assert!(!b.contains(&[1.5, 0.0]));
    }

    #[test]
    fn product_and_embed() {
        let a = PointSet::from_scalars(&[0.0, 1.0]);
        let p = a.product(&a);
        assert_eq!(p.len(), 4);
        assert_eq!(p.point(3), &[1.0, 1.0]);
        let e = a.embed(2).unwrap();
        assert_eq!(e.point(1), &[1.0, 0.0]);
    }
}
