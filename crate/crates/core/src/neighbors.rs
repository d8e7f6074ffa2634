//! Exact nearest-neighbor search with a kd-tree.
//!
//! Distances are compared as squared Euclidean distances and ties are broken
//! by point index, so every query has a unique, reproducible answer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    coords: Vec<f64>,
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl NeighborIndex {
    pub fn new(points: &Array2<f64>) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("points contain non-finite coordinates".into()));
        }
        let dim = points.ncols();
        let coords: Vec<f64> = points.iter().copied().collect();
        let mut index = Self { coords, dim, order: (0..points.nrows()).collect(), nodes: Vec::new() };
        if !index.order.is_empty() {
            index.build(0, points.nrows());
        }
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = (0..self.dim)
            .map(|a| {
                let (lo, hi) =
                    self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = self.coords[i * self.dim + a];
                        (lo.min(v), hi.max(v))
                    });
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(a, _)| a)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let (coords, dim) = (&self.coords, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            coords[i * dim + axis].total_cmp(&coords[j * dim + axis]).then(i.cmp(&j))
        });
        let value = self.coords[self.order[mid] * self.dim + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn dist2(&self, q: &[f64], i: usize) -> f64 {
        self.point(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// The `k` nearest points to `query`, skipping `exclude`, as `(index, distance)`
    /// sorted by ascending distance then index.
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.idx, c.d2.sqrt())).collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate { d2: self.dist2(q, i), idx: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, exclude, heap);
                // equal distances must still be visited for index tie-breaking
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.knn_rec(far, q, k, exclude, heap);
                }
            }
        }
    }

    /// The `k` nearest neighbors of sample `i`, excluding `i` itself.
    pub fn knn_of(&self, i: usize, k: usize) -> Vec<(usize, f64)> {
        self.knn(self.point(i), k, Some(i))
    }

    /// All points strictly closer than `radius` to `query`, sorted by index.
    pub fn within(&self, query: &[f64], radius: f64, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if !self.is_empty() && radius > 0.0 {
            self.within_rec(0, query, radius * radius, exclude, &mut out);
        }
        out.sort_by_key(|&(i, _)| i);
        out.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    fn within_rec(&self, node: usize, q: &[f64], r2: f64, exclude: Option<usize>, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = self.dist2(q, i);
                    if d2 < r2 && Some(i) != exclude {
                        out.push((i, d2));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, exclude, out);
                if diff * diff < r2 {
                    self.within_rec(far, q, r2, exclude, out);
                }
            }
        }
    }

    /// kNN lists of every sample, excluding the sample itself.
    pub fn all_knn(&self, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
        check_k(k, self.len())?;
        Ok((0..self.len()).into_par_iter().map(|i| self.knn_of(i, k)).collect())
    }
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_knn(pts: &Array2<f64>, i: usize, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = (0..pts.nrows())
            .filter(|&j| j != i)
            .map(|j| (pts.row(i).iter().zip(pts.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum(), j))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(d2, j)| (j, f64::sqrt(d2))).collect()
    }

    #[test]
    fn collinear_example() {
        let pts = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 3.0]).unwrap();
        let idx = NeighborIndex::new(&pts).unwrap();
        assert_eq!(idx.knn_of(0, 1), vec![(1, 1.0)]);
        assert_eq!(idx.knn_of(1, 1), vec![(0, 1.0)]);
        assert_eq!(idx.knn_of(2, 1), vec![(1, 2.0)]);
    }

    #[test]
    fn ties_on_grid_break_by_index() {
        let mut v = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                v.push(i as f64);
                v.push(j as f64);
            }
        }
        let pts = Array2::from_shape_vec((100, 2), v).unwrap();
        let idx = NeighborIndex::new(&pts).unwrap();
        for i in 0..100 {
            assert_eq!(idx.knn_of(i, 6), brute_knn(&pts, i, 6));
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(raw in prop::collection::vec(-5.0f64..5.0, 3 * 60), k in 1usize..20, r in 0.1f64..4.0) {
            let pts = Array2::from_shape_vec((60, 3), raw).unwrap();
            let idx = NeighborIndex::new(&pts).unwrap();
            for i in 0..60 {
                prop_assert_eq!(idx.knn_of(i, k), brute_knn(&pts, i, k));
                let got: Vec<usize> = idx.within(idx.point(i), r, Some(i)).into_iter().map(|p| p.0).collect();
                let want: Vec<usize> = brute_knn(&pts, i, 59).into_iter().filter(|p| p.1 < r).map(|p| p.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
