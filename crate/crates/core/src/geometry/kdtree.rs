//! Static 3D k-d tree. Queries are exact and break distance ties toward the
//! lower point index, so results match a linear scan bit for bit.

use std::cmp::Ordering;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
fn better(d: f64, i: usize, best_d: f64, best_i: usize) -> bool {
    d < best_d || (d == best_d && i < best_i)
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].partial_cmp(&pts[b][axis]).unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
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

    /// Nearest point as `(index, squared distance)`.
    pub fn nearest_sq(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        self.nearest_sq(q).map(|(i, d2)| (i, d2.sqrt()))
    }

    fn nearest_rec(&self, node: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if better(d, i, best.1, best.0) {
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(squared distance, index)`.
    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_rec(0, q, k, &mut heap);
        }
        heap
    }

    fn knn_rec(&self, node: usize, q: &Vector3<f64>, k: usize, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if out.len() < k {
                        insert_sorted(out, (i, d));
                    } else {
                        let (wi, wd) = out[k - 1];
                        if better(d, i, wd, wi) {
                            out.pop();
                            insert_sorted(out, (i, d));
                        }
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, out);
                if out.len() < k || diff * diff <= out[k - 1].1 {
                    self.knn_rec(far, q, k, out);
                }
            }
        }
    }

    /// Indices of all points within `radius`, ascending.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.within_rec(0, q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &Vector3<f64>, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}

fn insert_sorted(v: &mut Vec<(usize, f64)>, item: (usize, f64)) {
    let pos = v
        .iter()
        .position(|&(i, d)| better(item.1, item.0, d, i))
        .unwrap_or(v.len());
    v.insert(pos, item);
}

/// Exact nearest neighbor of `query` in `cloud` as `(index, distance)`.
pub fn nearest_neighbor(query: &Vector3<f64>, cloud: &PointCloud) -> Result<(usize, f64)> {
    KdTree::build(&cloud.points).nearest(query).ok_or(Error::EmptyCloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scan(points: &[Vector3<f64>], q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn query_on_point_returns_it() {
        let cloud = PointCloud::new(vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.0, 0.0, 0.0)]);
        assert_eq!(nearest_neighbor(&Vector3::new(1.0, 2.0, 3.0), &cloud).unwrap(), (0, 0.0));
    }

    #[test]
    fn two_point_example() {
        let cloud = PointCloud::new(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)]);
        let (i, d) = nearest_neighbor(&Vector3::new(0.4, 0.0, 0.0), &cloud).unwrap();
        assert_eq!(i, 0);
        assert!((d - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_cloud_errors() {
        assert!(matches!(
            nearest_neighbor(&Vector3::zeros(), &PointCloud::default()),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
        ];
        let mut many = pts.clone();
        for _ in 0..40 {
            many.extend(pts.iter().map(|p| p * 3.0));
        }
        let t = KdTree::build(&many);
        assert_eq!(t.nearest_sq(&Vector3::zeros()).unwrap().0, 0);
        let knn = t.knn(&Vector3::zeros(), 4);
        assert_eq!(knn.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn matches_linear_scan_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 1000);
        let tree = KdTree::build(&pts);
        for _ in 0..100 {
            let q = Vector3::new(rng.random(), rng.random(), rng.random());
            let (i, d) = tree.nearest_sq(&q).unwrap();
            let (j, e) = scan(&pts, &q);
            assert_eq!(i, j);
            assert_eq!(d, e);
        }
    }

    #[test]
    fn knn_matches_sorted_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = random_points(&mut rng, 500);
        // duplicates exercise tie handling
        pts.extend_from_slice(&pts.clone()[..50]);
        let tree = KdTree::build(&pts);
        for _ in 0..30 {
            let q = Vector3::new(rng.random(), rng.random(), rng.random());
            let mut all: Vec<(usize, f64)> =
                pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(tree.knn(&q, 16), all[..16].to_vec());
            let within = tree.within(&q, 0.2);
            let mut expect: Vec<usize> = all.iter().filter(|x| x.1 <= 0.04).map(|x| x.0).collect();
            expect.sort_unstable();
            assert_eq!(within, expect);
        }
    }
}
