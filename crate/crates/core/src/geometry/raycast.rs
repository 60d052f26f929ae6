//! Triangle ray casting over a bounding volume hierarchy.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, dir: Vector3<f64>) -> Self {
        Self { origin, dir }
    }

    /// Ray from `a` toward `b`; parameter 1 lands on `b`.
    pub fn between(a: &Vector3<f64>, b: &Vector3<f64>) -> Self {
        Self::new(*a, b - a)
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    /// Slab test; returns the entry parameter when the box overlaps `[0, t_max]`.
    #[inline]
    pub fn hit(&self, origin: &Vector3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut ta = (self.min[a] - origin[a]) * inv_dir[a];
            let mut tb = (self.max[a] - origin[a]) * inv_dir[a];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN (0 * inf) leaves the bound unchanged
            if ta > t0 {
                t0 = ta;
            }
            if tb < t1 {
                t1 = tb;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Triangle stored for Moller-Trumbore with a caller-defined tag.
#[derive(Debug, Clone, Copy)]
pub struct Triangle<T> {
    pub v0: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub tag: T,
}

impl<T: Copy> Triangle<T> {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, tag: T) -> Self {
        Self {
            v0: a,
            e1: b - a,
            e2: c - a,
            tag,
        }
    }

    pub fn vertices(&self) -> [Vector3<f64>; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in self.vertices() {
            b.grow(&v);
        }
        b
    }

    /// Two-sided intersection parameter in `(0, t_max)`.
    #[inline]
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        let p = ray.dir.cross(&self.e2);
        let det = self.e1.dot(&p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - self.v0;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&self.e1);
        let v = ray.dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(&q) * inv;
        (t > 1e-12 && t < t_max).then_some(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hit<T> {
    pub t: f64,
    pub triangle: usize,
    pub tag: T,
}

#[derive(Debug, Clone, Copy)]
struct BvhNode {
    bounds: Aabb,
    /// Leaf: first triangle; interior: left child (right child is `left + 1`).
    first: u32,
    /// Triangle count for leaves, 0 for interior nodes.
    count: u32,
}

const MAX_LEAF: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh<T> {
    tris: Vec<Triangle<T>>,
    nodes: Vec<BvhNode>,
}

impl<T: Copy> Bvh<T> {
    pub fn build(mut tris: Vec<Triangle<T>>) -> Self {
        let mut nodes = Vec::with_capacity(2 * tris.len() / MAX_LEAF + 1);
        if !tris.is_empty() {
            let centroids: Vec<Vector3<f64>> = tris
                .iter()
                .map(|t| t.v0 + (t.e1 + t.e2) / 3.0)
                .collect();
            let mut idx: Vec<usize> = (0..tris.len()).collect();
            nodes.push(BvhNode {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            });
            build_rec(&tris, &centroids, &mut idx, 0, tris.len(), 0, &mut nodes);
            tris = idx.iter().map(|&i| tris[i]).collect();
        }
        Self { tris, nodes }
    }

    pub fn triangles(&self) -> &[Triangle<T>] {
        &self.tris
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Closest hit in `(0, t_max)` among triangles accepted by `filter`.
    pub fn first_hit<F>(&self, ray: &Ray, t_max: f64, mut filter: F) -> Option<Hit<T>>
    where
        F: FnMut(&T, f64) -> bool,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut best: Option<Hit<T>> = None;
        let mut limit = t_max;
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 0usize;
        if self.nodes[0].bounds.hit(&ray.origin, &inv, limit).is_none() {
            return None;
        }
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp] as usize];
            if node.count > 0 {
                let start = node.first as usize;
                for (k, tri) in self.tris[start..start + node.count as usize].iter().enumerate() {
                    if let Some(t) = tri.intersect(ray, limit) {
                        if filter(&tri.tag, t) {
                            limit = t;
                            best = Some(Hit {
                                t,
                                triangle: start + k,
                                tag: tri.tag,
                            });
                        }
                    }
                }
            } else {
                let (l, r) = (node.first, node.first + 1);
                let hl = self.nodes[l as usize].bounds.hit(&ray.origin, &inv, limit);
                let hr = self.nodes[r as usize].bounds.hit(&ray.origin, &inv, limit);
                match (hl, hr) {
                    (Some(a), Some(b)) => {
                        // push far first so near is popped first
                        let (near, far) = if a <= b { (l, r) } else { (r, l) };
                        stack[sp] = far;
                        stack[sp + 1] = near;
                        sp += 2;
                    }
                    (Some(_), None) => {
                        stack[sp] = l;
                        sp += 1;
                    }
                    (None, Some(_)) => {
                        stack[sp] = r;
                        sp += 1;
                    }
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Whether any accepted triangle is hit in `(0, t_max)`.
    pub fn occluded<F>(&self, ray: &Ray, t_max: f64, mut filter: F) -> bool
    where
        F: FnMut(&T, f64) -> bool,
    {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp] as usize];
            if node.bounds.hit(&ray.origin, &inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.first as usize;
                for tri in &self.tris[start..start + node.count as usize] {
                    if let Some(t) = tri.intersect(ray, t_max) {
                        if filter(&tri.tag, t) {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        false
    }
}

fn build_rec<T: Copy>(
    tris: &[Triangle<T>],
    centroids: &[Vector3<f64>],
    idx: &mut [usize],
    start: usize,
    end: usize,
    node: usize,
    nodes: &mut Vec<BvhNode>,
) {
    let mut bounds = Aabb::empty();
    let mut cb = Aabb::empty();
    for &i in &idx[start..end] {
        bounds = bounds.merge(&tris[i].bounds());
        cb.grow(&centroids[i]);
    }
    let n = end - start;
    let axis = (cb.max - cb.min).imax();
    if n <= MAX_LEAF || cb.max[axis] - cb.min[axis] <= 0.0 {
        nodes[node] = BvhNode {
            bounds,
            first: start as u32,
            count: n as u32,
        };
        return;
    }
    let mid = start + n / 2;
    idx[start..end].select_nth_unstable_by(n / 2, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
    let left = nodes.len();
    let blank = BvhNode {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    };
    nodes.push(blank);
    nodes.push(blank);
    nodes[node] = BvhNode {
        bounds,
        first: left as u32,
        count: 0,
    };
    build_rec(tris, centroids, idx, start, mid, left, nodes);
    build_rec(tris, centroids, idx, mid, end, left + 1, nodes);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn triangle_hit_parameter() {
        let t = Triangle::new(v(0.0, -1.0, -1.0), v(0.0, 1.0, -1.0), v(0.0, 0.0, 1.0), ());
        let ray = Ray::new(v(-2.0, 0.0, 0.0), v(1.0, 0.0, 0.0));
        assert!((t.intersect(&ray, 10.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(t.intersect(&ray, 1.5).is_none());
        let miss = Ray::new(v(-2.0, 0.0, 2.0), v(1.0, 0.0, 0.0));
        assert!(t.intersect(&miss, 10.0).is_none());
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tris: Vec<_> = (0..500)
            .map(|i| {
                let c = v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                let a = c + v(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let b = c + v(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                Triangle::new(c, a, b, i)
            })
            .collect();
        let bvh = Bvh::build(tris.clone());
        for _ in 0..2000 {
            let o = v(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let d = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let ray = Ray::new(o, d);
            let brute = tris
                .iter()
                .filter_map(|t| t.intersect(&ray, 100.0).map(|h| (h, t.tag)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let fast = bvh.first_hit(&ray, 100.0, |_, _| true).map(|h| (h.t, h.tag));
            assert_eq!(brute.map(|b| b.0), fast.map(|f| f.0));
            assert_eq!(brute.is_some(), bvh.occluded(&ray, 100.0, |_, _| true));
        }
    }

    #[test]
    fn filter_skips_rejected_tags() {
        let near = Triangle::new(v(1.0, -1.0, -1.0), v(1.0, 1.0, -1.0), v(1.0, 0.0, 1.0), 0u8);
        let far = Triangle::new(v(2.0, -1.0, -1.0), v(2.0, 1.0, -1.0), v(2.0, 0.0, 1.0), 1u8);
        let bvh = Bvh::build(vec![near, far]);
        let ray = Ray::new(Vector3::zeros(), v(1.0, 0.0, 0.0));
        assert_eq!(bvh.first_hit(&ray, 10.0, |_, _| true).unwrap().tag, 0);
        assert_eq!(bvh.first_hit(&ray, 10.0, |&t, _| t != 0).unwrap().tag, 1);
    }
}
