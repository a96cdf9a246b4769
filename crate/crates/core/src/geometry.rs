//! Points, boxes, labeled triangles and a bounding volume hierarchy used for
//! both ray casting and nearest-surface queries.

use serde::{Deserialize, Serialize};

use crate::ground_truth::point_triangle_distance;
use crate::volume::SemanticClass;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Distances closer than this are treated as ties when picking a label.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] && other.max[a] <= self.max[a])
    }

    /// Overlap of the x/z footprints, with `clearance` added on all sides.
    pub fn overlaps_xz(&self, other: &Aabb, clearance: f64) -> bool {
        self.min.x < other.max.x + clearance
            && other.min.x < self.max.x + clearance
            && self.min.z < other.max.z + clearance
            && other.min.z < self.max.z + clearance
    }

    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test; returns the parameter interval where the ray is inside.
    pub fn ray_interval(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        let mut lo = t_min;
        let mut hi = t_max;
        for a in 0..3 {
            let t0 = (self.min[a] - origin[a]) * inv_dir[a];
            let t1 = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            // NaN from 0 * inf means the ray lies in the slab plane; keep it
            if !near.is_nan() {
                lo = lo.max(near);
            }
            if !far.is_nan() {
                hi = hi.min(far);
            }
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub v: [Vec3; 3],
    pub class: SemanticClass,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, class: SemanticClass) -> Self {
        Self { v: [a, b, c], class }
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in &self.v {
            b.grow(p);
        }
        b
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0])).norm()
    }

    /// Möller–Trumbore; returns the ray parameter of a hit in `[t_min, t_max]`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - self.v[0];
        let u = s.dot(&p) * inv;
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < -1e-12 || u + v > 1.0 + 1e-12 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t >= t_min && t <= t_max).then_some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestHit {
    pub distance: f64,
    pub triangle: usize,
    pub class: SemanticClass,
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`. Interior: index of the left child.
    first: u32,
    /// Leaf: number of triangles. Interior: 0 (right child is `first + 1`).
    count: u32,
}

/// Median-split bounding volume hierarchy over a triangle list.
#[derive(Clone, Debug)]
pub struct Bvh {
    triangles: Vec<Triangle>,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        let mut bvh = Self {
            triangles: triangles.to_vec(),
            nodes: Vec::new(),
            order: (0..triangles.len() as u32).collect(),
        };
        if !triangles.is_empty() {
            let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
            let bounds: Vec<Aabb> = triangles.iter().map(Triangle::bounds).collect();
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            });
            bvh.build_node(0, 0, triangles.len(), &centroids, &bounds);
        }
        bvh
    }

    fn build_node(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3], bounds: &[Aabb]) {
        let mut b = Aabb::empty();
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            b = b.union(&bounds[i as usize]);
            cb.grow(&centroids[i as usize]);
        }
        self.nodes[node].bounds = b;
        let n = end - start;
        let ext = cb.extent();
        if n <= LEAF_SIZE || ext.max() <= 0.0 {
            self.nodes[node].first = start as u32;
            self.nodes[node].count = n as u32;
            return;
        }
        let axis = ext.imax();
        let mid = start + n / 2;
        self.order[start..end].select_nth_unstable_by(n / 2, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            });
        }
        self.nodes[node].first = left as u32;
        self.nodes[node].count = 0;
        self.build_node(left, start, mid, centroids, bounds);
        self.build_node(left + 1, mid, end, centroids, bounds);
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Closest hit along `origin + t * dir` with `t` in `[t_min, t_max]`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut limit = t_max;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.ray_interval(origin, &inv_dir, t_min, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                let first = node.first as usize;
                for &ti in &self.order[first..first + node.count as usize] {
                    if let Some(t) = self.triangles[ti as usize].intersect(origin, dir, t_min, limit) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && (ti as usize) < b.triangle),
                        };
                        if better {
                            best = Some(RayHit {
                                t,
                                triangle: ti as usize,
                            });
                            limit = t;
                        }
                    }
                }
            } else {
                let l = node.first as usize;
                stack.push(l + 1);
                stack.push(l);
            }
        }
        best
    }

    /// Nearest triangle within `max_distance`. Equidistant triangles (within
    /// [`TIE_EPS`]) resolve to the lower class id.
    pub fn nearest(&self, p: &Vec3, max_distance: f64) -> Option<NearestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<NearestHit> = None;
        let mut radius = max_distance;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let r = radius + TIE_EPS;
            if node.bounds.distance_sq(p) > r * r {
                continue;
            }
            if node.count > 0 {
                let first = node.first as usize;
                for &ti in &self.order[first..first + node.count as usize] {
                    let tri = &self.triangles[ti as usize];
                    let d = point_triangle_distance(p, tri);
                    if d > radius + TIE_EPS {
                        continue;
                    }
                    best = Some(pick_nearest(best, d, ti as usize, tri.class));
                    radius = radius.min(d);
                }
            } else {
                let l = node.first as usize;
                let dl = self.nodes[l].bounds.distance_sq(p);
                let dr = self.nodes[l + 1].bounds.distance_sq(p);
                if dl <= dr {
                    stack.push(l + 1);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(l + 1);
                }
            }
        }
        best.filter(|b| b.distance <= max_distance)
    }
}

/// Tie-aware update shared by the BVH query and brute-force references.
pub fn pick_nearest(best: Option<NearestHit>, d: f64, triangle: usize, class: SemanticClass) -> NearestHit {
    match best {
        None => NearestHit {
            distance: d,
            triangle,
            class,
        },
        Some(b) => {
            if d < b.distance - TIE_EPS {
                NearestHit {
                    distance: d,
                    triangle,
                    class,
                }
            } else if d <= b.distance + TIE_EPS {
                // tie: keep the smaller distance, prefer the lower class id
                let (triangle, class) = if class < b.class || (class == b.class && triangle < b.triangle) {
                    (triangle, class)
                } else {
                    (b.triangle, b.class)
                };
                NearestHit {
                    distance: d.min(b.distance),
                    triangle,
                    class,
                }
            } else {
                b
            }
        }
    }
}

/// The 12 triangles of an axis-aligned box, optionally without the bottom
/// face (for objects resting on the floor).
pub fn box_triangles(b: &Aabb, class: SemanticClass, with_bottom: bool) -> Vec<Triangle> {
    let (lo, hi) = (b.min, b.max);
    let c = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let mut quads = vec![
        // +y top
        [c(false, true, false), c(false, true, true), c(true, true, true), c(true, true, false)],
        // -x
        [c(false, false, false), c(false, false, true), c(false, true, true), c(false, true, false)],
        // +x
        [c(true, false, false), c(true, true, false), c(true, true, true), c(true, false, true)],
        // -z
        [c(false, false, false), c(false, true, false), c(true, true, false), c(true, false, false)],
        // +z
        [c(false, false, true), c(true, false, true), c(true, true, true), c(false, true, true)],
    ];
    if with_bottom {
        quads.push([c(false, false, false), c(true, false, false), c(true, false, true), c(false, false, true)]);
    }
    quads.iter().flat_map(|q| quad_triangles(q, class)).collect()
}

pub fn quad_triangles(q: &[Vec3; 4], class: SemanticClass) -> [Triangle; 2] {
    [
        Triangle::new(q[0], q[1], q[2], class),
        Triangle::new(q[0], q[2], q[3], class),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_soup(rng: &mut ChaCha8Rng, n: usize) -> Vec<Triangle> {
        (0..n)
            .map(|_| {
                let base = Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let mut v = || base + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let (a, b, c) = (v(), v(), v());
                let class = SemanticClass::from_id(rng.random_range(0..11)).unwrap();
                Triangle::new(a, b, c, class)
            })
            .collect()
    }

    #[test]
    fn raycast_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tris = random_soup(&mut rng, 200);
        let bvh = Bvh::build(&tris);
        for _ in 0..500 {
            let o = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let brute = tris
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.intersect(&o, &d, 0.0, 100.0).map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let hit = bvh.raycast(&o, &d, 0.0, 100.0);
            match (brute, hit) {
                (None, None) => {}
                (Some((t, _)), Some(h)) => assert!((t - h.t).abs() < 1e-12),
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let tris = random_soup(&mut rng, 150);
        let bvh = Bvh::build(&tris);
        for _ in 0..300 {
            let p = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let mut brute = None;
            for (i, t) in tris.iter().enumerate() {
                brute = Some(pick_nearest(brute, point_triangle_distance(&p, t), i, t.class));
            }
            let brute = brute.unwrap();
            let hit = bvh.nearest(&p, f64::INFINITY).unwrap();
            assert!((brute.distance - hit.distance).abs() < 1e-12);
            assert_eq!(brute.class, hit.class);
            let capped = bvh.nearest(&p, 0.1);
            assert_eq!(capped.is_some(), brute.distance <= 0.1);
        }
    }

    #[test]
    fn box_has_twelve_triangles() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(box_triangles(&b, SemanticClass::Bed, true).len(), 12);
        let tris = box_triangles(&b, SemanticClass::Bed, false);
        assert_eq!(tris.len(), 10);
        let area: f64 = tris.iter().map(Triangle::area).sum();
        assert!((area - (2.0 * (2.0 + 3.0 + 6.0) - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_bvh() {
        let bvh = Bvh::build(&[]);
        assert!(bvh.raycast(&Vec3::zeros(), &Vec3::x(), 0.0, 10.0).is_none());
        assert!(bvh.nearest(&Vec3::zeros(), 10.0).is_none());
    }
}
