//! Target distance fields and labels computed from complete scene geometry.

use crate::geometry::{Bvh, Triangle, Vec3};
use crate::volume::{DistanceKind, LabelVolume, Placement, SemanticClass, VoxelVolume, TRUNCATION};

/// Exact Euclidean distance in meters from `p` to the closed triangle.
///
/// Degenerate triangles (area at most 1e-12) fall back to their longest edge.
pub fn point_triangle_distance(p: &Vec3, tri: &Triangle) -> f64 {
    (p - closest_point(p, tri)).norm()
}

/// Closest point on the triangle, via Voronoi-region classification.
pub fn closest_point(p: &Vec3, tri: &Triangle) -> Vec3 {
    let [a, b, c] = tri.v;
    if tri.area() <= 1e-12 {
        let edges = [(a, b), (b, c), (c, a)];
        let (s, e) = edges
            .into_iter()
            .max_by(|x, y| (x.1 - x.0).norm_squared().total_cmp(&(y.1 - y.0).norm_squared()))
            .unwrap();
        return closest_on_segment(p, &s, &e);
    }
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn closest_on_segment(p: &Vec3, s: &Vec3, e: &Vec3) -> Vec3 {
    let d = e - s;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return *s;
    }
    let t = ((p - s).dot(&d) / len2).clamp(0.0, 1.0);
    s + d * t
}

/// Truncated unsigned distance (voxel units) and nearest-surface label at
/// every voxel center of `placement`. Voxels at or beyond the truncation
/// distance are labeled empty.
pub fn mesh_to_tdf(bvh: &Bvh, placement: Placement) -> (VoxelVolume, LabelVolume) {
    let dims = placement.dims;
    let radius = TRUNCATION as f64 * placement.voxel_size;
    let mut tdf = VoxelVolume::filled(placement, DistanceKind::Tdf, TRUNCATION);
    let mut labels = LabelVolume::filled(placement, SemanticClass::Empty);
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let c = placement.voxel_center(x, y, z);
                if let Some(hit) = bvh.nearest(&c, radius) {
                    let d = hit.distance / placement.voxel_size;
                    if d < TRUNCATION as f64 {
                        let i = dims.index(x, y, z);
                        tdf.set_index(i, d as f32);
                        labels.set_index(i, hit.class);
                    }
                }
            }
        }
    }
    (tdf, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_triangles, pick_nearest, Aabb};
    use crate::volume::GridDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Triangle {
        Triangle::new(a.into(), b.into(), c.into(), SemanticClass::Floor)
    }

    #[test]
    fn above_centroid() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let p = t.centroid() + Vec3::new(0.0, 0.7, 0.0);
        assert!((point_triangle_distance(&p, &t) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn beyond_vertex() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let p = Vec3::new(2.0, 1.0, -1.0);
        assert!((point_triangle_distance(&p, &t) - (p - Vec3::new(1.0, 0.0, 0.0)).norm()).abs() < 1e-12);
        let p = Vec3::new(-1.0, -1.0, -1.0);
        assert!((point_triangle_distance(&p, &t) - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_uses_longest_edge() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]);
        let p = Vec3::new(1.5, 1.0, 0.0);
        assert!((point_triangle_distance(&p, &t) - 1.0).abs() < 1e-12);
        let t = tri([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        assert!((point_triangle_distance(&Vec3::zeros(), &t) - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sampling_oracle_brackets_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = |s: f64| Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
        // 140 steps per side gives ~10^4 barycentric points per triangle
        let n = 140;
        for _ in 0..400 {
            let t = Triangle::new(r(0.1), r(0.1), r(0.1), SemanticClass::Obj);
            if t.area() < 1e-4 {
                continue;
            }
            for _ in 0..25 {
                let p = r(0.3);
                let exact = point_triangle_distance(&p, &t);
                let mut best = f64::INFINITY;
                for i in 0..=n {
                    for j in 0..=(n - i) {
                        let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                        let q = t.v[0] + (t.v[1] - t.v[0]) * u + (t.v[2] - t.v[0]) * v;
                        best = best.min((p - q).norm());
                    }
                }
                assert!(best >= exact - 1e-6, "sample beat exact: {best} < {exact}");
                assert!(best <= exact + 2e-3, "sample too far: {best} vs {exact}");
            }
        }
    }

    #[test]
    fn floor_voxel_is_zero() {
        let floor = crate::geometry::quad_triangles(
            &[
                Vec3::new(0.0, 0.5, 0.0),
                Vec3::new(0.0, 0.5, 4.0),
                Vec3::new(4.0, 0.5, 4.0),
                Vec3::new(4.0, 0.5, 0.0),
            ],
            SemanticClass::Floor,
        );
        let bvh = Bvh::build(&floor);
        let p = Placement::new(GridDims::new(8, 8, 8).unwrap(), 0.5, Vec3::new(0.0, 0.25, 0.0));
        let (tdf, labels) = mesh_to_tdf(&bvh, p);
        // voxel row y=0 is centered on the floor plane
        assert_eq!(tdf.get(3, 0, 3), 0.0);
        assert_eq!(labels.get(3, 0, 3), SemanticClass::Floor);
        assert_eq!(tdf.get(3, 1, 3), 1.0);
        assert_eq!(tdf.get(3, 3, 3), 3.0);
        assert_eq!(labels.get(3, 3, 3), SemanticClass::Empty);
        assert_eq!(tdf.get(3, 7, 3), 3.0);
    }

    fn brute(tris: &[Triangle], p: Placement) -> (Vec<f32>, Vec<u8>) {
        let mut d = Vec::new();
        let mut l = Vec::new();
        for i in 0..p.dims.count() {
            let [x, y, z] = p.dims.coords(i);
            let c = p.voxel_center(x, y, z);
            let mut best = None;
            for (ti, t) in tris.iter().enumerate() {
                best = Some(pick_nearest(best, point_triangle_distance(&c, t), ti, t.class));
            }
            let b = best.unwrap();
            let v = b.distance / p.voxel_size;
            if v < 3.0 {
                d.push(v as f32);
                l.push(b.class.id());
            } else {
                d.push(3.0);
                l.push(SemanticClass::Empty.id());
            }
        }
        (d, l)
    }

    #[test]
    fn matches_brute_force_on_16_cubed() {
        let mut tris = box_triangles(&Aabb::new(Vec3::new(0.2, 0.0, 0.3), Vec3::new(0.5, 0.4, 0.6)), SemanticClass::Chair, false);
        tris.extend(box_triangles(&Aabb::new(Vec3::new(0.55, 0.1, 0.1), Vec3::new(0.7, 0.3, 0.45)), SemanticClass::Table, true));
        tris.extend(crate::geometry::quad_triangles(
            &[Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.8, 0.0, 0.8), Vec3::new(0.8, 0.0, 0.0)],
            SemanticClass::Floor,
        ));
        let p = Placement::new(GridDims::new(16, 16, 16).unwrap(), 0.05, Vec3::new(0.0, -0.1, 0.0));
        let (tdf, labels) = mesh_to_tdf(&Bvh::build(&tris), p);
        let (d, l) = brute(&tris, p);
        for (got, want) in tdf.data().iter().zip(&d) {
            assert!((got - want).abs() < 1e-5);
        }
        assert_eq!(labels.labels(), &l[..]);
    }

    #[test]
    fn tdf_is_lipschitz() {
        let tris = box_triangles(&Aabb::new(Vec3::new(0.3, 0.2, 0.3), Vec3::new(0.6, 0.5, 0.5)), SemanticClass::Sofa, true);
        let p = Placement::new(GridDims::new(12, 12, 12).unwrap(), 0.07, Vec3::zeros());
        let (tdf, _) = mesh_to_tdf(&Bvh::build(&tris), p);
        let d = p.dims;
        for z in 0..d.z {
            for y in 0..d.y {
                for x in 0..d.x {
                    let v = tdf.get(x, y, z);
                    if x + 1 < d.x {
                        assert!((v - tdf.get(x + 1, y, z)).abs() <= 1.0 + 1e-5);
                    }
                    if y + 1 < d.y {
                        assert!((v - tdf.get(x, y + 1, z)).abs() <= 1.0 + 1e-5);
                    }
                    if z + 1 < d.z {
                        assert!((v - tdf.get(x, y, z + 1)).abs() <= 1.0 + 1e-5);
                    }
                }
            }
        }
    }
}
