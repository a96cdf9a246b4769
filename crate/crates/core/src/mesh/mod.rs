//! Isosurface extraction from distance grids, with class-colored vertices.
//!
//! Samples sit at voxel centers. On an unsigned field the iso level lies on
//! both sides of every surface, so meshes come out as thin closed shells.

mod tables;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use tables::{EDGE_TABLE, TRIANGLE_TABLE};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, SemanticClass, VoxelVolume};
use crate::Vec3;

/// Default extraction level for TDF grids, in voxels.
pub const DEFAULT_ISO: f32 = 1.0;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub colors: Vec<[u8; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()));
        for (v, c) in self.vertices.iter().zip(&self.colors) {
            let [r, g, b] = c.map(|x| x as f32 / 255.0);
            writeln!(s, "v {:.5} {:.5} {:.5} {r:.4} {g:.4} {b:.4}", v.x, v.y, v.z).expect("string write");
        }
        for t in &self.triangles {
            writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("string write");
        }
        s
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
             property list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        )
        .expect("string write");
        for (v, c) in self.vertices.iter().zip(&self.colors) {
            writeln!(s, "{:.5} {:.5} {:.5} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]).expect("string write");
        }
        for t in &self.triangles {
            writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).expect("string write");
        }
        s
    }

    /// Writes OBJ or PLY by file extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = match path.extension().and_then(|e| e.to_str()) {
            Some("obj") => self.to_obj(),
            Some("ply") => self.to_ply(),
            _ => return Err(Error::InvalidParam(format!("mesh path {} must end in .obj or .ply", path.display()))),
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Marching cubes at `iso`. Vertices take the class of the edge endpoint
/// closer to the surface; without labels they are gray.
pub fn extract_isosurface(field: &VoxelVolume, labels: Option<&LabelVolume>, iso: f32) -> Result<Mesh> {
    let d = field.dims();
    if let Some(l) = labels {
        if l.dims() != d {
            return Err(Error::DimMismatch(format!("labels {} vs field {d}", l.dims())));
        }
    }
    let mut mesh = Mesh::default();
    if d.x < 2 || d.y < 2 || d.z < 2 {
        return Ok(mesh);
    }
    // one vertex per crossed grid edge, keyed by (lower voxel, axis)
    let mut shared: HashMap<(usize, u8), u32> = HashMap::new();
    let mut vertex_on = |mesh: &mut Mesh, a: [usize; 3], b: [usize; 3]| -> u32 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let axis = (0..3).find(|&k| lo[k] != hi[k]).expect("distinct corners") as u8;
        let key = (d.index(lo[0], lo[1], lo[2]), axis);
        *shared.entry(key).or_insert_with(|| {
            let (va, vb) = (field.get(lo[0], lo[1], lo[2]), field.get(hi[0], hi[1], hi[2]));
            let t = if (vb - va).abs() < 1e-12 { 0.5 } else { ((iso - va) / (vb - va)).clamp(0.0, 1.0) } as f64;
            let p = |c: [usize; 3]| field.placement().voxel_center(c[0], c[1], c[2]);
            let (pa, pb) = (p(lo), p(hi));
            mesh.vertices.push(pa + (pb - pa) * t);
            let near = if va.abs() <= vb.abs() { lo } else { hi };
            let class = labels.map_or(SemanticClass::Empty, |l| l.get(near[0], near[1], near[2]));
            mesh.colors.push(if labels.is_some() { class.color() } else { [160, 160, 160] });
            (mesh.vertices.len() - 1) as u32
        })
    };
    for z in 0..d.z - 1 {
        for y in 0..d.y - 1 {
            for x in 0..d.x - 1 {
                let corner = |i: usize| [x + CORNERS[i][0], y + CORNERS[i][1], z + CORNERS[i][2]];
                let mut case = 0usize;
                for i in 0..8 {
                    let [cx, cy, cz] = corner(i);
                    if field.get(cx, cy, cz) < iso {
                        case |= 1 << i;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, [a, b]) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] >> e & 1 == 1 {
                        edge_vertex[e] = vertex_on(&mut mesh, corner(*a), corner(*b));
                    }
                }
                for tri in TRIANGLE_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    mesh.triangles.push([edge_vertex[tri[0] as usize], edge_vertex[tri[1] as usize], edge_vertex[tri[2] as usize]]);
                }
            }
        }
    }
    Ok(mesh)
}
