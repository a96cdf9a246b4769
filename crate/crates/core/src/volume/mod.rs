//! Dense voxel grids holding truncated distances or semantic labels.
//!
//! Distances are stored in voxel units of the grid's own resolution and are
//! truncated at [`TRUNCATION`] voxels. Signed grids (TSDF) use negative
//! values for space behind observed surfaces, which is also how unobserved
//! space is encoded. Unsigned grids (TDF) hold plain distances in `[0, 3]`.
//!
//! Linear indexing is x-fastest: `index = x + X * (y + Y * z)`, with `y` as
//! the vertical axis.

mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use io::{read_grid, write_grid, GridFile, GRID_MAGIC};

/// Truncation distance in voxel units.
pub const TRUNCATION: f32 = 3.0;

/// Upper bound on voxels per grid unless a caller supplies its own cap.
pub const DEFAULT_MAX_VOXELS: usize = 1 << 28;

/// Number of label ids, including `Empty`.
pub const NUM_CLASSES: usize = 12;

/// Number of real object/structure classes (everything but `Empty`).
pub const NUM_SEMANTIC_CLASSES: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl GridDims {
    pub fn new(x: usize, y: usize, z: usize) -> Result<Self> {
        Self::with_cap(x, y, z, DEFAULT_MAX_VOXELS)
    }

    pub fn with_cap(x: usize, y: usize, z: usize, cap: usize) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::InvalidDims {
                x,
                y,
                z,
                reason: "every axis needs at least one voxel",
            });
        }
        match x.checked_mul(y).and_then(|xy| xy.checked_mul(z)) {
            Some(n) if n <= cap => Ok(Self { x, y, z }),
            _ => Err(Error::InvalidDims {
                x,
                y,
                z,
                reason: "voxel count exceeds the memory cap",
            }),
        }
    }

    /// Unchecked constructor for dimensions already known to be valid.
    pub(crate) const fn raw(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub fn count(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.x && y < self.y && z < self.z);
        x + self.x * (y + self.y * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.x;
        let yz = index / self.x;
        [x, yz % self.y, yz / self.y]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        p[0] >= 0
            && p[1] >= 0
            && p[2] >= 0
            && (p[0] as usize) < self.x
            && (p[1] as usize) < self.y
            && (p[2] as usize) < self.z
    }

    pub fn scaled(&self, factor: usize) -> Self {
        Self::raw(self.x * factor, self.y * factor, self.z * factor)
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// The 11 semantic classes plus `Empty` for voxels far from all geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Bed = 0,
    Ceil = 1,
    Chair = 2,
    Floor = 3,
    Furn = 4,
    Obj = 5,
    Sofa = 6,
    Table = 7,
    Tv = 8,
    Wall = 9,
    Wind = 10,
    Empty = 11,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::Bed,
        SemanticClass::Ceil,
        SemanticClass::Chair,
        SemanticClass::Floor,
        SemanticClass::Furn,
        SemanticClass::Obj,
        SemanticClass::Sofa,
        SemanticClass::Table,
        SemanticClass::Tv,
        SemanticClass::Wall,
        SemanticClass::Wind,
        SemanticClass::Empty,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Bed => "bed",
            SemanticClass::Ceil => "ceil",
            SemanticClass::Chair => "chair",
            SemanticClass::Floor => "floor",
            SemanticClass::Furn => "furn",
            SemanticClass::Obj => "obj",
            SemanticClass::Sofa => "sofa",
            SemanticClass::Table => "table",
            SemanticClass::Tv => "tv",
            SemanticClass::Wall => "wall",
            SemanticClass::Wind => "wind",
            SemanticClass::Empty => "empty",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Wall, floor and ceiling.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            SemanticClass::Wall | SemanticClass::Floor | SemanticClass::Ceil
        )
    }

    /// Any real class that is not structural.
    pub fn is_object(self) -> bool {
        !self.is_structural() && self != SemanticClass::Empty
    }

    /// Display color used for mesh export.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Bed => [174, 199, 232],
            SemanticClass::Ceil => [152, 223, 138],
            SemanticClass::Chair => [188, 189, 34],
            SemanticClass::Floor => [140, 86, 75],
            SemanticClass::Furn => [255, 152, 150],
            SemanticClass::Obj => [214, 39, 40],
            SemanticClass::Sofa => [197, 176, 213],
            SemanticClass::Table => [148, 103, 189],
            SemanticClass::Tv => [196, 156, 148],
            SemanticClass::Wall => [23, 190, 207],
            SemanticClass::Wind => [247, 182, 210],
            SemanticClass::Empty => [128, 128, 128],
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    /// Signed, negative behind surfaces / unknown. Range `[-3, 3]`.
    Tsdf,
    /// Unsigned. Range `[0, 3]`.
    Tdf,
}

impl DistanceKind {
    pub fn range(self) -> (f32, f32) {
        match self {
            DistanceKind::Tsdf => (-TRUNCATION, TRUNCATION),
            DistanceKind::Tdf => (0.0, TRUNCATION),
        }
    }

    /// Fill value for voxels outside the known grid: unknown for TSDF,
    /// far from any surface for TDF.
    pub fn pad_value(self) -> f32 {
        match self {
            DistanceKind::Tsdf => -TRUNCATION,
            DistanceKind::Tdf => TRUNCATION,
        }
    }

    pub fn clamp(self, v: f32) -> f32 {
        let (lo, hi) = self.range();
        v.clamp(lo, hi)
    }
}

/// How [`VoxelVolume::crop`] treats regions outside the source grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropMode {
    Strict,
    Pad,
}

/// World placement shared by distance and label grids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub dims: GridDims,
    /// Edge length of a voxel in meters.
    pub voxel_size: f64,
    /// World position of the corner of voxel (0, 0, 0).
    pub origin: Vec3,
}

impl Placement {
    pub fn new(dims: GridDims, voxel_size: f64, origin: Vec3) -> Self {
        Self {
            dims,
            voxel_size,
            origin,
        }
    }

    /// Fractional voxel coordinate of a world point; voxel `i` spans `[i, i+1)`.
    pub fn world_to_voxel(&self, p: &Vec3) -> Vec3 {
        (p - self.origin) / self.voxel_size
    }

    pub fn voxel_to_world(&self, v: &Vec3) -> Vec3 {
        self.origin + v * self.voxel_size
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.voxel_to_world(&Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5))
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims.x as f64,
            self.dims.y as f64,
            self.dims.z as f64,
        ) * self.voxel_size
    }

    fn cropped(&self, offset: [i64; 3], dims: GridDims) -> Self {
        let shift = Vec3::new(offset[0] as f64, offset[1] as f64, offset[2] as f64);
        Self::new(dims, self.voxel_size, self.origin + shift * self.voxel_size)
    }

    fn upsampled(&self) -> Self {
        Self::new(self.dims.scaled(2), self.voxel_size / 2.0, self.origin)
    }

    fn downsampled(&self) -> Self {
        Self::new(
            GridDims::raw(
                (self.dims.x / 2).max(1),
                (self.dims.y / 2).max(1),
                (self.dims.z / 2).max(1),
            ),
            self.voxel_size * 2.0,
            self.origin,
        )
    }
}

/// Scalar distance grid (TSDF or TDF) in voxel units.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelVolume {
    placement: Placement,
    kind: DistanceKind,
    data: Vec<f32>,
}

impl VoxelVolume {
    pub fn filled(placement: Placement, kind: DistanceKind, value: f32) -> Self {
        Self {
            placement,
            kind,
            data: vec![kind.clamp(value); placement.dims.count()],
        }
    }

    /// Builds a grid from raw values, rejecting wrong lengths and values
    /// outside the kind's range.
    pub fn from_data(placement: Placement, kind: DistanceKind, data: Vec<f32>) -> Result<Self> {
        if data.len() != placement.dims.count() {
            return Err(Error::DimMismatch(format!(
                "{} values for a {} grid",
                data.len(),
                placement.dims
            )));
        }
        let (lo, hi) = kind.range();
        if let Some(bad) = data.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "{bad} outside [{lo}, {hi}] for {kind:?}"
            )));
        }
        Ok(Self {
            placement,
            kind,
            data,
        })
    }

    /// Like [`from_data`](Self::from_data) but clamps instead of rejecting.
    pub fn from_data_clamped(placement: Placement, kind: DistanceKind, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::NonFinite("distance volume"));
            }
            *v = kind.clamp(*v);
        }
        Self::from_data(placement, kind, data)
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn dims(&self) -> GridDims {
        self.placement.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.placement.voxel_size
    }

    pub fn origin(&self) -> Vec3 {
        self.placement.origin
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.placement.dims.index(x, y, z)]
    }

    /// Stores `value` clamped to the kind's range.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.placement.dims.index(x, y, z);
        self.data[i] = self.kind.clamp(value);
    }

    #[inline]
    pub fn set_index(&mut self, index: usize, value: f32) {
        self.data[index] = self.kind.clamp(value);
    }

    pub fn world_to_voxel(&self, p: &Vec3) -> Vec3 {
        self.placement.world_to_voxel(p)
    }

    pub fn voxel_to_world(&self, v: &Vec3) -> Vec3 {
        self.placement.voxel_to_world(v)
    }

    /// Trilinear sample at a fractional voxel-center coordinate (voxel `i`'s
    /// center sits at `i`). Coordinates are clamped to the grid.
    pub fn sample_center_coords(&self, c: [f64; 3]) -> f32 {
        let dims = self.dims().as_array();
        let mut lo = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let max = (dims[a] - 1) as f64;
            let ca = c[a].clamp(0.0, max);
            let i = (ca.floor() as usize).min(dims[a].saturating_sub(2));
            lo[a] = i;
            t[a] = if dims[a] == 1 { 0.0 } else { ca - i as f64 };
        }
        trilinear(&self.data, self.dims(), lo, t) as f32
    }

    /// Doubles the resolution. Distances are interpolated trilinearly
    /// (extended affinely past the outermost voxel centers), rescaled by 2
    /// into the finer voxel units, and clamped to the truncation range.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor != 2 {
            return Err(Error::UnsupportedFactor(factor));
        }
        let src = self.dims();
        let placement = self.placement.upsampled();
        let dst = placement.dims;
        let axis = |n_src: usize, i: usize| -> (usize, f64) {
            if n_src == 1 {
                return (0, 0.0);
            }
            let c = i as f64 / 2.0 - 0.25;
            let i0 = (c.floor().max(0.0) as usize).min(n_src - 2);
            (i0, c - i0 as f64)
        };
        let mut data = Vec::with_capacity(dst.count());
        for z in 0..dst.z {
            let (z0, tz) = axis(src.z, z);
            for y in 0..dst.y {
                let (y0, ty) = axis(src.y, y);
                for x in 0..dst.x {
                    let (x0, tx) = axis(src.x, x);
                    let v = trilinear(&self.data, src, [x0, y0, z0], [tx, ty, tz]);
                    data.push(self.kind.clamp((2.0 * v) as f32));
                }
            }
        }
        Ok(Self {
            placement,
            kind: self.kind,
            data,
        })
    }

    /// Halves the resolution by averaging 2x2x2 blocks and rescaling into the
    /// coarser voxel units. A trailing odd layer is dropped.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor != 2 {
            return Err(Error::UnsupportedFactor(factor));
        }
        let src = self.dims();
        let placement = self.placement.downsampled();
        let dst = placement.dims;
        let mut data = Vec::with_capacity(dst.count());
        for z in 0..dst.z {
            for y in 0..dst.y {
                for x in 0..dst.x {
                    let mut sum = 0.0f32;
                    let mut n = 0.0f32;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (sx, sy, sz) = (2 * x + dx, 2 * y + dy, 2 * z + dz);
                                if sx < src.x && sy < src.y && sz < src.z {
                                    sum += self.get(sx, sy, sz);
                                    n += 1.0;
                                }
                            }
                        }
                    }
                    data.push(self.kind.clamp(0.5 * sum / n));
                }
            }
        }
        Ok(Self {
            placement,
            kind: self.kind,
            data,
        })
    }

    /// Extracts a sub-grid starting at `offset` (may be negative in
    /// [`CropMode::Pad`]). Padded voxels take the kind's pad value.
    pub fn crop(&self, offset: [i64; 3], dims: GridDims, mode: CropMode) -> Result<Self> {
        let pad = self.kind.pad_value();
        let data = crop_generic(&self.data, self.dims(), offset, dims, mode, pad)?;
        Ok(Self {
            placement: self.placement.cropped(offset, dims),
            kind: self.kind,
            data,
        })
    }

    /// Values mapped through `f` and clamped into the kind's range.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            placement: self.placement,
            kind: self.kind,
            data: self.data.iter().map(|&v| self.kind.clamp(f(v))).collect(),
        }
    }

    /// `|value|` as an unsigned grid.
    pub fn to_unsigned(&self) -> Self {
        Self {
            placement: self.placement,
            kind: DistanceKind::Tdf,
            data: self.data.iter().map(|v| v.abs().min(TRUNCATION)).collect(),
        }
    }
}

/// Per-voxel class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    placement: Placement,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn filled(placement: Placement, class: SemanticClass) -> Self {
        Self {
            placement,
            labels: vec![class.id(); placement.dims.count()],
        }
    }

    pub fn from_labels(placement: Placement, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != placement.dims.count() {
            return Err(Error::DimMismatch(format!(
                "{} labels for a {} grid",
                labels.len(),
                placement.dims
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::OutOfRange(format!("label id {bad}")));
        }
        Ok(Self { placement, labels })
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn dims(&self) -> GridDims {
        self.placement.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> SemanticClass {
        let id = self.labels[self.placement.dims.index(x, y, z)];
        SemanticClass::from_id(id).unwrap_or(SemanticClass::Empty)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, class: SemanticClass) {
        let i = self.placement.dims.index(x, y, z);
        self.labels[i] = class.id();
    }

    #[inline]
    pub fn set_index(&mut self, index: usize, class: SemanticClass) {
        self.labels[index] = class.id();
    }

    /// Nearest-neighbor upsampling: each child voxel copies its parent.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor != 2 {
            return Err(Error::UnsupportedFactor(factor));
        }
        let src = self.dims();
        let placement = self.placement.upsampled();
        let dst = placement.dims;
        let mut labels = Vec::with_capacity(dst.count());
        for z in 0..dst.z {
            for y in 0..dst.y {
                for x in 0..dst.x {
                    labels.push(self.labels[src.index(x / 2, y / 2, z / 2)]);
                }
            }
        }
        Ok(Self { placement, labels })
    }

    /// Nearest-neighbor downsampling: each parent takes its first child.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor != 2 {
            return Err(Error::UnsupportedFactor(factor));
        }
        let src = self.dims();
        let placement = self.placement.downsampled();
        let dst = placement.dims;
        let mut labels = Vec::with_capacity(dst.count());
        for z in 0..dst.z {
            for y in 0..dst.y {
                for x in 0..dst.x {
                    labels.push(self.labels[src.index(
                        (2 * x).min(src.x - 1),
                        (2 * y).min(src.y - 1),
                        (2 * z).min(src.z - 1),
                    )]);
                }
            }
        }
        Ok(Self { placement, labels })
    }

    /// Sub-grid extraction; padded voxels are `Empty`.
    pub fn crop(&self, offset: [i64; 3], dims: GridDims, mode: CropMode) -> Result<Self> {
        let labels = crop_generic(
            &self.labels,
            self.dims(),
            offset,
            dims,
            mode,
            SemanticClass::Empty.id(),
        )?;
        Ok(Self {
            placement: self.placement.cropped(offset, dims),
            labels,
        })
    }
}

fn trilinear(data: &[f32], dims: GridDims, lo: [usize; 3], t: [f64; 3]) -> f64 {
    let hi = [
        (lo[0] + 1).min(dims.x - 1),
        (lo[1] + 1).min(dims.y - 1),
        (lo[2] + 1).min(dims.z - 1),
    ];
    let at = |x: usize, y: usize, z: usize| data[dims.index(x, y, z)] as f64;
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c00 = lerp(at(lo[0], lo[1], lo[2]), at(hi[0], lo[1], lo[2]), t[0]);
    let c10 = lerp(at(lo[0], hi[1], lo[2]), at(hi[0], hi[1], lo[2]), t[0]);
    let c01 = lerp(at(lo[0], lo[1], hi[2]), at(hi[0], lo[1], hi[2]), t[0]);
    let c11 = lerp(at(lo[0], hi[1], hi[2]), at(hi[0], hi[1], hi[2]), t[0]);
    lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2])
}

fn crop_generic<T: Copy>(
    src: &[T],
    src_dims: GridDims,
    offset: [i64; 3],
    dims: GridDims,
    mode: CropMode,
    pad: T,
) -> Result<Vec<T>> {
    let bounds = src_dims.as_array();
    let d = dims.as_array();
    let inside = (0..3).all(|a| offset[a] >= 0 && offset[a] as usize + d[a] <= bounds[a]);
    if !inside && mode == CropMode::Strict {
        return Err(Error::CropOutOfBounds {
            offset,
            dims: d,
            bounds,
        });
    }
    let mut out = vec![pad; dims.count()];
    for z in 0..dims.z {
        let sz = offset[2] + z as i64;
        if sz < 0 || sz as usize >= src_dims.z {
            continue;
        }
        for y in 0..dims.y {
            let sy = offset[1] + y as i64;
            if sy < 0 || sy as usize >= src_dims.y {
                continue;
            }
            // contiguous x run
            let x_lo = (-offset[0]).max(0) as usize;
            let x_hi = ((src_dims.x as i64 - offset[0]).min(dims.x as i64)).max(0) as usize;
            if x_lo >= x_hi {
                continue;
            }
            let src_start = src_dims.index((offset[0] + x_lo as i64) as usize, sy as usize, sz as usize);
            let dst_start = dims.index(x_lo, y, z);
            out[dst_start..dst_start + (x_hi - x_lo)]
                .copy_from_slice(&src[src_start..src_start + (x_hi - x_lo)]);
        }
    }
    Ok(out)
}

/// The three resolutions of the coarse-to-fine hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Coarse = 0,
    Mid = 1,
    Fine = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Coarse, Level::Mid, Level::Fine];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn finer(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }

    pub fn coarser(self) -> Option<Self> {
        self.index().checked_sub(1).and_then(Self::from_index)
    }

    pub fn spec(self) -> LevelSpec {
        LevelSpec::standard(self)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level{}", self.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: Level,
    pub voxel_size: f64,
    pub train_crop: GridDims,
}

impl LevelSpec {
    pub const COARSE_VOXEL_SIZE: f64 = 0.188;

    pub fn standard(level: Level) -> Self {
        let (voxel_size, train_crop) = match level {
            Level::Coarse => (0.188, GridDims::raw(32, 16, 32)),
            Level::Mid => (0.094, GridDims::raw(32, 32, 32)),
            Level::Fine => (0.047, GridDims::raw(32, 64, 32)),
        };
        Self {
            level,
            voxel_size,
            train_crop,
        }
    }
}

/// Grid layout shared by all three levels of one scene. The level grids
/// share an origin, and each finer level has exactly twice as many voxels
/// per axis, so upsampled predictions line up voxel for voxel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGrid {
    pub origin: Vec3,
    pub coarse_dims: GridDims,
}

impl SceneGrid {
    /// Covers `[min, max]` padded by `margin` meters on every side.
    pub fn covering(min: Vec3, max: Vec3, margin: f64) -> Result<Self> {
        let origin = min - Vec3::repeat(margin);
        let extent = max - min + Vec3::repeat(2.0 * margin);
        let n = |e: f64| ((e / LevelSpec::COARSE_VOXEL_SIZE) - 1e-9).ceil().max(1.0) as usize;
        let coarse_dims = GridDims::new(n(extent.x), n(extent.y), n(extent.z))?;
        Ok(Self {
            origin,
            coarse_dims,
        })
    }

    pub fn placement(&self, level: Level) -> Placement {
        let spec = level.spec();
        Placement::new(
            self.coarse_dims.scaled(1 << level.index()),
            spec.voxel_size,
            self.origin,
        )
    }
}
