//! Binary grid files.
//!
//! ```text
//! offset size  field
//! 0      4     magic "VXC1"
//! 4      1     kind byte: 0 = TSDF, 1 = TDF, 2 = none (labels / weights)
//! 5      12    dims x, y, z as u32
//! 17     8     voxel size in meters, f64
//! 25     24    origin x, y, z in meters, f64
//! 49     1     channel tag: 0 = distance (f32), 1 = labels (u8), 2 = fusion weights (f32)
//! 50     ...   payload, x-fastest
//! ```
//!
//! All multi-byte fields are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DistanceKind, GridDims, LabelVolume, Placement, VoxelVolume};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const GRID_MAGIC: &[u8; 4] = b"VXC1";
const HEADER_LEN: usize = 50;

const KIND_TSDF: u8 = 0;
const KIND_TDF: u8 = 1;
const KIND_NONE: u8 = 2;

const TAG_DISTANCE: u8 = 0;
const TAG_LABELS: u8 = 1;
const TAG_WEIGHTS: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum GridFile {
    Distance(VoxelVolume),
    Labels(LabelVolume),
    Weights { placement: Placement, weights: Vec<f32> },
}

impl GridFile {
    pub fn into_distance(self) -> Result<VoxelVolume> {
        match self {
            GridFile::Distance(v) => Ok(v),
            _ => Err(Error::format("grid file", "expected a distance channel")),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume> {
        match self {
            GridFile::Labels(v) => Ok(v),
            _ => Err(Error::format("grid file", "expected a label channel")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (placement, kind, tag) = match self {
            GridFile::Distance(v) => (
                *v.placement(),
                match v.kind() {
                    DistanceKind::Tsdf => KIND_TSDF,
                    DistanceKind::Tdf => KIND_TDF,
                },
                TAG_DISTANCE,
            ),
            GridFile::Labels(l) => (*l.placement(), KIND_NONE, TAG_LABELS),
            GridFile::Weights { placement, .. } => (*placement, KIND_NONE, TAG_WEIGHTS),
        };
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * placement.dims.count());
        out.extend_from_slice(GRID_MAGIC);
        out.push(kind);
        for d in placement.dims.as_array() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&placement.voxel_size.to_le_bytes());
        for c in placement.origin.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.push(tag);
        match self {
            GridFile::Distance(v) => v.data().iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            GridFile::Labels(l) => out.extend_from_slice(l.labels()),
            GridFile::Weights { weights, .. } => {
                weights.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()))
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("grid file", "truncated header"));
        }
        if &bytes[0..4] != GRID_MAGIC {
            return Err(Error::format("grid file", "bad magic"));
        }
        let kind = bytes[4];
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = GridDims::new(u32_at(5), u32_at(9), u32_at(13))?;
        let voxel_size = f64_at(17);
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::format("grid file", format!("voxel size {voxel_size}")));
        }
        let origin = Vec3::new(f64_at(25), f64_at(33), f64_at(41));
        let tag = bytes[49];
        let placement = Placement::new(dims, voxel_size, origin);
        let payload = &bytes[HEADER_LEN..];
        let n = dims.count();
        let read_f32 = |payload: &[u8]| -> Result<Vec<f32>> {
            if payload.len() != 4 * n {
                return Err(Error::format(
                    "grid file",
                    format!("payload is {} bytes, expected {}", payload.len(), 4 * n),
                ));
            }
            Ok(payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        match tag {
            TAG_DISTANCE => {
                let kind = match kind {
                    KIND_TSDF => DistanceKind::Tsdf,
                    KIND_TDF => DistanceKind::Tdf,
                    k => return Err(Error::format("grid file", format!("kind byte {k}"))),
                };
                Ok(GridFile::Distance(VoxelVolume::from_data(placement, kind, read_f32(payload)?)?))
            }
            TAG_LABELS => {
                if payload.len() != n {
                    return Err(Error::format("grid file", "label payload length"));
                }
                Ok(GridFile::Labels(LabelVolume::from_labels(placement, payload.to_vec())?))
            }
            TAG_WEIGHTS => Ok(GridFile::Weights {
                placement,
                weights: read_f32(payload)?,
            }),
            t => Err(Error::format("grid file", format!("channel tag {t}"))),
        }
    }
}

pub fn write_grid(path: impl AsRef<Path>, grid: &GridFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&grid.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridFile> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    GridFile::from_bytes(&bytes)
}
