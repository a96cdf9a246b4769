//! The eight interleaved voxel groups predicted one after another.
//!
//! Group ids run 1..=8 in lexicographic parity order: `id - 1 = 4*(x%2) + 2*(y%2) + z%2`.
//! Voxels of one group are never neighbors, not even diagonally.

use std::fmt;

use crate::volume::GridDims;

pub const GROUP_COUNT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelGroup(u8);

impl VoxelGroup {
    pub const ALL: [VoxelGroup; GROUP_COUNT] = [
        VoxelGroup(1),
        VoxelGroup(2),
        VoxelGroup(3),
        VoxelGroup(4),
        VoxelGroup(5),
        VoxelGroup(6),
        VoxelGroup(7),
        VoxelGroup(8),
    ];

    pub fn new(id: u8) -> Option<Self> {
        (1..=GROUP_COUNT as u8).contains(&id).then_some(Self(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Zero-based position in the prediction order.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// Parity offset `(x % 2, y % 2, z % 2)` of the group's voxels.
    pub fn parity(self) -> [usize; 3] {
        let i = self.index();
        [i >> 2 & 1, i >> 1 & 1, i & 1]
    }

    pub fn of_voxel(x: usize, y: usize, z: usize) -> Self {
        Self((4 * (x % 2) + 2 * (y % 2) + z % 2) as u8 + 1)
    }

    /// Per-voxel membership over a grid, x-fastest.
    pub fn mask(self, dims: GridDims) -> Vec<bool> {
        let [px, py, pz] = self.parity();
        let mut m = Vec::with_capacity(dims.count());
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    m.push(x % 2 == px && y % 2 == py && z % 2 == pz);
                }
            }
        }
        m
    }
}

impl fmt::Display for VoxelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group{}", self.0)
    }
}

/// Linear voxel indices of every group.
pub fn partition_groups(dims: GridDims) -> [Vec<usize>; GROUP_COUNT] {
    let mut out: [Vec<usize>; GROUP_COUNT] = Default::default();
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                out[VoxelGroup::of_voxel(x, y, z).index()].push(dims.index(x, y, z));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_differ() {
        assert_ne!(VoxelGroup::of_voxel(0, 0, 0), VoxelGroup::of_voxel(1, 0, 0));
        assert_eq!(VoxelGroup::of_voxel(0, 0, 0).id(), 1);
        assert_eq!(VoxelGroup::of_voxel(1, 1, 1).id(), 8);
        assert_eq!(VoxelGroup::of_voxel(0, 1, 0).parity(), [0, 1, 0]);
    }

    #[test]
    fn even_grid_splits_evenly() {
        let parts = partition_groups(GridDims::new(4, 4, 4).unwrap());
        assert!(parts.iter().all(|p| p.len() == 8));
    }

    #[test]
    fn mask_matches_partition() {
        let d = GridDims::new(3, 5, 2).unwrap();
        let parts = partition_groups(d);
        for g in VoxelGroup::ALL {
            let m = g.mask(d);
            let from_mask: Vec<usize> = (0..d.count()).filter(|&i| m[i]).collect();
            assert_eq!(from_mask, parts[g.index()]);
        }
    }
}
