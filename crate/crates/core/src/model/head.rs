//! Geometry head modes, decoding, and the per-group training losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{l1_masked_truncated, weighted_softmax_ce};
use crate::nn::{Scalar, Tensor5};
use crate::volume::TRUNCATION;

/// Bin counts accepted by the probabilistic head.
pub const SUPPORTED_BINS: [usize; 4] = [8, 16, 32, 256];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HeadMode {
    /// Direct TDF regression, clamped to `[0, 3]` when decoded.
    Deterministic,
    /// Classification over `bins` equal-width distance bins on `[0, 3]`.
    Probabilistic { bins: usize },
}

impl HeadMode {
    pub fn validate(self) -> Result<()> {
        match self {
            HeadMode::Probabilistic { bins } if !SUPPORTED_BINS.contains(&bins) => {
                Err(Error::InvalidParam(format!("{bins} bins (supported: {SUPPORTED_BINS:?})")))
            }
            _ => Ok(()),
        }
    }

    pub fn geometry_channels(self) -> usize {
        match self {
            HeadMode::Deterministic => 1,
            HeadMode::Probabilistic { bins } => bins,
        }
    }
}

pub fn bin_of(distance: f32, bins: usize) -> usize {
    let t = (distance.clamp(0.0, TRUNCATION) / TRUNCATION * bins as f32).floor() as usize;
    t.min(bins - 1)
}

pub fn bin_center(bin: usize, bins: usize) -> f32 {
    (bin as f32 + 0.5) * TRUNCATION / bins as f32
}

/// CE weight of a voxel by its target distance: 3 at the surface, 1 at truncation.
pub fn bin_weight(distance: f32) -> f32 {
    1.0 + 2.0 * (1.0 - distance.clamp(0.0, TRUNCATION) / TRUNCATION)
}

/// Index of the largest channel at voxel `i` of batch item 0; lowest wins ties.
fn argmax_channel<T: Scalar>(t: &Tensor5<T>, i: usize) -> usize {
    let sp = t.shape().spatial();
    let d = t.data();
    let mut best = 0;
    for c in 1..t.shape().c {
        if d[c * sp + i] > d[best * sp + i] {
            best = c;
        }
    }
    best
}

/// Per-voxel TDF values from the geometry head of batch item 0.
pub fn decode_geometry<T: Scalar>(mode: HeadMode, geometry: &Tensor5<T>) -> Vec<f32> {
    let sp = geometry.shape().spatial();
    match mode {
        HeadMode::Deterministic => geometry.data()[..sp].iter().map(|v| (v.as_f64() as f32).clamp(0.0, TRUNCATION)).collect(),
        HeadMode::Probabilistic { bins } => (0..sp).map(|i| bin_center(argmax_channel(geometry, i), bins)).collect(),
    }
}

/// Per-voxel class ids from semantic logits of batch item 0.
pub fn decode_labels<T: Scalar>(semantics: &Tensor5<T>) -> Vec<u8> {
    (0..semantics.shape().spatial()).map(|i| argmax_channel(semantics, i) as u8).collect()
}

/// Geometry loss over voxels with nonzero `mask`, with its gradient.
///
/// Regression uses L1 that treats truncated targets as lower bounds;
/// classification uses cross entropy over bins weighted by [`bin_weight`].
pub fn geometry_loss<T: Scalar>(mode: HeadMode, geometry: &Tensor5<T>, target: &[f32], mask: &[f32]) -> Result<(T, Tensor5<T>)> {
    match mode {
        HeadMode::Deterministic => {
            let t: Vec<T> = target.iter().map(|&v| T::of(v as f64)).collect();
            let m: Vec<T> = mask.iter().map(|&v| T::of(v as f64)).collect();
            let (loss, grad) = l1_masked_truncated(geometry.data(), &t, &m, T::of(TRUNCATION as f64))?;
            Ok((loss, Tensor5::from_vec(geometry.shape(), grad)?))
        }
        HeadMode::Probabilistic { bins } => {
            if target.len() != mask.len() {
                return Err(Error::DimMismatch("geometry target and mask lengths differ".into()));
            }
            mode.validate()?;
            // at most 256 bins, so every index fits a byte
            let labels: Vec<u8> = target.iter().map(|&d| bin_of(d, bins) as u8).collect();
            let w: Vec<T> = target.iter().zip(mask).map(|(&d, &m)| T::of((m * bin_weight(d)) as f64)).collect();
            weighted_softmax_ce(geometry, &labels, &w)
        }
    }
}
