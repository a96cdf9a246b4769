//! Virtual depth scanning: pinhole cameras, ray-cast depth rendering, depth
//! histograms compared by a 1-D earth mover's distance, and per-region camera
//! selection that favors realistic, object-rich views.
//!
//! Cameras follow the usual vision convention: camera x points right, y down,
//! z forward. Pixel `(u, v)` looks along `R * ((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1)`,
//! so the ray parameter of a hit equals its camera-space depth.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Bvh, Vec3};
use crate::volume::SemanticClass;

const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 288.0,
            fy: 288.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }
}

impl Intrinsics {
    /// Same field of view at `1/factor` the resolution.
    pub fn downscaled(&self, factor: usize) -> Self {
        let f = factor.max(1) as f64;
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: (self.width / factor.max(1)).max(1),
            height: (self.height / factor.max(1)).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Camera-to-world rotation; columns are the camera axes in world space.
    pub rotation: Matrix3<f64>,
    pub position: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: Matrix3<f64>, position: Vec3, near: f64, far: f64) -> Result<Self> {
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::InvalidParam("focal lengths must be positive".into()));
        }
        if intrinsics.width == 0 || intrinsics.height == 0 {
            return Err(Error::InvalidParam("image size must be positive".into()));
        }
        if !(near > 0.0 && near < far) {
            return Err(Error::InvalidParam(format!("clip range must satisfy 0 < near < far, got {near}..{far}")));
        }
        Ok(Self {
            intrinsics,
            rotation,
            position,
            near,
            far,
        })
    }

    /// Camera at `position` looking along the direction with heading `yaw`
    /// (radians about +y, 0 = +x) and `angle_from_up` between view and world up.
    pub fn looking(
        intrinsics: Intrinsics,
        position: Vec3,
        yaw: f64,
        angle_from_up: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let s = angle_from_up.sin();
        if s.abs() < 1e-9 {
            return Err(Error::InvalidParam("view direction parallel to world up".into()));
        }
        let look = Vec3::new(s * yaw.cos(), angle_from_up.cos(), s * yaw.sin());
        let right = look.cross(&UP).normalize();
        let down = look.cross(&right);
        Self::new(intrinsics, Matrix3::from_columns(&[right, down, look]), position, near, far)
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into()
    }

    pub fn height(&self) -> f64 {
        self.position.y
    }

    pub fn angle_from_up(&self) -> f64 {
        self.forward().dot(&UP).clamp(-1.0, 1.0).acos()
    }

    /// 4x4 camera-to-world transform.
    pub fn pose(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    pub fn from_pose(intrinsics: Intrinsics, pose: &Matrix4<f64>, near: f64, far: f64) -> Result<Self> {
        let rotation: Matrix3<f64> = pose.fixed_view::<3, 3>(0, 0).into();
        let position: Vec3 = pose.fixed_view::<3, 1>(0, 3).into();
        Self::new(intrinsics, rotation, position, near, far)
    }

    /// World-space ray direction through the center of pixel `(u, v)`,
    /// scaled so its camera-z component is 1.
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        let k = &self.intrinsics;
        let d = Vec3::new((u as f64 + 0.5 - k.cx) / k.fx, (v as f64 + 0.5 - k.cy) / k.fy, 1.0);
        self.rotation * d
    }

    /// Camera-space coordinates of a world point.
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }

    /// Pixel containing the projection of a world point, with its depth.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let u = (k.fx * c.x / c.z + k.cx).floor();
        let v = (k.fy * c.y / c.z + k.cy).floor();
        if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
            return None;
        }
        Some((u as usize, v as usize, c.z))
    }
}

/// Per-pixel depth (meters, 0 = miss) and class of the hit triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub classes: Vec<u8>,
}

pub const DEPTH_MAGIC: &[u8; 4] = b"VXD1";

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            classes: vec![SemanticClass::Empty.id(); width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width + u]
    }

    pub fn hit_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    /// Fraction of hit pixels showing a non-structural class.
    pub fn object_fraction(&self) -> f64 {
        let mut hits = 0usize;
        let mut objects = 0usize;
        for (d, c) in self.depth.iter().zip(&self.classes) {
            if *d > 0.0 {
                hits += 1;
                if SemanticClass::from_id(*c).is_some_and(SemanticClass::is_object) {
                    objects += 1;
                }
            }
        }
        if hits == 0 {
            0.0
        } else {
            objects as f64 / hits as f64
        }
    }

    /// `VXD1`, width and height as u32, then f32 depths and u8 classes,
    /// row-major, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 5 * self.depth.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.depth {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.classes);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 12 || &b[0..4] != DEPTH_MAGIC {
            return Err(Error::format("depth image", "bad header"));
        }
        let w = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
        let n = w * h;
        if b.len() != 12 + 5 * n {
            return Err(Error::format("depth image", "payload length"));
        }
        let depth = b[12..12 + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            width: w,
            height: h,
            depth,
            classes: b[12 + 4 * n..].to_vec(),
        })
    }
}

/// Ray-casts every pixel; hits outside `[near, far]` are ignored.
pub fn render_depth(bvh: &Bvh, cam: &Camera) -> DepthImage {
    let k = cam.intrinsics;
    let mut img = DepthImage::new(k.width, k.height);
    for v in 0..k.height {
        for u in 0..k.width {
            let dir = cam.ray(u, v);
            if let Some(hit) = bvh.raycast(&cam.position, &dir, cam.near, cam.far) {
                let i = v * k.width + u;
                img.depth[i] = hit.t as f32;
                img.classes[i] = bvh.triangles()[hit.triangle].class.id();
            }
        }
    }
    img
}

/// Normalized histogram over uniform bins spanning `[lo, hi]` meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.mass.len() as f64
    }

    pub fn bin_of(&self, value: f64) -> usize {
        let b = ((value - self.lo) / self.bin_width()).floor();
        (b.max(0.0) as usize).min(self.mass.len() - 1)
    }

    /// Discretized normal density, normalized to unit mass.
    pub fn gaussian(lo: f64, hi: f64, bins: usize, mean: f64, std: f64) -> Result<Self> {
        if bins == 0 || !(hi > lo) || !(std > 0.0) {
            return Err(Error::Histogram("gaussian reference needs bins > 0, hi > lo, std > 0".into()));
        }
        let w = (hi - lo) / bins as f64;
        let mut mass: Vec<f64> = (0..bins)
            .map(|i| {
                let c = lo + (i as f64 + 0.5) * w;
                (-(c - mean).powi(2) / (2.0 * std * std)).exp()
            })
            .collect();
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        Ok(Self { lo, hi, mass })
    }

    fn check(&self) -> Result<()> {
        let total: f64 = self.mass.iter().sum();
        if self.mass.is_empty() || (total - 1.0).abs() > 1e-6 || self.mass.iter().any(|&m| m < 0.0) {
            return Err(Error::Histogram(format!("histogram must be nonnegative with unit mass, sums to {total}")));
        }
        Ok(())
    }
}

/// Histogram of the nonzero depths; values outside the range land in the end bins.
pub fn depth_histogram(d: &DepthImage, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Histogram(format!("invalid bins {bins} over [{lo}, {hi}]")));
    }
    let mut h = Histogram {
        lo,
        hi,
        mass: vec![0.0; bins],
    };
    let mut n = 0usize;
    for &z in &d.depth {
        if z > 0.0 {
            let b = h.bin_of(z as f64);
            h.mass[b] += 1.0;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDepth);
    }
    h.mass.iter_mut().for_each(|m| *m /= n as f64);
    Ok(h)
}

/// Earth mover's distance between 1-D histograms on the same bins:
/// the L1 distance between their cumulative sums times the bin width.
pub fn emd_1d(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.bins() != b.bins() || a.lo != b.lo || a.hi != b.hi {
        return Err(Error::Histogram(format!(
            "bin layouts differ: {} bins over [{}, {}] vs {} bins over [{}, {}]",
            a.bins(),
            a.lo,
            a.hi,
            b.bins(),
            b.lo,
            b.hi
        )));
    }
    a.check()?;
    b.check()?;
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.mass.iter().zip(&b.mass) {
        ca += x;
        cb += y;
        sum += (ca - cb).abs();
    }
    Ok(sum * a.bin_width())
}

pub fn gaussian_density(x: f64, mean: f64, std: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * std * std)).exp() / (std * (2.0 * PI).sqrt())
}

/// Statistics a realistic scanning trajectory should follow. Variances are
/// in squared meters / radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub height_mean: f64,
    pub height_var: f64,
    pub angle_mean: f64,
    pub angle_var: f64,
    pub emd_mean: f64,
    pub emd_var: f64,
    pub reference: Histogram,
}

impl Default for TrajectoryStats {
    fn default() -> Self {
        Self {
            height_mean: 1.5,
            height_var: 0.1 * 0.1,
            angle_mean: 100f64.to_radians(),
            angle_var: 10f64.to_radians().powi(2),
            emd_mean: 0.5,
            emd_var: 0.3 * 0.3,
            reference: Histogram::gaussian(0.0, 6.0, 24, 2.2, 0.9).expect("valid reference"),
        }
    }
}

impl TrajectoryStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.height_var >= 0.0 && self.angle_var >= 0.0 && self.emd_var > 0.0) {
            return Err(Error::InvalidParam("trajectory variances must be nonnegative (emd variance positive)".into()));
        }
        self.reference.check()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraScore {
    pub score: f64,
    pub emd: f64,
    pub object_fraction: f64,
}

/// Score of an already rendered view. Views with no hits score 0.
pub fn score_depth(depth: &DepthImage, stats: &TrajectoryStats, lambda: f64) -> Result<CameraScore> {
    let h = match depth_histogram(depth, stats.reference.lo, stats.reference.hi, stats.reference.bins()) {
        Ok(h) => h,
        Err(Error::EmptyDepth) => {
            return Ok(CameraScore {
                score: 0.0,
                emd: f64::NAN,
                object_fraction: 0.0,
            })
        }
        Err(e) => return Err(e),
    };
    let emd = emd_1d(&h, &stats.reference)?;
    let object_fraction = depth.object_fraction();
    let score = lambda * gaussian_density(emd, stats.emd_mean, stats.emd_var.sqrt()) + (1.0 - lambda) * object_fraction;
    Ok(CameraScore {
        score,
        emd,
        object_fraction,
    })
}

pub fn score_camera(bvh: &Bvh, cam: &Camera, stats: &TrajectoryStats, lambda: f64) -> Result<CameraScore> {
    score_depth(&render_depth(bvh, cam), stats, lambda)
}

/// Index of the largest score; ties resolve to the lowest index.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Edge length of the cubic regions that each receive one camera.
    pub region_size: f64,
    pub candidates: usize,
    pub lambda: f64,
    pub intrinsics: Intrinsics,
    /// Candidates are scored on images downscaled by this factor.
    pub candidate_downscale: usize,
    pub near: f64,
    pub far: f64,
    /// Minimum distance between a candidate and the walls.
    pub wall_margin: f64,
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            region_size: 1.5,
            candidates: 32,
            lambda: 0.5,
            intrinsics: Intrinsics::default(),
            candidate_downscale: 1,
            near: 0.1,
            far: 10.0,
            wall_margin: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RegionOutcome {
    Selected { candidate: usize, score: f64 },
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub index: [usize; 3],
    pub bounds: Aabb,
    /// Valid candidates in draw order.
    pub candidates: Vec<Camera>,
    pub scores: Vec<f64>,
    pub outcome: RegionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub cameras: Vec<Camera>,
    pub regions: Vec<RegionRecord>,
}

impl Trajectory {
    pub fn skipped(&self) -> usize {
        self.regions
            .iter()
            .filter(|r| matches!(r.outcome, RegionOutcome::Skipped { .. }))
            .count()
    }
}

/// Tiles the room with cubic regions and keeps the best-scoring valid
/// candidate of each. A candidate is valid when its height lies inside the
/// region and both height and view angle are within 4 standard deviations
/// of the configured statistics.
pub fn build_trajectory(room: &Aabb, bvh: &Bvh, stats: &TrajectoryStats, cfg: &TrajectoryConfig) -> Result<Trajectory> {
    stats.validate()?;
    if !(cfg.region_size > 0.0) || cfg.candidates == 0 {
        return Err(Error::InvalidParam("region size and candidate count must be positive".into()));
    }
    let ext = room.extent();
    if !(ext.x > 0.0 && ext.z > 0.0) {
        return Err(Error::InvalidParam("room has no floor area".into()));
    }
    let count = |e: f64| ((e / cfg.region_size) - 1e-9).ceil().max(1.0) as usize;
    let (nx, ny, nz) = (count(ext.x), count(ext.y), count(ext.z));
    let (h_std, a_std) = (stats.height_var.sqrt(), stats.angle_var.sqrt());
    let height_dist = Normal::new(stats.height_mean, h_std).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let angle_dist = Normal::new(stats.angle_mean, a_std).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let scoring_intrinsics = cfg.intrinsics.downscaled(cfg.candidate_downscale);

    let mut cameras = Vec::new();
    let mut regions = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let lo = room.min + Vec3::new(i as f64, j as f64, k as f64) * cfg.region_size;
                let hi = (lo + Vec3::repeat(cfg.region_size)).inf(&room.max);
                let bounds = Aabb::new(lo, hi);
                let region_id = (k * ny + j) * nx + i;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (region_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let (x0, x1) = (lo.x.max(room.min.x + cfg.wall_margin), hi.x.min(room.max.x - cfg.wall_margin));
                let (z0, z1) = (lo.z.max(room.min.z + cfg.wall_margin), hi.z.min(room.max.z - cfg.wall_margin));

                let mut candidates = Vec::new();
                let mut scores = Vec::new();
                for _ in 0..cfg.candidates {
                    let h = height_dist.sample(&mut rng);
                    let angle = angle_dist.sample(&mut rng);
                    let yaw = rng.random_range(0.0..2.0 * PI);
                    let (u, w) = (rng.random::<f64>(), rng.random::<f64>());
                    let valid = h >= lo.y
                        && h < hi.y
                        && (h - stats.height_mean).abs() <= 4.0 * h_std
                        && (angle - stats.angle_mean).abs() <= 4.0 * a_std
                        && x0 < x1
                        && z0 < z1;
                    if !valid {
                        continue;
                    }
                    let pos = Vec3::new(x0 + u * (x1 - x0), h, z0 + w * (z1 - z0));
                    let cam = Camera::looking(scoring_intrinsics, pos, yaw, angle, cfg.near, cfg.far)?;
                    scores.push(score_camera(bvh, &cam, stats, cfg.lambda)?.score);
                    candidates.push(cam);
                }
                let outcome = match select_best(&scores) {
                    Some(c) => {
                        let mut cam = candidates[c];
                        cam.intrinsics = cfg.intrinsics;
                        cameras.push(cam);
                        RegionOutcome::Selected {
                            candidate: c,
                            score: scores[c],
                        }
                    }
                    None => RegionOutcome::Skipped {
                        reason: format!("none of {} candidates satisfied the height/angle constraints", cfg.candidates),
                    },
                };
                regions.push(RegionRecord {
                    index: [i, j, k],
                    bounds,
                    candidates,
                    scores,
                    outcome,
                });
            }
        }
    }
    Ok(Trajectory { cameras, regions })
}

/// Fits the EMD mean and variance from random views of the given scenes.
/// Views are drawn like trajectory candidates, uniformly over each room.
pub fn bootstrap_emd_stats(
    scenes: &[(Aabb, &Bvh)],
    stats: &TrajectoryStats,
    cfg: &TrajectoryConfig,
    views_per_scene: usize,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB007);
    let height_dist = Normal::new(stats.height_mean, stats.height_var.sqrt()).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let angle_dist = Normal::new(stats.angle_mean, stats.angle_var.sqrt()).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let intr = cfg.intrinsics.downscaled(cfg.candidate_downscale);
    let mut emds = Vec::new();
    for (room, bvh) in scenes {
        let m = cfg.wall_margin;
        for _ in 0..views_per_scene {
            let pos = Vec3::new(
                rng.random_range(room.min.x + m..room.max.x - m),
                height_dist.sample(&mut rng).clamp(room.min.y + m, room.max.y - m),
                rng.random_range(room.min.z + m..room.max.z - m),
            );
            let cam = Camera::looking(intr, pos, rng.random_range(0.0..2.0 * PI), angle_dist.sample(&mut rng), cfg.near, cfg.far)?;
            let depth = render_depth(bvh, &cam);
            if let Ok(h) = depth_histogram(&depth, stats.reference.lo, stats.reference.hi, stats.reference.bins()) {
                emds.push(emd_1d(&h, &stats.reference)?);
            }
        }
    }
    if emds.len() < 2 {
        return Err(Error::EmptyDepth);
    }
    let n = emds.len() as f64;
    let mean = emds.iter().sum::<f64>() / n;
    let var = emds.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.max(1e-12)))
}

/// Text manifest: one `camera` line with intrinsics and clip range, then
/// the four rows of the camera-to-world pose.
pub fn trajectory_to_text(cameras: &[Camera]) -> String {
    let mut s = String::from("# voxfill trajectory v1\n");
    for c in cameras {
        let k = &c.intrinsics;
        let _ = writeln!(s, "camera {} {} {} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height, c.near, c.far);
        let m = c.pose();
        for r in 0..4 {
            let _ = writeln!(s, "{} {} {} {}", m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]);
        }
    }
    s
}

pub fn trajectory_from_text(text: &str) -> Result<Vec<Camera>> {
    let bad = |d: &str| Error::format("trajectory", d.to_string());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let mut cams = Vec::new();
    while let Some(head) = lines.next() {
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 9 || f[0] != "camera" {
            return Err(bad(&format!("expected camera line, got `{head}`")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("integer `{s}`")));
        let k = Intrinsics {
            fx: num(f[1])?,
            fy: num(f[2])?,
            cx: num(f[3])?,
            cy: num(f[4])?,
            width: int(f[5])?,
            height: int(f[6])?,
        };
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            let row = lines.next().ok_or_else(|| bad("truncated pose"))?;
            let vals: Vec<f64> = row.split_whitespace().map(num).collect::<Result<_>>()?;
            if vals.len() != 4 {
                return Err(bad("pose row needs 4 values"));
            }
            for c in 0..4 {
                m[(r, c)] = vals[c];
            }
        }
        cams.push(Camera::from_pose(k, &m, num(f[7])?, num(f[8])?)?);
    }
    Ok(cams)
}

pub fn write_trajectory(path: &Path, cameras: &[Camera]) -> Result<()> {
    std::fs::write(path, trajectory_to_text(cameras))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Camera>> {
    trajectory_from_text(&std::fs::read_to_string(path)?)
}
