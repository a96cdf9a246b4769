//! Procedural indoor scenes: a box-shaped room shell with window cutouts and
//! axis-aligned furniture assembled from labeled boxes.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_triangles, quad_triangles, Aabb, Triangle, Vec3};
use crate::volume::SemanticClass;

/// Classes furniture may be drawn from, largest footprint first.
pub const FURNITURE_CLASSES: [SemanticClass; 7] = [
    SemanticClass::Bed,
    SemanticClass::Sofa,
    SemanticClass::Table,
    SemanticClass::Furn,
    SemanticClass::Chair,
    SemanticClass::Tv,
    SemanticClass::Obj,
];

/// Gap kept between furniture footprints and between furniture and walls.
const CLEARANCE: f64 = 0.05;
const WALL_MARGIN: f64 = 0.02;
const LAYOUT_ATTEMPTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub seed: u64,
    /// Room extent along x, meters (inclusive range).
    pub room_x: (f64, f64),
    pub room_z: (f64, f64),
    pub room_height: (f64, f64),
    pub furniture_count: (usize, usize),
    pub window_count: (usize, usize),
    /// Relative frequency of each furniture class.
    pub class_weights: Vec<(SemanticClass, f64)>,
    /// Placement attempts per furniture item before giving up.
    pub max_retries: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            seed: 0,
            room_x: (3.0, 5.5),
            room_z: (3.0, 5.5),
            room_height: (2.4, 2.8),
            furniture_count: (2, 6),
            window_count: (0, 2),
            class_weights: vec![
                (SemanticClass::Bed, 1.0),
                (SemanticClass::Chair, 2.0),
                (SemanticClass::Sofa, 1.0),
                (SemanticClass::Table, 1.5),
                (SemanticClass::Furn, 1.5),
                (SemanticClass::Obj, 1.5),
                (SemanticClass::Tv, 0.7),
            ],
            max_retries: 200,
        }
    }
}

impl SceneParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64), min: f64| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
                return Err(Error::InvalidParam(format!(
                    "{name} range ({lo}, {hi}) must satisfy {min} <= lo <= hi"
                )));
            }
            Ok(())
        };
        // the largest template (bed, ~2.1 m) must fit with wall margins
        range("room_x", self.room_x, 2.4)?;
        range("room_z", self.room_z, 2.4)?;
        range("room_height", self.room_height, 2.0)?;
        if self.furniture_count.0 > self.furniture_count.1 {
            return Err(Error::InvalidParam("furniture_count min > max".into()));
        }
        if self.window_count.0 > self.window_count.1 || self.window_count.1 > 4 {
            return Err(Error::InvalidParam("window_count must be within 0..=4".into()));
        }
        if self.furniture_count.1 > 0 {
            let mut total = 0.0;
            for &(c, w) in &self.class_weights {
                if !FURNITURE_CLASSES.contains(&c) {
                    return Err(Error::InvalidParam(format!("{c} is not a furniture class")));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidParam(format!("weight {w} for {c}")));
                }
                total += w;
            }
            if total <= 0.0 {
                return Err(Error::InvalidParam("class weights sum to zero".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallSide {
    MinX,
    MaxX,
    MinZ,
    MaxZ,
}

impl WallSide {
    const ALL: [WallSide; 4] = [WallSide::MinX, WallSide::MaxX, WallSide::MinZ, WallSide::MaxZ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FurnitureItem {
    pub class: SemanticClass,
    pub bounds: Aabb,
    pub parts: Vec<Aabb>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRect {
    pub wall: WallSide,
    /// Flat box lying in the wall plane.
    pub rect: Aabb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub triangles: Vec<Triangle>,
    pub bounds: Aabb,
    pub room: Aabb,
    pub furniture: Vec<FurnitureItem>,
    pub windows: Vec<WindowRect>,
}

/// Box summary written next to the OBJ export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub room: Aabb,
    pub furniture: Vec<FurnitureItem>,
    pub windows: Vec<WindowRect>,
}

pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sx = sample_range(&mut rng, params.room_x);
    let sz = sample_range(&mut rng, params.room_z);
    let h = sample_range(&mut rng, params.room_height);
    let room = Aabb::new(Vec3::zeros(), Vec3::new(sx, h, sz));

    let n_windows = rng.random_range(params.window_count.0..=params.window_count.1);
    let mut sides = WallSide::ALL.to_vec();
    let mut windows = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let side = sides.remove(rng.random_range(0..sides.len()));
        windows.push(make_window(&mut rng, &room, side));
    }

    let mut triangles = room_shell(&room, &windows);

    let n_furniture = rng.random_range(params.furniture_count.0..=params.furniture_count.1);
    let mut furniture = Vec::new();
    let mut last_err = None;
    // a dead-end layout is discarded and redrawn with a fresh class mix
    for _ in 0..LAYOUT_ATTEMPTS {
        match place_layout(&mut rng, params, n_furniture, &room) {
            Ok(items) => {
                furniture = items;
                last_err = None;
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    if let Some(e) = last_err {
        return Err(e);
    }
    for item in &furniture {
        for part in &item.parts {
            let on_floor = part.min.y <= 1e-12;
            triangles.extend(box_triangles(part, item.class, !on_floor));
        }
    }

    Ok(Scene {
        triangles,
        bounds: room,
        room,
        furniture,
        windows,
    })
}

fn place_layout(
    rng: &mut ChaCha8Rng,
    params: &SceneParams,
    n: usize,
    room: &Aabb,
) -> Result<Vec<FurnitureItem>> {
    let mut classes: Vec<SemanticClass> = (0..n).map(|_| pick_class(rng, &params.class_weights)).collect();
    // large footprints first, so small items fill the remaining gaps
    classes.sort_by_key(|c| FURNITURE_CLASSES.iter().position(|f| f == c));
    let mut furniture: Vec<FurnitureItem> = Vec::with_capacity(n);
    for class in classes {
        let item = place_item(rng, class, room, &furniture, params.max_retries)?;
        furniture.push(item);
    }
    Ok(furniture)
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn pick_class(rng: &mut ChaCha8Rng, weights: &[(SemanticClass, f64)]) -> SemanticClass {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut r = rng.random_range(0.0..total);
    for &(c, w) in weights {
        if r < w {
            return c;
        }
        r -= w;
    }
    weights.iter().rev().find(|w| w.1 > 0.0).map(|w| w.0).unwrap_or(SemanticClass::Obj)
}

fn make_window(rng: &mut ChaCha8Rng, room: &Aabb, side: WallSide) -> WindowRect {
    let wall_len = match side {
        WallSide::MinX | WallSide::MaxX => room.max.z,
        WallSide::MinZ | WallSide::MaxZ => room.max.x,
    };
    let width = rng.random_range(0.8..1.4f64).min(wall_len - 0.6);
    let height = rng.random_range(0.9..1.2f64);
    let sill = rng.random_range(0.8..1.0f64).min(room.max.y - height - 0.2);
    let start = rng.random_range(0.3..=(wall_len - width - 0.3));
    let (a0, a1, y0, y1) = (start, start + width, sill, sill + height);
    let rect = match side {
        WallSide::MinX => Aabb::new(Vec3::new(0.0, y0, a0), Vec3::new(0.0, y1, a1)),
        WallSide::MaxX => Aabb::new(Vec3::new(room.max.x, y0, a0), Vec3::new(room.max.x, y1, a1)),
        WallSide::MinZ => Aabb::new(Vec3::new(a0, y0, 0.0), Vec3::new(a1, y1, 0.0)),
        WallSide::MaxZ => Aabb::new(Vec3::new(a0, y0, room.max.z), Vec3::new(a1, y1, room.max.z)),
    };
    WindowRect { wall: side, rect }
}

/// Floor, ceiling and four walls. Walls with a window are split into the
/// four rectangles around the opening plus the window pane itself.
fn room_shell(room: &Aabb, windows: &[WindowRect]) -> Vec<Triangle> {
    let (x1, h, z1) = (room.max.x, room.max.y, room.max.z);
    let p = Vec3::new;
    let mut tris = Vec::new();
    tris.extend(quad_triangles(
        &[p(0.0, 0.0, 0.0), p(0.0, 0.0, z1), p(x1, 0.0, z1), p(x1, 0.0, 0.0)],
        SemanticClass::Floor,
    ));
    tris.extend(quad_triangles(
        &[p(0.0, h, 0.0), p(x1, h, 0.0), p(x1, h, z1), p(0.0, h, z1)],
        SemanticClass::Ceil,
    ));
    for side in WallSide::ALL {
        // wall parametrized by (a along the wall, y)
        let (len, map): (f64, Box<dyn Fn(f64, f64) -> Vec3>) = match side {
            WallSide::MinX => (z1, Box::new(move |a, y| p(0.0, y, a))),
            WallSide::MaxX => (z1, Box::new(move |a, y| p(x1, y, a))),
            WallSide::MinZ => (x1, Box::new(move |a, y| p(a, y, 0.0))),
            WallSide::MaxZ => (x1, Box::new(move |a, y| p(a, y, z1))),
        };
        let rect = |a0: f64, a1: f64, y0: f64, y1: f64, class| {
            quad_triangles(&[map(a0, y0), map(a1, y0), map(a1, y1), map(a0, y1)], class)
        };
        match windows.iter().find(|w| w.wall == side) {
            None => tris.extend(rect(0.0, len, 0.0, h, SemanticClass::Wall)),
            Some(w) => {
                let (a0, a1) = match side {
                    WallSide::MinX | WallSide::MaxX => (w.rect.min.z, w.rect.max.z),
                    WallSide::MinZ | WallSide::MaxZ => (w.rect.min.x, w.rect.max.x),
                };
                let (y0, y1) = (w.rect.min.y, w.rect.max.y);
                tris.extend(rect(0.0, a0, 0.0, h, SemanticClass::Wall));
                tris.extend(rect(a1, len, 0.0, h, SemanticClass::Wall));
                tris.extend(rect(a0, a1, 0.0, y0, SemanticClass::Wall));
                tris.extend(rect(a0, a1, y1, h, SemanticClass::Wall));
                tris.extend(rect(a0, a1, y0, y1, SemanticClass::Wind));
            }
        }
    }
    tris
}

/// Parts in a local frame: x = width, z = depth, resting on y = 0, with the
/// footprint anchored at the origin. `back` parts sit at the +z edge.
fn template(rng: &mut ChaCha8Rng, class: SemanticClass) -> Vec<Aabb> {
    let b = |x0: f64, y0: f64, z0: f64, x1: f64, y1: f64, z1: f64| Aabb::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1));
    let mut j = |lo: f64, hi: f64| rng.random_range(lo..=hi);
    match class {
        SemanticClass::Bed => {
            let (w, h, d) = (j(1.2, 1.8), j(0.4, 0.6), j(1.9, 2.1));
            vec![b(0.0, 0.0, 0.0, w, h, d), b(0.0, h, d - 0.08, w, h + j(0.3, 0.5), d)]
        }
        SemanticClass::Chair => {
            let (w, seat, d) = (j(0.42, 0.55), j(0.42, 0.48), j(0.42, 0.55));
            vec![b(0.0, 0.0, 0.0, w, seat, d), b(0.0, seat, d - 0.06, w, seat + j(0.35, 0.5), d)]
        }
        SemanticClass::Sofa => {
            let (w, seat, d) = (j(1.5, 2.1), j(0.4, 0.48), j(0.8, 0.95));
            vec![b(0.0, 0.0, 0.0, w, seat, d), b(0.0, seat, d - 0.2, w, seat + j(0.35, 0.45), d)]
        }
        SemanticClass::Table => {
            let (w, h, d, t, leg) = (j(0.8, 1.5), j(0.7, 0.78), j(0.6, 0.95), 0.05, 0.06);
            vec![
                b(0.0, h - t, 0.0, w, h, d),
                b(0.0, 0.0, 0.0, leg, h - t, leg),
                b(w - leg, 0.0, 0.0, w, h - t, leg),
                b(0.0, 0.0, d - leg, leg, h - t, d),
                b(w - leg, 0.0, d - leg, w, h - t, d),
            ]
        }
        SemanticClass::Furn => {
            let (w, h, d) = (j(0.6, 1.2), j(0.8, 1.9), j(0.35, 0.6));
            vec![b(0.0, 0.0, 0.0, w, h, d)]
        }
        SemanticClass::Obj => {
            let (w, h, d) = (j(0.2, 0.45), j(0.2, 0.5), j(0.2, 0.45));
            vec![b(0.0, 0.0, 0.0, w, h, d)]
        }
        SemanticClass::Tv => {
            let (w, h, d) = (j(0.8, 1.2), j(0.5, 0.7), 0.08);
            vec![b(0.0, 0.0, 0.0, w, h, d)]
        }
        _ => unreachable!("not a furniture class"),
    }
}

/// Rotates a local footprint by `quarter` right angles about +y and
/// translates its min corner to `(x, y, z)`.
fn transform(parts: &[Aabb], quarter: u8, at: Vec3) -> Vec<Aabb> {
    let mut local = Aabb::empty();
    for p in parts {
        local = local.union(p);
    }
    let (w, d) = (local.max.x, local.max.z);
    parts
        .iter()
        .map(|p| {
            let (x0, x1, z0, z1) = match quarter % 4 {
                0 => (p.min.x, p.max.x, p.min.z, p.max.z),
                1 => (p.min.z, p.max.z, w - p.max.x, w - p.min.x),
                2 => (w - p.max.x, w - p.min.x, d - p.max.z, d - p.min.z),
                _ => (d - p.max.z, d - p.min.z, p.min.x, p.max.x),
            };
            Aabb::new(
                Vec3::new(x0 + at.x, p.min.y + at.y, z0 + at.z),
                Vec3::new(x1 + at.x, p.max.y + at.y, z1 + at.z),
            )
        })
        .collect()
}

fn bounds_of(parts: &[Aabb]) -> Aabb {
    parts.iter().fold(Aabb::empty(), |acc, p| acc.union(p))
}

fn place_item(
    rng: &mut ChaCha8Rng,
    class: SemanticClass,
    room: &Aabb,
    placed: &[FurnitureItem],
    max_retries: usize,
) -> Result<FurnitureItem> {
    let inner = Aabb::new(
        room.min + Vec3::new(WALL_MARGIN, 0.0, WALL_MARGIN),
        room.max - Vec3::new(WALL_MARGIN, WALL_MARGIN, WALL_MARGIN),
    );
    for _ in 0..max_retries.max(1) {
        let local = template(rng, class);
        let quarter: u8 = rng.random_range(0..4);
        let probe = transform(&local, quarter, Vec3::zeros());
        let size = bounds_of(&probe).extent();
        if size.x > inner.extent().x || size.z > inner.extent().z {
            continue;
        }

        // objects may rest on top of an earlier support surface
        if class == SemanticClass::Obj && rng.random_bool(0.5) {
            let supports: Vec<&FurnitureItem> = placed
                .iter()
                .filter(|f| matches!(f.class, SemanticClass::Table | SemanticClass::Furn | SemanticClass::Bed))
                .collect();
            if !supports.is_empty() {
                let s = supports[rng.random_range(0..supports.len())];
                let top = s.bounds;
                if size.x <= top.extent().x && size.z <= top.extent().z {
                    let x = rng.random_range(top.min.x..=top.max.x - size.x);
                    let z = rng.random_range(top.min.z..=top.max.z - size.z);
                    let parts = transform(&local, quarter, Vec3::new(x, top.max.y, z));
                    let bounds = bounds_of(&parts);
                    if inner.contains_box(&bounds) && !collides(&bounds, placed, Some(s)) {
                        return Ok(FurnitureItem { class, bounds, parts });
                    }
                }
            }
        }

        let (x, y, z) = if class == SemanticClass::Tv {
            // mounted flat against a wall
            let height = rng.random_range(0.8..1.3);
            let (w, d) = (size.x.max(size.z), size.x.min(size.z));
            let along_x = size.x >= size.z;
            let (x, z) = if along_x {
                let x = rng.random_range(inner.min.x..=inner.max.x - w);
                let z = if rng.random_bool(0.5) { inner.min.z } else { inner.max.z - d };
                (x, z)
            } else {
                let z = rng.random_range(inner.min.z..=inner.max.z - w);
                let x = if rng.random_bool(0.5) { inner.min.x } else { inner.max.x - d };
                (x, z)
            };
            (x, height, z)
        } else {
            (
                rng.random_range(inner.min.x..=inner.max.x - size.x),
                0.0,
                rng.random_range(inner.min.z..=inner.max.z - size.z),
            )
        };
        let parts = transform(&local, quarter, Vec3::new(x, y, z));
        let bounds = bounds_of(&parts);
        if inner.contains_box(&bounds) && !collides(&bounds, placed, None) {
            return Ok(FurnitureItem { class, bounds, parts });
        }
    }
    Err(Error::InfeasiblePlacement(format!(
        "could not place {class} without overlapping other furniture or leaving the room after {max_retries} attempts"
    )))
}

fn collides(b: &Aabb, placed: &[FurnitureItem], support: Option<&FurnitureItem>) -> bool {
    placed.iter().any(|f| {
        if support.is_some_and(|s| std::ptr::eq(s, f)) {
            return false;
        }
        let vertical = b.min.y < f.bounds.max.y + CLEARANCE && f.bounds.min.y < b.max.y + CLEARANCE;
        vertical && b.overlaps_xz(&f.bounds, CLEARANCE)
    })
}

impl Scene {
    pub fn sidecar(&self) -> SceneSidecar {
        SceneSidecar {
            room: self.room,
            furniture: self.furniture.clone(),
            windows: self.windows.clone(),
        }
    }

    /// Wavefront OBJ with one `usemtl <class>` group per class.
    pub fn to_obj(&self) -> String {
        let mut s = String::from("# voxfill scene\n");
        for t in &self.triangles {
            for v in &t.v {
                let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
            }
        }
        let mut current = None;
        for (i, t) in self.triangles.iter().enumerate() {
            if current != Some(t.class) {
                let _ = writeln!(s, "usemtl {}", t.class.name());
                current = Some(t.class);
            }
            let _ = writeln!(s, "f {} {} {}", 3 * i + 1, 3 * i + 2, 3 * i + 3);
        }
        s
    }

    pub fn write(&self, obj_path: &Path, sidecar_path: &Path) -> Result<()> {
        std::fs::write(obj_path, self.to_obj())?;
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(())
    }

    pub fn read(obj_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let triangles = read_obj(std::fs::File::open(obj_path)?)?;
        let sidecar: SceneSidecar = serde_json::from_slice(&std::fs::read(sidecar_path)?)?;
        Ok(Scene {
            triangles,
            bounds: sidecar.room,
            room: sidecar.room,
            furniture: sidecar.furniture,
            windows: sidecar.windows,
        })
    }
}

/// Reads triangles from an OBJ whose material names are class names.
pub fn read_obj(r: impl Read) -> Result<Vec<Triangle>> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let mut class = SemanticClass::Empty;
    for line in BufReader::new(r).lines() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| Error::format("obj", e.to_string())))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::format("obj", format!("vertex line `{line}`")));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("usemtl") => {
                let name = it.next().unwrap_or("");
                class = SemanticClass::from_name(name)
                    .ok_or_else(|| Error::format("obj", format!("unknown class `{name}`")))?;
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|&i| i >= 1 && i <= verts.len())
                            .ok_or_else(|| Error::format("obj", format!("face index `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                for k in 1..idx.len().saturating_sub(1) {
                    tris.push(Triangle::new(verts[idx[0] - 1], verts[idx[k] - 1], verts[idx[k + 1] - 1], class));
                }
            }
            _ => {}
        }
    }
    Ok(tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let p = SceneParams::default().with_seed(42);
        let a = generate_scene(&p).unwrap();
        let b = generate_scene(&p).unwrap();
        assert_eq!(a.to_obj(), b.to_obj());
        assert_eq!(a, b);
        let c = generate_scene(&p.clone().with_seed(43)).unwrap();
        assert_ne!(a.to_obj(), c.to_obj());
    }

    #[test]
    fn empty_room_is_the_shell() {
        let p = SceneParams {
            furniture_count: (0, 0),
            window_count: (0, 0),
            ..SceneParams::default()
        };
        let s = generate_scene(&p).unwrap();
        assert_eq!(s.triangles.len(), 12);
        let count = |c| s.triangles.iter().filter(|t| t.class == c).count();
        assert_eq!(count(SemanticClass::Floor), 2);
        assert_eq!(count(SemanticClass::Ceil), 2);
        assert_eq!(count(SemanticClass::Wall), 8);
        assert!(s.triangles.iter().any(|t| t.v.iter().all(|v| v.y == 0.0)));
    }

    #[test]
    fn windows_stay_on_shell_planes() {
        let p = SceneParams {
            furniture_count: (0, 0),
            window_count: (4, 4),
            ..SceneParams::default()
        };
        for seed in 0..20 {
            let s = generate_scene(&p.clone().with_seed(seed)).unwrap();
            assert_eq!(s.windows.len(), 4);
            let r = s.room;
            for t in &s.triangles {
                let on_plane = (0..3).any(|a| {
                    t.v.iter().all(|v| (v[a] - r.min[a]).abs() < 1e-12)
                        || t.v.iter().all(|v| (v[a] - r.max[a]).abs() < 1e-12)
                });
                assert!(on_plane);
            }
            let wind_area: f64 = s.triangles.iter().filter(|t| t.class == SemanticClass::Wind).map(Triangle::area).sum();
            let expected: f64 = s
                .windows
                .iter()
                .map(|w| {
                    let e = w.rect.extent();
                    e.y * (e.x + e.z)
                })
                .sum();
            assert!((wind_area - expected).abs() < 1e-9);
            // shell area is preserved by the cutout tessellation
            let total: f64 = s.triangles.iter().map(Triangle::area).sum();
            let e = r.extent();
            let shell = 2.0 * (e.x * e.z + e.x * e.y + e.z * e.y);
            assert!((total - shell).abs() < 1e-9);
        }
    }

    #[test]
    fn furniture_inside_room_over_many_scenes() {
        for seed in 0..1000 {
            let s = generate_scene(&SceneParams::default().with_seed(seed)).unwrap();
            for f in &s.furniture {
                assert!(s.room.contains_box(&f.bounds), "seed {seed}: {f:?}");
                assert!(FURNITURE_CLASSES.contains(&f.class));
            }
            for t in &s.triangles {
                assert_ne!(t.class, SemanticClass::Empty);
                for v in &t.v {
                    assert!(s.room.contains_point(v));
                }
            }
        }
    }

    #[test]
    fn footprints_vary() {
        let non_square = (0..20)
            .map(|seed| generate_scene(&SceneParams::default().with_seed(seed)).unwrap().room.extent())
            .filter(|e| (e.x - e.z).abs() > 0.1)
            .count();
        assert!(non_square > 10);
    }

    #[test]
    fn infeasible_placement_is_reported() {
        let p = SceneParams {
            room_x: (2.5, 2.5),
            room_z: (2.5, 2.5),
            furniture_count: (40, 40),
            class_weights: vec![(SemanticClass::Sofa, 1.0)],
            max_retries: 20,
            ..SceneParams::default()
        };
        let err = generate_scene(&p).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlacement(ref m) if m.contains("sofa")));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SceneParams {
            room_x: (5.0, 3.0),
            ..SceneParams::default()
        };
        assert!(generate_scene(&p).is_err());
        let p = SceneParams {
            class_weights: vec![(SemanticClass::Wall, 1.0)],
            ..SceneParams::default()
        };
        assert!(generate_scene(&p).is_err());
    }

    #[test]
    fn obj_roundtrip() {
        let s = generate_scene(&SceneParams::default().with_seed(5)).unwrap();
        let tris = read_obj(s.to_obj().as_bytes()).unwrap();
        assert_eq!(tris, s.triangles);
    }
}
