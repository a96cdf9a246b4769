//! Shared fixtures for the kernel benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxfill::nn::{Shape5, Tensor5};
use voxfill::scan::{Camera, Intrinsics};
use voxfill::scene::{generate_scene, Scene, SceneParams};
use voxfill::{Bvh, Vec3};

/// A default procedural room and its BVH.
pub fn room(seed: u64) -> (Scene, Bvh) {
    let scene = generate_scene(&SceneParams::default().with_seed(seed)).expect("default parameters are valid");
    let bvh = Bvh::build(&scene.triangles);
    (scene, bvh)
}

/// A camera standing in the middle of the room, looking slightly down.
pub fn center_camera(scene: &Scene) -> Camera {
    let mut pos = scene.room.center();
    pos.y = scene.room.min.y + 1.5;
    Camera::looking(Intrinsics::default(), pos, 0.3, 100f64.to_radians(), 0.1, 10.0).expect("camera inside the room")
}

pub fn random_tensor(shape: Shape5, seed: u64) -> Tensor5<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor5::from_vec(shape, (0..shape.count()).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("length matches shape")
}

/// Points scattered through the room's bounding box.
pub fn query_points(scene: &Scene, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (scene.room.min, scene.room.max);
    (0..n)
        .map(|_| Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z)))
        .collect()
}
