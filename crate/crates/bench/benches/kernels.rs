use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxfill::ground_truth::mesh_to_tdf;
use voxfill::mesh::{extract_isosurface, DEFAULT_ISO};
use voxfill::nn::{Conv3d, Shape5};
use voxfill::scan::render_depth;
use voxfill::{Level, SceneGrid};
use voxfill_bench::{center_camera, query_points, random_tensor, room};

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_tensor(Shape5::new(1, 8, 32, 16, 32), 1);
    let k3 = Conv3d::<f32>::init(8, 16, 3, &mut rng).unwrap();
    let k1 = Conv3d::<f32>::init(8, 16, 1, &mut rng).unwrap();
    let y = k3.forward(&x).unwrap();
    c.bench_function("conv3 8->16 forward 32x16x32", |b| b.iter(|| k3.forward(black_box(&x)).unwrap()));
    c.bench_function("conv1 8->16 forward 32x16x32", |b| b.iter(|| k1.forward(black_box(&x)).unwrap()));
    c.bench_function("conv3 8->16 backward 32x16x32", |b| {
        let mut grads = k3.zeros_like();
        b.iter(|| k3.backward(black_box(&x), black_box(&y), &mut grads).unwrap())
    });
}

fn geometry(c: &mut Criterion) {
    let (scene, bvh) = room(3);
    let cam = center_camera(&scene);
    c.bench_function("render depth 320x240", |b| b.iter(|| render_depth(black_box(&bvh), black_box(&cam))));
    let points = query_points(&scene, 1000, 4);
    c.bench_function("bvh nearest x1000", |b| {
        b.iter(|| points.iter().filter_map(|p| bvh.nearest(black_box(p), 0.2)).count())
    });
    let grid = SceneGrid::covering(scene.room.min, scene.room.max, 0.2).unwrap();
    c.bench_function("mesh to tdf coarse level", |b| b.iter(|| mesh_to_tdf(black_box(&bvh), grid.placement(Level::Coarse))));
    let (tdf, labels) = mesh_to_tdf(&bvh, grid.placement(Level::Mid));
    c.bench_function("marching cubes mid level", |b| {
        b.iter(|| extract_isosurface(black_box(&tdf), Some(&labels), DEFAULT_ISO).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, geometry
}
criterion_main!(benches);
