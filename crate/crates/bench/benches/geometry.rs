use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{UnitQuaternion, Vector3};
use posekit_core::estimator::{icp_refine, EstimatorConfig};
use posekit_core::template::{farthest_point_sample, poisson_disk_sample, StartRule};
use posekit_core::{primitives, Se3Pose};

fn sampling(c: &mut Criterion) {
    let mesh = primitives::fixture_model("bracket", 0).merged_mesh();
    let dense = poisson_disk_sample(&mesh, 0.003, 0).unwrap();
    c.bench_function("poisson_r5mm_bracket", |b| b.iter(|| poisson_disk_sample(&mesh, 0.005, 0).unwrap()));
    c.bench_function("fps_2048", |b| b.iter(|| farthest_point_sample(&dense, 2048.min(dense.len()), StartRule::Index(0)).unwrap()));
}

fn icp(c: &mut Criterion) {
    let mesh = primitives::fixture_model("wedge", 0).merged_mesh();
    let target = poisson_disk_sample(&mesh, 0.004, 1).unwrap();
    let source = poisson_disk_sample(&mesh, 0.006, 2).unwrap();
    let init = Se3Pose::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1), Vector3::new(0.005, -0.003, 0.002));
    let cfg = EstimatorConfig::default();
    c.bench_function("icp_wedge", |b| b.iter(|| icp_refine(black_box(&source), &target, &init, &cfg).unwrap()));
}

criterion_group!(benches, sampling, icp);
criterion_main!(benches);
