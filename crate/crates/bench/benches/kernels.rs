use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kmreg::alignment::Correspondences;
use kmreg::clustering::{assign, seed_centroids, update_centroids};
use kmreg::{register, solve_rigid, NnIndex, RegistrationConfig, RigidTransform};
use kmreg_bench::{random_points, sphere_scene};

fn kd_tree(c: &mut Criterion) {
    let mut group = c.benchmark_group("kd_tree");
    for k in [500, 1500, 3500] {
        let centroids = random_points(k, 1);
        group.bench_with_input(BenchmarkId::new("build", k), &centroids, |b, pts| {
            b.iter(|| NnIndex::build(black_box(pts)).unwrap())
        });
        let index = NnIndex::build(&centroids).unwrap();
        let queries = random_points(10_000, 2);
        group.throughput(Throughput::Elements(queries.len() as u64));
        group.bench_with_input(BenchmarkId::new("query_10k", k), &queries, |b, qs| {
            b.iter(|| qs.iter().map(|q| index.nearest(q).0).sum::<usize>())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let scene = sphere_scene(12_500, 0.02);
    let mut group = c.benchmark_group("clustering");
    group.throughput(Throughput::Elements(scene.num_points() as u64));
    for k in [500, 1500] {
        let centroids = seed_centroids(&scene, k).unwrap();
        let index = NnIndex::build(&centroids).unwrap();
        group.bench_function(BenchmarkId::new("assign", k), |b| {
            b.iter(|| assign(black_box(&scene), &index))
        });
        let labels = assign(&scene, &index);
        group.bench_function(BenchmarkId::new("update_centroids", k), |b| {
            b.iter(|| update_centroids(black_box(&scene), &labels, &centroids))
        });
    }
    group.finish();
}

fn kabsch(c: &mut Criterion) {
    let mut group = c.benchmark_group("kabsch");
    let tf = RigidTransform::from_euler_xyz(0.1, -0.2, 0.3, nalgebra::Vector3::new(0.5, 0.0, -1.0));
    for n in [1_000, 20_000] {
        let src = random_points(n, 3);
        let dst: Vec<_> = src.iter().map(|p| tf.apply(p)).collect();
        let weights = vec![true; n];
        group.throughput(Throughput::Elements(n as u64));
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                solve_rigid(&Correspondences::new(black_box(&src), &dst, &weights).unwrap())
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn registration(c: &mut Criterion) {
    let scene = sphere_scene(2_500, 0.02);
    let cfg = RegistrationConfig {
        clusters: 500,
        max_iterations: 1,
        epsilon: 1e-300,
        eliminate_invalid: true,
    };
    let mut group = c.benchmark_group("registration");
    group.sample_size(20);
    group.bench_function("two_iterations_20k_points", |b| {
        b.iter(|| register(black_box(&scene), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kd_tree, clustering, kabsch, registration);
criterion_main!(benches);
