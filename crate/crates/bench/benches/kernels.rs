//! Benchmarks for the kernels that dominate grid-scale runs: the 3x3
//! polar split, residual evaluation, per-point classification, the
//! per-pair isomorphism search, and grid curvature.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use matsym_core::classify::{classify_point, ClassifyOptions};
use matsym_core::constitutive::{
    symmetry_residual, AxisField, ConstitutiveModel, DeformationSample, Param,
};
use matsym_core::geometry::curvature::riemann;
use matsym_core::geometry::fields::MetricField;
use matsym_core::geometry::grid::BodyGrid;
use matsym_core::material::{find_material_isomorphism, MaterialOpts};
use matsym_core::randmat::{random_invertible_cond_bounded, random_rotation, rng_for};
use matsym_core::smallmat::{polar_decompose, Mat3, Vec3};

fn neo_hookean() -> ConstitutiveModel {
    ConstitutiveModel::NeoHookean { mu: Param::Constant(1.0), lambda: Param::Constant(1.3) }
}

fn transverse() -> ConstitutiveModel {
    ConstitutiveModel::TransverseIso {
        mu: Param::Constant(1.0),
        lambda: Param::Constant(1.0),
        gamma: Param::Constant(0.8),
        axis: AxisField::Constant([0.0, 0.0, 1.0]),
    }
}

fn bench_polar(c: &mut Criterion) {
    let mut rng = rng_for(42, 0);
    let mats: Vec<Mat3> =
        (0..64).map(|_| random_invertible_cond_bounded(&mut rng, 50.0)).collect();
    c.bench_function("polar_decompose_64", |b| {
        b.iter(|| {
            for m in &mats {
                black_box(polar_decompose(black_box(m)).unwrap());
            }
        })
    });
}

fn bench_residual(c: &mut Criterion) {
    let model = neo_hookean();
    let x = Vec3::new(0.3, 0.4, 0.5);
    let sample = DeformationSample::standard(42);
    let mut rng = rng_for(42, 1);
    let p = random_rotation(&mut rng);
    c.bench_function("symmetry_residual", |b| {
        b.iter(|| black_box(symmetry_residual(&model, &x, black_box(&p), &sample).unwrap()))
    });
}

fn bench_classify(c: &mut Criterion) {
    let opts = ClassifyOptions::default();
    let x = Vec3::new(0.3, 0.4, 0.5);
    let mut group = c.benchmark_group("classify_point");
    group.sample_size(10);
    group.bench_function("neo_hookean", |b| {
        b.iter(|| black_box(classify_point(&neo_hookean(), &x, &opts).unwrap()))
    });
    group.bench_function("transverse_iso", |b| {
        b.iter(|| black_box(classify_point(&transverse(), &x, &opts).unwrap()))
    });
    group.finish();
}

fn bench_isomorphism(c: &mut Criterion) {
    let model = neo_hookean();
    let opts = MaterialOpts::default();
    let x = Vec3::new(0.25, 0.25, 0.25);
    let y = Vec3::new(0.75, 0.5, 0.25);
    let mut group = c.benchmark_group("material_isomorphism");
    group.sample_size(10);
    group.bench_function("neo_hookean_pair", |b| {
        b.iter(|| black_box(find_material_isomorphism(&model, &x, &y, &opts).unwrap()))
    });
    group.finish();
}

fn bench_riemann(c: &mut Criterion) {
    // Hyperbolic-slab-like metric on an 11^3 grid.
    let grid = BodyGrid::cube(11, [1.0, 0.0, 0.0], 0.05).unwrap();
    let metric = MetricField::from_fn(&grid, |x| {
        Mat3::from_diagonal(&Vec3::new(1.0, 1.0 / (x[0] * x[0]), 1.0 / (x[0] * x[0])))
    })
    .unwrap();
    c.bench_function("riemann_11_cubed", |b| {
        b.iter(|| black_box(riemann(black_box(&metric)).unwrap()))
    });
}

criterion_group!(
    kernels,
    bench_polar,
    bench_residual,
    bench_classify,
    bench_isomorphism,
    bench_riemann
);
criterion_main!(kernels);
