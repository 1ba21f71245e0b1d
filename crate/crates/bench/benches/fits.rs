use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sepeff_core::simulation::DgpConfig;
use sepeff_core::{
    draw_weights, enumerate_joint, generate_dataset, replicate_rng, CoxProblem, DesignSpec,
    FitOptions, MediatorJointModel, MediatorSchema, Pipeline,
};

fn cox_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("cox_fit");
    for n in [1000usize, 5000] {
        let sim = generate_dataset(&DgpConfig {
            n,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let d = &sim.observed;
        let problem = CoxProblem::new(d, &DesignSpec::for_dataset(d)).unwrap();
        let w = draw_weights(n, &mut replicate_rng(2, 0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| {
            b.iter(|| {
                problem
                    .fit(black_box(w), &FitOptions::default(), None)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn bootstrap_replicate(c: &mut Criterion) {
    let sim = generate_dataset(&DgpConfig {
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let d = &sim.observed;
    let pipeline = Pipeline::new(d).unwrap();
    let unit = vec![1.0; d.len()];
    let warm = pipeline.fit(&unit, None).unwrap();
    let w = draw_weights(d.len(), &mut replicate_rng(2, 0));
    c.bench_function("replicate_n5000", |b| {
        b.iter(|| {
            pipeline
                .effects(d, 5.0, black_box(&w), Some(&warm))
                .unwrap()
        })
    });
}

fn enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_joint");
    for k in [2usize, 8, 14] {
        let schema = MediatorSchema::with_default_names(k, k / 2).unwrap();
        let betas = (0..k)
            .map(|j| {
                let len = if j < k / 2 { 1 + 2 + j } else { 1 + 1 + 2 + j };
                (0..len).map(|i| 0.1 * ((i + j) % 5) as f64 - 0.2).collect()
            })
            .collect();
        let mdl = MediatorJointModel::from_parts(schema, 2, betas).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(k), &mdl, |b, mdl| {
            b.iter(|| enumerate_joint(mdl, 1, black_box(&[0.3, -0.7])).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cox_fit, bootstrap_replicate, enumeration);
criterion_main!(benches);
