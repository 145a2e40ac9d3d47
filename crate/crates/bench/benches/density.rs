use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use icarh::{
    build_pathway_design, car_gaussian_logpdf, simulate_study, standardize, Model, ModelConfig,
    SimulationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn study(n: usize, t: usize, m: usize, k: usize, p: usize) -> (Model, Vec<f64>) {
    let cfg = SimulationConfig {
        n,
        t,
        m,
        k,
        p,
        ..SimulationConfig::default()
    };
    let s = simulate_study(&cfg, 0).expect("simulated study");
    let (data, _) = standardize(&s.dataset).expect("standardized");
    let design = build_pathway_design(&s.fit_graph, m);
    let model = Model::new(data, design, &ModelConfig::with_tau(1.2)).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = (0..model.layout().dim)
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    (model, u)
}

fn car_logpdf(c: &mut Criterion) {
    let mut group = c.benchmark_group("car_logpdf");
    for m in [20, 56] {
        let (model, _) = study(4, 2, m, 1, 11);
        let design = model.design();
        let phi: Vec<f64> = design.pathways.iter().map(|op| op.midpoint()).collect();
        let x: Vec<f64> = (0..m).map(|j| (j as f64).sin()).collect();
        let mu = vec![0.0; m];
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                car_gaussian_logpdf(black_box(&x), &mu, black_box(&phi), 1.3, design).unwrap()
            })
        });
    }
    group.finish();
}

fn model_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_density_and_gradient");
    for (label, dims) in [("desk", (16, 7, 20, 1, 6)), ("default", (22, 7, 40, 1, 11))] {
        let (model, u) = study(dims.0, dims.1, dims.2, dims.3, dims.4);
        let mut grad = vec![0.0; u.len()];
        group.bench_function(label, |b| {
            b.iter(|| model.evaluate(black_box(&u), Some(&mut grad)))
        });
        group.bench_function(format!("{label}/value_only"), |b| {
            b.iter(|| model.evaluate(black_box(&u), None))
        });
    }
    group.finish();
}

criterion_group!(benches, car_logpdf, model_gradient);
criterion_main!(benches);
