use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qte_core::quantreg::{fit, Design};
use qte_core::{
    bootstrap, cic, estimate, generate, objective, standardize, DgpKind, DgpSpec, EstimationConfig,
    Problem,
};

fn sim1(n: usize) -> qte_core::PanelDataset {
    generate(&DgpSpec::with_rho_sq(DgpKind::Sim1, n, 0.9, 1))
        .unwrap()
        .data
}

fn quantile_regression(c: &mut Criterion) {
    let mut g = c.benchmark_group("quantreg");
    for n in [500, 2000] {
        let data = sim1(n);
        let design = Design::from_fn(n, data.dz(), |i, k| data.z(i, 0)[k]);
        let y = data.outcomes(0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit(&y, &design, 0.5, 1e-8).unwrap())
        });
    }
    g.finish();
}

fn objective_evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("objective");
    for n in [500, 2000] {
        let data = sim1(n);
        let s = standardize(&data);
        let config = EstimationConfig::simulation(vec![0.5]);
        let rule = Problem::new(&data, &config).unwrap().rule().clone();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| objective(&data, &s, &rule, &[1.0], 0.5).unwrap())
        });
    }
    g.finish();
}

fn full_estimate(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate");
    g.sample_size(10);
    for n in [500, 2000] {
        let data = sim1(n);
        let config = EstimationConfig::simulation(vec![0.25, 0.5, 0.75]);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| estimate(&data, &config).unwrap())
        });
    }
    g.finish();
}

fn resampling(c: &mut Criterion) {
    let data = sim1(500);
    let config = EstimationConfig::simulation(vec![0.5]);
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("n500_b20", |b| {
        b.iter(|| bootstrap(&data, &config, 20).unwrap())
    });
    g.finish();
}

fn changes_in_changes(c: &mut Criterion) {
    let data = generate(&DgpSpec::with_rho_sq(DgpKind::Sim2, 2000, 0.5, 2))
        .unwrap()
        .data;
    let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
    c.bench_function("cic_n2000", |b| b.iter(|| cic(&data, &grid).unwrap()));
}

criterion_group!(
    benches,
    quantile_regression,
    objective_evaluation,
    full_estimate,
    resampling,
    changes_in_changes
);
criterion_main!(benches);
