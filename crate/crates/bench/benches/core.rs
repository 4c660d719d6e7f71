use cfrisk::additivity::{decompose, Variant};
use cfrisk::distributions::{marginalize, simulate_records, ObservableVariant};
use cfrisk::estimation::{estimate_identified_risk, EmpiricalView};
use cfrisk::oracle::{certify_identifiability, risk_bounds, FiberProblem};
use cfrisk::random;
use cfrisk::risk::{identified_risk, optimize_policy, ConstantHandling, OutcomeMarginals};
use cfrisk::{build_structure_matrix, classify, Spaces};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn shapes() -> [(usize, usize); 4] {
    [(2, 2), (2, 3), (3, 2), (3, 3)]
}

fn additivity(c: &mut Criterion) {
    let mut g = c.benchmark_group("additivity");
    for (k, m) in shapes() {
        let sp = Spaces::single(k, m).unwrap();
        let loss = random::integer_loss(&mut random::rng(1), &sp, 9);
        let id = format!("K{k}M{m}");
        g.bench_function(BenchmarkId::new("structure_rank", &id), |b| {
            b.iter(|| build_structure_matrix(black_box(&sp), Variant::Full).rank())
        });
        g.bench_function(BenchmarkId::new("decompose", &id), |b| {
            b.iter(|| decompose(black_box(&loss), Variant::Full))
        });
        g.bench_function(BenchmarkId::new("classify", &id), |b| {
            b.iter(|| classify(black_box(&loss)))
        });
    }
    g.finish();
}

fn risk(c: &mut Criterion) {
    let mut g = c.benchmark_group("risk");
    for (k, m) in shapes() {
        let sp = Spaces::new(k, m, (0..4).map(|i| format!("x{i}")).collect()).unwrap();
        let mut rng = random::rng(2);
        let d = random::additive_decomposition(&mut rng, &sp, false);
        let model = random::interior_model(&mut rng, &sp);
        let view = marginalize(&model, ObservableVariant::MarginalsOnly);
        let mu = OutcomeMarginals::from_model(&model);
        let id = format!("K{k}M{m}");
        g.bench_function(BenchmarkId::new("identified_risk", &id), |b| {
            b.iter(|| {
                identified_risk(black_box(&d), black_box(&view), ConstantHandling::Require).unwrap()
            })
        });
        g.bench_function(BenchmarkId::new("optimize_policy", &id), |b| {
            b.iter(|| optimize_policy(black_box(&d), black_box(&mu)).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let sp = Spaces::single(2, 2).unwrap();
    let mut rng = random::rng(3);
    let loss = random::integer_loss(&mut rng, &sp, 9);
    let model = random::interior_model(&mut rng, &sp);
    for variant in [
        ObservableVariant::MarginalsOnly,
        ObservableVariant::Extended,
    ] {
        let fp = FiberProblem::from_model(&loss, &model, variant, 0).unwrap();
        g.bench_function(
            BenchmarkId::new("risk_bounds", format!("{variant:?}")),
            |b| b.iter(|| risk_bounds(black_box(&fp)).unwrap()),
        );
        g.bench_function(
            BenchmarkId::new("certify_10_trials", format!("{variant:?}")),
            |b| b.iter(|| certify_identifiability(black_box(&loss), variant, 10, 0).unwrap()),
        );
    }
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimation");
    g.sample_size(10);
    let sp = Spaces::single(2, 2).unwrap();
    let mut rng = random::rng(4);
    let loss = random::standard_shaped_loss(&mut rng, &sp, 5);
    let d = decompose(&loss, Variant::Restricted).additive().unwrap();
    let model = random::interior_model(&mut rng, &sp);
    for n in [10_000usize, 100_000] {
        g.bench_function(BenchmarkId::new("simulate", n), |b| {
            b.iter(|| simulate_records(black_box(&model), n, 7).unwrap())
        });
        let records = simulate_records(&model, n, 7).unwrap();
        g.bench_function(BenchmarkId::new("plug_in", n), |b| {
            b.iter(|| {
                let view = EmpiricalView::from_records(black_box(&records), &sp).unwrap();
                estimate_identified_risk(&d, &view).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, additivity, risk, oracle, estimation);
criterion_main!(benches);
