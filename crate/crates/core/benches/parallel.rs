use std::hint::black_box;

use blipcdf::dgp::{draw, DgpKind, DgpSpec};
use blipcdf::estimator::cross_fit;
use blipcdf::inference::max_abs_quantile;
use blipcdf::learners::{LearnerKind, DEFAULT_G_TRUNCATION};
use blipcdf::sim::{run_campaign, CampaignConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::{ThreadPool, ThreadPoolBuilder};

// A one-thread pool is the sequential baseline; the full pool uses every core.
fn pools() -> Vec<(String, ThreadPool)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut out = vec![("sequential".to_string(), ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    out.push((format!("rayon-{all}"), ThreadPoolBuilder::new().num_threads(all).build().unwrap()));
    out
}

fn bench_cross_fit(c: &mut Criterion) {
    let d = draw(&DgpSpec { kind: DgpKind::Misspecified, n: 2000, seed: 1 }).unwrap();
    let learner = LearnerKind::Glm.build();
    let mut group = c.benchmark_group("cross_fit_glm_n2000_v10");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| black_box(cross_fit(&d.data, learner.as_ref(), 10, DEFAULT_G_TRUNCATION, None, 3).unwrap())))
        });
    }
    group.finish();
}

fn bench_max_quantile(c: &mut Criterion) {
    let corr: Vec<Vec<f64>> = (0..8)
        .map(|i: i32| (0..8).map(|j: i32| 0.6f64.powi((i - j).abs())).collect())
        .collect();
    let mut group = c.benchmark_group("max_abs_quantile_d8_100k");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| black_box(max_abs_quantile(&corr, 0.95, 100_000, 5))))
        });
    }
    group.finish();
}

fn bench_campaign(c: &mut Criterion) {
    let cfg = CampaignConfig::from_json(
        r#"{"dgp": "well_specified", "n": 500, "reps": 8, "seed": 2,
            "kernel": {"K": 0, "R": 1.0}, "t": [-0.1, 0.1, 0.3],
            "mc_draws": 10000, "truth_draws": 100000,
            "estimators": [{"name": "cv_glm", "method": "cvtmle", "learner": "glm"}]}"#,
    )
    .unwrap();
    let mut group = c.benchmark_group("campaign_8_reps");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| black_box(run_campaign(&cfg).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cross_fit, bench_max_quantile, bench_campaign);
criterion_main!(benches);
