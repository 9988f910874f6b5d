use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use xlamaml::autodiff::finite_difference_gradient;
use xlamaml::cli::config::ExperimentConfig;
use xlamaml::cli::run;
use xlamaml::example::Example;
use xlamaml::metatrain::{few_shot_eval_all, zero_shot_eval};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = ThreadPoolBuilder::new().build().expect("thread pool");
    let one = ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    vec![("sequential", one), ("parallel", all)]
}

fn bench(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let prepared = run::prepare(&cfg).expect("prepare");
    let model = &prepared.model;
    let theta = &prepared.finetuned;
    let batch: Vec<&Example> = prepared.corpus.dev["de"].examples.iter().take(16).collect();
    let few = cfg.resolved_train().few_shot;

    let mut group = c.benchmark_group("zero_shot_eval");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| zero_shot_eval(model, theta, &prepared.corpus.test).expect("eval")))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("few_shot_eval");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    few_shot_eval_all(
                        model,
                        theta,
                        &prepared.corpus.dev,
                        &prepared.corpus.test,
                        &prepared.targets,
                        &few,
                        7,
                    )
                    .expect("few-shot")
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("finite_difference_gradient");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    finite_difference_gradient(|p| model.loss(&p.to_constants(), &batch)?.item(), theta, 1e-5)
                        .expect("fd gradient")
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
