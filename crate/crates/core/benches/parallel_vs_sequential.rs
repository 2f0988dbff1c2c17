use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polymerlab::env_field::EnvironmentSpec;
use polymerlab::exec;
use polymerlab::rng::{self, Tag};
use polymerlab::walk::WalkKernel;
use polymerlab::weights::{PathWeigher, WalkSample};

fn single_weight(w: &PathWeigher, kernel: &WalkKernel, steps: usize, i: usize) -> f64 {
    let mut r = rng::stream(11, Tag::Walk, i as u64);
    w.single_log_weight(&WalkSample::sample(kernel, steps, 0, &mut r))
}

fn pair_weight(w: &PathWeigher, kernel: &WalkKernel, steps: usize, i: usize) -> f64 {
    let mut r = rng::stream(11, Tag::Walk, i as u64);
    let a = WalkSample::sample(kernel, steps, 0, &mut r);
    let b = WalkSample::sample(kernel, steps, 1, &mut r);
    w.joint(&[&a, &b]).log_weight
}

fn bench(c: &mut Criterion) {
    let kernel = WalkKernel::default_kernel();
    let spec = EnvironmentSpec::default_preset();
    let w = PathWeigher::new(&spec, &kernel, 0.25).unwrap();
    let samples = 2000;
    let mut g = c.benchmark_group("path_weights");
    for steps in [256usize, 1024] {
        g.bench_with_input(BenchmarkId::new("single/sequential", steps), &steps, |b, &s| {
            b.iter(|| exec::pairwise_sum(&exec::map_seq(samples, |i| single_weight(&w, &kernel, s, i))))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("single/parallel", steps), &steps, |b, &s| {
            b.iter(|| exec::pairwise_sum(&exec::map_par(samples, |i| single_weight(&w, &kernel, s, i))))
        });
        g.bench_with_input(BenchmarkId::new("pair/sequential", steps), &steps, |b, &s| {
            b.iter(|| exec::pairwise_sum(&exec::map_seq(samples, |i| pair_weight(&w, &kernel, s, i))))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("pair/parallel", steps), &steps, |b, &s| {
            b.iter(|| exec::pairwise_sum(&exec::map_par(samples, |i| pair_weight(&w, &kernel, s, i))))
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
