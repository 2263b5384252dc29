use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rsapa::alloc::{gradient_step, Objective};
use rsapa::model::generate_estimate;
use rsapa::rates::ergodic_sum_rate;
use rsapa::{
    run_apa, run_apar, AllocOptions, CouplingSource, CouplingTable, PowerVector, PrecoderKind, PrecoderSet,
    RateOptions, Scheme, SystemConfig,
};
use rsapa_bench::{scenario, zf_instance};

const SIZES: [usize; 4] = [2, 4, 8, 16];

fn coupling(c: &mut Criterion) {
    let mut g = c.benchmark_group("coupling_table");
    for n in SIZES {
        let cfg = scenario(n);
        let h = generate_estimate(&cfg, 0).unwrap();
        let p = PrecoderSet::build(PrecoderKind::Zf, &cfg, &h).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| CouplingTable::build(&cfg, &h, &p, CouplingSource::Estimate).unwrap())
        });
    }
    g.finish();
}

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("gradient_step");
    for n in SIZES {
        let cfg = scenario(n);
        let (_, ct) = zf_instance(&cfg);
        let a = PowerVector::new(vec![1.0; n + 1]);
        let objective = Objective::Robust { err_var: cfg.err_var };
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| gradient_step(&a, &ct, objective, 1e-3, Some(cfg.total_power)).unwrap())
        });
    }
    g.finish();
}

fn allocators(c: &mut Criterion) {
    let mut g = c.benchmark_group("allocator_30_iterations");
    let opts = AllocOptions::fixed_step();
    for n in SIZES {
        let cfg = scenario(n);
        let (_, ct) = zf_instance(&cfg);
        g.bench_with_input(BenchmarkId::new("apa", n), &n, |b, _| b.iter(|| run_apa(&ct, &cfg, &opts).unwrap()));
        g.bench_with_input(BenchmarkId::new("apar", n), &n, |b, _| b.iter(|| run_apar(&ct, &cfg, &opts).unwrap()));
    }
    g.finish();
}

fn sum_rate(c: &mut Criterion) {
    let cfg = SystemConfig::symmetric(4, 2, 2, 2).with_err_var(0.1).with_snr_db(20.0).with_seed(3);
    let opts = RateOptions { jobs: Some(1), ..RateOptions::default() };
    let mut g = c.benchmark_group("ergodic_sum_rate_8x4");
    g.sample_size(20);
    for scheme in [Scheme::ConvUpa, Scheme::RsApar, Scheme::RsEsUpa] {
        g.bench_function(scheme.label(), |b| b.iter(|| ergodic_sum_rate(&cfg, scheme, 8, 4, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, coupling, step, allocators, sum_rate);
criterion_main!(benches);
