use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion as Bench};
use swingfill::{
    brute_force_discrete, discrete_water_fill, levin_campello, monte_carlo_mse, sand_pour_water_fill, solve, Criterion,
    FidelitySpec, Granularity, NoiseModel, SimConfig, WordFormat, DEFAULT_TOL,
};

fn continuous(c: &mut Bench) {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    let mut group = c.benchmark_group("continuous");
    for bits in [8u32, 16, 32] {
        let format = WordFormat::new(bits).unwrap();
        let fid = FidelitySpec::from_psnr(30.0, format).unwrap();
        for criterion in Criterion::ALL {
            group.bench_with_input(BenchmarkId::new(criterion.name(), bits), &fid, |b, fid| {
                b.iter(|| solve(criterion, format, &noise, black_box(fid), DEFAULT_TOL).unwrap())
            });
        }
    }
    group.finish();
}

fn discrete(c: &mut Bench) {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    let mut group = c.benchmark_group("discrete");
    for bits in [8u32, 16] {
        let format = WordFormat::new(bits).unwrap();
        let fid = FidelitySpec::from_psnr(30.0, format).unwrap();
        let beta = Granularity::new(0.05).unwrap();
        group.bench_function(BenchmarkId::new("water-fill", bits), |b| {
            b.iter(|| discrete_water_fill(Criterion::MinEnergy, format, &noise, black_box(&fid), beta).unwrap())
        });
        group.bench_function(BenchmarkId::new("levin-campello", bits), |b| {
            b.iter(|| levin_campello(format, &noise, black_box(&fid), beta).unwrap())
        });
        group.bench_function(BenchmarkId::new("sand-pour", bits), |b| {
            b.iter(|| sand_pour_water_fill(format, &noise, black_box(&fid), beta).unwrap())
        });
    }
    let format = WordFormat::new(3).unwrap();
    let fid = FidelitySpec::from_psnr(30.0, format).unwrap();
    let beta = Granularity::new(0.25).unwrap();
    group.bench_function("brute-force/3", |b| {
        b.iter(|| brute_force_discrete(format, &noise, black_box(&fid), beta, 5.0).unwrap())
    });
    group.finish();
}

fn monte_carlo(c: &mut Bench) {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    let format = WordFormat::new(8).unwrap();
    let fid = FidelitySpec::from_psnr(30.0, format).unwrap();
    let swings = solve(Criterion::MinEnergy, format, &noise, &fid, DEFAULT_TOL)
        .unwrap()
        .swings;
    let config = SimConfig::uniform(1_000_000, 1);
    let mut group = c.benchmark_group("monte-carlo");
    group.sample_size(10);
    group.bench_function("mse/8/1e6", |b| {
        b.iter(|| monte_carlo_mse(&swings, &noise, black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, continuous, discrete, monte_carlo);
criterion_main!(benches);
