//! Throughput benchmarks for the three hot loops: KMC ensembles, static
//! threshold sampling, and walk ensembles.
//!
//! Each bench runs at worker counts 1 and 4 so the parallel scaling is
//! visible in one report. Compare against the sequential build with
//! `cargo bench --no-default-features` (worker counts then collapse onto
//! the plain loop).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use toric_sim::analysis::{static_curve, StaticPlan};
use toric_sim::energy::{BathSpec, EnergyModel, InteractionSpec};
use toric_sim::kmc::{ensemble_run, Schedule};
use toric_sim::lattice::LatticeSpec;
use toric_sim::parallel::with_workers;
use toric_sim::qwalk::{run_walk_ensemble, SpreadKind, WalkDisorder, WalkSpec};

const WORKERS: [usize; 2] = [1, 4];

fn bench_kmc(c: &mut Criterion) {
    let code = LatticeSpec::square(16).build().unwrap();
    let model = EnergyModel::new(
        &code,
        1.0,
        &vec![0.0; code.plaquettes.len()],
        InteractionSpec::none(),
    )
    .unwrap();
    let bath = BathSpec::Ohmic {
        temperature: 1.0,
        kappa1: 1.0,
    };
    let schedule = Schedule::log_spaced(1e-2, 10.0, 6).unwrap();

    let mut group = c.benchmark_group("kmc_ensemble");
    group.sample_size(10);
    for workers in WORKERS {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| {
                with_workers(w, || {
                    ensemble_run(&code, &model, &bath, &schedule, 64, 1).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bench_static(c: &mut Criterion) {
    let spec = LatticeSpec::square(16);
    let plan = StaticPlan {
        n_instances: 1,
        n_errors: 500,
        bootstrap: 0,
        use_dual: false,
    };
    let f_grid = [0.08, 0.10, 0.12];

    let mut group = c.benchmark_group("static_sampling");
    group.sample_size(10);
    for workers in WORKERS {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| with_workers(w, || static_curve(&spec, &f_grid, &plan, 7).unwrap()))
        });
    }
    group.finish();
}

fn bench_walk(c: &mut Criterion) {
    let spec = WalkSpec {
        lattice: LatticeSpec::random(12, 0.5, 3),
        h: 1.0,
        disorder: WalkDisorder::Uniform { j: 0.0 },
        times: Schedule::log_spaced(0.5, 20.0, 6).unwrap().sample_times,
        samples: 16,
        seed: 5,
        spread: SpreadKind::Rms,
    };

    let mut group = c.benchmark_group("walk_ensemble");
    group.sample_size(10);
    for workers in WORKERS {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| with_workers(w, || run_walk_ensemble(&spec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kmc, bench_static, bench_walk);
criterion_main!(benches);
