//! Chain-throughput benchmarks: the rayon chain pool against a sequential
//! loop over the same chains, plus the per-step kernels.
//!
//! Run with `cargo bench -p remeta`. To benchmark the fully sequential
//! build, add `--no-default-features`.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use remeta::data::hypertension;
use remeta::model::PosteriorContext;
use remeta::randgen::RngStream;
use remeta::sampler::{gibbs_step, initial_states, run_chain, run_chain_specialized, run_chains};
use remeta::{Family, ModelSpec, MuRejectionMode, PriorKind, SamplerConfig};

fn ctx(family: Family) -> PosteriorContext {
    PosteriorContext::new(
        hypertension(),
        ModelSpec {
            family,
            prior: PriorKind::Jeffreys,
        },
    )
    .unwrap()
}

fn config(n_chains: usize, length: usize) -> SamplerConfig {
    SamplerConfig {
        n_chains,
        length,
        burn_in: length / 2,
        seed: 7,
        thin: 1,
        mu_rejection_mode: MuRejectionMode::StandardMwG,
    }
}

fn bench_single_step(c: &mut Criterion) {
    let ctx_n = ctx(Family::Normal);
    let init = initial_states(&ctx_n, 1).unwrap().remove(0);
    c.bench_function("gibbs_step/normal", |b| {
        b.iter_batched(
            || (init.clone(), RngStream::new(1, 0)),
            |(state, mut rng)| {
                gibbs_step(&ctx_n, &state, &mut rng, MuRejectionMode::StandardMwG).unwrap()
            },
            BatchSize::SmallInput,
        )
    });

    let ctx_t = ctx(Family::StudentT { dof: 4.0 });
    let init_t = initial_states(&ctx_t, 1).unwrap().remove(0);
    c.bench_function("gibbs_step/t", |b| {
        b.iter_batched(
            || (init_t.clone(), RngStream::new(1, 0)),
            |(state, mut rng)| {
                gibbs_step(&ctx_t, &state, &mut rng, MuRejectionMode::StandardMwG).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_chain_pool(c: &mut Criterion) {
    let ctx_n = ctx(Family::Normal);
    let cfg = config(4, 2000);
    let inits = initial_states(&ctx_n, cfg.n_chains).unwrap();

    // pool: chains scheduled on rayon when the parallel feature is on
    c.bench_function("chains/pool_4x2000", |b| {
        b.iter(|| run_chains(&ctx_n, &cfg).unwrap())
    });

    // sequential reference: the same chains one after another
    c.bench_function("chains/sequential_4x2000", |b| {
        b.iter(|| {
            (0..cfg.n_chains)
                .map(|k| {
                    run_chain(&ctx_n, &cfg, &inits[k], RngStream::new(cfg.seed, k as u64))
                        .unwrap()
                })
                .collect::<Vec<_>>()
        })
    });
}

fn bench_specialized_path(c: &mut Criterion) {
    let ctx_n = ctx(Family::Normal);
    let cfg = config(1, 2000);
    let init = initial_states(&ctx_n, 1).unwrap().remove(0);
    c.bench_function("chain/general_2000", |b| {
        b.iter(|| run_chain(&ctx_n, &cfg, &init, RngStream::new(3, 0)).unwrap())
    });
    c.bench_function("chain/specialized_2000", |b| {
        b.iter(|| run_chain_specialized(&ctx_n, &cfg, &init, RngStream::new(3, 0)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_single_step,
    bench_chain_pool,
    bench_specialized_path
);
criterion_main!(benches);
