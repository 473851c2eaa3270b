use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seedsketch::community::build_weighted_subgraph;
use seedsketch::expansion::{rank_ms, resolve_seeds, SeedSet, StoppingRule};
use seedsketch::ingest::{generate_planted_partition, PlantedConfig};
use seedsketch::lsh::{build_index, BandingConfig};
use seedsketch::sketch::build_signatures;
use seedsketch::HashFamily;

// workers = 1 is the sequential path; 0 uses the global rayon pool.
const WORKERS: [(usize, &str); 2] = [(1, "sequential"), (0, "parallel")];

fn benches(c: &mut Criterion) {
    let planted = generate_planted_partition(&PlantedConfig {
        n_accounts: 5000,
        n_communities: 50,
        universe: 100_000,
        p_in: 0.02,
        p_out: 0.0001,
        seed: 1,
    })
    .unwrap();
    let ds = &planted.dataset;
    let family = HashFamily::new(1000, ds.universe_size(), 1).unwrap();
    let matrix = build_signatures(ds, &family, 0).unwrap();

    let mut group = c.benchmark_group("signatures");
    group.sample_size(10);
    for (w, name) in WORKERS {
        group.bench_with_input(BenchmarkId::new(name, ds.len()), &w, |b, &w| {
            b.iter(|| build_signatures(black_box(ds), &family, w).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("band_index");
    group.sample_size(10);
    for (w, name) in WORKERS {
        group.bench_with_input(BenchmarkId::new(name, ds.len()), &w, |b, &w| {
            b.iter(|| build_index(black_box(&matrix), BandingConfig::default(), w).unwrap())
        });
    }
    group.finish();

    let seeds = SeedSet::new(matrix.ids()[..10].iter().copied()).unwrap();
    let resolved = resolve_seeds(&matrix, &seeds);
    let pool: Vec<usize> = (0..matrix.len()).collect();
    let mut group = c.benchmark_group("ms_scoring");
    for (w, name) in WORKERS {
        group.bench_with_input(BenchmarkId::new(name, pool.len()), &w, |b, &w| {
            b.iter(|| rank_ms(&matrix, &resolved, black_box(&pool), StoppingRule::FixedCount(100), w))
        });
    }
    group.finish();

    let members = &matrix.ids()[..500];
    let mut group = c.benchmark_group("subgraph_weights");
    group.sample_size(20);
    for (w, name) in WORKERS {
        group.bench_with_input(BenchmarkId::new(name, members.len()), &w, |b, &w| {
            b.iter(|| build_weighted_subgraph(&matrix, black_box(members), 0.01, w).unwrap())
        });
    }
    group.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
