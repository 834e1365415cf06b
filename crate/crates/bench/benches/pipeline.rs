use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use oobr_core::cohort::classify_gestational_status;
use oobr_core::derive::{classify_covid_diagnosis, derive_record, map_region};
use oobr_core::ingest::{read_snapshot, SnapshotReader};
use oobr_core::pipeline::{run_build, run_validate, Format, RunConfig};
use oobr_core::synth::{generate, SynthConfig, SynthManifest, STATES};
use oobr_core::{CurrentWeek, SnapshotSource, YesNo};

fn snapshot(rows: u64, dir: &std::path::Path) -> (SynthManifest, Vec<SnapshotSource>) {
    let mut cfg = SynthConfig::default().with_total_rows(rows);
    cfg.seed = 42;
    let m = generate(&cfg, dir).expect("synth");
    let sources = m
        .files
        .iter()
        .map(|f| SnapshotSource::new(&f.path, f.year).unwrap())
        .collect();
    (m, sources)
}

fn guards(c: &mut Criterion) {
    c.bench_function("classify_covid_diagnosis", |b| {
        b.iter(|| {
            let mut n = 0;
            for fin in [Some(1), Some(5), None] {
                for p in [YesNo::Sim, YesNo::Nao] {
                    n += classify_covid_diagnosis(black_box(fin), p, YesNo::Nao, YesNo::Sim)
                        as usize;
                }
            }
            n
        })
    });
    c.bench_function("classify_gestational_status", |b| {
        b.iter(|| {
            (0..10)
                .flat_map(|g| {
                    [Some(1), Some(2), None]
                        .map(|p| classify_gestational_status(black_box(Some(g)), p))
                })
                .count()
        })
    });
    c.bench_function("map_region", |b| {
        b.iter(|| {
            STATES
                .iter()
                .map(|s| map_region(black_box(Some(s))))
                .collect::<Vec<_>>()
        })
    });
}

fn ingest_and_derive(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let (m, sources) = snapshot(50_000, dir.path());
    let mut g = c.benchmark_group("ingest");
    g.throughput(Throughput::Elements(m.total.rows));
    g.sample_size(10);
    g.bench_function("read_and_decode", |b| {
        b.iter(|| {
            sources
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    read_snapshot(s, i as u32)
                        .unwrap()
                        .filter_map(Result::ok)
                        .count()
                })
                .sum::<usize>()
        })
    });
    g.bench_function("read_decode_derive", |b| {
        b.iter(|| {
            let mut n = 0;
            for (i, s) in sources.iter().enumerate() {
                for r in read_snapshot(s, i as u32).unwrap().filter_map(Result::ok) {
                    black_box(derive_record(&r));
                    n += 1;
                }
            }
            n
        })
    });
    g.bench_function("open_header", |b| {
        b.iter(|| SnapshotReader::open(&sources[0]).unwrap().header().len())
    });
    g.finish();
}

fn whole_pass(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut g = c.benchmark_group("pass");
    g.sample_size(10);
    for rows in [20_000u64, 200_000] {
        let (m, sources) = snapshot(rows, &dir.path().join(rows.to_string()));
        g.throughput(Throughput::Elements(m.total.rows));
        let week = CurrentWeek::new(16).unwrap();
        g.bench_with_input(BenchmarkId::new("validate", rows), &sources, |b, s| {
            b.iter(|| run_validate(s, week, 0).unwrap().funnel.output())
        });
        let out = dir.path().join(format!("out{rows}"));
        let mut cfg = RunConfig::new(sources.clone(), week, &out);
        cfg.formats = vec![Format::Csv];
        cfg.timestamp = Some(0);
        g.bench_with_input(BenchmarkId::new("build_csv", rows), &cfg, |b, cfg| {
            b.iter(|| run_build(cfg).unwrap().manifest.cohort_records)
        });
    }
    g.finish();
}

criterion_group!(benches, guards, ingest_and_derive, whole_pass);
criterion_main!(benches);
