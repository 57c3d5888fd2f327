use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use zoomcount::backends::{OracleClassifier, OracleRegressor};
use zoomcount::labeler::LabelThresholds;
use zoomcount::pipeline::{count_image, DecisionEngine};
use zoomcount::rfdb::{forest_train, ForestParams};
use zoomcount::rse::{rse_decide, RuleMask};
use zoomcount::{PatchClassCounts, RouteLabel};
use zoomcount_bench::{rfdb_rows, scene};

fn rule_set(c: &mut Criterion) {
    let mut tuples = Vec::new();
    for total in 1..=24u64 {
        for nc in 0..=total {
            for lc in 0..=total - nc {
                for mc in 0..=total - nc - lc {
                    tuples.push(PatchClassCounts::new(nc, lc, mc, total - nc - lc - mc));
                }
            }
        }
    }
    let mask = RuleMask::all();
    c.bench_function("rse/enumeration_24", |b| {
        b.iter(|| {
            tuples
                .iter()
                .filter(|p| rse_decide(p, &mask).unwrap().0 == RouteLabel::Normal)
                .count()
        })
    });
}

fn forest(c: &mut Criterion) {
    let rows = rfdb_rows(500, 150);
    let params = ForestParams::default();
    let mut g = c.benchmark_group("rfdb");
    g.sample_size(10);
    g.bench_function("train_100_trees_500_rows", |b| {
        b.iter(|| forest_train(black_box(&rows), &params).unwrap())
    });
    let f = forest_train(&rows, &params).unwrap();
    g.bench_function("predict_500_rows", |b| {
        b.iter(|| {
            rows.iter()
                .filter(|r| f.predict(&r.features).0 == r.label)
                .count()
        })
    });
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let th = LabelThresholds::new(150).unwrap();
    let classifier = OracleClassifier::new(th);
    let regressor = OracleRegressor::default();
    let mut g = c.benchmark_group("count_image");
    for (name, w, h, n) in [
        ("1024x768_2k", 1024, 768, 2000),
        ("2000x2000_5k", 2000, 2000, 5000),
    ] {
        let s = scene(7, w, h, n);
        for route in [RouteLabel::Normal, RouteLabel::ZoomIn, RouteLabel::ZoomOut] {
            let engine = DecisionEngine::Forced(route);
            g.bench_function(format!("{name}/{route}"), |b| {
                b.iter_batched(
                    || s.clone(),
                    |s| count_image(&s, &classifier, &regressor, &engine).unwrap(),
                    BatchSize::SmallInput,
                )
            });
        }
    }
    g.finish();
}

criterion_group!(benches, rule_set, forest, pipeline);
criterion_main!(benches);
