use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evidence_core::evidence::EvidenceStore;
use evidence_core::explain::{permutation_importance, ImportanceMetric};
use evidence_core::featurize::{build_all, fit_schema, FeatureGroup, FeatureVector, DEFAULT_TEXT_DIM};
use evidence_core::ingest::{generate_synthetic, EnrichedTransaction, SyntheticConfig};
use evidence_core::pnn::{PnnModel, PriorMode};
use evidence_core::{ClassLabel, Execution};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

struct Data {
    txs: Vec<EnrichedTransaction>,
    labels: Vec<ClassLabel>,
    features: Vec<FeatureVector>,
    model: PnnModel,
}

fn data(n: usize) -> Data {
    let rows = generate_synthetic(&SyntheticConfig::default().with_transactions(n)).unwrap();
    let labels: Vec<ClassLabel> = rows.iter().map(|r| r.label.unwrap()).collect();
    let txs: Vec<EnrichedTransaction> = rows.into_iter().map(|r| r.transaction).collect();
    let schema = fit_schema(&txs, DEFAULT_TEXT_DIM, None).unwrap();
    let features = build_all(&txs, &schema, Execution::Parallel);
    let labeled: Vec<_> = features.iter().zip(labels.iter().copied()).collect();
    let model = PnnModel::train(&labeled, 0.2, PriorMode::Empirical).unwrap();
    Data {
        txs,
        labels,
        features,
        model,
    }
}

fn predict_batch(c: &mut Criterion) {
    let d = data(2000);
    let mut g = c.benchmark_group("predict_batch_2000x2000");
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| b.iter(|| black_box(d.model.predict_batch(&d.features, exec).unwrap())),
        );
    }
    g.finish();
}

fn importance(c: &mut Criterion) {
    let d = data(600);
    let rows: Vec<_> = d.features.iter().zip(d.labels.iter().copied()).collect();
    let mut g = c.benchmark_group("permutation_importance_600x2");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| {
                b.iter(|| {
                    black_box(
                        permutation_importance(&d.model, &rows, ImportanceMetric::MacroF1, 2, 3, exec)
                            .unwrap(),
                    )
                })
            },
        );
    }
    g.finish();
}

fn neighbors(c: &mut Criterion) {
    let d = data(5000);
    let preds = d.model.predict_batch(&d.features, Execution::Parallel).unwrap();
    let store = EvidenceStore::load_join(d.txs, d.features, preds, vec![]).unwrap();
    let sha = store.records()[0].sha().to_string();
    let mut g = c.benchmark_group("neighbors_5000");
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| b.iter(|| black_box(store.neighbors(&sha, &[FeatureGroup::Text], 10, exec).unwrap())),
        );
    }
    g.finish();
}

criterion_group!(benches, predict_batch, importance, neighbors);
criterion_main!(benches);
