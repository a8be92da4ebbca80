use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pianofinger_core::decode::{beam_decode, greedy_decode};
use pianofinger_core::metrics::fluency;
use pianofinger_core::train::{example_loss, LossOptions, RewardBaseline};
use pianofinger_core::{Finger, Hand, Model, ModelConfig, ModelKind, Note, ParamStore, Rng};

fn notes(n: usize) -> Vec<Note> {
    let mut rng = Rng::seeded(5);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            let pitch = 55 + (rng.uniform_range(0.0, 24.0) as u8);
            let dur = rng.uniform_range(0.05, 0.4);
            let note = Note::new(pitch, t, t + dur, Hand::Right).unwrap();
            t += rng.uniform_range(0.0, 0.3);
            note
        })
        .collect()
}

fn labels(n: usize) -> Vec<Finger> {
    (0..n).map(|i| Finger::from_index(i * 3 % 5)).collect()
}

fn model(kind: ModelKind) -> (Model, ParamStore) {
    let mut store = ParamStore::new();
    let config = ModelConfig {
        kind,
        ..ModelConfig::desk()
    };
    let model = Model::new(config, &mut store, &mut Rng::seeded(1)).unwrap();
    (model, store)
}

fn train_step(c: &mut Criterion) {
    let notes = notes(64);
    let gold = labels(64);
    let mut group = c.benchmark_group("loss_and_backward_64_notes");
    for kind in ModelKind::ALL {
        let (model, store) = model(kind);
        for lambda in [0.0, 1.0] {
            let opts = LossOptions {
                lambda,
                chunk_len: 10,
                reward_disjoint: false,
                presampled: None,
            };
            group.bench_function(BenchmarkId::new(kind.name(), format!("lambda={lambda}")), |b| {
                let mut rng = Rng::seeded(2);
                let mut baseline = RewardBaseline::new(50);
                let mut grads = store.clone();
                b.iter(|| {
                    let out =
                        example_loss(&model, &store, &notes, &gold, &opts, &mut baseline, &mut rng, true).unwrap();
                    out.tape.backward(out.loss, &mut grads);
                })
            });
        }
    }
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let notes = notes(64);
    let mut group = c.benchmark_group("decode_64_notes");
    for kind in [ModelKind::BiLstm, ModelKind::BinaryChecklist, ModelKind::ArTagger] {
        let (model, store) = model(kind);
        group.bench_function(BenchmarkId::new("greedy", kind.name()), |b| {
            b.iter(|| greedy_decode(&model, &store, &notes).unwrap())
        });
        for width in [1, 10] {
            group.bench_function(BenchmarkId::new(format!("beam{width}"), kind.name()), |b| {
                b.iter(|| beam_decode(&model, &store, &notes, width).unwrap())
            });
        }
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let notes = notes(5000);
    let preds = labels(5000);
    c.bench_function("fluency_5000_notes", |b| b.iter(|| fluency(&notes, &preds).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = train_step, decoding, metrics
}
criterion_main!(benches);
