use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kgtext_core::eval::{evaluate_link_prediction, rank_of};
use kgtext_core::synthetic::{keyword_graph, KeywordGraphParams};
use kgtext_core::text::EntityInput;
use kgtext_core::train::{batch_objective, sample_negatives};
use kgtext_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 1000;

fn spec(kind: EncoderKind) -> EncoderSpec {
    EncoderSpec {
        kind,
        dim: 64,
        word_dim: 64,
        hidden: 64,
        layers: 2,
        heads: 4,
        ffn: 128,
        max_positions: 128,
        conv_channels: 32,
    }
}

fn tokens(len: usize, rng: &mut ChaCha8Rng) -> TokenSeq {
    TokenSeq {
        ids: (0..len).map(|_| rng.gen_range(0..VOCAB)).collect(),
        mask: vec![1; len],
    }
}

fn encoding(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("encode");
    let transformer = Model::init(
        &spec(EncoderKind::Transformer),
        ScoringModel::default(),
        VOCAB,
        1,
        1,
        &mut rng,
    )
    .unwrap();
    for len in [16, 32, 64, 128] {
        let t = tokens(len, &mut rng);
        group.throughput(Throughput::Elements(len as u64));
        group.bench_with_input(BenchmarkId::new("transformer", len), &t, |b, t| {
            b.iter(|| {
                transformer
                    .encoder
                    .encode(black_box(&EntityInput {
                        entity: 0,
                        tokens: t,
                    }))
                    .unwrap()
            })
        });
    }
    let t = tokens(32, &mut rng);
    for kind in [EncoderKind::Bow, EncoderKind::Dkrl] {
        let model =
            Model::init(&spec(kind), ScoringModel::default(), VOCAB, 1, 1, &mut rng).unwrap();
        group.throughput(Throughput::Elements(32));
        group.bench_with_input(BenchmarkId::new(kind.to_string(), 32), &t, |b, t| {
            b.iter(|| {
                model
                    .encoder
                    .encode(black_box(&EntityInput {
                        entity: 0,
                        tokens: t,
                    }))
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut v = || {
        (0..256)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let (h, r, t) = (v(), v(), v());
    let mut group = c.benchmark_group("score");
    for kind in [
        ScoringKind::TransE,
        ScoringKind::DistMult,
        ScoringKind::ComplEx,
        ScoringKind::SimplE,
    ] {
        let m = ScoringModel::new(kind);
        group.bench_function(BenchmarkId::new("value", kind.to_string()), |b| {
            b.iter(|| m.score_unchecked(black_box(&h), black_box(&r), black_box(&t)))
        });
        group.bench_function(BenchmarkId::new("gradient", kind.to_string()), |b| {
            b.iter(|| {
                m.score_gradient(black_box(&h), black_box(&r), black_box(&t))
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let negatives: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("rank_of/10000", |b| {
        b.iter(|| rank_of(black_box(&negatives), black_box(0.5)))
    });

    let kg = keyword_graph(&KeywordGraphParams::default());
    let g = &kg.graph;
    let split = generate_inductive_splits(g, &SplitParams::default()).unwrap();
    let cfg = TrainConfig {
        encoder: spec(EncoderKind::Bow),
        epochs: 1,
        ..Default::default()
    };
    let ck = train(g, &split.train_triples, cfg).unwrap();
    c.bench_function("evaluate_link_prediction/keyword_graph", |b| {
        b.iter(|| {
            evaluate_link_prediction(&ck, g, &split, Partition::Test, Scenario::Dynamic).unwrap()
        })
    });
}

fn training_step(c: &mut Criterion) {
    let kg = keyword_graph(&KeywordGraphParams::default());
    let g = &kg.graph;
    let mut group = c.benchmark_group("batch_objective");
    group.sample_size(10);
    for kind in [EncoderKind::Bow, EncoderKind::Transformer] {
        let cfg = TrainConfig {
            encoder: spec(kind),
            ..Default::default()
        };
        let trainer = Trainer::new(g, g.triples(), cfg).unwrap();
        let batch = &g.triples()[..32];
        let negatives = sample_negatives(batch, 32, &mut ChaCha8Rng::seed_from_u64(3));
        group.bench_function(kind.to_string(), |b| {
            b.iter(|| {
                batch_objective(
                    trainer.model(),
                    trainer.inputs(),
                    batch,
                    &negatives,
                    LossKind::Margin,
                    0.0,
                    true,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, encoding, scoring, ranking, training_step);
criterion_main!(benches);
