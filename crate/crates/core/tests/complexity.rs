use std::time::Instant;

use kgtext_core::text::EntityInput;
use kgtext_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median_encode_secs(model: &Model, len: usize, reps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(len as u64);
    let tokens = TokenSeq {
        ids: (0..len).map(|_| rng.gen_range(0..500)).collect(),
        mask: vec![1; len],
    };
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(
                model
                    .encoder
                    .encode(&EntityInput {
                        entity: 0,
                        tokens: &tokens,
                    })
                    .unwrap(),
            );
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[reps / 2]
}

#[test]
fn transformer_cost_grows_faster_than_linear() {
    let spec = EncoderSpec {
        kind: EncoderKind::Transformer,
        dim: 16,
        word_dim: 16,
        hidden: 16,
        layers: 1,
        heads: 2,
        ffn: 32,
        max_positions: 512,
        conv_channels: 1,
    };
    let model = Model::init(
        &spec,
        ScoringModel::default(),
        500,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let short = median_encode_secs(&model, 64, 21);
    let long = median_encode_secs(&model, 512, 21);
    // 8x the tokens: linear cost would give 8x the time, quadratic 64x
    assert!(
        long / short > 12.0,
        "time ratio {:.1} for 8x the length",
        long / short
    );
}
