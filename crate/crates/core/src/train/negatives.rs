use std::collections::{BTreeSet, HashSet};

use rand::Rng;

use crate::graph::Triple;

/// How many times a corruption that reproduces a batch positive is redrawn.
pub const MAX_REDRAWS: usize = 10;

/// `k` corruptions for every positive in `batch`.
///
/// Each corruption replaces the head or the tail (coin flip) with an entity
/// drawn uniformly from the entities of the batch. A draw that reproduces a
/// batch positive is redrawn up to `MAX_REDRAWS` times and kept if it still
/// collides.
pub fn sample_negatives<R: Rng>(batch: &[Triple], k: usize, rng: &mut R) -> Vec<Vec<Triple>> {
    let pool: Vec<usize> = batch
        .iter()
        .flat_map(|t| [t.head, t.tail])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let positives: HashSet<Triple> = batch.iter().copied().collect();
    batch
        .iter()
        .map(|&pos| {
            (0..k)
                .map(|_| {
                    let corrupt_head = rng.gen_bool(0.5);
                    let mut draw = || {
                        let e = pool[rng.gen_range(0..pool.len())];
                        if corrupt_head {
                            Triple::new(e, pos.relation, pos.tail)
                        } else {
                            Triple::new(pos.head, pos.relation, e)
                        }
                    };
                    let mut neg = draw();
                    for _ in 0..MAX_REDRAWS {
                        if !positives.contains(&neg) {
                            break;
                        }
                        neg = draw();
                    }
                    neg
                })
                .collect()
        })
        .collect()
}
