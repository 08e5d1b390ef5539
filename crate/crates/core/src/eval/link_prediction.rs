use rayon::prelude::*;

use super::ranking::{rank_of, ranking_metrics, RankingReport, TripleRanks};
use crate::candidates::{CandidatePools, Position};
use crate::error::Result;
use crate::graph::{KnowledgeGraph, Triple};
use crate::split::{Partition, Scenario, SplitSpec};
use crate::train::Checkpoint;

/// Filtered head and tail ranks for every triple of `partition`.
///
/// `score(h, r, t)` takes graph ids. Triples whose endpoints are not
/// `available` are skipped, and unavailable entities never compete.
pub fn rank_triples<F>(
    score: F,
    split: &SplitSpec,
    partition: Partition,
    scenario: Scenario,
    available: impl Fn(&Triple) -> bool + Sync,
    entity_available: &[bool],
) -> Result<RankingReport>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    let pools = CandidatePools::new(split, partition, scenario);
    let triples = split.triples(partition);
    let ranked: Vec<Option<TripleRanks>> = triples
        .par_iter()
        .map(|t| {
            if !available(t) {
                return Ok(None);
            }
            let mut ranks = [0.0; 2];
            let mut counts = [0; 2];
            for (slot, pos) in [Position::Head, Position::Tail].into_iter().enumerate() {
                let set = pools.candidates(t, pos)?;
                let neg: Vec<f64> = set
                    .candidates
                    .iter()
                    .filter(|&&e| entity_available[e])
                    .map(|&e| match pos {
                        Position::Head => score(e, t.relation, t.tail),
                        Position::Tail => score(t.head, t.relation, e),
                    })
                    .collect();
                ranks[slot] = rank_of(&neg, score(t.head, t.relation, t.tail));
                counts[slot] = neg.len();
            }
            Ok(Some(TripleRanks {
                triple: *t,
                head_rank: ranks[0],
                tail_rank: ranks[1],
                head_candidates: counts[0],
                tail_candidates: counts[1],
            }))
        })
        .collect::<Result<_>>()?;
    let mut ranks = Vec::new();
    let mut skipped = Vec::new();
    for (t, r) in triples.iter().zip(ranked) {
        match r {
            Some(r) => ranks.push(r),
            None => skipped.push(*t),
        }
    }
    if !skipped.is_empty() {
        log::warn!(
            "{} {partition} triples skipped for missing embeddings",
            skipped.len()
        );
    }
    let pairs: Vec<(f64, f64)> = ranks.iter().map(|r| (r.head_rank, r.tail_rank)).collect();
    let metrics = ranking_metrics(&pairs)?;
    Ok(RankingReport {
        scenario,
        partition,
        ranks,
        metrics,
        skipped,
    })
}

/// Embeds every entity once with the checkpoint encoder and ranks the
/// triples of `partition`. Relations are matched to the checkpoint by name.
pub fn evaluate_link_prediction(
    checkpoint: &Checkpoint,
    graph: &KnowledgeGraph,
    split: &SplitSpec,
    partition: Partition,
    scenario: Scenario,
) -> Result<RankingReport> {
    let emb = checkpoint.embed_graph(graph)?;
    let rel_rows: Vec<Option<usize>> = graph
        .relations()
        .iter()
        .map(|r| checkpoint.relation_index(r))
        .collect();
    let model = &checkpoint.model;
    let vectors = &emb.vectors;
    let score = |h: usize, r: usize, t: usize| {
        let row = rel_rows[r].expect("unavailable relations are skipped");
        model.scoring.score_unchecked(
            vectors.row(h).as_slice().expect("contiguous"),
            model.relations.row(row).as_slice().expect("contiguous"),
            vectors.row(t).as_slice().expect("contiguous"),
        )
    };
    let available = |t: &Triple| {
        emb.available[t.head] && emb.available[t.tail] && rel_rows[t.relation].is_some()
    };
    rank_triples(score, split, partition, scenario, available, &emb.available)
}
