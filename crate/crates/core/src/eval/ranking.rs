use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::split::{Partition, Scenario};

/// Rank of `pos` among `neg`, counting half a place for every tie.
pub fn rank_of(neg: &[f64], pos: f64) -> f64 {
    let mut above = 0usize;
    let mut tied = 0usize;
    for &s in neg {
        if s > pos {
            above += 1;
        } else if s == pos {
            tied += 1;
        }
    }
    1.0 + above as f64 + tied as f64 / 2.0
}

/// Aggregate link-prediction metrics over head and tail ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingMetrics {
    pub triples: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub fn ranking_metrics(ranks: &[(f64, f64)]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(Error::Contract("no ranks to aggregate".into()));
    }
    let n = 2.0 * ranks.len() as f64;
    let all = || ranks.iter().flat_map(|&(h, t)| [h, t]);
    let hits = |k: f64| all().filter(|&r| r <= k).count() as f64 / n;
    Ok(RankingMetrics {
        triples: ranks.len(),
        mrr: all().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleRanks {
    pub triple: Triple,
    pub head_rank: f64,
    pub tail_rank: f64,
    /// Competing candidates for the head and tail rankings.
    pub head_candidates: usize,
    pub tail_candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub scenario: Scenario,
    pub partition: Partition,
    pub ranks: Vec<TripleRanks>,
    pub metrics: RankingMetrics,
    /// Triples not ranked because an endpoint or the relation had no embedding.
    pub skipped: Vec<Triple>,
}

impl RankingReport {
    pub fn coverage(&self) -> f64 {
        let total = self.ranks.len() + self.skipped.len();
        self.ranks.len() as f64 / total as f64
    }

    /// Expected MRR of a scorer that orders candidates uniformly at random:
    /// `H_{n+1} / (n + 1)` per ranking with `n` competitors.
    pub fn random_baseline_mrr(&self) -> f64 {
        let expect = |n: usize| (1..=n + 1).map(|i| 1.0 / i as f64).sum::<f64>() / (n + 1) as f64;
        let total: f64 = self
            .ranks
            .iter()
            .map(|r| expect(r.head_candidates) + expect(r.tail_candidates))
            .sum();
        total / (2 * self.ranks.len()) as f64
    }

    pub fn summary_table(&self) -> String {
        let m = &self.metrics;
        let rows = [
            ("scenario", self.scenario.to_string()),
            ("partition", self.partition.to_string()),
            ("triples", m.triples.to_string()),
            ("skipped", self.skipped.len().to_string()),
            ("MRR", format!("{:.4}", m.mrr)),
            ("Hits@1", format!("{:.4}", m.hits1)),
            ("Hits@3", format!("{:.4}", m.hits3)),
            ("Hits@10", format!("{:.4}", m.hits10)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<10} {v:>10}");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "scenario,partition,triples,skipped,mrr,hits1,hits3,hits10\n{},{},{},{},{},{},{},{}\n",
            self.scenario,
            self.partition,
            m.triples,
            self.skipped.len(),
            m.mrr,
            m.hits1,
            m.hits3,
            m.hits10
        )
    }

    pub fn ranks_csv(&self, graph: &KnowledgeGraph) -> String {
        let mut out = String::from("head,relation,tail,head_rank,tail_rank\n");
        for r in &self.ranks {
            let t = r.triple;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                graph.entity_name(t.head),
                graph.relation_name(t.relation),
                graph.entity_name(t.tail),
                r.head_rank,
                r.tail_rank
            );
        }
        out
    }
}
