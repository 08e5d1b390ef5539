//! Filtered candidate pools for ranking evaluation.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::split::{Partition, Scenario, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub triple: Triple,
    pub position: Position,
    /// Incorrect entities to rank against the correct one, ascending.
    pub candidates: Vec<usize>,
}

/// Known-true triples from every partition, indexed for filtering.
#[derive(Debug, Clone)]
pub struct TripleIndex {
    heads: HashMap<(usize, usize), HashSet<usize>>,
    tails: HashMap<(usize, usize), HashSet<usize>>,
}

impl TripleIndex {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut heads: HashMap<(usize, usize), HashSet<usize>> = HashMap::new();
        let mut tails: HashMap<(usize, usize), HashSet<usize>> = HashMap::new();
        for t in triples {
            heads
                .entry((t.relation, t.tail))
                .or_default()
                .insert(t.head);
            tails
                .entry((t.head, t.relation))
                .or_default()
                .insert(t.tail);
        }
        TripleIndex { heads, tails }
    }

    /// Entities that, placed at `position`, complete a known-true triple.
    pub fn true_fillers(&self, triple: &Triple, position: Position) -> Option<&HashSet<usize>> {
        match position {
            Position::Head => self.heads.get(&(triple.relation, triple.tail)),
            Position::Tail => self.tails.get(&(triple.head, triple.relation)),
        }
    }
}

/// Candidate pools for one evaluated partition under one scenario.
#[derive(Debug, Clone)]
pub struct CandidatePools {
    pool: Vec<bool>,
    pool_list: Vec<usize>,
    train: Vec<bool>,
    scenario: Scenario,
    target: Partition,
    index: TripleIndex,
}

impl CandidatePools {
    /// Pools for triples of `target`.
    ///
    /// Training triples are ranked among training entities. Otherwise the
    /// pool is training plus evaluated entities (`Dynamic`) or evaluated
    /// entities only (`Transfer`).
    pub fn new(split: &SplitSpec, target: Partition, scenario: Scenario) -> Self {
        let train: Vec<bool> = split.roles.iter().map(|&r| r == Partition::Train).collect();
        let pool: Vec<bool> = if target == Partition::Train {
            train.clone()
        } else {
            let eval = split.eval_entities(target);
            match scenario {
                Scenario::Dynamic => eval.iter().zip(&train).map(|(&a, &b)| a || b).collect(),
                Scenario::Transfer => eval,
            }
        };
        let pool_list = (0..pool.len()).filter(|&e| pool[e]).collect();
        CandidatePools {
            pool,
            pool_list,
            train,
            scenario,
            target,
            index: TripleIndex::new(split.all_triples()),
        }
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool_list
    }

    pub fn in_pool(&self, entity: usize) -> bool {
        self.pool[entity]
    }

    pub fn candidates(&self, triple: &Triple, position: Position) -> Result<CandidateSet> {
        if self.scenario == Scenario::Transfer
            && self.target != Partition::Train
            && (self.train[triple.head] || self.train[triple.tail])
        {
            return Err(Error::Contract(format!(
                "transfer evaluation of {triple:?} which touches a training entity"
            )));
        }
        if !self.pool[triple.head] || !self.pool[triple.tail] {
            return Err(Error::Contract(format!(
                "{triple:?} has an endpoint outside the {} candidate pool",
                self.target
            )));
        }
        let correct = match position {
            Position::Head => triple.head,
            Position::Tail => triple.tail,
        };
        let known = self.index.true_fillers(triple, position);
        let candidates = self
            .pool_list
            .iter()
            .copied()
            .filter(|&e| e != correct && !known.is_some_and(|k| k.contains(&e)))
            .collect();
        Ok(CandidateSet {
            triple: *triple,
            position,
            candidates,
        })
    }
}

/// Filtered candidates for a single triple; the evaluated partition is the
/// one the triple belongs to.
pub fn filtered_candidates(
    split: &SplitSpec,
    triple: &Triple,
    position: Position,
    scenario: Scenario,
) -> Result<CandidateSet> {
    let target = [Partition::Test, Partition::Valid, Partition::Train]
        .into_iter()
        .find(|&p| split.triples(p).contains(triple))
        .ok_or_else(|| Error::Contract(format!("{triple:?} is not part of the split")))?;
    CandidatePools::new(split, target, scenario).candidates(triple, position)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// a, b train; c test (dynamic); relation 0.
    fn tiny() -> SplitSpec {
        SplitSpec {
            scenario: Scenario::Dynamic,
            roles: vec![Partition::Train, Partition::Train, Partition::Test],
            train_triples: vec![Triple::new(0, 0, 1)],
            valid_triples: vec![],
            test_triples: vec![Triple::new(2, 0, 1)],
            removal_order: vec![2],
            seed: 0,
            test_frac: 0.3,
            valid_frac: 0.0,
            min_rel_count: 1,
            discarded: 0,
            warning: None,
        }
    }

    #[test]
    fn dynamic_head_candidates_are_filtered() {
        let s = tiny();
        let c = filtered_candidates(&s, &Triple::new(2, 0, 1), Position::Head, Scenario::Dynamic)
            .unwrap();
        assert_eq!(c.candidates, vec![1]);
    }

    #[test]
    fn transfer_pool_excludes_correct_tail() {
        // c, d test; (c, r, d) test triple.
        let mut s = tiny();
        s.roles = vec![
            Partition::Train,
            Partition::Train,
            Partition::Test,
            Partition::Test,
        ];
        s.scenario = Scenario::Transfer;
        s.test_triples = vec![Triple::new(2, 0, 3)];
        let c = filtered_candidates(
            &s,
            &Triple::new(2, 0, 3),
            Position::Tail,
            Scenario::Transfer,
        )
        .unwrap();
        assert_eq!(c.candidates, vec![2]);
    }

    #[test]
    fn without_filter_interactions_pool_minus_correct() {
        let mut s = tiny();
        s.roles.push(Partition::Test);
        s.test_triples = vec![Triple::new(2, 0, 3)];
        let c = filtered_candidates(&s, &Triple::new(2, 0, 3), Position::Tail, Scenario::Dynamic)
            .unwrap();
        assert_eq!(c.candidates, vec![0, 1, 2]);
    }

    #[test]
    fn transfer_triple_touching_train_is_a_contract_error() {
        let s = tiny();
        let r = filtered_candidates(
            &s,
            &Triple::new(2, 0, 1),
            Position::Tail,
            Scenario::Transfer,
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
