//! Seeded synthetic graphs with generated descriptions.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::KnowledgeGraph;

fn build(
    triples: &[(String, String, String)],
    descriptions: HashMap<String, String>,
) -> KnowledgeGraph {
    KnowledgeGraph::from_parts(
        triples
            .iter()
            .map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
        &descriptions,
    )
    .expect("every generated entity has a description")
}

fn entity(i: usize) -> String {
    format!("e{i:04}")
}

/// Up to `num_triples` distinct random triples without self-loops. Each
/// description is a unique name followed by four words from a small pool.
pub fn random_graph(
    num_entities: usize,
    num_relations: usize,
    num_triples: usize,
    seed: u64,
) -> KnowledgeGraph {
    assert!(num_entities >= 2 && num_relations >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut triples = Vec::new();
    let max = num_entities * (num_entities - 1) * num_relations;
    while triples.len() < num_triples.min(max) {
        let h = rng.gen_range(0..num_entities);
        let t = rng.gen_range(0..num_entities);
        let r = rng.gen_range(0..num_relations);
        if h != t && seen.insert((h, r, t)) {
            triples.push((entity(h), format!("r{r}"), entity(t)));
        }
    }
    let descriptions = (0..num_entities)
        .map(|i| (entity(i), description(i, 4, &mut rng)))
        .collect();
    build(&triples, descriptions)
}

fn description<R: Rng>(i: usize, fillers: usize, rng: &mut R) -> String {
    let mut words = vec![format!("name{i:04}")];
    words.extend((0..fillers).map(|_| format!("w{:02}", rng.gen_range(0..30))));
    words.join(" ")
}

/// Every relation is a random permutation of the entities, so each entity
/// has exactly one tail per relation. Descriptions have five words.
pub fn permutation_graph(num_entities: usize, num_relations: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for r in 0..num_relations {
        let mut perm: Vec<usize> = (0..num_entities).collect();
        perm.shuffle(&mut rng);
        for (h, &t) in perm.iter().enumerate() {
            triples.push((entity(h), format!("r{r}"), entity(t)));
        }
    }
    let descriptions = (0..num_entities)
        .map(|i| (entity(i), description(i, 4, &mut rng)))
        .collect();
    build(&triples, descriptions)
}

/// Entities sit at positions `0..n` of a line and relation `s` links
/// position `i` to `i + s`. Relations `s = 1, 2, ..` are added in full until
/// `num_triples` is reached, the last one with a random subset of its pairs.
/// Entity names are shuffled against positions; descriptions are a unique
/// name and four pool words.
pub fn translation_graph(num_entities: usize, num_triples: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<usize> = (0..num_entities).collect();
    names.shuffle(&mut rng);
    let mut triples = Vec::new();
    for step in 1..num_entities {
        let left = num_triples - triples.len();
        if left == 0 {
            break;
        }
        let mut pairs: Vec<usize> = (0..num_entities - step).collect();
        if pairs.len() > left {
            pairs = pairs.choose_multiple(&mut rng, left).copied().collect();
            pairs.sort_unstable();
        }
        for i in pairs {
            triples.push((
                entity(names[i]),
                format!("r{step}"),
                entity(names[i + step]),
            ));
        }
    }
    let descriptions = (0..num_entities)
        .map(|i| (entity(i), description(i, 4, &mut rng)))
        .collect();
    build(&triples, descriptions)
}

/// A graph whose links follow description keywords.
#[derive(Debug, Clone)]
pub struct KeywordGraph {
    pub graph: KnowledgeGraph,
    /// Keyword group of every entity, by graph id.
    pub groups: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeywordGraphParams {
    pub num_entities: usize,
    pub num_groups: usize,
    pub num_relations: usize,
    /// Tails drawn per (entity, relation).
    pub tails_per_relation: usize,
    /// Content words per description, keyword and name included.
    pub description_len: usize,
    /// End each description with a unique name word.
    pub names: bool,
    pub seed: u64,
}

impl Default for KeywordGraphParams {
    fn default() -> Self {
        KeywordGraphParams {
            num_entities: 200,
            num_groups: 20,
            num_relations: 3,
            tails_per_relation: 1,
            description_len: 24,
            names: false,
            seed: 0,
        }
    }
}

/// Entities are dealt round-robin into keyword groups `0..G`. Relation `r`
/// maps group `g` to group `g + r + 1` when that group exists, and each
/// entity links to random members of the image group. A description holds
/// the group keyword at a random position among filler words, followed by
/// a unique name when `names` is set.
pub fn keyword_graph(p: &KeywordGraphParams) -> KeywordGraph {
    assert!(
        p.num_groups > p.num_relations
            && p.num_entities >= 2 * p.num_groups
            && p.description_len >= 2
    );
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let group = |e: usize| e % p.num_groups;
    let members: Vec<Vec<usize>> = (0..p.num_groups)
        .map(|g| (0..p.num_entities).filter(|&e| group(e) == g).collect())
        .collect();
    let mut triples = Vec::new();
    for h in 0..p.num_entities {
        for r in 0..p.num_relations {
            let Some(image) = members.get(group(h) + r + 1) else {
                continue;
            };
            for &t in image.choose_multiple(&mut rng, p.tails_per_relation) {
                triples.push((entity(h), format!("r{r}"), entity(t)));
            }
        }
    }
    let descriptions = (0..p.num_entities)
        .map(|e| {
            let fillers = p.description_len - 1 - usize::from(p.names);
            let mut words: Vec<String> = (0..fillers)
                .map(|_| format!("w{:02}", rng.gen_range(0..40)))
                .collect();
            words.insert(rng.gen_range(0..=words.len()), format!("kw{:02}", group(e)));
            if p.names {
                words.push(format!("name{e:04}"));
            }
            (entity(e), words.join(" "))
        })
        .collect();
    let graph = build(&triples, descriptions);
    let groups = graph
        .entities()
        .iter()
        .map(|n| group(n[1..].parse::<usize>().expect("generated name")))
        .collect();
    KeywordGraph { graph, groups }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_graph_shape() {
        let g = permutation_graph(20, 3, 1);
        assert_eq!(
            (g.num_entities(), g.num_relations(), g.triples().len()),
            (20, 3, 60)
        );
        assert!(g.descriptions().iter().all(|d| d.split(' ').count() == 5));
    }

    #[test]
    fn translation_graph_shape() {
        let g = translation_graph(20, 60, 3);
        assert_eq!(
            (g.num_entities(), g.num_relations(), g.triples().len()),
            (20, 4, 60)
        );
        assert!(g.descriptions().iter().all(|d| d.split(' ').count() == 5));
    }

    #[test]
    fn keyword_links_follow_groups() {
        let kg = keyword_graph(&KeywordGraphParams::default());
        let g = &kg.graph;
        assert_eq!(g.num_entities(), 200);
        for t in g.triples() {
            let step: usize = g.relation_name(t.relation)[1..].parse().unwrap();
            assert_eq!(kg.groups[t.tail], kg.groups[t.head] + step + 1);
        }
        for e in 0..g.num_entities() {
            assert!(g.description(e).contains(&format!("kw{:02}", kg.groups[e])));
            assert_eq!(g.description(e).split(' ').count(), 24);
        }
    }

    #[test]
    fn random_graph_is_seeded() {
        let a = random_graph(30, 3, 100, 5);
        let b = random_graph(30, 3, 100, 5);
        assert_eq!(a.triples(), b.triples());
        assert_eq!(a.triples().len(), 100);
    }
}
