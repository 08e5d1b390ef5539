//! Inductive train/valid/test splits built by removing entities from the
//! training graph one at a time.
//!
//! A sampled entity is held out only if (a) no remaining training entity is
//! left without neighbors and (b) every relation keeps at least
//! `min_rel_count` training edges.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{read_tsv, KnowledgeGraph, Triple};

/// Reference graph size the default relation-count threshold was tuned for.
const REFERENCE_TRIPLES: usize = 215_082;
const DEFAULT_MIN_REL_COUNT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Candidates are training entities plus the evaluated entities.
    Dynamic,
    /// Candidates are the evaluated (new) entities only.
    Transfer,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Dynamic => "dynamic",
            Scenario::Transfer => "transfer",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Scenario::Dynamic),
            "transfer" => Ok(Scenario::Transfer),
            _ => Err(Error::Config(format!(
                "unknown scenario `{s}` (dynamic|transfer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        })
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "valid" => Ok(Partition::Valid),
            "test" => Ok(Partition::Test),
            _ => Err(Error::Config(format!(
                "unknown split `{s}` (train|valid|test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinRelCount {
    /// `max(1, floor(100 * |T| / 215082))`, capped at 100.
    Auto,
    Fixed(usize),
}

impl MinRelCount {
    pub fn resolve(self, num_triples: usize) -> usize {
        match self {
            MinRelCount::Fixed(n) => n,
            MinRelCount::Auto => {
                let scaled = DEFAULT_MIN_REL_COUNT * num_triples / REFERENCE_TRIPLES;
                scaled.clamp(1, DEFAULT_MIN_REL_COUNT)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitParams {
    pub scenario: Scenario,
    pub test_frac: f64,
    pub valid_frac: f64,
    pub min_rel_count: MinRelCount,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            scenario: Scenario::Dynamic,
            test_frac: 0.1,
            valid_frac: 0.1,
            min_rel_count: MinRelCount::Auto,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub scenario: Scenario,
    /// Partition of every graph entity.
    pub roles: Vec<Partition>,
    pub train_triples: Vec<Triple>,
    pub valid_triples: Vec<Triple>,
    pub test_triples: Vec<Triple>,
    /// Held-out entities in the order they were accepted.
    pub removal_order: Vec<usize>,
    pub seed: u64,
    pub test_frac: f64,
    pub valid_frac: f64,
    pub min_rel_count: usize,
    /// Triples dropped because they cross partitions (transfer only).
    pub discarded: usize,
    pub warning: Option<String>,
}

impl SplitSpec {
    /// Every entity and triple in training; nothing held out.
    pub fn all_train(graph: &KnowledgeGraph) -> Self {
        SplitSpec {
            scenario: Scenario::Dynamic,
            roles: vec![Partition::Train; graph.num_entities()],
            train_triples: graph.triples().to_vec(),
            valid_triples: Vec::new(),
            test_triples: Vec::new(),
            removal_order: Vec::new(),
            seed: 0,
            test_frac: 0.0,
            valid_frac: 0.0,
            min_rel_count: 0,
            discarded: 0,
            warning: None,
        }
    }

    pub fn triples(&self, part: Partition) -> &[Triple] {
        match part {
            Partition::Train => &self.train_triples,
            Partition::Valid => &self.valid_triples,
            Partition::Test => &self.test_triples,
        }
    }

    pub fn entities(&self, part: Partition) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&e| self.roles[e] == part)
            .collect()
    }

    pub fn role(&self, entity: usize) -> Partition {
        self.roles[entity]
    }

    /// All triples of the three partitions.
    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train_triples
            .iter()
            .chain(&self.valid_triples)
            .chain(&self.test_triples)
    }

    /// Entities evaluated with `part`: its held-out entities plus any
    /// non-training endpoint of its triples.
    pub fn eval_entities(&self, part: Partition) -> Vec<bool> {
        let mut member: Vec<bool> = self.roles.iter().map(|&r| r == part).collect();
        for t in self.triples(part) {
            for e in [t.head, t.tail] {
                if self.roles[e] != Partition::Train || part == Partition::Train {
                    member[e] = true;
                }
            }
        }
        member
    }
}

/// Mutable view of the training graph used while removing entities.
struct TrainingGraph<'a> {
    triples: &'a [Triple],
    incident: Vec<Vec<usize>>,
    neighbors: Vec<HashMap<usize, usize>>,
    relation_edges: Vec<usize>,
    in_train: Vec<bool>,
}

impl<'a> TrainingGraph<'a> {
    fn new(graph: &'a KnowledgeGraph) -> Self {
        let n = graph.num_entities();
        let mut incident = vec![Vec::new(); n];
        let mut neighbors = vec![HashMap::new(); n];
        let mut relation_edges = vec![0; graph.num_relations()];
        for (i, t) in graph.triples().iter().enumerate() {
            incident[t.head].push(i);
            if t.tail != t.head {
                incident[t.tail].push(i);
            }
            *neighbors[t.head].entry(t.tail).or_insert(0) += 1;
            if t.tail != t.head {
                *neighbors[t.tail].entry(t.head).or_insert(0) += 1;
            }
            relation_edges[t.relation] += 1;
        }
        TrainingGraph {
            triples: graph.triples(),
            incident,
            neighbors,
            relation_edges,
            in_train: vec![true; n],
        }
    }

    fn active(&self, t: &Triple) -> bool {
        self.in_train[t.head] && self.in_train[t.tail]
    }

    fn can_remove(&self, v: usize, min_rel_count: usize) -> bool {
        for &u in self.neighbors[v].keys() {
            if u != v && self.neighbors[u].len() <= 1 {
                return false;
            }
        }
        let mut lost: HashMap<usize, usize> = HashMap::new();
        for &i in &self.incident[v] {
            let t = &self.triples[i];
            if self.active(t) {
                *lost.entry(t.relation).or_insert(0) += 1;
            }
        }
        lost.iter()
            .all(|(&r, &n)| self.relation_edges[r] - n >= min_rel_count)
    }

    fn remove(&mut self, v: usize) {
        for &i in &self.incident[v] {
            let t = self.triples[i];
            if self.active(&t) {
                self.relation_edges[t.relation] -= 1;
            }
        }
        let nbrs: Vec<usize> = self.neighbors[v].keys().copied().collect();
        for u in nbrs {
            if u != v {
                self.neighbors[u].remove(&v);
            }
        }
        self.neighbors[v].clear();
        self.in_train[v] = false;
    }
}

/// Splits `graph` into training, validation and test partitions by holding
/// out entities. Deterministic for a fixed seed.
pub fn generate_inductive_splits(
    graph: &KnowledgeGraph,
    params: &SplitParams,
) -> Result<SplitSpec> {
    let n = graph.num_entities();
    if n == 0 {
        return Err(Error::Contract("cannot split an empty graph".into()));
    }
    let in_unit = |f: f64| (0.0..1.0).contains(&f);
    if !in_unit(params.test_frac)
        || !in_unit(params.valid_frac)
        || params.test_frac + params.valid_frac >= 1.0
    {
        return Err(Error::Config(format!(
            "fractions must satisfy test_frac + valid_frac < 1 (got {} + {})",
            params.test_frac, params.valid_frac
        )));
    }

    let min_rel_count = params.min_rel_count.resolve(graph.triples().len());
    let want_test = (params.test_frac * n as f64).round() as usize;
    let want_valid = (params.valid_frac * n as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = TrainingGraph::new(graph);
    let mut roles = vec![Partition::Train; n];
    let mut removal_order = Vec::new();
    let (mut n_test, mut n_valid) = (0usize, 0usize);

    let mut queue: Vec<usize> = (0..n).collect();
    queue.shuffle(&mut rng);
    let mut rejected = Vec::new();
    let mut accepted_this_pass = false;
    let max_attempts = 10 * n;
    let mut attempts = 0;

    while (n_test < want_test || n_valid < want_valid) && attempts < max_attempts {
        let Some(v) = queue.pop() else {
            if !accepted_this_pass || rejected.is_empty() {
                break;
            }
            queue = std::mem::take(&mut rejected);
            queue.shuffle(&mut rng);
            accepted_this_pass = false;
            continue;
        };
        attempts += 1;
        if !state.can_remove(v, min_rel_count) {
            rejected.push(v);
            continue;
        }
        state.remove(v);
        accepted_this_pass = true;
        // Fill whichever partition is further from its target, test first.
        let test_fill = fill_ratio(n_test, want_test);
        let valid_fill = fill_ratio(n_valid, want_valid);
        if test_fill <= valid_fill {
            roles[v] = Partition::Test;
            n_test += 1;
        } else {
            roles[v] = Partition::Valid;
            n_valid += 1;
        }
        removal_order.push(v);
    }

    let warning = (n_test < want_test || n_valid < want_valid).then(|| {
        format!(
            "target fractions unreachable under constraints: achieved test {:.4} (target {}), valid {:.4} (target {})",
            n_test as f64 / n as f64,
            params.test_frac,
            n_valid as f64 / n as f64,
            params.valid_frac
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }

    let mut order = vec![usize::MAX; n];
    for (i, &v) in removal_order.iter().enumerate() {
        order[v] = i;
    }

    let mut spec = SplitSpec {
        scenario: params.scenario,
        roles,
        train_triples: Vec::new(),
        valid_triples: Vec::new(),
        test_triples: Vec::new(),
        removal_order,
        seed: params.seed,
        test_frac: params.test_frac,
        valid_frac: params.valid_frac,
        min_rel_count,
        discarded: 0,
        warning,
    };

    for &t in graph.triples() {
        let (rh, rt) = (spec.roles[t.head], spec.roles[t.tail]);
        let target = match (rh, rt, params.scenario) {
            (Partition::Train, Partition::Train, _) => Some(Partition::Train),
            (_, _, Scenario::Dynamic) => {
                // Held out first wins; a train endpoint has order usize::MAX.
                let first = if order[t.head] <= order[t.tail] {
                    rh
                } else {
                    rt
                };
                Some(first)
            }
            (a, b, Scenario::Transfer) if a == b => Some(a),
            _ => None,
        };
        match target {
            Some(Partition::Train) => spec.train_triples.push(t),
            Some(Partition::Valid) => spec.valid_triples.push(t),
            Some(Partition::Test) => spec.test_triples.push(t),
            None => spec.discarded += 1,
        }
    }
    Ok(spec)
}

fn fill_ratio(have: usize, want: usize) -> f64 {
    if want == 0 {
        f64::INFINITY
    } else {
        have as f64 / want as f64
    }
}

fn write_triples(path: &Path, graph: &KnowledgeGraph, triples: &[Triple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        out.push_str(graph.entity_name(t.head));
        out.push('\t');
        out.push_str(graph.relation_name(t.relation));
        out.push('\t');
        out.push_str(graph.entity_name(t.tail));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_triples(path: &Path, graph: &KnowledgeGraph) -> Result<Vec<Triple>> {
    read_tsv(path, 3)?
        .into_iter()
        .map(|(line, c)| {
            graph.resolve(&c[0], &c[1], &c[2]).ok_or_else(|| {
                Error::parse(path, line, "triple references unknown entity or relation")
            })
        })
        .collect()
}

/// Persists a split as `train.tsv`, `valid.tsv`, `test.tsv` and `manifest.txt`.
pub fn write_split(dir: &Path, graph: &KnowledgeGraph, split: &SplitSpec) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_triples(&dir.join("train.tsv"), graph, &split.train_triples)?;
    write_triples(&dir.join("valid.tsv"), graph, &split.valid_triples)?;
    write_triples(&dir.join("test.tsv"), graph, &split.test_triples)?;

    let names = |part: Partition| {
        split
            .removal_order
            .iter()
            .filter(|&&e| split.roles[e] == part)
            .map(|&e| graph.entity_name(e))
            .collect::<Vec<_>>()
            .join("\t")
    };
    let path = dir.join("manifest.txt");
    let mut out = Vec::new();
    let mut put = |k: &str, v: String| writeln!(out, "{k}={v}").expect("write to Vec");
    put("scenario", split.scenario.to_string());
    put("seed", split.seed.to_string());
    put("test_frac", split.test_frac.to_string());
    put("valid_frac", split.valid_frac.to_string());
    put("min_rel_count", split.min_rel_count.to_string());
    put("discarded_triples", split.discarded.to_string());
    put("warning", split.warning.clone().unwrap_or_default());
    put("valid_entities", names(Partition::Valid));
    put("test_entities", names(Partition::Test));
    let order: Vec<_> = split
        .removal_order
        .iter()
        .map(|&e| graph.entity_name(e))
        .collect();
    put("removal_order", order.join("\t"));
    fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

/// Loads a split written by [`write_split`] against the same graph.
pub fn load_split(dir: &Path, graph: &KnowledgeGraph) -> Result<SplitSpec> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kv = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&path, i + 1, "expected key=value"))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .cloned()
            .ok_or_else(|| Error::parse(&path, 0, format!("manifest missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::parse(&path, 0, format!("bad number for `{k}`")))
    };

    let mut roles = vec![Partition::Train; graph.num_entities()];
    let mut removal_order = Vec::new();
    for (key, part) in [
        ("valid_entities", Partition::Valid),
        ("test_entities", Partition::Test),
    ] {
        let list = get(key)?;
        for name in list.split('\t').filter(|s| !s.is_empty()) {
            let e = graph
                .entity_id(name)
                .ok_or_else(|| Error::parse(&path, 0, format!("unknown entity `{name}`")))?;
            roles[e] = part;
            removal_order.push(e);
        }
    }
    if let Some(list) = kv.get("removal_order") {
        let mut order = Vec::new();
        for name in list.split('\t').filter(|s| !s.is_empty()) {
            let e = graph
                .entity_id(name)
                .ok_or_else(|| Error::parse(&path, 0, format!("unknown entity `{name}`")))?;
            order.push(e);
        }
        let (mut a, mut b) = (order.clone(), removal_order.clone());
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::parse(
                &path,
                0,
                "removal_order disagrees with entity lists",
            ));
        }
        removal_order = order;
    }
    let warning = get("warning")?;
    Ok(SplitSpec {
        scenario: get("scenario")?.parse()?,
        roles,
        train_triples: read_triples(&dir.join("train.tsv"), graph)?,
        valid_triples: read_triples(&dir.join("valid.tsv"), graph)?,
        test_triples: read_triples(&dir.join("test.tsv"), graph)?,
        removal_order,
        seed: num("seed")? as u64,
        test_frac: num("test_frac")?,
        valid_frac: num("valid_frac")?,
        min_rel_count: num("min_rel_count")? as usize,
        discarded: num("discarded_triples")? as usize,
        warning: (!warning.is_empty()).then_some(warning),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn graph_from(triples: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut descs = HashMap::new();
        for (h, _, t) in triples {
            descs.insert(h.to_string(), format!("about {h}"));
            descs.insert(t.to_string(), format!("about {t}"));
        }
        KnowledgeGraph::from_parts(triples.iter().copied(), &descs).unwrap()
    }

    fn star(leaves: usize) -> KnowledgeGraph {
        let names: Vec<String> = (0..leaves).map(|i| format!("leaf{i}")).collect();
        let triples: Vec<(&str, &str, &str)> =
            names.iter().map(|l| ("hub", "r", l.as_str())).collect();
        graph_from(&triples)
    }

    /// Independent re-check of the two removal conditions on the set of
    /// entities still in training.
    fn removal_ok(graph: &KnowledgeGraph, train: &[bool], v: usize, min_rel: usize) -> bool {
        let mut after = train.to_vec();
        after[v] = false;
        let live: Vec<&Triple> = graph
            .triples()
            .iter()
            .filter(|t| after[t.head] && after[t.tail])
            .collect();
        for r in 0..graph.num_relations() {
            let before = graph
                .triples()
                .iter()
                .filter(|t| t.relation == r && train[t.head] && train[t.tail])
                .count();
            let now = live.iter().filter(|t| t.relation == r).count();
            if now < before && now < min_rel {
                return false;
            }
        }
        (0..graph.num_entities()).filter(|&u| after[u]).all(|u| {
            let had = graph
                .triples()
                .iter()
                .any(|t| train[t.head] && train[t.tail] && (t.head == u || t.tail == u));
            let has = live.iter().any(|t| t.head == u || t.tail == u);
            !had || has
        })
    }

    #[test]
    fn star_hub_is_never_held_out() {
        let g = star(10);
        let hub = g.entity_id("hub").unwrap();
        for seed in 0..50 {
            let params = SplitParams {
                test_frac: 0.2,
                valid_frac: 0.0,
                min_rel_count: MinRelCount::Fixed(1),
                seed,
                ..Default::default()
            };
            let s = generate_inductive_splits(&g, &params).unwrap();
            assert_eq!(s.role(hub), Partition::Train);
            assert_eq!(s.entities(Partition::Test).len(), 2);
            // replay the accepted removals against the independent check
            let mut train = vec![true; g.num_entities()];
            for &v in &s.removal_order {
                assert!(removal_ok(&g, &train, v, 1));
                train[v] = false;
            }
        }
    }

    #[test]
    fn star_every_order_rejects_hub_while_leaves_remain() {
        let g = star(4);
        let hub = g.entity_id("hub").unwrap();
        // all subsets of removed leaves
        for mask in 0u32..(1 << 4) - 1 {
            let mut train = vec![true; g.num_entities()];
            for leaf in 0..4 {
                if mask & (1 << leaf) != 0 {
                    train[g.entity_id(&format!("leaf{leaf}")).unwrap()] = false;
                }
            }
            assert!(!removal_ok(&g, &train, hub, 1));
            let mut state = TrainingGraph::new(&g);
            for (e, &keep) in train.iter().enumerate() {
                if !keep {
                    state.remove(e);
                }
            }
            assert!(!state.can_remove(hub, 1));
        }
    }

    #[test]
    fn saturated_graph_keeps_everything_in_train() {
        let g = graph_from(&[("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a")]);
        let params = SplitParams {
            test_frac: 0.3,
            valid_frac: 0.3,
            min_rel_count: MinRelCount::Fixed(5),
            ..Default::default()
        };
        let s = generate_inductive_splits(&g, &params).unwrap();
        assert!(s.roles.iter().all(|&r| r == Partition::Train));
        assert!(s.valid_triples.is_empty() && s.test_triples.is_empty());
        assert!(s.warning.is_some());
    }

    #[test]
    fn seeded_split_is_deterministic() {
        let g = star(12);
        let params = SplitParams {
            test_frac: 0.2,
            valid_frac: 0.2,
            min_rel_count: MinRelCount::Fixed(1),
            seed: 7,
            ..Default::default()
        };
        let a = generate_inductive_splits(&g, &params).unwrap();
        let b = generate_inductive_splits(&g, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_min_rel_count_scales_with_graph() {
        assert_eq!(MinRelCount::Auto.resolve(60), 1);
        assert_eq!(MinRelCount::Auto.resolve(215_082), 100);
        assert_eq!(MinRelCount::Auto.resolve(10_000_000), 100);
        assert_eq!(MinRelCount::Auto.resolve(21_508), 9);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let g = star(3);
        let params = SplitParams {
            test_frac: 0.6,
            valid_frac: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            generate_inductive_splits(&g, &params),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn persisted_split_round_trips() {
        let g = star(12);
        let params = SplitParams {
            scenario: Scenario::Transfer,
            test_frac: 0.2,
            valid_frac: 0.1,
            min_rel_count: MinRelCount::Fixed(1),
            seed: 3,
        };
        let s = generate_inductive_splits(&g, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &g, &s).unwrap();
        let loaded = load_split(dir.path(), &g).unwrap();
        assert_eq!(loaded.roles, s.roles);
        assert_eq!(loaded.train_triples, s.train_triples);
        assert_eq!(loaded.test_triples, s.test_triples);
        assert_eq!(loaded.discarded, s.discarded);
        assert_eq!(loaded.scenario, Scenario::Transfer);
    }
}
