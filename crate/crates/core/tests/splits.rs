use std::collections::HashMap;

use kgtext_core::synthetic::random_graph;
use kgtext_core::*;
use proptest::prelude::*;

/// Checks the removal conditions and the scenario's entity separation.
fn check_invariants(g: &KnowledgeGraph, s: &SplitSpec) -> Result<(), String> {
    let mut degree = vec![0usize; g.num_entities()];
    let mut rel_count = vec![0usize; g.num_relations()];
    for t in &s.train_triples {
        if s.role(t.head) != Partition::Train || s.role(t.tail) != Partition::Train {
            return Err(format!("training triple {t:?} touches a held-out entity"));
        }
        degree[t.head] += 1;
        degree[t.tail] += 1;
        rel_count[t.relation] += 1;
    }
    for e in s.entities(Partition::Train) {
        if degree[e] == 0 {
            return Err(format!(
                "training entity {} has no neighbours",
                g.entity_name(e)
            ));
        }
    }
    let mut initial = vec![0usize; g.num_relations()];
    for t in g.triples() {
        initial[t.relation] += 1;
    }
    for r in 0..g.num_relations() {
        if rel_count[r] < s.min_rel_count.min(initial[r]) {
            return Err(format!(
                "relation {} keeps {} edges",
                g.relation_name(r),
                rel_count[r]
            ));
        }
    }
    for part in [Partition::Valid, Partition::Test] {
        for t in s.triples(part) {
            let (rh, rt) = (s.role(t.head), s.role(t.tail));
            let ok = match s.scenario {
                Scenario::Dynamic => rh == part || rt == part,
                Scenario::Transfer => rh == part && rt == part,
            };
            if !ok {
                return Err(format!("{part} triple {t:?} has roles {rh}/{rt}"));
            }
        }
    }
    let placed = s.train_triples.len() + s.valid_triples.len() + s.test_triples.len() + s.discarded;
    if placed != g.triples().len() {
        return Err("triples lost".into());
    }
    Ok(())
}

fn files(dir: &std::path::Path) -> HashMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_splits_satisfy_invariants(
        entities in 5usize..60,
        relations in 1usize..6,
        density in 1usize..5,
        seed in 0u64..1000,
        transfer in any::<bool>(),
        min_rel in 0usize..4,
    ) {
        let g = random_graph(entities, relations, entities * density, seed);
        let params = SplitParams {
            scenario: if transfer { Scenario::Transfer } else { Scenario::Dynamic },
            test_frac: 0.15,
            valid_frac: 0.15,
            min_rel_count: if min_rel == 0 { MinRelCount::Auto } else { MinRelCount::Fixed(min_rel) },
            seed,
        };
        let s = generate_inductive_splits(&g, &params).unwrap();
        if let Err(m) = check_invariants(&g, &s) {
            prop_assert!(false, "{}", m);
        }
        let again = generate_inductive_splits(&g, &params).unwrap();
        prop_assert_eq!(&s, &again);
    }
}

#[test]
fn written_splits_are_byte_identical() {
    let g = random_graph(50, 4, 180, 9);
    let params = SplitParams {
        seed: 42,
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let s = generate_inductive_splits(&g, &params).unwrap();
        write_split(dir, &g, &s).unwrap();
    }
    assert_eq!(files(a.path()), files(b.path()));
    let loaded = load_split(a.path(), &g).unwrap();
    assert_eq!(loaded, generate_inductive_splits(&g, &params).unwrap());
}
