//! Knowledge graph with one textual description per entity.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A `(head, relation, tail)` fact over graph indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Entities, relation types, triples and descriptions.
///
/// Entity and relation indices follow first-appearance order in the triples
/// file, so the same input always produces the same indexing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    triples: Vec<Triple>,
    descriptions: Vec<String>,
}

impl KnowledgeGraph {
    /// Builds a graph from string triples and a description lookup.
    ///
    /// Duplicate triples are dropped. Every entity mentioned by a triple must
    /// have a description; entities only present in `descriptions` are ignored.
    pub fn from_parts<'a, I>(triples: I, descriptions: &HashMap<String, String>) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut graph = KnowledgeGraph::default();
        let mut seen = HashSet::new();
        for (h, r, t) in triples {
            let head = graph.intern_entity(h);
            let relation = graph.intern_relation(r);
            let tail = graph.intern_entity(t);
            let triple = Triple::new(head, relation, tail);
            if seen.insert(triple) {
                graph.triples.push(triple);
            }
        }

        let mut missing = Vec::new();
        for name in &graph.entities {
            match descriptions.get(name) {
                Some(text) => graph.descriptions.push(text.clone()),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingDescription(missing));
        }

        let empty = graph
            .descriptions
            .iter()
            .filter(|d| d.trim().is_empty())
            .count();
        if empty > 0 {
            log::warn!("{empty} entities have an empty description");
        }
        Ok(graph)
    }

    fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&i) = self.entity_index.get(name) {
            return i;
        }
        let i = self.entities.len();
        self.entities.push(name.to_string());
        self.entity_index.insert(name.to_string(), i);
        i
    }

    fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&i) = self.relation_index.get(name) {
            return i;
        }
        let i = self.relations.len();
        self.relations.push(name.to_string());
        self.relation_index.insert(name.to_string(), i);
        i
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_name(&self, index: usize) -> &str {
        &self.entities[index]
    }

    pub fn relation_name(&self, index: usize) -> &str {
        &self.relations[index]
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn description(&self, entity: usize) -> &str {
        &self.descriptions[entity]
    }

    pub fn descriptions(&self) -> &[String] {
        &self.descriptions
    }

    /// Resolves a string triple against this graph's indices.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        Some(Triple::new(
            self.entity_id(head)?,
            self.relation_id(relation)?,
            self.entity_id(tail)?,
        ))
    }

    /// Writes the graph back as a triples TSV and a descriptions TSV.
    pub fn write(&self, triples_path: &Path, descriptions_path: &Path) -> Result<()> {
        let mut out = create(triples_path)?;
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities[t.head], self.relations[t.relation], self.entities[t.tail]
            )
            .map_err(|e| Error::io(triples_path, e))?;
        }
        out.flush().map_err(|e| Error::io(triples_path, e))?;

        let mut out = create(descriptions_path)?;
        for (name, text) in self.entities.iter().zip(&self.descriptions) {
            writeln!(out, "{name}\t{text}").map_err(|e| Error::io(descriptions_path, e))?;
        }
        out.flush().map_err(|e| Error::io(descriptions_path, e))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads tab-separated lines with exactly `fields` columns. Blank lines are skipped.
pub(crate) fn read_tsv(path: &Path, fields: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != fields {
            return Err(Error::parse(
                path,
                i + 1,
                format!(
                    "expected {fields} tab-separated fields, found {}",
                    cols.len()
                ),
            ));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

/// Reads `entity<TAB>text` lines into a map.
pub fn read_descriptions(path: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (line, mut cols) in read_tsv(path, 2)? {
        let text = cols.pop().unwrap_or_default();
        let name = cols.pop().unwrap_or_default();
        if map.insert(name.clone(), text).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate description for `{name}`"),
            ));
        }
    }
    Ok(map)
}

/// Loads a graph from a `head<TAB>relation<TAB>tail` file and an
/// `entity<TAB>text` file.
pub fn load_graph(triples_path: &Path, descriptions_path: &Path) -> Result<KnowledgeGraph> {
    let rows = read_tsv(triples_path, 3)?;
    let descriptions = read_descriptions(descriptions_path)?;
    KnowledgeGraph::from_parts(
        rows.iter()
            .map(|(_, c)| (c[0].as_str(), c[1].as_str(), c[2].as_str())),
        &descriptions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_files(
        dir: &Path,
        triples: &str,
        descs: &str,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let t = dir.join("triples.tsv");
        let d = dir.join("descriptions.tsv");
        fs::write(&t, triples).unwrap();
        fs::write(&d, descs).unwrap();
        (t, d)
    }

    #[test]
    fn loads_small_graph() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(
            dir.path(),
            "a\tr\tb\nb\tr\tc\n",
            "a\tfirst thing\nb\tsecond\nc\tthird\n",
        );
        let g = load_graph(&t, &d).unwrap();
        assert_eq!(g.num_entities(), 3);
        assert_eq!(g.num_relations(), 1);
        assert_eq!(g.triples().len(), 2);
        assert_eq!(g.entities(), &["a", "b", "c"]);
        assert_eq!(g.description(1), "second");
    }

    #[test]
    fn duplicate_triples_are_stored_once() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(dir.path(), "a\tr\tb\na\tr\tb\n", "a\tx\nb\ty\n");
        let g = load_graph(&t, &d).unwrap();
        assert_eq!(g.triples(), &[Triple::new(0, 0, 1)]);
    }

    #[test]
    fn missing_description_names_entity() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(dir.path(), "a\tr\tb\nb\tr\td\n", "a\tx\nb\ty\n");
        match load_graph(&t, &d) {
            Err(Error::MissingDescription(names)) => assert_eq!(names, vec!["d".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(dir.path(), "a\tr\tb\na\tb\n", "a\tx\nb\ty\n");
        match load_graph(&t, &d) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_description_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(dir.path(), "a\tr\tb\n", "a\t\nb\ty\n");
        let g = load_graph(&t, &d).unwrap();
        assert_eq!(g.description(0), "");
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = write_files(
            dir.path(),
            "x\tp\ty\ny\tq\tz\nz\tp\tx\n",
            "x\tone two\ny\t\nz\tthree, four!\nextra\tunused\n",
        );
        let g = load_graph(&t, &d).unwrap();
        let t2 = dir.path().join("t2.tsv");
        let d2 = dir.path().join("d2.tsv");
        g.write(&t2, &d2).unwrap();
        assert_eq!(load_graph(&t2, &d2).unwrap(), g);
    }
}
