//! Run configuration: `key = value` lines grouped into `[sections]`.
//!
//! ```text
//! seed = 7
//!
//! [data]
//! triples = "graph/triples.tsv"
//! descriptions = "graph/descriptions.tsv"
//! split_dir = "split"
//!
//! [train]
//! encoder = "transformer"
//! lr = 0.0005
//! ```
//!
//! Relative paths resolve against the config file's directory. Input files
//! missing there are looked up under `$KGTEXT_DATA_DIR`.

use std::path::{Path, PathBuf};

use kgtext_core::train::CONFIG_KEYS;
use kgtext_core::{MinRelCount, Partition, Scenario, SplitParams, TrainConfig};

pub const DATA_DIR_ENV: &str = "KGTEXT_DATA_DIR";

/// A configuration problem, reported with exit status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

fn invalid(msg: impl Into<String>) -> ValidationError {
    ValidationError(msg.into())
}

fn core_message(e: kgtext_core::Error) -> String {
    match e {
        kgtext_core::Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Keys outside `[train]`, with their meaning.
pub const KEYS: &[(&str, &str)] = &[
    (
        "seed",
        "seed for splits, initialization, batching and fold assignment",
    ),
    ("data.triples", "triples file: head<TAB>relation<TAB>tail"),
    ("data.descriptions", "descriptions file: entity<TAB>text"),
    (
        "data.split_dir",
        "split directory (written by `split`; train/eval use all triples when unset)",
    ),
    ("data.checkpoint", "checkpoint file"),
    (
        "data.output",
        "directory for reports and CSVs (default `out`)",
    ),
    ("data.pretrained", "word vectors: word v1 v2 ... per line"),
    ("data.labels", "entity labels: entity<TAB>label"),
    ("data.queries", "query texts: query<TAB>text"),
    (
        "data.documents",
        "document texts: doc<TAB>text (default: data.descriptions)",
    ),
    ("data.qrels", "judgments: query<TAB>0<TAB>doc<TAB>grade"),
    ("data.run", "base run: query<TAB>doc<TAB>rank<TAB>score"),
    ("split.scenario", "dynamic | transfer"),
    ("split.test_frac", "fraction of entities held out for test"),
    (
        "split.valid_frac",
        "fraction of entities held out for validation",
    ),
    (
        "split.min_rel_count",
        "auto | minimum training edges per relation",
    ),
    (
        "eval.scenario",
        "dynamic | transfer (default: the split's scenario)",
    ),
    ("eval.partition", "train | valid | test (default test)"),
    (
        "rerank.folds",
        "number of query folds for the alpha search (default 5)",
    ),
    ("rerank.k", "NDCG cutoff (default 10)"),
    (
        "sweep.lengths",
        "description lengths to train at (default [16, 32, 64, 128])",
    ),
];

const DATA_KEYS: &[&str] = &[
    "triples",
    "descriptions",
    "split_dir",
    "checkpoint",
    "output",
    "pretrained",
    "labels",
    "queries",
    "documents",
    "qrels",
    "run",
];

#[derive(Debug, Clone, Default)]
pub struct EvalSettings {
    pub scenario: Option<Scenario>,
    pub partition: Option<Partition>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub base_dir: PathBuf,
    pub seed: u64,
    data: Vec<(String, String)>,
    pub split: SplitParams,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub folds: usize,
    pub ndcg_k: usize,
    pub lengths: Vec<usize>,
}

impl RunConfig {
    fn new(base_dir: PathBuf) -> Self {
        RunConfig {
            base_dir,
            seed: 0,
            data: Vec::new(),
            split: SplitParams::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            folds: 5,
            ndcg_k: 10,
            lengths: vec![16, 32, 64, 128],
        }
    }

    /// Reads `config` (if any), then applies `overrides` in order.
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, ValidationError> {
        let mut pairs = Vec::new();
        let base = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
                pairs = parse_document(&text)
                    .map_err(|e| invalid(format!("{}: {}", path.display(), e.0)))?;
                path.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => PathBuf::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid(format!("override `{o}` is not key=value")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(base, pairs)
    }

    /// Parses config text as if read from a file in `base_dir`.
    pub fn parse(base_dir: &Path, text: &str) -> Result<Self, ValidationError> {
        Self::from_pairs(base_dir.to_path_buf(), parse_document(text)?)
    }

    fn from_pairs(
        base_dir: PathBuf,
        pairs: Vec<(String, String)>,
    ) -> Result<Self, ValidationError> {
        let mut cfg = RunConfig::new(base_dir);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.split.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.train.validate().map_err(|e| invalid(core_message(e)))?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ValidationError> {
        let bad = |what: &str| invalid(format!("config key `{key}`: {what} (got `{value}`)"));
        let (section, name) = key.split_once('.').unwrap_or(("", key));
        match (section, name) {
            ("", "seed") => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad("expected a non-negative integer"))?
            }
            ("data", k) if DATA_KEYS.contains(&k) => {
                self.data.retain(|(n, _)| n != k);
                self.data.push((k.to_string(), value.to_string()));
            }
            ("split", "scenario") => {
                self.split.scenario = value
                    .parse()
                    .map_err(|_| bad("expected dynamic or transfer"))?
            }
            ("split", "test_frac") => {
                self.split.test_frac =
                    parse_frac(value).ok_or_else(|| bad("expected a fraction"))?
            }
            ("split", "valid_frac") => {
                self.split.valid_frac =
                    parse_frac(value).ok_or_else(|| bad("expected a fraction"))?
            }
            ("split", "min_rel_count") => {
                self.split.min_rel_count = match value {
                    "auto" => MinRelCount::Auto,
                    v => MinRelCount::Fixed(
                        v.parse().map_err(|_| bad("expected auto or an integer"))?,
                    ),
                }
            }
            ("train", "seed") => {
                return Err(invalid(format!(
                    "unknown config key `{key}`; the top-level `seed` drives all randomness"
                )))
            }
            ("train", k) if CONFIG_KEYS.contains(&k) => self
                .train
                .set(k, value)
                .map_err(|e| invalid(format!("config key `{key}`: {}", core_message(e))))?,
            ("eval", "scenario") => {
                self.eval.scenario = Some(
                    value
                        .parse()
                        .map_err(|_| bad("expected dynamic or transfer"))?,
                )
            }
            ("eval", "partition") => {
                self.eval.partition = Some(
                    value
                        .parse()
                        .map_err(|_| bad("expected train, valid or test"))?,
                )
            }
            ("rerank", "folds") => {
                self.folds =
                    parse_positive(value).ok_or_else(|| bad("expected a positive integer"))?
            }
            ("rerank", "k") => {
                self.ndcg_k =
                    parse_positive(value).ok_or_else(|| bad("expected a positive integer"))?
            }
            ("sweep", "lengths") => {
                self.lengths = value
                    .trim_matches(|c| c == '[' || c == ']')
                    .split(',')
                    .map(|s| parse_positive(s.trim()))
                    .collect::<Option<Vec<_>>>()
                    .filter(|l| !l.is_empty())
                    .ok_or_else(|| bad("expected a list of positive integers"))?
            }
            _ => return Err(invalid(format!("unknown config key `{name}` in `{key}`"))),
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.data
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// An existing input file or directory named by `data.<key>`.
    pub fn input(&self, key: &str) -> Result<PathBuf, ValidationError> {
        let value = self.raw(key).ok_or_else(|| {
            invalid(format!(
                "config key `data.{key}` is required for this command"
            ))
        })?;
        self.optional_input(key, value)
    }

    fn optional_input(&self, key: &str, value: &str) -> Result<PathBuf, ValidationError> {
        let primary = self.resolve(value);
        if primary.exists() {
            return Ok(primary);
        }
        if Path::new(value).is_relative() {
            if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
                let alt = Path::new(&dir).join(value);
                if alt.exists() {
                    return Ok(alt);
                }
            }
        }
        Err(invalid(format!(
            "config key `data.{key}`: {} does not exist",
            primary.display()
        )))
    }

    /// Like [`RunConfig::input`] but `None` when the key is unset.
    pub fn maybe_input(&self, key: &str) -> Result<Option<PathBuf>, ValidationError> {
        self.raw(key)
            .map(|v| self.optional_input(key, v))
            .transpose()
    }

    /// A path for an artifact named by `data.<key>`; it need not exist yet.
    pub fn output(&self, key: &str) -> Result<PathBuf, ValidationError> {
        match (self.raw(key), key) {
            (Some(v), _) => Ok(self.resolve(v)),
            (None, "output") => Ok(self.resolve("out")),
            (None, _) => Err(invalid(format!(
                "config key `data.{key}` is required for this command"
            ))),
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }
}

fn parse_frac(v: &str) -> Option<f64> {
    v.parse().ok().filter(|f: &f64| (0.0..1.0).contains(f))
}

fn parse_positive(v: &str) -> Option<usize> {
    v.parse().ok().filter(|&n: &usize| n > 0)
}

/// Flattens a document into `(section.key, value)` pairs in file order.
fn parse_document(text: &str) -> Result<Vec<(String, String)>, ValidationError> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| invalid(e.to_string()))?;
    let mut pairs = Vec::new();
    for (k, v) in doc {
        match v {
            toml::Value::Table(section) => {
                for (name, v) in section {
                    let key = format!("{k}.{name}");
                    pairs.push((key.clone(), scalar(&key, v)?));
                }
            }
            v => pairs.push((k.clone(), scalar(&k, v)?)),
        }
    }
    Ok(pairs)
}

fn scalar(key: &str, v: toml::Value) -> Result<String, ValidationError> {
    Ok(match v {
        toml::Value::String(s) => s,
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .into_iter()
            .map(|x| scalar(key, x))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => {
            return Err(invalid(format!(
                "config key `{key}` has an unsupported value"
            )))
        }
    })
}

/// Text listing every accepted key, for `--help`.
pub fn key_help() -> String {
    let mut out = String::from("Config keys (file or --set section.key=value):\n");
    for (k, help) in KEYS {
        out.push_str(&format!("  {k:<22} {help}\n"));
    }
    let train: Vec<String> = CONFIG_KEYS
        .iter()
        .filter(|k| **k != "seed")
        .map(|k| format!("train.{k}"))
        .collect();
    out.push_str(&format!("  {}\n", train.join(", ")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let cfg = RunConfig::parse(
            Path::new("/cfg"),
            "seed = 3\n[data]\ntriples = \"t.tsv\"\n[train]\nlr = 0.01\nencoder = \"bow\"\n[sweep]\nlengths = [16, 32]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.split.seed, 3);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.lengths, vec![16, 32]);
        assert_eq!(cfg.output("triples").unwrap(), PathBuf::from("/cfg/t.tsv"));
        assert_eq!(cfg.output("output").unwrap(), PathBuf::from("/cfg/out"));
    }

    #[test]
    fn last_override_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nlr = 0.5\n").unwrap();
        let sets = vec!["train.lr=0.1".to_string(), "train.lr=0.2".to_string()];
        let cfg = RunConfig::load(Some(&path), &sets).unwrap();
        assert_eq!(cfg.train.lr, 0.2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::parse(Path::new("."), "[train]\nlearning_rte = 0.1\n").unwrap_err();
        assert!(e.0.contains("`learning_rte`"), "{}", e.0);
        let e = RunConfig::parse(Path::new("."), "[data]\ntriple = \"x\"\n").unwrap_err();
        assert!(e.0.contains("`triple`"), "{}", e.0);
        let e = RunConfig::parse(Path::new("."), "[train]\nseed = 1\n").unwrap_err();
        assert!(e.0.contains("`train.seed`"), "{}", e.0);
    }

    #[test]
    fn bad_values_name_the_key() {
        let e = RunConfig::parse(Path::new("."), "[split]\ntest_frac = 1.5\n").unwrap_err();
        assert!(e.0.contains("`split.test_frac`"), "{}", e.0);
        let e = RunConfig::parse(Path::new("."), "[train]\nlr = \"fast\"\n").unwrap_err();
        assert!(e.0.contains("`train.lr`"), "{}", e.0);
    }

    #[test]
    fn missing_inputs_are_rejected() {
        let cfg =
            RunConfig::parse(Path::new("/nonexistent"), "[data]\nlabels = \"l.tsv\"\n").unwrap();
        let e = cfg.input("labels").unwrap_err();
        assert!(e.0.contains("`data.labels`"), "{}", e.0);
        assert!(cfg.input("qrels").unwrap_err().0.contains("`data.qrels`"));
    }
}
