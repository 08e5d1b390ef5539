//! Binary checkpoint container.
//!
//! All integers are little-endian `u64` and all reals little-endian `f64`.
//! A string is its byte length followed by UTF-8 bytes.
//!
//! ```text
//! "KGTXCKPT"  u32 version
//! manifest    string of `key=value` lines
//! vocabulary  count, strings (reserved tokens omitted)
//! entities    count, strings
//! relations   count, strings
//! history     count, (epoch, mean_loss f64, lr f64)*
//! tensors     count, (name, rank, dims*, values f64*)*
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{EpochStats, TrainConfig, CONFIG_KEYS};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::model::Model;
use crate::params::Parameters;
use crate::text::{tokenize_with, EncoderKind, Encoding, EntityInput, TokenSeq, Vocabulary};

const MAGIC: &[u8; 8] = b"KGTXCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to embed new descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    /// Entity names in lookup-table row order.
    pub entities: Vec<String>,
    /// Relation names in relation-table row order.
    pub relations: Vec<String>,
    pub history: Vec<EpochStats>,
}

/// One row per graph entity; rows of unavailable entities are zero.
#[derive(Debug, Clone)]
pub struct EntityEmbeddings {
    pub vectors: Array2<f64>,
    pub available: Vec<bool>,
}

impl Checkpoint {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    pub fn final_mean_loss(&self) -> Option<f64> {
        self.history.last().map(|s| s.mean_loss)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    pub fn tokenize(&self, text: &str) -> TokenSeq {
        tokenize_with(
            text,
            &self.vocab,
            self.config.max_len,
            self.config.encoder.drops_stop_words(),
        )
    }

    /// Embeds free text. Not available for the lookup encoder.
    pub fn encode_text(&self, text: &str) -> Result<Encoding> {
        if self.config.encoder.kind == EncoderKind::Lookup {
            return Err(Error::Contract(
                "the lookup encoder cannot embed text".into(),
            ));
        }
        let tokens = self.tokenize(text);
        self.model.encoder.encode(&EntityInput {
            entity: 0,
            tokens: &tokens,
        })
    }

    /// Embeds every entity of `graph`. Text encoders skip entities with
    /// empty descriptions; the lookup encoder skips entities it never saw.
    pub fn embed_graph(&self, graph: &KnowledgeGraph) -> Result<EntityEmbeddings> {
        let lookup = self.config.encoder.kind == EncoderKind::Lookup;
        let rows: HashMap<&str, usize> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let encoded: Vec<Option<Array1<f64>>> = (0..graph.num_entities())
            .into_par_iter()
            .map(|e| {
                if lookup {
                    let Some(&row) = rows.get(graph.entity_name(e)) else {
                        return Ok(None);
                    };
                    let tokens = TokenSeq {
                        ids: vec![],
                        mask: vec![],
                    };
                    return self
                        .model
                        .encoder
                        .encode(&EntityInput {
                            entity: row,
                            tokens: &tokens,
                        })
                        .map(|enc| Some(enc.vector));
                }
                let desc = graph.description(e);
                if desc.trim().is_empty() {
                    return Ok(None);
                }
                self.encode_text(desc).map(|enc| Some(enc.vector))
            })
            .collect::<Result<_>>()?;
        let mut vectors = Array2::zeros((graph.num_entities(), self.model.dim()));
        let mut available = vec![false; graph.num_entities()];
        for (e, v) in encoded.into_iter().enumerate() {
            if let Some(v) = v {
                vectors.row_mut(e).assign(&v);
                available[e] = true;
            }
        }
        let missing = available.iter().filter(|a| !**a).count();
        if missing > 0 {
            log::warn!("{missing} entities could not be embedded and are skipped");
        }
        Ok(EntityEmbeddings { vectors, available })
    }

    /// Writes `epoch,mean_loss,lr`.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,mean_loss,lr\n");
        for s in &self.history {
            out.push_str(&format!("{},{},{}\n", s.epoch, s.mean_loss, s.lr));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut w, &self.manifest());
        put_strs(&mut w, self.vocab.words());
        put_strs(&mut w, &self.entities);
        put_strs(&mut w, &self.relations);
        put_u64(&mut w, self.history.len() as u64);
        for s in &self.history {
            put_u64(&mut w, s.epoch as u64);
            w.extend_from_slice(&s.mean_loss.to_le_bytes());
            w.extend_from_slice(&s.lr.to_le_bytes());
        }
        let tensors = self.model.tensors();
        put_u64(&mut w, tensors.len() as u64);
        for t in tensors {
            put_str(&mut w, &t.name);
            put_u64(&mut w, t.shape.len() as u64);
            for &d in &t.shape {
                put_u64(&mut w, d as u64);
            }
            for v in t.data {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&w).map_err(|e| Error::io(path, e))
    }

    fn manifest(&self) -> String {
        let mut m = format!("format_version={CHECKPOINT_VERSION}\n");
        for (k, v) in self.config.to_pairs() {
            m.push_str(&format!("{k}={v}\n"));
        }
        m.push_str(&format!("vocab_size={}\n", self.vocab.len()));
        m.push_str(&format!("num_entities={}\n", self.entities.len()));
        m.push_str(&format!("num_relations={}\n", self.relations.len()));
        m.push_str(&format!("epochs={}\n", self.epochs()));
        if let Some(l) = self.final_mean_loss() {
            m.push_str(&format!("final_mean_loss={l}\n"));
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
        };
        if r.take(8).map_err(|_| bad("truncated header"))? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let manifest = r.string()?;
        let pairs: Vec<(&str, &str)> = manifest.lines().filter_map(|l| l.split_once('=')).collect();
        let config = TrainConfig::from_pairs(
            pairs
                .iter()
                .copied()
                .filter(|(k, _)| CONFIG_KEYS.contains(k)),
        )?;
        let vocab_words = r.strings()?;
        let vocab = Vocabulary::from_words(vocab_words.iter().map(String::as_str));
        let entities = r.strings()?;
        let relations = r.strings()?;
        let n_hist = r.u64()? as usize;
        let mut history = Vec::with_capacity(n_hist.min(1 << 20));
        for _ in 0..n_hist {
            let epoch = r.u64()? as usize;
            let mean_loss = r.f64()?;
            let lr = r.f64()?;
            history.push(EpochStats {
                epoch,
                mean_loss,
                lr,
            });
        }
        let mut model = Model::zeros(
            &config.encoder,
            config.scoring,
            vocab.len(),
            entities.len(),
            relations.len(),
        )?;
        let expected: HashMap<String, Vec<usize>> = model
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.shape))
            .collect();
        let mut loaded: HashMap<String, Vec<f64>> = HashMap::new();
        let n_tensors = r.u64()? as usize;
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u64()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            match expected.get(&name) {
                Some(s) if *s == shape => {}
                Some(s) => {
                    return Err(bad(&format!(
                        "tensor {name} has shape {shape:?}, expected {s:?}"
                    )))
                }
                None => return Err(bad(&format!("unexpected tensor {name}"))),
            }
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            loaded.insert(name, data);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        for (name, dst) in model.tensors_mut() {
            let src = loaded
                .remove(&name)
                .ok_or_else(|| bad(&format!("missing tensor {name}")))?;
            dst.copy_from_slice(&src);
        }
        Ok(Checkpoint {
            model,
            vocab,
            config,
            entities,
            relations,
            history,
        })
    }
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u64(w, s.len() as u64);
    w.extend_from_slice(s.as_bytes());
}

fn put_strs(w: &mut Vec<u8>, items: &[String]) {
    put_u64(w, items.len() as u64);
    for s in items {
        put_str(w, s);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u64()? as usize;
        (0..n).map(|_| self.string()).collect()
    }
}
