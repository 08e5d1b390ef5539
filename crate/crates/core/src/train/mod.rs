//! Link-prediction training of an entity encoder and relation embeddings.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod negatives;
mod objective;
mod schedule;

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::model::Model;
use crate::params::Parameters;
use crate::text::{tokenize_with, EncoderKind, TokenSeq, Vocabulary};

pub use adam::Adam;
pub use checkpoint::{Checkpoint, EntityEmbeddings, CHECKPOINT_VERSION};
pub use config::{TrainConfig, CONFIG_KEYS};
pub use gradcheck::{check_gradient, GradientCheck};
pub use loss::{margin_loss, nll_loss, softplus, LossKind};
pub use negatives::{sample_negatives, MAX_REDRAWS};
pub use objective::{batch_objective, Objective};
pub use schedule::lr_at;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate of the last update in the epoch.
    pub lr: f64,
}

/// Training state for one graph and one set of training triples.
pub struct Trainer<'g> {
    graph: &'g KnowledgeGraph,
    triples: Vec<Triple>,
    config: TrainConfig,
    vocab: Vocabulary,
    inputs: Vec<TokenSeq>,
    model: Model,
    rng: ChaCha8Rng,
}

impl<'g> Trainer<'g> {
    /// Builds the vocabulary from the descriptions of entities that appear in
    /// `triples` and initializes the model from `config.seed`.
    pub fn new(graph: &'g KnowledgeGraph, triples: &[Triple], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if triples.is_empty() {
            return Err(Error::Config("no training triples".into()));
        }
        let entities: BTreeSet<usize> = triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        let text_based = config.encoder.kind != EncoderKind::Lookup;
        if text_based {
            let empty: Vec<String> = entities
                .iter()
                .filter(|&&e| graph.description(e).trim().is_empty())
                .map(|&e| graph.entity_name(e).to_string())
                .collect();
            if !empty.is_empty() {
                return Err(Error::Config(format!(
                    "training entities with empty descriptions: {}",
                    empty.join(", ")
                )));
            }
        }
        let vocab = Vocabulary::build(entities.iter().map(|&e| graph.description(e)));
        if text_based && vocab.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        let drop = config.encoder.drops_stop_words();
        let inputs = graph
            .descriptions()
            .iter()
            .map(|d| tokenize_with(d, &vocab, config.max_len, drop))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::init(
            &config.encoder,
            config.scoring,
            vocab.len(),
            graph.num_entities(),
            graph.num_relations(),
            &mut rng,
        )?;
        Ok(Trainer {
            graph,
            triples: triples.to_vec(),
            config,
            vocab,
            inputs,
            model,
            rng,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn inputs(&self) -> &[TokenSeq] {
        &self.inputs
    }

    /// Copies vectors from a `word v1 .. vd` text file into the word
    /// embeddings. Returns the number of rows replaced.
    pub fn load_pretrained(&mut self, path: &Path) -> Result<usize> {
        self.model.encoder.load_pretrained(&self.vocab, path)
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.triples.len().div_ceil(self.config.batch_size)
    }

    /// Trains for `config.epochs` epochs. `observer` sees every epoch's
    /// statistics and the model after that epoch.
    pub fn run(mut self, mut observer: impl FnMut(&EpochStats, &Model)) -> Result<Checkpoint> {
        let cfg = self.config.clone();
        let total = cfg.epochs * self.steps_per_epoch();
        let mut adam = Adam::new(&self.model);
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut order = self.triples.clone();
        let mut step = 0;
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut self.rng);
            let (mut sum, mut lr) = (0.0, 0.0);
            for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
                let negs = sample_negatives(batch, cfg.negatives, &mut self.rng);
                let obj = batch_objective(
                    &self.model,
                    &self.inputs,
                    batch,
                    &negs,
                    cfg.loss,
                    cfg.l2,
                    true,
                )?;
                let grads = obj.grads.expect("gradient requested");
                if !obj.loss.is_finite() || grads.first_non_finite().is_some() {
                    return Err(self.non_finite(epoch, bi));
                }
                if obj.degenerate > 0 {
                    log::debug!(
                        "epoch {epoch} batch {bi}: {} degenerate TransE scores",
                        obj.degenerate
                    );
                }
                lr = lr_at(step, total, cfg.lr, cfg.warmup);
                adam.step(&mut self.model, &grads, lr);
                step += 1;
                sum += obj.loss * batch.len() as f64;
            }
            let stats = EpochStats {
                epoch,
                mean_loss: sum / order.len() as f64,
                lr,
            };
            log::info!("epoch {epoch}: loss {:.6} lr {:.3e}", stats.mean_loss, lr);
            observer(&stats, &self.model);
            history.push(stats);
        }
        Ok(Checkpoint {
            model: self.model,
            vocab: self.vocab,
            config: cfg,
            entities: self.graph.entities().to_vec(),
            relations: self.graph.relations().to_vec(),
            history,
        })
    }

    fn non_finite(&self, epoch: usize, batch: usize) -> Error {
        let norms = self
            .model
            .norms()
            .into_iter()
            .map(|(n, v)| format!("{n}={v:.4e}"))
            .collect::<Vec<_>>()
            .join(", ");
        Error::NonFiniteLoss {
            epoch,
            batch,
            norms,
        }
    }
}

pub fn train(
    graph: &KnowledgeGraph,
    triples: &[Triple],
    config: TrainConfig,
) -> Result<Checkpoint> {
    Trainer::new(graph, triples, config)?.run(|_, _| {})
}
