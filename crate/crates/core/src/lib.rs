//! Inductive entity embeddings from text descriptions, trained by link
//! prediction, with link-prediction, classification and re-ranking
//! evaluation.

pub mod candidates;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod params;
pub mod scoring;
pub mod split;
pub mod synthetic;
pub mod text;
pub mod train;

pub use candidates::{filtered_candidates, CandidatePools, CandidateSet, Position, TripleIndex};
pub use error::{Error, Result};
pub use graph::{load_graph, read_descriptions, KnowledgeGraph, Triple};
pub use model::Model;
pub use params::{Parameters, TensorRef};
pub use scoring::{ScoreGradient, ScoringKind, ScoringModel};
pub use split::{
    generate_inductive_splits, load_split, write_split, MinRelCount, Partition, Scenario,
    SplitParams, SplitSpec,
};
pub use text::{tokenize, EncoderKind, EncoderParams, EncoderSpec, TokenSeq, Vocabulary};
pub use train::{train, Checkpoint, EpochStats, LossKind, TrainConfig, Trainer};
