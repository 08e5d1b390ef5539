//! Tokenization, vocabularies and description encoders.

pub mod encoder;
pub mod tokenize;
pub mod vocab;

pub use encoder::{EncoderKind, EncoderParams, EncoderSpec, Encoding, EntityInput};
pub use tokenize::{tokenize, tokenize_with, TokenSeq};
pub use vocab::Vocabulary;
