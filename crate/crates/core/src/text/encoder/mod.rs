//! Description encoders mapping a token sequence to an entity embedding.
//!
//! Every encoder exposes a forward pass and an exact reverse pass that
//! accumulates `d(upstream . output) / d(theta)` into a gradient value of the
//! same type as the parameters.

mod bow;
mod dkrl;
mod lookup;
mod transformer;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

pub use bow::BowParams;
pub use dkrl::DkrlParams;
pub use lookup::LookupParams;
pub use transformer::{LayerParams, TransformerParams};

use crate::error::{Error, Result};
use crate::params::{Parameters, TensorRef};
use crate::text::tokenize::TokenSeq;
use crate::text::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    /// Mean of word embeddings.
    Bow,
    /// Two-layer convolutional encoder over stop-word-free text.
    Dkrl,
    /// Self-attention encoder with `[CLS]` pooling and a linear projection.
    Transformer,
    /// One free vector per entity; ignores the text.
    Lookup,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Bow => "bow",
            EncoderKind::Dkrl => "dkrl",
            EncoderKind::Transformer => "transformer",
            EncoderKind::Lookup => "lookup",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(EncoderKind::Bow),
            "dkrl" => Ok(EncoderKind::Dkrl),
            "transformer" => Ok(EncoderKind::Transformer),
            "lookup" => Ok(EncoderKind::Lookup),
            _ => Err(Error::Config(format!(
                "unknown encoder `{s}` (bow|dkrl|transformer|lookup)"
            ))),
        }
    }
}

/// Encoder hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Output embedding dimension `d`.
    pub dim: usize,
    /// Word embedding width for bow and dkrl.
    pub word_dim: usize,
    /// Transformer model width.
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Rows of the positional table; fixed so sequences of any length up to
    /// this share one initialization.
    pub max_positions: usize,
    /// First convolution's output channels (dkrl).
    pub conv_channels: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            kind: EncoderKind::Transformer,
            dim: 128,
            word_dim: 128,
            hidden: 128,
            layers: 2,
            heads: 4,
            ffn: 256,
            max_positions: 512,
            conv_channels: 128,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return fail("encoder dim must be even and positive");
        }
        match self.kind {
            EncoderKind::Transformer => {
                if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
                    return fail("transformer hidden width must be divisible by heads");
                }
                if self.ffn == 0 || self.layers == 0 || self.max_positions < 3 {
                    return fail("transformer needs ffn > 0, layers > 0 and max_positions >= 3");
                }
            }
            EncoderKind::Bow | EncoderKind::Dkrl => {
                if self.word_dim == 0 || (self.kind == EncoderKind::Dkrl && self.conv_channels == 0)
                {
                    return fail("word_dim and conv_channels must be positive");
                }
            }
            EncoderKind::Lookup => {}
        }
        Ok(())
    }

    /// Whether descriptions are tokenized without stop words.
    pub fn drops_stop_words(&self) -> bool {
        self.kind == EncoderKind::Dkrl
    }
}

/// One entity to encode.
#[derive(Debug, Clone, Copy)]
pub struct EntityInput<'a> {
    pub entity: usize,
    pub tokens: &'a TokenSeq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub vector: Array1<f64>,
    /// The description had no content tokens; `vector` is zero for bow and dkrl.
    pub empty_input: bool,
}

/// Trainable encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Bow(BowParams),
    Dkrl(DkrlParams),
    Transformer(TransformerParams),
    Lookup(LookupParams),
}

/// Forward intermediates needed by the reverse pass.
pub(crate) enum Cache {
    Bow(bow::Cache),
    Dkrl(Box<dkrl::Cache>),
    Transformer(Box<transformer::Cache>),
    Lookup,
}

impl EncoderParams {
    /// Random initialization; `num_entities` sizes the lookup table.
    pub fn init<R: Rng>(
        spec: &EncoderSpec,
        vocab_size: usize,
        num_entities: usize,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            EncoderKind::Bow => EncoderParams::Bow(BowParams::init(spec, vocab_size, rng)),
            EncoderKind::Dkrl => EncoderParams::Dkrl(DkrlParams::init(spec, vocab_size, rng)),
            EncoderKind::Transformer => {
                EncoderParams::Transformer(TransformerParams::init(spec, vocab_size, rng))
            }
            EncoderKind::Lookup => {
                EncoderParams::Lookup(LookupParams::init(spec, num_entities, rng))
            }
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderParams::Bow(_) => EncoderKind::Bow,
            EncoderParams::Dkrl(_) => EncoderKind::Dkrl,
            EncoderParams::Transformer(_) => EncoderKind::Transformer,
            EncoderParams::Lookup(_) => EncoderKind::Lookup,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EncoderParams::Bow(p) => p.dim(),
            EncoderParams::Dkrl(p) => p.conv2_w.nrows(),
            EncoderParams::Transformer(p) => p.proj.nrows(),
            EncoderParams::Lookup(p) => p.table.ncols(),
        }
    }

    /// A zero-valued copy, used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn check_input(&self, input: &EntityInput<'_>) -> Result<()> {
        let vocab = match self {
            EncoderParams::Bow(p) => p.word.nrows(),
            EncoderParams::Dkrl(p) => p.word.nrows(),
            EncoderParams::Transformer(p) => {
                if input.tokens.len() > p.pos.nrows() {
                    return Err(Error::Contract(format!(
                        "sequence of length {} exceeds {} positions",
                        input.tokens.len(),
                        p.pos.nrows()
                    )));
                }
                p.word.nrows()
            }
            EncoderParams::Lookup(p) => {
                if input.entity >= p.table.nrows() {
                    return Err(Error::Contract(format!(
                        "entity {} outside lookup table of {} rows",
                        input.entity,
                        p.table.nrows()
                    )));
                }
                return Ok(());
            }
        };
        if input.tokens.mask.len() != input.tokens.ids.len() {
            return Err(Error::Contract(
                "token mask and ids differ in length".into(),
            ));
        }
        if let Some(&bad) = input.tokens.ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Contract(format!(
                "token index {bad} outside vocabulary of {vocab}"
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, input: &EntityInput<'_>) -> Result<(Encoding, Cache)> {
        self.check_input(input)?;
        let (enc, cache) = match self {
            EncoderParams::Bow(p) => {
                let (e, c) = p.forward(input.tokens);
                (e, Cache::Bow(c))
            }
            EncoderParams::Dkrl(p) => {
                let (e, c) = p.forward(input.tokens);
                (e, Cache::Dkrl(Box::new(c)))
            }
            EncoderParams::Transformer(p) => {
                let (e, c) = p.forward(input.tokens);
                (e, Cache::Transformer(Box::new(c)))
            }
            EncoderParams::Lookup(p) => (p.forward(input.entity), Cache::Lookup),
        };
        if enc.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{} encoder output", self.kind())));
        }
        Ok((enc, cache))
    }

    /// Adds the gradient of `upstream . encode(input)` into `grads`.
    pub(crate) fn backward(
        &self,
        input: &EntityInput<'_>,
        cache: &Cache,
        upstream: &Array1<f64>,
        grads: &mut EncoderParams,
    ) {
        match (self, cache, grads) {
            (EncoderParams::Bow(p), Cache::Bow(c), EncoderParams::Bow(g)) => {
                p.backward(input.tokens, c, upstream, g)
            }
            (EncoderParams::Dkrl(p), Cache::Dkrl(c), EncoderParams::Dkrl(g)) => {
                p.backward(c, upstream, g)
            }
            (
                EncoderParams::Transformer(p),
                Cache::Transformer(c),
                EncoderParams::Transformer(g),
            ) => p.backward(input.tokens, c, upstream, g),
            (EncoderParams::Lookup(_), Cache::Lookup, EncoderParams::Lookup(g)) => {
                let mut row = g.table.row_mut(input.entity);
                row += upstream;
            }
            _ => unreachable!("gradient buffer does not match encoder kind"),
        }
    }

    pub fn encode(&self, input: &EntityInput<'_>) -> Result<Encoding> {
        self.forward(input).map(|(e, _)| e)
    }

    /// Gradient of `upstream . encode(input)` with respect to every tensor.
    pub fn encode_gradient(
        &self,
        input: &EntityInput<'_>,
        upstream: &Array1<f64>,
    ) -> Result<EncoderParams> {
        if upstream.len() != self.dim() {
            return Err(Error::Contract(format!(
                "upstream of length {} for a {}-dimensional encoder",
                upstream.len(),
                self.dim()
            )));
        }
        let (_, cache) = self.forward(input)?;
        let mut grads = self.zeros_like();
        self.backward(input, &cache, upstream, &mut grads);
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::Numeric(format!("gradient of {name}")));
        }
        Ok(grads)
    }

    /// Tensors covered by L2 regularization: the output layer of each encoder.
    pub(crate) fn regularized_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            EncoderParams::Bow(p) => p
                .proj
                .iter_mut()
                .map(|w| w.as_slice_mut().expect("layout"))
                .collect(),
            EncoderParams::Dkrl(p) => vec![p.conv2_w.as_slice_mut().expect("layout")],
            EncoderParams::Transformer(p) => vec![p.proj.as_slice_mut().expect("layout")],
            EncoderParams::Lookup(p) => vec![p.table.as_slice_mut().expect("layout")],
        }
    }

    pub(crate) fn regularized(&self) -> Vec<&[f64]> {
        match self {
            EncoderParams::Bow(p) => p
                .proj
                .iter()
                .map(|w| w.as_slice().expect("layout"))
                .collect(),
            EncoderParams::Dkrl(p) => vec![p.conv2_w.as_slice().expect("layout")],
            EncoderParams::Transformer(p) => vec![p.proj.as_slice().expect("layout")],
            EncoderParams::Lookup(p) => vec![p.table.as_slice().expect("layout")],
        }
    }

    pub fn word_embeddings_mut(&mut self) -> Option<&mut Array2<f64>> {
        match self {
            EncoderParams::Bow(p) => Some(&mut p.word),
            EncoderParams::Dkrl(p) => Some(&mut p.word),
            EncoderParams::Transformer(p) => Some(&mut p.word),
            EncoderParams::Lookup(_) => None,
        }
    }

    /// Overwrites word-embedding rows from a `token f1 .. fn` text file.
    /// Returns how many vocabulary rows were set.
    pub fn load_pretrained(&mut self, vocab: &Vocabulary, path: &Path) -> Result<usize> {
        let table = self
            .word_embeddings_mut()
            .ok_or_else(|| Error::Config("lookup encoder has no word embeddings".into()))?;
        let width = table.ncols();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut loaded = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            if !vocab.contains(token) {
                continue;
            }
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, i + 1, "non-numeric embedding value"))?;
            if values.len() != width {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {width} values, found {}", values.len()),
                ));
            }
            table
                .row_mut(vocab.get(token))
                .assign(&Array1::from(values));
            loaded += 1;
        }
        Ok(loaded)
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        match self {
            EncoderParams::Bow(p) => p.tensors(),
            EncoderParams::Dkrl(p) => p.tensors(),
            EncoderParams::Transformer(p) => p.tensors(),
            EncoderParams::Lookup(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        match self {
            EncoderParams::Bow(p) => p.tensors_mut(),
            EncoderParams::Dkrl(p) => p.tensors_mut(),
            EncoderParams::Transformer(p) => p.tensors_mut(),
            EncoderParams::Lookup(p) => p.tensors_mut(),
        }
    }
}

pub(crate) fn uniform_matrix<R: Rng>(
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut R,
) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Glorot-uniform weights for a `rows x cols` matrix.
pub(crate) fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    uniform_matrix(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize::tokenize_with;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec(kind: EncoderKind) -> EncoderSpec {
        EncoderSpec {
            kind,
            dim: 6,
            word_dim: 5,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 12,
            max_positions: 10,
            conv_channels: 4,
        }
    }

    #[test]
    fn every_kind_passes_finite_difference_check() {
        let text = "one two three four five six seven eight";
        let vocab = Vocabulary::build([text, "nine ten"]);
        for kind in [
            EncoderKind::Bow,
            EncoderKind::Dkrl,
            EncoderKind::Transformer,
            EncoderKind::Lookup,
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let spec = small_spec(kind);
            let mut params = EncoderParams::init(&spec, vocab.len(), 3, &mut rng).unwrap();
            // larger word vectors than the default init so every path is exercised
            if let Some(w) = params.word_embeddings_mut() {
                let (r, c) = w.dim();
                w.assign(&uniform_matrix(r, c, 1.0, &mut rng));
            }
            let tokens = tokenize_with(text, &vocab, 10, spec.drops_stop_words());
            let input = EntityInput {
                entity: 1,
                tokens: &tokens,
            };
            let upstream = Array1::from_shape_simple_fn(spec.dim, || rng.gen_range(-1.0..1.0));
            let analytic = params.encode_gradient(&input, &upstream).unwrap();
            let err = gradcheck::max_rel_error(&analytic, &params, |p| {
                p.encode(&input).unwrap().vector.dot(&upstream)
            });
            assert!(err < 1e-3, "{kind}: relative error {err}");
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let vocab = Vocabulary::build(["a b c"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EncoderParams::init(
            &small_spec(EncoderKind::Transformer),
            vocab.len(),
            1,
            &mut rng,
        )
        .unwrap();
        let t = tokenize_with("a b c", &vocab, 6, false);
        let input = EntityInput {
            entity: 0,
            tokens: &t,
        };
        assert_eq!(p.encode(&input).unwrap(), p.encode(&input).unwrap());
    }

    #[test]
    fn odd_dimension_is_rejected() {
        let spec = EncoderSpec {
            dim: 7,
            ..small_spec(EncoderKind::Bow)
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn pretrained_rows_are_loaded() {
        let vocab = Vocabulary::build(["cat dog"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = EncoderParams::init(
            &EncoderSpec {
                word_dim: 2,
                dim: 2,
                ..small_spec(EncoderKind::Bow)
            },
            vocab.len(),
            0,
            &mut rng,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "cat 1.5 -2\nbird 0 0\n").unwrap();
        assert_eq!(p.load_pretrained(&vocab, &path).unwrap(), 1);
        let w = p.word_embeddings_mut().unwrap();
        assert_eq!(w.row(vocab.get("cat")).to_vec(), vec![1.5, -2.0]);

        std::fs::write(&path, "dog 1 2 3\n").unwrap();
        assert!(matches!(
            p.load_pretrained(&vocab, &path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn out_of_vocabulary_index_is_contract_error() {
        let vocab = Vocabulary::build(["a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p =
            EncoderParams::init(&small_spec(EncoderKind::Bow), vocab.len(), 1, &mut rng).unwrap();
        let t = TokenSeq {
            ids: vec![2, 99, 3],
            mask: vec![1, 1, 1],
        };
        assert!(matches!(
            p.encode(&EntityInput {
                entity: 0,
                tokens: &t
            }),
            Err(Error::Contract(_))
        ));
    }
}
