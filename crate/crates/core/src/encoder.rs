//! Mention encoders: text in, fixed-width vector out.
//!
//! [`MentionEncoder`] is the seam a pretrained transformer adapter plugs
//! into. [`ToyEncoder`] is the small trainable reference implementation:
//! whitespace tokens, an embedding table, mean pooling, then one affine map
//! and `tanh`.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::MentionRecord;
use crate::tensor::Tensor;

pub const UNK: usize = 0;
pub const PAD: usize = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncoderError {
    #[error("encoder used before initialization")]
    NotInitialized,
    #[error("no training text to build a vocabulary from")]
    EmptyDataset,
    #[error("encoder parameter shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Encoder output `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionVector(pub Vec<f64>);

impl MentionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A differentiable text encoder with enumerable trainable parameters.
///
/// `backward` accumulates into `grads`, which must be laid out like
/// [`MentionEncoder::parameters`].
pub trait MentionEncoder {
    /// Whatever the backward pass needs from the forward pass.
    type Trace;

    fn dim(&self) -> usize;

    fn forward(&self, text: &str) -> Result<(MentionVector, Self::Trace), EncoderError>;

    fn encode(&self, text: &str) -> Result<MentionVector, EncoderError> {
        self.forward(text).map(|(m, _)| m)
    }

    fn backward(&self, trace: &Self::Trace, grad_output: &[f64], grads: &mut [Tensor]);

    /// Trainable tensors, each exactly once. Empty when frozen.
    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Rounds trainable tensors to 32-bit precision, the precision checkpoints store.
    fn round_parameters_to_f32(&mut self) {
        for t in self.parameters_mut() {
            t.round_to_f32();
        }
    }
}

/// Token table with `<unk>` at 0 and `<pad>` at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens occurring at least `min_count` times, in first-appearance order.
    pub fn from_texts<'a, I>(texts: I, min_count: usize) -> Result<Self, EncoderError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut order: Vec<&str> = Vec::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut n_texts = 0;
        for text in texts {
            n_texts += 1;
            for tok in text.split_whitespace() {
                let c = counts.entry(tok).or_insert(0);
                if *c == 0 {
                    order.push(tok);
                }
                *c += 1;
            }
        }
        if n_texts == 0 {
            return Err(EncoderError::EmptyDataset);
        }
        let tokens = [UNK_TOKEN, PAD_TOKEN]
            .into_iter()
            .chain(order.into_iter().filter(|t| counts[t] >= min_count.max(1)))
            .map(str::to_string)
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    /// Rebuilds a vocabulary from its stored token list (index order).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index
            .get(token)
            .copied()
            .filter(|&i| i != UNK && i != PAD)
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token_ids(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|t| self.lookup(t)).collect()
    }
}

/// Vocabulary over the (preprocessed) text of `records`.
pub fn build_vocab(
    records: &[MentionRecord],
    min_count: usize,
) -> Result<Vocabulary, EncoderError> {
    Vocabulary::from_texts(records.iter().map(MentionRecord::text), min_count)
}

#[derive(Debug, Clone, PartialEq)]
struct ToyWeights {
    vocab: Vocabulary,
    embeddings: Tensor,
    weight: Tensor,
    bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    dim: usize,
    weights: Option<ToyWeights>,
    frozen: bool,
}

#[derive(Debug, Clone)]
pub struct ToyTrace {
    token_ids: Vec<usize>,
    pooled: Vec<f64>,
    output: Vec<f64>,
}

impl ToyEncoder {
    pub const EMBEDDINGS: &'static str = "token_embeddings";
    pub const WEIGHT: &'static str = "affine_weight";
    pub const BIAS: &'static str = "affine_bias";

    /// An encoder of width `dim` with no vocabulary or weights yet.
    pub fn uninitialized(dim: usize) -> Self {
        Self {
            dim,
            weights: None,
            frozen: false,
        }
    }

    /// Initializes weights for `vocab`. Embeddings are uniform on [-1, 1],
    /// the affine weight on [-1/sqrt(d), 1/sqrt(d)], the bias on [-0.1, 0.1];
    /// all values are representable as 32-bit floats.
    pub fn new(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let mut enc = Self::uninitialized(dim);
        enc.initialize(vocab, seed);
        enc
    }

    pub fn initialize(&mut self, vocab: Vocabulary, seed: u64) {
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, bound: f64| -> Vec<f64> {
            (0..n)
                .map(|_| rng.gen_range(-bound..=bound) as f32 as f64)
                .collect()
        };
        let v = vocab.len();
        let embeddings = Tensor::new(Self::EMBEDDINGS, vec![v, d], draw(v * d, 1.0));
        let weight = Tensor::new(
            Self::WEIGHT,
            vec![d, d],
            draw(d * d, 1.0 / (d as f64).sqrt()),
        );
        let bias = Tensor::new(Self::BIAS, vec![d], draw(d, 0.1));
        self.weights = Some(ToyWeights {
            vocab,
            embeddings,
            weight,
            bias,
        });
    }

    /// Reassembles an encoder from stored tensors.
    pub fn from_parts(
        vocab: Vocabulary,
        embeddings: Tensor,
        weight: Tensor,
        bias: Tensor,
    ) -> Result<Self, EncoderError> {
        let d = bias.len();
        let checks = [
            (embeddings.shape() == [vocab.len(), d], Self::EMBEDDINGS),
            (weight.shape() == [d, d], Self::WEIGHT),
            (bias.shape() == [d], Self::BIAS),
        ];
        if let Some((_, name)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(EncoderError::ShapeMismatch(format!(
                "{name} does not fit vocabulary {} and width {d}",
                vocab.len()
            )));
        }
        Ok(Self {
            dim: d,
            weights: Some(ToyWeights {
                vocab,
                embeddings,
                weight,
                bias,
            }),
            frozen: false,
        })
    }

    pub fn vocab(&self) -> Option<&Vocabulary> {
        self.weights.as_ref().map(|w| &w.vocab)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// All weight tensors regardless of the frozen flag.
    pub fn tensors(&self) -> Vec<&Tensor> {
        match &self.weights {
            Some(w) => vec![&w.embeddings, &w.weight, &w.bias],
            None => Vec::new(),
        }
    }
}

impl MentionEncoder for ToyEncoder {
    type Trace = ToyTrace;

    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, text: &str) -> Result<(MentionVector, ToyTrace), EncoderError> {
        let w = self.weights.as_ref().ok_or(EncoderError::NotInitialized)?;
        let d = self.dim;
        let token_ids = w.vocab.token_ids(text);
        let mut pooled = vec![0.0; d];
        if !token_ids.is_empty() {
            for &t in &token_ids {
                for (p, e) in pooled.iter_mut().zip(w.embeddings.row(t)) {
                    *p += e;
                }
            }
            let n = token_ids.len() as f64;
            pooled.iter_mut().for_each(|p| *p /= n);
        }
        let output: Vec<f64> = (0..d)
            .map(|i| {
                let z: f64 = w
                    .weight
                    .row(i)
                    .iter()
                    .zip(&pooled)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + w.bias.data()[i];
                z.tanh()
            })
            .collect();
        Ok((
            MentionVector(output.clone()),
            ToyTrace {
                token_ids,
                pooled,
                output,
            },
        ))
    }

    fn backward(&self, trace: &ToyTrace, grad_output: &[f64], grads: &mut [Tensor]) {
        if self.frozen {
            return;
        }
        let Some(w) = self.weights.as_ref() else {
            return;
        };
        let d = self.dim;
        let [g_emb, g_weight, g_bias] = grads else {
            panic!("ToyEncoder expects 3 gradient tensors, got {}", grads.len());
        };
        // through tanh
        let dz: Vec<f64> = grad_output
            .iter()
            .zip(&trace.output)
            .map(|(g, m)| g * (1.0 - m * m))
            .collect();
        for (gb, z) in g_bias.data_mut().iter_mut().zip(&dz) {
            *gb += z;
        }
        for (i, &dzi) in dz.iter().enumerate() {
            for (gw, h) in g_weight.row_mut(i).iter_mut().zip(&trace.pooled) {
                *gw += dzi * h;
            }
        }
        if trace.token_ids.is_empty() {
            return;
        }
        let n = trace.token_ids.len() as f64;
        let mut dpooled = vec![0.0; d];
        for (i, &dzi) in dz.iter().enumerate() {
            for (dp, wij) in dpooled.iter_mut().zip(w.weight.row(i)) {
                *dp += wij * dzi;
            }
        }
        for &t in &trace.token_ids {
            for (ge, dp) in g_emb.row_mut(t).iter_mut().zip(&dpooled) {
                *ge += dp / n;
            }
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        if self.frozen {
            return Vec::new();
        }
        self.tensors()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        if self.frozen {
            return Vec::new();
        }
        match &mut self.weights {
            Some(w) => vec![&mut w.embeddings, &mut w.weight, &mut w.bias],
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(texts: &[&str], min_count: usize) -> Vocabulary {
        Vocabulary::from_texts(texts.iter().copied(), min_count).unwrap()
    }

    #[test]
    fn vocab_building() {
        let v = vocab(&["a b", "a c"], 1);
        assert_eq!(v.tokens(), ["<unk>", "<pad>", "a", "b", "c"]);
        let v2 = vocab(&["a b", "a c"], 2);
        assert_eq!(v2.tokens(), ["<unk>", "<pad>", "a"]);
        assert_eq!(v, vocab(&["a b", "a c"], 1));
        assert_eq!(v2.lookup("b"), UNK);
        assert_eq!(v.lookup("<pad>"), UNK);
        assert_eq!(
            Vocabulary::from_texts(std::iter::empty(), 1),
            Err(EncoderError::EmptyDataset)
        );
    }

    #[test]
    fn parameter_shapes() {
        let v = Vocabulary::from_tokens((0..10).map(|i| format!("t{i}")).collect());
        let mut enc = ToyEncoder::new(v, 8, 0);
        let shapes: Vec<(&str, Vec<usize>)> = enc
            .parameters()
            .iter()
            .map(|t| (t.name(), t.shape().to_vec()))
            .collect();
        assert_eq!(
            shapes,
            vec![
                ("token_embeddings", vec![10, 8]),
                ("affine_weight", vec![8, 8]),
                ("affine_bias", vec![8]),
            ]
        );
        enc.set_frozen(true);
        assert!(enc.parameters().is_empty());
        assert!(enc.parameters_mut().is_empty());
    }

    #[test]
    fn encode_shape_and_degenerate_input() {
        let enc = ToyEncoder::new(vocab(&["dry mouth", "back pain"], 1), 6, 3);
        for text in ["dry mouth", "", "never seen", "back pain pain"] {
            let m = enc.encode(text).unwrap();
            assert_eq!(m.len(), 6);
            assert!(m.0.iter().all(|x| x.is_finite()));
        }
        let empty = enc.encode("").unwrap();
        let bias = enc.tensors()[2].data().to_vec();
        let expected: Vec<f64> = bias.iter().map(|b| b.tanh()).collect();
        assert_eq!(empty.0, expected);
    }

    #[test]
    fn mean_pooling_ignores_order() {
        let enc = ToyEncoder::new(vocab(&["a b c"], 1), 8, 11);
        assert_eq!(enc.encode("a b").unwrap(), enc.encode("b a").unwrap());
        assert_eq!(enc.encode("a b c").unwrap(), enc.encode("c a b").unwrap());
        assert_eq!(enc.encode("a b").unwrap(), enc.encode("a b").unwrap());
    }

    #[test]
    fn unknown_tokens_use_unk_row() {
        let enc = ToyEncoder::new(vocab(&["a"], 1), 4, 2);
        assert_eq!(enc.encode("zzz").unwrap(), enc.encode("qqq").unwrap());
    }

    #[test]
    fn uninitialized_encoder_errors() {
        let enc = ToyEncoder::uninitialized(4);
        assert_eq!(enc.encode("a"), Err(EncoderError::NotInitialized));
        assert!(enc.parameters().is_empty());
    }

    #[test]
    fn from_parts_checks_shapes() {
        let v = vocab(&["a"], 1);
        let enc = ToyEncoder::new(v.clone(), 4, 0);
        let t = enc.tensors();
        let ok =
            ToyEncoder::from_parts(v.clone(), t[0].clone(), t[1].clone(), t[2].clone()).unwrap();
        assert_eq!(ok, enc);
        let bad = Tensor::zeros(ToyEncoder::EMBEDDINGS, vec![5, 4]);
        assert!(ToyEncoder::from_parts(v, bad, t[1].clone(), t[2].clone()).is_err());
    }

    #[test]
    fn init_is_f32_exact_and_seeded() {
        let v = vocab(&["a b"], 1);
        let a = ToyEncoder::new(v.clone(), 5, 9);
        let b = ToyEncoder::new(v, 5, 9);
        assert_eq!(a, b);
        for t in a.tensors() {
            assert!(t.data().iter().all(|&x| x as f32 as f64 == x));
        }
    }
}
