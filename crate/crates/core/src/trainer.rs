//! Joint training of encoder parameters and concept embeddings.
//!
//! Each optimizer step runs the encoder forward on every mention of the
//! batch, scores it against all concept rows, and backpropagates the
//! softmax cross-entropy into both the concept matrix and the encoder.
//! Gradients are averaged over the batch; the epoch loss reported is the
//! plain sum of per-mention losses.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, TrainConfig};
use crate::corpus::{validation_split, ConceptInventory, CorpusError, MentionRecord};
use crate::encoder::{build_vocab, EncoderError, MentionEncoder, ToyEncoder};
use crate::model::ConceptNormalizer;
use crate::optim::{AdamW, AdamWParams};
use crate::sim_head::{self, ConceptEmbeddingMatrix, HeadError, OneHotLabel};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training record cites concept `{0}` missing from the inventory")]
    UnknownConcept(String),
    #[error("encoder width {encoder} does not match configured dim {config}")]
    DimMismatch { encoder: usize, config: usize },
    #[error("all {n_trials} search trials failed; first error: {first}")]
    AllTrialsFailed { n_trials: usize, first: String },
    #[error("training diverged in epoch {epoch}: loss or parameters are not finite")]
    Diverged {
        epoch: usize,
        report: Box<TrainReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sum of per-mention cross-entropy over the epoch's training mentions.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    /// Not serialized and not compared, so reports of identical runs are identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.n_train == other.n_train
            && self.n_validation == other.n_validation
            && self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.best_val_accuracy == other.best_val_accuracy
            && self.stopped_early == other.stopped_early
    }
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

const STREAM_SPLIT: u64 = 1;
const STREAM_CONCEPTS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_ENCODER: u64 = 4;

/// Independent seed for one use of the master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The (train, validation) split [`train_fold`] uses for `fold`.
pub fn fold_validation_split(
    records: &[MentionRecord],
    cfg: &TrainConfig,
    fold: usize,
) -> Result<(Vec<MentionRecord>, Vec<MentionRecord>), CorpusError> {
    validation_split(
        records,
        cfg.val_fraction,
        derive_seed(cfg.seed, STREAM_SPLIT, fold as u64),
    )
}

/// Reference encoder for `records`: vocabulary from their text, width and
/// seed from `cfg`.
pub fn toy_encoder(records: &[MentionRecord], cfg: &TrainConfig) -> Result<ToyEncoder, TrainError> {
    let vocab = build_vocab(records, cfg.min_count)?;
    Ok(ToyEncoder::new(
        vocab,
        cfg.dim,
        derive_seed(cfg.seed, STREAM_ENCODER, 0),
    ))
}

/// Optimizer state over an encoder and a concept matrix.
pub struct TrainingSession<E: MentionEncoder> {
    pub encoder: E,
    pub concepts: ConceptEmbeddingMatrix,
    optimizer: AdamW,
    // encoder gradients first, concept gradient last
    grads: Vec<Tensor>,
}

impl<E: MentionEncoder> TrainingSession<E> {
    pub fn new(encoder: E, concepts: ConceptEmbeddingMatrix, cfg: &TrainConfig) -> Self {
        let mut grads: Vec<Tensor> = encoder
            .parameters()
            .into_iter()
            .map(Tensor::zeros_like)
            .collect();
        grads.push(Tensor::zeros_like(concepts.tensor()));
        let sizes: Vec<usize> = grads.iter().map(Tensor::len).collect();
        let optimizer = AdamW::new(
            AdamWParams {
                learning_rate: cfg.learning_rate,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: cfg.adam_eps,
                weight_decay: cfg.weight_decay,
            },
            &sizes,
        );
        Self {
            encoder,
            concepts,
            optimizer,
            grads,
        }
    }

    /// Gradients from the most recent [`TrainingSession::step`], in parameter order
    /// with the concept matrix last.
    pub fn gradients(&self) -> &[Tensor] {
        &self.grads
    }

    /// One AdamW update on `(text, gold index)` pairs. Returns the summed loss.
    pub fn step(&mut self, batch: &[(&str, usize)]) -> Result<f64, TrainError> {
        for g in &mut self.grads {
            g.fill(0.0);
        }
        let n = self.concepts.n_concepts();
        let scale = 1.0 / batch.len().max(1) as f64;
        let split = self.grads.len() - 1;
        let (enc_grads, concept_grad) = self.grads.split_at_mut(split);
        let mut total = 0.0;
        for &(text, gold) in batch {
            let (m, trace) = self.encoder.forward(text)?;
            let label = OneHotLabel::new(gold, n)?;
            let (loss, mut grad_m) = sim_head::accumulate_head_gradients(
                m.as_slice(),
                &self.concepts,
                &label,
                scale,
                &mut concept_grad[0],
            )?;
            grad_m.iter_mut().for_each(|g| *g *= scale);
            self.encoder.backward(&trace, &grad_m, enc_grads);
            total += loss;
        }
        let mut params = self.encoder.parameters_mut();
        params.push(self.concepts.tensor_mut());
        self.optimizer.step(&mut params, &self.grads);
        Ok(total)
    }

    pub fn accuracy(&self, items: &[(&str, usize)]) -> Result<f64, TrainError> {
        if items.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for &(text, gold) in items {
            let m = self.encoder.encode(text)?;
            let (pred, _) = sim_head::predict(m.as_slice(), &self.concepts)?;
            if pred == gold {
                correct += 1;
            }
        }
        Ok(correct as f64 / items.len() as f64)
    }

    fn is_finite(&self) -> bool {
        self.concepts.tensor().is_finite()
            && self.encoder.parameters().iter().all(|t| t.is_finite())
    }
}

fn labeled<'a>(
    records: &'a [MentionRecord],
    inventory: &ConceptInventory,
) -> Result<Vec<(&'a str, usize)>, TrainError> {
    records
        .iter()
        .map(|r| {
            inventory
                .index_of(&r.concept_id)
                .map(|i| (r.text(), i))
                .ok_or_else(|| TrainError::UnknownConcept(r.concept_id.clone()))
        })
        .collect()
}

/// [`train_fold`] for fold 0.
pub fn train<E>(
    records: &[MentionRecord],
    cfg: &TrainConfig,
    encoder: E,
    inventory: &ConceptInventory,
) -> Result<(ConceptNormalizer<E>, TrainReport), TrainError>
where
    E: MentionEncoder + Clone,
{
    train_fold(records, 0, cfg, encoder, inventory)
}

/// Trains on one fold's training records.
///
/// A validation split is carved out first (seeded by `cfg.seed` and the fold
/// index). Training stops after `max_epochs` or once validation accuracy has
/// not improved for `patience` epochs; the returned model is the snapshot
/// with the best validation accuracy (earliest on ties), rounded to 32-bit
/// precision.
pub fn train_fold<E>(
    records: &[MentionRecord],
    fold: usize,
    cfg: &TrainConfig,
    encoder: E,
    inventory: &ConceptInventory,
) -> Result<(ConceptNormalizer<E>, TrainReport), TrainError>
where
    E: MentionEncoder + Clone,
{
    cfg.validate()?;
    if encoder.dim() != cfg.dim {
        return Err(TrainError::DimMismatch {
            encoder: encoder.dim(),
            config: cfg.dim,
        });
    }
    let started = Instant::now();
    let (train_set, val_set) = fold_validation_split(records, cfg, fold)?;
    let train_items = labeled(&train_set, inventory)?;
    let val_items = labeled(&val_set, inventory)?;

    let concepts = ConceptEmbeddingMatrix::init(
        inventory.len(),
        cfg.dim,
        derive_seed(cfg.seed, STREAM_CONCEPTS, 0),
    )?;
    let mut session = TrainingSession::new(encoder, concepts, cfg);
    let mut report = TrainReport {
        config: cfg.clone(),
        n_train: train_items.len(),
        n_validation: val_items.len(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        stopped_early: false,
        wall_time: Duration::ZERO,
    };
    let mut best: Option<(E, ConceptEmbeddingMatrix)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&str, usize)> = chunk.iter().map(|&i| train_items[i]).collect();
            let loss = session.step(&batch)?;
            epoch_loss += loss;
            if !loss.is_finite() || !session.is_finite() {
                report.wall_time = started.elapsed();
                return Err(TrainError::Diverged {
                    epoch,
                    report: Box::new(report),
                });
            }
        }
        let train_accuracy = session.accuracy(&train_items)?;
        let val_accuracy = session.accuracy(&val_items)?;
        report.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss,
            train_accuracy,
            val_accuracy,
        });
        if val_accuracy > report.best_val_accuracy {
            report.best_val_accuracy = val_accuracy;
            report.best_epoch = epoch;
            best = Some((session.encoder.clone(), session.concepts.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stopped_early = epoch + 1 < cfg.max_epochs;
                break;
            }
        }
    }

    let (encoder, concepts) = best.expect("at least one epoch ran");
    let mut model = ConceptNormalizer {
        encoder,
        concepts,
        inventory: inventory.clone(),
        config: cfg.clone(),
    };
    model.round_to_f32();
    report.wall_time = started.elapsed();
    Ok((model, report))
}
