use crate::config::TrainConfig;
use crate::corpus::{ConceptInventory, MentionRecord};
use crate::encoder::{EncoderError, MentionEncoder, MentionVector};
use crate::evaluator::PredictionOutcome;
use crate::sim_head::{self, ConceptEmbeddingMatrix, HeadError, SimilarityVector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
}

/// Mention encoder plus concept embeddings, tied to the inventory whose
/// index order the embedding rows follow.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNormalizer<E> {
    pub encoder: E,
    pub concepts: ConceptEmbeddingMatrix,
    pub inventory: ConceptInventory,
    pub config: TrainConfig,
}

/// A ranked candidate concept.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedConcept {
    pub index: usize,
    pub similarity: f64,
}

/// Candidates by descending similarity, ties by ascending index.
pub fn rank(similarities: &SimilarityVector, k: usize) -> Vec<RankedConcept> {
    let mut order: Vec<usize> = (0..similarities.0.len()).collect();
    order.sort_by(|&a, &b| {
        similarities.0[b]
            .total_cmp(&similarities.0[a])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|index| RankedConcept {
            index,
            similarity: similarities.0[index],
        })
        .collect()
}

impl<E: MentionEncoder> ConceptNormalizer<E> {
    pub fn encode(&self, text: &str) -> Result<MentionVector, ModelError> {
        Ok(self.encoder.encode(text)?)
    }

    /// Predicted concept index and the similarity vector for preprocessed text.
    pub fn predict(&self, text: &str) -> Result<(usize, SimilarityVector), ModelError> {
        let m = self.encoder.encode(text)?;
        Ok(sim_head::predict(m.as_slice(), &self.concepts)?)
    }

    /// Up to `k` best concepts; `k` larger than the inventory returns all of them.
    pub fn top_k(&self, text: &str, k: usize) -> Result<Vec<RankedConcept>, ModelError> {
        let (_, q) = self.predict(text)?;
        Ok(rank(&q, k))
    }

    pub fn outcome(&self, record: &MentionRecord) -> Result<PredictionOutcome, ModelError> {
        let gold = self
            .inventory
            .index_of(&record.concept_id)
            .ok_or_else(|| ModelError::UnknownConcept(record.concept_id.clone()))?;
        let (predicted, similarities) = self.predict(record.text())?;
        Ok(PredictionOutcome {
            mention: record.raw_text.clone(),
            processed: record.text().to_string(),
            gold,
            predicted,
            similarities,
        })
    }

    pub fn outcomes(
        &self,
        records: &[MentionRecord],
    ) -> Result<Vec<PredictionOutcome>, ModelError> {
        records.iter().map(|r| self.outcome(r)).collect()
    }

    /// Rounds every trainable parameter to 32-bit precision.
    pub fn round_to_f32(&mut self) {
        self.concepts.tensor_mut().round_to_f32();
        self.encoder.round_parameters_to_f32();
    }
}
