//! Cosine-similarity classification head.
//!
//! Every concept owns a trainable row `c_i` of a [`ConceptEmbeddingMatrix`].
//! A mention vector `m` is scored against all rows by cosine similarity, the
//! similarity vector is pushed through a softmax, and training minimizes the
//! cross-entropy against the one-hot gold label. Prediction is the argmax of
//! the raw similarities.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Floor for norms and norm products.
pub const NORM_EPS: f64 = 1e-12;
/// Floor for the gold probability inside the log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HeadError {
    #[error("invalid dimensions: {n} concepts x {d} features")]
    InvalidDims { n: usize, d: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("label is not a one-hot vector")]
    InvalidLabel,
    #[error("vector norm below {NORM_EPS} ({which})")]
    DegenerateNorm { which: String },
}

pub const CONCEPT_EMBEDDINGS: &str = "concept_embeddings";

/// `N x d` matrix whose row `i` embeds the concept at inventory index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbeddingMatrix {
    rows: Tensor,
    init_seed: u64,
}

impl ConceptEmbeddingMatrix {
    /// Entries i.i.d. uniform on `[-1/sqrt(d), 1/sqrt(d)]`, rounded to 32-bit
    /// precision. Rows are re-drawn until all are distinct.
    pub fn init(n: usize, d: usize, seed: u64) -> Result<Self, HeadError> {
        if n == 0 || d == 0 {
            return Err(HeadError::InvalidDims { n, d });
        }
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        while seen.len() < n {
            let row: Vec<f64> = (0..d)
                .map(|_| rng.gen_range(-bound..=bound) as f32 as f64)
                .collect();
            if seen.insert(row.iter().map(|x| x.to_bits()).collect()) {
                data.extend(row);
            }
        }
        Ok(Self {
            rows: Tensor::new(CONCEPT_EMBEDDINGS, vec![n, d], data),
            init_seed: seed,
        })
    }

    pub fn from_tensor(rows: Tensor, init_seed: u64) -> Result<Self, HeadError> {
        match rows.shape() {
            &[n, d] if n > 0 && d > 0 => Ok(Self { rows, init_seed }),
            shape => Err(HeadError::InvalidDims {
                n: shape.first().copied().unwrap_or(0),
                d: shape.get(1).copied().unwrap_or(0),
            }),
        }
    }

    pub fn n_concepts(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn tensor(&self) -> &Tensor {
        &self.rows
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(pub Vec<f64>);

/// One-hot ground truth over `n` concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel {
    index: usize,
    n: usize,
}

impl OneHotLabel {
    pub fn new(index: usize, n: usize) -> Result<Self, HeadError> {
        if index >= n {
            return Err(HeadError::InvalidLabel);
        }
        Ok(Self { index, n })
    }

    /// Accepts a dense vector with exactly one entry equal to 1 and the rest 0.
    pub fn from_values(values: &[f64]) -> Result<Self, HeadError> {
        let mut hot = None;
        for (i, &v) in values.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if v != 0.0 {
                return Err(HeadError::InvalidLabel);
            }
        }
        let index = hot.ok_or(HeadError::InvalidLabel)?;
        Self::new(index, values.len())
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| if i == self.index { 1.0 } else { 0.0 })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(left: usize, right: usize) -> Result<(), HeadError> {
    if left != right {
        return Err(HeadError::DimMismatch { left, right });
    }
    Ok(())
}

fn cosine_unchecked(m: &[f64], c: &[f64]) -> f64 {
    let denom = (norm(m) * norm(c)).max(NORM_EPS);
    (dot(m, c) / denom).clamp(-1.0, 1.0)
}

/// `m.c / (|m| |c|)`, denominator floored at [`NORM_EPS`], clamped to [-1, 1].
pub fn cosine(m: &[f64], c: &[f64]) -> Result<f64, HeadError> {
    check_dims(m.len(), c.len())?;
    Ok(cosine_unchecked(m, c))
}

pub fn similarity_vector(
    m: &[f64],
    concepts: &ConceptEmbeddingMatrix,
) -> Result<SimilarityVector, HeadError> {
    check_dims(m.len(), concepts.dim())?;
    Ok(SimilarityVector(
        (0..concepts.n_concepts())
            .map(|i| cosine_unchecked(m, concepts.row(i)))
            .collect(),
    ))
}

/// Max-shifted softmax.
pub fn softmax(q: &[f64]) -> ProbabilityVector {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbabilityVector(exps.into_iter().map(|e| e / total).collect())
}

/// `-log(q_hat[gold])` with the probability floored at [`PROB_EPS`].
pub fn cross_entropy(q_hat: &ProbabilityVector, label: &OneHotLabel) -> Result<f64, HeadError> {
    if q_hat.0.len() != label.len() {
        return Err(HeadError::InvalidLabel);
    }
    Ok(-q_hat.0[label.index()].max(PROB_EPS).ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Concept with maximum cosine similarity, plus the full similarity vector.
pub fn predict(
    m: &[f64],
    concepts: &ConceptEmbeddingMatrix,
) -> Result<(usize, SimilarityVector), HeadError> {
    let q = similarity_vector(m, concepts)?;
    Ok((argmax(&q.0), q))
}

/// Gradients of the per-instance loss with respect to `m` and every concept row.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub loss: f64,
    pub grad_mention: Vec<f64>,
    /// Row-major `N x d`.
    pub grad_concepts: Vec<f64>,
}

/// Loss and analytic gradients of `cross_entropy(softmax(similarity_vector(m, C)), label)`.
pub fn head_gradients(
    m: &[f64],
    concepts: &ConceptEmbeddingMatrix,
    label: &OneHotLabel,
) -> Result<HeadGradients, HeadError> {
    let mut grad_concepts = Tensor::zeros_like(concepts.tensor());
    let (loss, grad_mention) =
        accumulate_head_gradients(m, concepts, label, 1.0, &mut grad_concepts)?;
    Ok(HeadGradients {
        loss,
        grad_mention,
        grad_concepts: grad_concepts.data().to_vec(),
    })
}

/// Training-loop form of [`head_gradients`]: adds `scale * dL/dC` into
/// `grad_concepts` and returns the loss with the unscaled `dL/dm`.
///
/// With `s_i = q_hat_i - p_i`:
/// `dL/dm = sum_i s_i (c_i / (|m||c_i|) - q_i m / |m|^2)` and
/// `dL/dc_i = s_i (m / (|m||c_i|) - q_i c_i / |c_i|^2)`.
pub fn accumulate_head_gradients(
    m: &[f64],
    concepts: &ConceptEmbeddingMatrix,
    label: &OneHotLabel,
    scale: f64,
    grad_concepts: &mut Tensor,
) -> Result<(f64, Vec<f64>), HeadError> {
    let n = concepts.n_concepts();
    let d = concepts.dim();
    check_dims(m.len(), d)?;
    if label.len() != n {
        return Err(HeadError::InvalidLabel);
    }
    let m_norm = norm(m);
    if m_norm < NORM_EPS {
        return Err(HeadError::DegenerateNorm {
            which: "mention vector".into(),
        });
    }
    let mut c_norms = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let c = concepts.row(i);
        let c_norm = norm(c);
        if c_norm < NORM_EPS {
            return Err(HeadError::DegenerateNorm {
                which: format!("concept row {i}"),
            });
        }
        q.push(dot(m, c) / (m_norm * c_norm));
        c_norms.push(c_norm);
    }
    let q_hat = softmax(&q);
    let loss = cross_entropy(&q_hat, label)?;

    let mut grad_m = vec![0.0; d];
    for i in 0..n {
        let s = q_hat.0[i] - if i == label.index() { 1.0 } else { 0.0 };
        if s == 0.0 {
            continue;
        }
        let c = concepts.row(i);
        let inv = 1.0 / (m_norm * c_norms[i]);
        let m_coef = q[i] / (m_norm * m_norm);
        let c_coef = q[i] / (c_norms[i] * c_norms[i]);
        let g_row = grad_concepts.row_mut(i);
        for k in 0..d {
            grad_m[k] += s * (c[k] * inv - m_coef * m[k]);
            g_row[k] += scale * s * (m[k] * inv - c_coef * c[k]);
        }
    }
    Ok((loss, grad_m))
}
