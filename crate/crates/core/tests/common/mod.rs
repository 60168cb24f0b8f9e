//! Independent reference computations for tests. Nothing here calls the
//! library's numerics; it only reads parameters out of library types.

#![allow(dead_code, clippy::needless_range_loop)]

use conceptnorm::encoder::{MentionEncoder, ToyEncoder};
use conceptnorm::sim_head::ConceptEmbeddingMatrix;
use conceptnorm::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ref_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    let denom = (aa.sqrt() * bb.sqrt()).max(1e-12);
    (ab / denom).clamp(-1.0, 1.0)
}

pub fn ref_softmax(q: &[f64]) -> Vec<f64> {
    let mut max = q[0];
    for &x in q {
        if x > max {
            max = x;
        }
    }
    let e: Vec<f64> = q.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Plain loop, first maximum wins.
pub fn brute_force_predict(m: &[f64], rows: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, c) in rows.iter().enumerate() {
        let v = ref_cosine(m, c);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

pub fn ref_head_loss(m: &[f64], rows: &[Vec<f64>], gold: usize) -> f64 {
    let q: Vec<f64> = rows.iter().map(|c| ref_cosine(m, c)).collect();
    let p = ref_softmax(&q);
    -p[gold].max(1e-12).ln()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let d = t.shape()[1];
    t.data().chunks(d).map(<[f64]>::to_vec).collect()
}

/// tanh(W * mean(E[tokens]) + b), read straight from the tensors.
pub fn ref_encode(enc: &ToyEncoder, text: &str) -> Vec<f64> {
    let vocab = enc.vocab().expect("initialized");
    let t = enc.tensors();
    let (emb, w, b) = (t[0], t[1], t[2]);
    let d = b.len();
    let ids: Vec<usize> = text
        .split_whitespace()
        .map(|tok| match vocab.tokens().iter().position(|v| v == tok) {
            Some(i) if i >= 2 => i,
            _ => 0,
        })
        .collect();
    let mut pooled = vec![0.0; d];
    for &id in &ids {
        for j in 0..d {
            pooled[j] += emb.data()[id * d + j];
        }
    }
    if !ids.is_empty() {
        for p in &mut pooled {
            *p /= ids.len() as f64;
        }
    }
    (0..d)
        .map(|i| {
            let mut z = b.data()[i];
            for j in 0..d {
                z += w.data()[i * d + j] * pooled[j];
            }
            z.tanh()
        })
        .collect()
}

/// Mean per-mention loss over `batch`, from scratch.
pub fn ref_batch_loss(
    enc: &ToyEncoder,
    concepts: &ConceptEmbeddingMatrix,
    batch: &[(&str, usize)],
) -> f64 {
    let rows = rows_of(concepts.tensor());
    let total: f64 = batch
        .iter()
        .map(|&(text, gold)| ref_head_loss(&ref_encode(enc, text), &rows, gold))
        .sum();
    total / batch.len() as f64
}

/// `|a - n| / (|a| + |n|)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let denom = norm(analytic) + norm(numeric);
    if denom < 1e-300 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(x);
            x[i] = orig - h;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ConceptEmbeddingMatrix {
    let data = random_vec(rng, n * d);
    ConceptEmbeddingMatrix::from_tensor(Tensor::new("concept_embeddings", vec![n, d], data), 0)
        .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gradient check of the whole model, encoder plus head, on one batch.
/// Returns the worst per-tensor relative error and the tensor it came from.
pub fn full_model_gradient_check(
    enc: &ToyEncoder,
    concepts: &ConceptEmbeddingMatrix,
    batch: &[(&str, usize)],
    h: f64,
) -> (f64, String) {
    use conceptnorm::config::TrainConfig;
    use conceptnorm::trainer::TrainingSession;

    let cfg = TrainConfig {
        learning_rate: 0.0,
        dim: enc.dim(),
        ..TrainConfig::default()
    };
    let mut session = TrainingSession::new(enc.clone(), concepts.clone(), &cfg);
    session.step(batch).unwrap();
    let analytic: Vec<Tensor> = session.gradients().to_vec();

    let mut worst = (0.0, String::new());
    let n_enc = enc.parameters().len();
    for (k, grad) in analytic.iter().enumerate() {
        let numeric = if k < n_enc {
            let mut e = enc.clone();
            let mut x = e.parameters()[k].data().to_vec();
            numeric_gradient(&mut x, h, |x| {
                e.parameters_mut()[k].data_mut().copy_from_slice(x);
                ref_batch_loss(&e, concepts, batch)
            })
        } else {
            let mut c = concepts.clone();
            let mut x = c.tensor().data().to_vec();
            numeric_gradient(&mut x, h, |x| {
                c.tensor_mut().data_mut().copy_from_slice(x);
                ref_batch_loss(enc, &c, batch)
            })
        };
        let err = relative_error(grad.data(), &numeric);
        if err > worst.0 {
            worst = (err, grad.name().to_string());
        }
    }
    worst
}

pub fn matrix(n: usize, d: usize, data: Vec<f64>) -> ConceptEmbeddingMatrix {
    ConceptEmbeddingMatrix::from_tensor(Tensor::new("c", vec![n, d], data), 0).unwrap()
}

/// (N, d, m, C) with N in 1..=64 and d in 1..=16.
pub fn head_instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=64, 1usize..=16).prop_flat_map(|(n, d)| {
        (
            Just(n),
            Just(d),
            prop::collection::vec(-10.0f64..10.0, d),
            prop::collection::vec(-10.0f64..10.0, n * d),
        )
    })
}

/// Mixture of lexicon surfaces, letter runs, punctuation and non-ASCII text.
pub fn messy_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("can't".to_string()),
        Just("can’t".to_string()),
        Just("BP".to_string()),
        Just("n/v".to_string()),
        Just("i'm".to_string()),
        Just("won't".to_string()),
        Just("sob".to_string()),
        Just("gonna".to_string()),
        Just("lbp".to_string()),
        "[a-z]{1,3}".prop_map(|s| s.repeat(3)),
        "[a-zA-Z0-9]{1,8}",
        "[ !?.,'’\t\n-]{1,3}",
        "\\PC{1,4}",
    ];
    prop::collection::vec(piece, 0..12).prop_map(|v| v.join(" "))
}
