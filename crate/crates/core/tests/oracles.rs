mod common;

use common::*;
use conceptnorm::corpus::{validation_split, MentionRecord};
use conceptnorm::encoder::{MentionEncoder, ToyEncoder, Vocabulary};
use conceptnorm::preprocess::{squash_repeats, strip_special, Preprocessor};
use conceptnorm::sim_head::{
    cosine, cross_entropy, predict, similarity_vector, softmax, ConceptEmbeddingMatrix,
    OneHotLabel, ProbabilityVector,
};

#[test]
fn predict_equals_brute_force_scan() {
    let mut r = rng(2024);
    for i in 0..100 {
        let n = 1 + (i * 13) % 64;
        let d = 1 + i % 12;
        let m = random_vec(&mut r, d);
        let c = random_matrix(&mut r, n, d);
        let (idx, q) = predict(&m, &c).unwrap();
        assert_eq!(
            idx,
            brute_force_predict(&m, &rows_of(c.tensor())),
            "instance {i}"
        );
        for (k, row) in rows_of(c.tensor()).iter().enumerate() {
            assert_eq!(q.0[k], cosine(&m, row).unwrap());
        }
    }
}

#[test]
fn predict_on_fifty_concepts() {
    let mut r = rng(50);
    let m = random_vec(&mut r, 16);
    let c = random_matrix(&mut r, 50, 16);
    assert_eq!(
        predict(&m, &c).unwrap().0,
        brute_force_predict(&m, &rows_of(c.tensor()))
    );
}

#[test]
fn similarity_vector_is_elementwise() {
    let mut r = rng(5);
    let m = random_vec(&mut r, 7);
    let c = random_matrix(&mut r, 5, 7);
    let q = similarity_vector(&m, &c).unwrap();
    for i in 0..5 {
        assert_eq!(q.0[i], cosine(&m, c.row(i)).unwrap());
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn closed_form_values() {
    assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.707_106_78).abs() < 1e-8);
    let p = softmax(&[0.0, 2f64.ln()]);
    assert!((p.0[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((p.0[1] - 2.0 / 3.0).abs() < 1e-15);
    let uniform = ProbabilityVector(vec![0.25; 4]);
    for gold in 0..4 {
        let ce = cross_entropy(&uniform, &OneHotLabel::new(gold, 4).unwrap()).unwrap();
        assert!((ce - 1.386_294_36).abs() < 1e-8);
    }
    let half = ProbabilityVector(vec![0.5, 0.25, 0.25]);
    let ce = cross_entropy(&half, &OneHotLabel::new(0, 3).unwrap()).unwrap();
    assert!((ce - 0.693_147_18).abs() < 1e-8);
}

#[test]
fn concept_init_is_centered() {
    let c = ConceptEmbeddingMatrix::init(1000, 64, 9).unwrap();
    let data = c.tensor().data();
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    assert!(mean.abs() < 0.01, "{mean}");
    // variance of uniform[-a, a] is a^2 / 3
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / data.len() as f64;
    assert!((var - 1.0 / (3.0 * 64.0)).abs() < 5e-4, "{var}");
    assert!(data.iter().all(|x| x.abs() <= 0.125));
}

#[test]
fn validation_split_arithmetic() {
    let records: Vec<MentionRecord> = (0..6650)
        .map(|i| MentionRecord::new(format!("x{i}"), "A"))
        .collect();
    let (train, val) = validation_split(&records, 0.1, 0).unwrap();
    assert_eq!((train.len(), val.len()), (5985, 665));
    let small: Vec<MentionRecord> = records[..100].to_vec();
    let (t, v) = validation_split(&small, 0.1, 7).unwrap();
    assert_eq!((t.len(), v.len()), (90, 10));
    assert_eq!(validation_split(&small, 0.1, 7).unwrap(), (t, v));
}

/// Character-class oracle written from the rule: keep ASCII letters and
/// digits (lowercased), drop other letters and marks, everything else splits words.
fn strip_oracle(text: &str) -> String {
    let mut words: Vec<String> = vec![String::new()];
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            words.last_mut().unwrap().push(ch.to_ascii_lowercase());
        } else if ch.is_alphanumeric() || ('\u{300}'..='\u{36f}').contains(&ch) {
        } else {
            words.push(String::new());
        }
    }
    words.retain(|w| !w.is_empty());
    words.join(" ")
}

/// Run-length oracle.
fn squash_oracle(text: &str) -> String {
    let mut runs: Vec<(char, usize)> = Vec::new();
    for ch in text.chars() {
        match runs.last_mut() {
            Some((c, n)) if *c == ch => *n += 1,
            _ => runs.push((ch, 1)),
        }
    }
    runs.into_iter()
        .map(|(c, n)| c.to_string().repeat(n.min(2)))
        .collect()
}

#[test]
fn stage_oracles_agree() {
    for text in [
        "Héllo‼ wörld",
        "",
        "blood   pressure",
        "Can't sleeep!!!",
        "naïve café 42°C",
        "α-blocker 5mg/day",
        "soooo bad",
        "zzz...   aaaa",
    ] {
        assert_eq!(strip_special(text), strip_oracle(text), "{text:?}");
        let s = strip_special(text);
        assert_eq!(squash_repeats(&s), squash_oracle(&s), "{text:?}");
    }
    assert_eq!(strip_special("Héllo‼ wörld"), "hllo wrld");
    assert_eq!(squash_repeats("soooo bad"), "soo bad");
}

#[test]
fn composed_pipeline_examples() {
    let pre = Preprocessor::default();
    assert_eq!(pre.apply("Can't sleeep!!!"), "cannot sleep");
    assert_eq!(pre.apply("bp spiked"), "blood pressure spiked");
    assert_eq!(pre.apply("harp"), "harp");
    assert_eq!(pre.apply("BP!!"), "blood pressure");
    assert_eq!(pre.apply(""), "");
}

#[test]
fn toy_encoder_matches_reference_forward() {
    let vocab = Vocabulary::from_texts(["a b c", "c d"], 1).unwrap();
    let enc = ToyEncoder::new(vocab, 6, 3);
    for text in ["a b", "b a", "d d c", "", "zzz a"] {
        let got = enc.encode(text).unwrap();
        let want = ref_encode(&enc, text);
        for (g, w) in got.0.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }
    assert_eq!(enc.encode("a b").unwrap(), enc.encode("b a").unwrap());
}

#[test]
fn parameter_shapes() {
    let tokens: Vec<String> = ["<unk>", "<pad>", "a", "b", "c", "d", "e", "f", "g", "h"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut enc = ToyEncoder::new(Vocabulary::from_tokens(tokens), 8, 0);
    let shapes: Vec<Vec<usize>> = enc
        .parameters()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    assert_eq!(shapes, vec![vec![10, 8], vec![8, 8], vec![8]]);
    enc.set_frozen(true);
    assert!(enc.parameters().is_empty());
}
