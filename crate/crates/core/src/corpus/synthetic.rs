//! Seeded stand-in corpus for the licensed datasets.
//!
//! Each concept gets a two-part template (`<modifier> <finding>`); mentions
//! are noisy renderings of their concept's template. The noise types are the
//! ones the preprocessing pipeline is meant to undo or the encoder is meant to
//! absorb: acronyms, stretched characters, case, punctuation, contractions in
//! filler phrases, and synonym swaps.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_inventory, CorpusError, Dataset, Fold, FoldSet, MentionRecord};
use crate::preprocess::{LexiconSource, DEFAULT_ACRONYMS};

const MODIFIERS: &[&str] = &[
    "mild",
    "severe",
    "chronic",
    "sudden",
    "constant",
    "occasional",
    "persistent",
    "sharp",
    "intermittent",
    "extreme",
    "slight",
    "recurring",
];

const FINDINGS: &[&str] = &[
    "pain",
    "headache",
    "nausea",
    "dizziness",
    "fatigue",
    "insomnia",
    "high blood pressure",
    "rapid heart rate",
    "shortness of breath",
    "muscle cramps",
    "blurred vision",
    "dry mouth",
    "weight gain",
    "hair loss",
    "joint stiffness",
    "back pain",
    "chest tightness",
    "skin rash",
    "itching",
    "anxiety",
    "drowsiness",
    "tremor",
    "nausea and vomiting",
    "stomach upset",
    "memory loss",
    "poor concentration",
    "night sweats",
    "leg swelling",
    "low mood",
    "irritable bowel syndrome",
    "lower back pain",
    "urinary tract infection",
];

pub const MAX_SYNTHETIC_CONCEPTS: usize = MODIFIERS.len() * FINDINGS.len();

// None of these collide with a word in MODIFIERS or FINDINGS, so a swap never
// turns one template into another.
const SYNONYMS: &[(&str, &[&str])] = &[
    ("mild", &["light", "minor"]),
    ("severe", &["horrible", "terrible", "awful"]),
    ("chronic", &["longterm", "ongoing"]),
    ("sudden", &["abrupt"]),
    ("constant", &["nonstop", "continuous"]),
    ("occasional", &["sporadic"]),
    ("persistent", &["lingering"]),
    ("sharp", &["stabbing"]),
    ("extreme", &["intense", "crazy"]),
    ("pain", &["ache", "hurting"]),
    ("headache", &["migraine"]),
    ("fatigue", &["tiredness", "exhaustion"]),
    ("insomnia", &["sleeplessness"]),
    ("dizziness", &["lightheadedness", "vertigo"]),
    ("drowsiness", &["sleepiness"]),
    ("itching", &["itchiness"]),
    ("anxiety", &["nervousness"]),
    ("stomach", &["tummy", "belly"]),
    ("tremor", &["shaking"]),
    ("swelling", &["puffiness"]),
];

const FILLERS: &[&str] = &[
    "i'm having",
    "can't handle the",
    "got",
    "having",
    "dealing with",
];
const PUNCTUATION: &[&str] = &["!!!", "...", "?!", " :(", "!!"];

/// Per-mention probabilities for each noise type. All zero means every
/// mention is exactly its concept template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub acronym: f64,
    pub synonym: f64,
    pub filler: f64,
    pub repeat: f64,
    pub case: f64,
    pub punctuation: f64,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self::level(0.0)
    }

    /// Every noise type at probability `p`.
    pub fn level(p: f64) -> Self {
        Self {
            acronym: p,
            synonym: p,
            filler: p,
            repeat: p,
            case: p,
            punctuation: p,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let all = [
            self.acronym,
            self.synonym,
            self.filler,
            self.repeat,
            self.case,
            self.punctuation,
        ];
        if all.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(CorpusError::InvalidParams(format!(
                "noise probabilities must lie in [0, 1], got {self:?}"
            )))
        }
    }
}

struct Noiser {
    params: NoiseParams,
    // (expansion tokens, acronym), longest expansion first
    acronyms: Vec<(Vec<String>, String)>,
}

impl Noiser {
    fn new(params: NoiseParams) -> Self {
        let source = LexiconSource::parse(DEFAULT_ACRONYMS, "acronyms.tsv")
            .expect("shipped acronym table parses");
        let mut acronyms: Vec<(Vec<String>, String)> = source
            .entries
            .into_iter()
            .map(|(acr, exp)| (exp.split(' ').map(str::to_string).collect(), acr))
            .collect();
        acronyms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.cmp(&b.1)));
        Self { params, acronyms }
    }

    fn render(&self, template: &str, rng: &mut ChaCha8Rng) -> String {
        let p = &self.params;
        let mut tokens: Vec<String> = template.split(' ').map(str::to_string).collect();

        if rng.gen_bool(p.acronym) {
            if let Some((start, len, acr)) = self.find_acronym(&tokens) {
                tokens.splice(start..start + len, [acr.to_string()]);
            }
        }
        for tok in tokens.iter_mut() {
            if let Some((_, alts)) = SYNONYMS.iter().find(|(w, _)| w == tok) {
                if rng.gen_bool(p.synonym) {
                    *tok = alts.choose(rng).expect("non-empty").to_string();
                }
            }
        }
        if rng.gen_bool(p.filler) {
            let filler = FILLERS.choose(rng).expect("non-empty");
            tokens.insert(0, filler.to_string());
        }
        if rng.gen_bool(p.repeat) {
            let i = rng.gen_range(0..tokens.len());
            tokens[i] = stretch(&tokens[i], rng);
        }
        let mut text = tokens.join(" ");
        if rng.gen_bool(p.case) {
            text = if rng.gen_bool(0.5) {
                text.to_uppercase()
            } else {
                capitalize(&text)
            };
        }
        if rng.gen_bool(p.punctuation) {
            text.push_str(PUNCTUATION.choose(rng).expect("non-empty"));
        }
        text
    }

    fn find_acronym(&self, tokens: &[String]) -> Option<(usize, usize, &str)> {
        for (phrase, acr) in &self.acronyms {
            if phrase.len() > tokens.len() {
                continue;
            }
            if let Some(start) = tokens
                .windows(phrase.len())
                .position(|w| w == phrase.as_slice())
            {
                return Some((start, phrase.len(), acr));
            }
        }
        None
    }
}

// Repeats one letter 3-5 times, preferring a letter that is already doubled
// so the squashed form is the original word.
fn stretch(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let letters: Vec<usize> = (0..chars.len())
        .filter(|&i| chars[i].is_ascii_alphabetic())
        .collect();
    if letters.is_empty() {
        return word.to_string();
    }
    let doubled: Vec<usize> = letters
        .iter()
        .copied()
        .filter(|&i| i + 1 < chars.len() && chars[i] == chars[i + 1])
        .collect();
    let pos = if doubled.is_empty() {
        *letters.choose(rng).expect("non-empty")
    } else {
        *doubled.choose(rng).expect("non-empty")
    };
    let extra = rng.gen_range(2..=4);
    let mut out = String::with_capacity(word.len() + extra);
    for (i, &c) in chars.iter().enumerate() {
        out.push(c);
        if i == pos {
            out.extend(std::iter::repeat_n(c, extra));
        }
    }
    out
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Builds a one-fold dataset with an 80/20 train/test split.
///
/// Mentions are assigned to concepts round-robin. The test split is drawn so
/// that, where possible, every concept keeps at least one training mention.
pub fn generate_synthetic(
    n_concepts: usize,
    n_mentions: usize,
    noise: NoiseParams,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    if n_concepts < 2 {
        return Err(CorpusError::InvalidParams(format!(
            "need at least 2 concepts, got {n_concepts}"
        )));
    }
    if n_concepts > MAX_SYNTHETIC_CONCEPTS {
        return Err(CorpusError::InvalidParams(format!(
            "at most {MAX_SYNTHETIC_CONCEPTS} concepts supported, got {n_concepts}"
        )));
    }
    if n_mentions < n_concepts {
        return Err(CorpusError::InvalidParams(format!(
            "need at least one mention per concept ({n_mentions} < {n_concepts})"
        )));
    }
    noise.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut combos: Vec<String> = MODIFIERS
        .iter()
        .flat_map(|m| FINDINGS.iter().map(move |f| format!("{m} {f}")))
        .collect();
    combos.shuffle(&mut rng);
    let templates = &combos[..n_concepts];
    let ids: Vec<String> = (0..n_concepts)
        .map(|i| format!("SYN{:05}", i + 1))
        .collect();

    let noiser = Noiser::new(noise);
    let mentions: Vec<MentionRecord> = (0..n_mentions)
        .map(|j| {
            let c = j % n_concepts;
            MentionRecord::new(noiser.render(&templates[c], &mut rng), ids[c].clone())
        })
        .collect();

    let n_test = ((0.2 * n_mentions as f64).round() as usize).clamp(1, n_mentions - 1);
    let mut order: Vec<usize> = (0..n_mentions).collect();
    order.shuffle(&mut rng);
    let mut remaining = vec![0usize; n_concepts];
    for j in 0..n_mentions {
        remaining[j % n_concepts] += 1;
    }
    let mut is_test = vec![false; n_mentions];
    let mut chosen = 0;
    for &j in &order {
        if chosen == n_test {
            break;
        }
        if remaining[j % n_concepts] > 1 {
            remaining[j % n_concepts] -= 1;
            is_test[j] = true;
            chosen += 1;
        }
    }
    for &j in &order {
        if chosen == n_test {
            break;
        }
        if !is_test[j] {
            is_test[j] = true;
            chosen += 1;
        }
    }

    let (test, train): (Vec<_>, Vec<_>) = mentions.into_iter().zip(is_test).partition(|(_, t)| *t);
    let fold = Fold {
        train: train.into_iter().map(|(r, _)| r).collect(),
        test: test.into_iter().map(|(r, _)| r).collect(),
    };
    let folds = FoldSet { folds: vec![fold] };
    let mut inventory = build_inventory(folds.records())?;
    for i in 0..inventory.len() {
        let c: usize = inventory.id(i)[3..].parse::<usize>().expect("synthetic id") - 1;
        inventory.set_term(i, Some(capitalize(&templates[c])));
    }
    Ok(Dataset { inventory, folds })
}
