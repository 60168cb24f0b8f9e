//! Accuracy, fold averaging and error bucketing.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::{ConceptInventory, MentionRecord};
use crate::encoder::Vocabulary;
use crate::model::{rank, RankedConcept};
use crate::sim_head::{softmax, ProbabilityVector, SimilarityVector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome {
    pub mention: String,
    pub processed: String,
    pub gold: usize,
    pub predicted: usize,
    pub similarities: SimilarityVector,
}

impl PredictionOutcome {
    pub fn is_correct(&self) -> bool {
        self.gold == self.predicted
    }

    pub fn probabilities(&self) -> ProbabilityVector {
        softmax(&self.similarities.0)
    }

    pub fn rivals(&self, k: usize) -> Vec<RankedConcept> {
        rank(&self.similarities, k)
    }

    /// How far the wrong winner beat the gold concept.
    fn margin(&self) -> f64 {
        self.similarities.0[self.predicted] - self.similarities.0[self.gold]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub n_total: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub outcomes: Vec<PredictionOutcome>,
}

impl EvalResult {
    pub fn from_counts(n_correct: usize, n_total: usize) -> Result<Self, EvalError> {
        if n_total == 0 {
            return Err(EvalError::EmptyEval);
        }
        assert!(n_correct <= n_total);
        Ok(Self {
            n_total,
            n_correct,
            accuracy: n_correct as f64 / n_total as f64,
            outcomes: Vec::new(),
        })
    }
}

/// Fraction of outcomes whose prediction equals the gold concept.
pub fn accuracy(outcomes: Vec<PredictionOutcome>) -> Result<EvalResult, EvalError> {
    let n_correct = outcomes.iter().filter(|o| o.is_correct()).count();
    let mut result = EvalResult::from_counts(n_correct, outcomes.len())?;
    result.outcomes = outcomes;
    Ok(result)
}

/// Unweighted mean of per-fold accuracies. Folds of different sizes count equally.
pub fn fold_average(results: &[EvalResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    Ok(results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BucketLabel {
    LowTrainSupport,
    RareTokens,
    Other,
}

impl BucketLabel {
    pub const ALL: [BucketLabel; 3] = [Self::LowTrainSupport, Self::RareTokens, Self::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LowTrainSupport => "LOW_TRAIN_SUPPORT",
            Self::RareTokens => "RARE_TOKENS",
            Self::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBucket {
    pub label: BucketLabel,
    pub members: Vec<PredictionOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Gold concepts with fewer training mentions than this are low-support.
    pub min_train_support: usize,
    /// Mentions with more than this fraction of out-of-vocabulary tokens are rare-token errors.
    pub rare_token_fraction: f64,
    pub exemplars: usize,
    pub rivals: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            min_train_support: 3,
            rare_token_fraction: 0.5,
            exemplars: 5,
            rivals: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Always one bucket per label, in [`BucketLabel::ALL`] order.
    pub buckets: Vec<ErrorBucket>,
    pub n_evaluated: usize,
    options: ReportOptions,
}

fn oov_fraction(text: &str, vocab: &Vocabulary) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return 0.0;
    }
    let unknown = tokens.iter().filter(|t| vocab.get(t).is_none()).count();
    unknown as f64 / tokens.len() as f64
}

/// Sorts every misprediction into exactly one bucket: low training support
/// for the gold concept first, then mostly-unknown tokens, else other.
pub fn error_report(
    outcomes: &[PredictionOutcome],
    train: &[MentionRecord],
    inventory: &ConceptInventory,
    vocab: Option<&Vocabulary>,
    options: ReportOptions,
) -> ErrorReport {
    let mut support: HashMap<usize, usize> = HashMap::new();
    for r in train {
        if let Some(i) = inventory.index_of(&r.concept_id) {
            *support.entry(i).or_default() += 1;
        }
    }
    let mut buckets: Vec<ErrorBucket> = BucketLabel::ALL
        .iter()
        .map(|&label| ErrorBucket {
            label,
            members: Vec::new(),
        })
        .collect();
    for o in outcomes.iter().filter(|o| !o.is_correct()) {
        let label = if support.get(&o.gold).copied().unwrap_or(0) < options.min_train_support {
            BucketLabel::LowTrainSupport
        } else if vocab.is_some_and(|v| oov_fraction(&o.processed, v) > options.rare_token_fraction)
        {
            BucketLabel::RareTokens
        } else {
            BucketLabel::Other
        };
        let slot = BucketLabel::ALL
            .iter()
            .position(|&l| l == label)
            .expect("known label");
        buckets[slot].members.push(o.clone());
    }
    ErrorReport {
        buckets,
        n_evaluated: outcomes.len(),
        options,
    }
}

fn format_rivals(o: &PredictionOutcome, k: usize, inventory: &ConceptInventory) -> String {
    o.rivals(k)
        .iter()
        .map(|r| format!("{}:{:.4}", inventory.id(r.index), r.similarity))
        .collect::<Vec<_>>()
        .join("|")
}

fn describe(index: usize, inventory: &ConceptInventory) -> String {
    match inventory.term(index) {
        Some(term) => format!("{} ({})", term, inventory.id(index)),
        None => inventory.id(index).to_string(),
    }
}

impl ErrorReport {
    pub fn n_errors(&self) -> usize {
        self.buckets.iter().map(|b| b.members.len()).sum()
    }

    pub fn bucket(&self, label: BucketLabel) -> &ErrorBucket {
        self.buckets
            .iter()
            .find(|b| b.label == label)
            .expect("every label has a bucket")
    }

    /// `mention<TAB>gold<TAB>pred<TAB>bucket<TAB>top5`, one line per error.
    pub fn to_tsv(&self, inventory: &ConceptInventory) -> String {
        let mut out = String::new();
        for bucket in &self.buckets {
            for o in &bucket.members {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    o.mention.replace(['\t', '\n'], " "),
                    inventory.id(o.gold),
                    inventory.id(o.predicted),
                    bucket.label.as_str(),
                    format_rivals(o, self.options.rivals, inventory)
                );
            }
        }
        out
    }

    /// Per-bucket counts followed by the most confident mistakes of each bucket.
    pub fn to_text(&self, inventory: &ConceptInventory) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "errors: {} of {} mentions",
            self.n_errors(),
            self.n_evaluated
        );
        for bucket in &self.buckets {
            let _ = writeln!(out, "{}: {}", bucket.label.as_str(), bucket.members.len());
        }
        for bucket in &self.buckets {
            if bucket.members.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n== {} ==", bucket.label.as_str());
            let mut worst: Vec<&PredictionOutcome> = bucket.members.iter().collect();
            worst.sort_by(|a, b| b.margin().total_cmp(&a.margin()));
            for o in worst.into_iter().take(self.options.exemplars) {
                let _ = writeln!(out, "mention:   {}", o.mention);
                let _ = writeln!(out, "gold:      {}", describe(o.gold, inventory));
                let _ = writeln!(out, "predicted: {}", describe(o.predicted, inventory));
                for r in o.rivals(self.options.rivals) {
                    let _ = writeln!(
                        out,
                        "  {:.4}  {}",
                        r.similarity,
                        describe(r.index, inventory)
                    );
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(gold: usize, predicted: usize, text: &str) -> PredictionOutcome {
        let mut sims = vec![0.0; 4];
        sims[predicted] = 0.9;
        if gold != predicted {
            sims[gold] = 0.4;
        }
        PredictionOutcome {
            mention: text.to_string(),
            processed: text.to_string(),
            gold,
            predicted,
            similarities: SimilarityVector(sims),
        }
    }

    fn inventory() -> ConceptInventory {
        let mut inv = ConceptInventory::new();
        for (id, term) in [
            ("A", "alpha"),
            ("B", "beta"),
            ("C", "gamma"),
            ("D", "delta"),
        ] {
            inv.insert(id, Some(term.to_string()));
        }
        inv
    }

    #[test]
    fn accuracy_examples() {
        let all = vec![outcome(0, 0, "a"), outcome(1, 1, "b")];
        assert_eq!(accuracy(all).unwrap().accuracy, 1.0);
        let three = vec![
            outcome(0, 0, "a"),
            outcome(1, 1, "b"),
            outcome(2, 2, "c"),
            outcome(3, 0, "d"),
        ];
        let r = accuracy(three).unwrap();
        assert_eq!((r.n_correct, r.n_total, r.accuracy), (3, 4, 0.75));
        assert_eq!(accuracy(vec![outcome(0, 1, "x")]).unwrap().accuracy, 0.0);
        assert_eq!(accuracy(vec![]), Err(EvalError::EmptyEval));
    }

    #[test]
    fn fold_average_examples() {
        let f = |c, n| EvalResult::from_counts(c, n).unwrap();
        assert!((fold_average(&[f(8, 10), f(9, 10)]).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(fold_average(&[f(3, 7)]).unwrap(), 3.0 / 7.0);
        let unequal = [f(5, 10), f(1000, 1000)];
        assert_eq!(fold_average(&unequal).unwrap(), 0.75);
        let pooled: f64 = 1005.0 / 1010.0;
        assert!((pooled - 0.995).abs() < 1e-3);
        assert_eq!(fold_average(&[]), Err(EvalError::EmptyEval));
    }

    #[test]
    fn buckets() {
        let inv = inventory();
        let vocab = Vocabulary::from_texts(["common words here"], 1).unwrap();
        let train: Vec<MentionRecord> = (0..3)
            .map(|_| MentionRecord::new("common words", "B"))
            .chain((0..3).map(|_| MentionRecord::new("common words", "C")))
            .collect();
        let outcomes = vec![
            outcome(0, 1, "common words"), // A has no training mentions
            outcome(1, 2, "zzz qqq"),      // all OOV
            outcome(2, 1, "common words"), // supported, known tokens
            outcome(2, 2, "common"),       // correct, ignored
            outcome(1, 0, "common xx"),    // exactly 50% OOV is not > 50%
        ];
        let report = error_report(
            &outcomes,
            &train,
            &inv,
            Some(&vocab),
            ReportOptions::default(),
        );
        let labels = |l| -> Vec<String> {
            report
                .bucket(l)
                .members
                .iter()
                .map(|o| o.mention.clone())
                .collect()
        };
        assert_eq!(labels(BucketLabel::LowTrainSupport), ["common words"]);
        assert_eq!(labels(BucketLabel::RareTokens), ["zzz qqq"]);
        assert_eq!(labels(BucketLabel::Other), ["common words", "common xx"]);
        assert_eq!(report.n_errors(), 4);

        let tsv = report.to_tsv(&inv);
        assert_eq!(tsv.lines().count(), 4);
        let first: Vec<&str> = tsv.lines().next().unwrap().split('\t').collect();
        assert_eq!(first[..4], ["common words", "A", "B", "LOW_TRAIN_SUPPORT"]);
        assert!(first[4].starts_with("B:0.9000|A:0.4000"));
        let text = report.to_text(&inv);
        assert!(text.contains("LOW_TRAIN_SUPPORT: 1"));
        assert!(text.contains("beta (B)"));
    }

    #[test]
    fn empty_error_set_still_reports() {
        let inv = inventory();
        let report = error_report(
            &[outcome(0, 0, "a")],
            &[],
            &inv,
            None,
            ReportOptions::default(),
        );
        assert_eq!(report.n_errors(), 0);
        assert_eq!(report.buckets.len(), 3);
        assert!(report.to_text(&inv).starts_with("errors: 0 of 1"));
        assert_eq!(report.to_tsv(&inv), "");
    }
}
