//! Text normalization applied to every mention before it reaches the encoder.
//!
//! The pipeline runs three stages in a fixed order:
//!
//! 1. [`strip_special`]: lowercase, drop non-ASCII letters, turn every other
//!    non-alphanumeric character into a word break.
//! 2. [`squash_repeats`]: shorten character runs longer than two (`sleeep` → `sleep`).
//! 3. [`expand_terms`]: whole-token replacement of contractions and medical
//!    acronyms from an [`AcronymLexicon`].
//!
//! Expansion runs last so that `"BP!!"` still expands once punctuation is gone.

mod lexicon;

use std::path::PathBuf;

pub use lexicon::{AcronymLexicon, LexiconSource, DEFAULT_ACRONYMS, DEFAULT_CONTRACTIONS};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("cannot read lexicon {path}: {source}")]
    MissingLexicon {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {message}")]
    Format {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("lexicon key `{0}` is declared more than once")]
    DuplicateKey(String),
    #[error("lexicon key `{0}` maps to itself")]
    SelfMapping(String),
    #[error("lexicon forms `{key}` map to different expansions: `{first}` vs `{second}`")]
    Conflict {
        key: String,
        first: String,
        second: String,
    },
    #[error("lexicon entry `{key}` would re-expand on a second pass: {reason}")]
    Unstable { key: String, reason: String },
}

/// Stage toggles plus any extra lexicon files. Everything is on by default.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub strip_non_ascii: bool,
    pub squash_repeats: bool,
    pub expand_contractions: bool,
    pub expand_acronyms: bool,
    /// Additional `surface<TAB>expansion` files, loaded on top of the shipped defaults.
    pub lexicon_paths: Vec<PathBuf>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            strip_non_ascii: true,
            squash_repeats: true,
            expand_contractions: true,
            expand_acronyms: true,
            lexicon_paths: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    fn expands(&self) -> bool {
        self.expand_contractions || self.expand_acronyms
    }
}

// Combining diacritics are dropped without breaking the word they sit in.
fn is_combining_mark(ch: char) -> bool {
    matches!(ch as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

/// Lowercases and reduces `text` to `[a-z0-9 ]` with single interior spaces.
///
/// Non-ASCII letters and digits are deleted in place (`Héllo` → `hllo`).
/// Any other character (ASCII punctuation, whitespace, typographic quotes,
/// symbols) acts as a word break.
pub fn strip_special(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_break = false;
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending_break && !out.is_empty() {
                out.push(' ');
            }
            pending_break = false;
            out.push(ch.to_ascii_lowercase());
        } else if ch.is_ascii() || !(ch.is_alphanumeric() || is_combining_mark(ch)) {
            pending_break = true;
        }
    }
    out
}

/// Reduces every run of more than two identical characters to exactly two.
pub fn squash_repeats(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for ch in text.chars() {
        if Some(ch) == prev {
            run += 1;
        } else {
            prev = Some(ch);
            run = 1;
        }
        if run <= 2 {
            out.push(ch);
        }
    }
    out
}

/// Replaces whole whitespace-separated tokens that match a lexicon key.
///
/// Multi-token keys win over shorter ones at the same position. The scan is a
/// single left-to-right pass; produced text is never rescanned. Tokens are
/// re-joined with single spaces.
pub fn expand_terms(text: &str, lexicon: &AcronymLexicon) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        match lexicon.longest_match(&lowered[i..]) {
            Some((consumed, expansion)) => {
                out.push(expansion);
                i += consumed;
            }
            None => {
                out.push(tokens[i]);
                i += 1;
            }
        }
    }
    out.join(" ")
}

/// Runs the enabled stages in order: strip, squash, expand.
pub fn preprocess(text: &str, cfg: &PreprocessConfig, lexicon: &AcronymLexicon) -> String {
    let mut text = if cfg.strip_non_ascii {
        strip_special(text)
    } else {
        text.to_string()
    };
    if cfg.squash_repeats {
        text = squash_repeats(&text);
    }
    if cfg.expands() {
        text = expand_terms(&text, lexicon);
    }
    text
}

/// A configuration bundled with the lexicon it resolves to.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cfg: PreprocessConfig,
    lexicon: AcronymLexicon,
}

impl Preprocessor {
    pub fn new(cfg: PreprocessConfig) -> Result<Self, PreprocessError> {
        let lexicon = AcronymLexicon::from_config(&cfg)?;
        Ok(Self { cfg, lexicon })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.cfg
    }

    pub fn lexicon(&self) -> &AcronymLexicon {
        &self.lexicon
    }

    pub fn apply(&self, text: &str) -> String {
        preprocess(text, &self.cfg, &self.lexicon)
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(PreprocessConfig::default()).expect("shipped lexicons are valid")
    }
}
