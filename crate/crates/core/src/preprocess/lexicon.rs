use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use super::{expand_terms, squash_repeats, strip_special, PreprocessConfig, PreprocessError};

pub const DEFAULT_CONTRACTIONS: &str = include_str!("../../lexicon/contractions.tsv");
pub const DEFAULT_ACRONYMS: &str = include_str!("../../lexicon/acronyms.tsv");

/// Where a batch of lexicon entries came from, for error messages.
#[derive(Debug, Clone)]
pub struct LexiconSource {
    pub origin: String,
    pub entries: Vec<(String, String)>,
}

impl LexiconSource {
    /// Parses `surface<TAB>expansion` lines. `#` starts a comment line; blank lines are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self, PreprocessError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(surface), Some(expansion), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(PreprocessError::Format {
                    origin: origin.to_string(),
                    line: idx + 1,
                    message: "expected exactly two tab-separated fields".into(),
                });
            };
            entries.push((surface.to_string(), expansion.to_string()));
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self, PreprocessError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| PreprocessError::MissingLexicon {
                path: path.to_path_buf(),
                source,
            })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Case-insensitive map from surface forms (single tokens or token
/// sequences) to lowercase expansions.
///
/// Every declared surface is also reachable through its stripped form, so
/// `can't` matches both `can't` and the `can t` that [`strip_special`]
/// leaves behind. Construction rejects lexicons whose output could be
/// expanded again, which keeps the preprocessing pipeline idempotent.
#[derive(Debug, Clone, Default)]
pub struct AcronymLexicon {
    entries: BTreeMap<String, String>,
    matchers: HashMap<String, String>,
    max_tokens: usize,
}

fn fold_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl AcronymLexicon {
    pub fn from_entries<'a, I>(entries: I, origin: &str) -> Result<Self, PreprocessError>
    where
        I: Iterator<Item = (&'a str, &'a str)>,
    {
        let source = LexiconSource {
            origin: origin.to_string(),
            entries: entries
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        Self::from_sources(&[source])
    }

    pub fn from_sources(sources: &[LexiconSource]) -> Result<Self, PreprocessError> {
        let mut lex = Self::default();
        for source in sources {
            for (surface, expansion) in &source.entries {
                lex.insert(surface, expansion, &source.origin)?;
            }
        }
        lex.check_stable()?;
        Ok(lex)
    }

    /// The shipped contraction and/or acronym tables.
    pub fn defaults(contractions: bool, acronyms: bool) -> Result<Self, PreprocessError> {
        let mut sources = Vec::new();
        if contractions {
            sources.push(LexiconSource::parse(
                DEFAULT_CONTRACTIONS,
                "contractions.tsv",
            )?);
        }
        if acronyms {
            sources.push(LexiconSource::parse(DEFAULT_ACRONYMS, "acronyms.tsv")?);
        }
        Self::from_sources(&sources)
    }

    pub fn from_config(cfg: &PreprocessConfig) -> Result<Self, PreprocessError> {
        let mut sources = Vec::new();
        if cfg.expand_contractions {
            sources.push(LexiconSource::parse(
                DEFAULT_CONTRACTIONS,
                "contractions.tsv",
            )?);
        }
        if cfg.expand_acronyms {
            sources.push(LexiconSource::parse(DEFAULT_ACRONYMS, "acronyms.tsv")?);
        }
        for path in &cfg.lexicon_paths {
            sources.push(LexiconSource::read(path)?);
        }
        Self::from_sources(&sources)
    }

    fn insert(
        &mut self,
        surface: &str,
        expansion: &str,
        origin: &str,
    ) -> Result<(), PreprocessError> {
        let key = fold_surface(surface);
        let expansion = squash_repeats(&strip_special(expansion));
        if key.is_empty() || expansion.is_empty() {
            return Err(PreprocessError::Format {
                origin: origin.to_string(),
                line: 0,
                message: format!("empty surface or expansion in entry `{surface}`"),
            });
        }
        if key == expansion {
            return Err(PreprocessError::SelfMapping(key));
        }
        if self.entries.contains_key(&key) {
            return Err(PreprocessError::DuplicateKey(key));
        }
        let alias = squash_repeats(&strip_special(&key));
        for form in [key.clone(), alias] {
            if form.is_empty() || form == expansion {
                continue;
            }
            if let Some(existing) = self.matchers.get(&form) {
                if *existing != expansion {
                    return Err(PreprocessError::Conflict {
                        key: form,
                        first: existing.clone(),
                        second: expansion,
                    });
                }
                continue;
            }
            self.max_tokens = self.max_tokens.max(form.split(' ').count());
            self.matchers.insert(form, expansion.clone());
        }
        self.entries.insert(key, expansion);
        Ok(())
    }

    // Output of one expansion pass must contain no key: expansions are fixed
    // points, and no key may straddle the boundary between an expansion and
    // its neighbours.
    fn check_stable(&self) -> Result<(), PreprocessError> {
        let mut non_first = HashSet::new();
        let mut non_last = HashSet::new();
        for form in self.matchers.keys() {
            let toks: Vec<&str> = form.split(' ').collect();
            non_first.extend(toks[1..].iter().copied());
            non_last.extend(toks[..toks.len() - 1].iter().copied());
        }
        for (key, expansion) in &self.entries {
            if expand_terms(expansion, self) != *expansion {
                return Err(PreprocessError::Unstable {
                    key: key.clone(),
                    reason: format!("expansion `{expansion}` contains another key"),
                });
            }
            let first = expansion.split(' ').next().unwrap_or_default();
            let last = expansion.split(' ').next_back().unwrap_or_default();
            if non_first.contains(first) {
                return Err(PreprocessError::Unstable {
                    key: key.clone(),
                    reason: format!("expansion starts with `{first}`, which continues another key"),
                });
            }
            if non_last.contains(last) {
                return Err(PreprocessError::Unstable {
                    key: key.clone(),
                    reason: format!("expansion ends with `{last}`, which begins another key"),
                });
            }
        }
        Ok(())
    }

    /// Declared entries, keyed by case-folded surface form.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, surface: &str) -> Option<&str> {
        self.matchers
            .get(&fold_surface(surface))
            .map(String::as_str)
    }

    /// Longest key that is a prefix of `tokens` (already lowercased).
    /// Returns the number of tokens consumed and the expansion.
    pub(crate) fn longest_match(&self, tokens: &[String]) -> Option<(usize, &str)> {
        let upper = self.max_tokens.min(tokens.len());
        (1..=upper).rev().find_map(|n| {
            self.matchers
                .get(&tokens[..n].join(" "))
                .map(|exp| (n, exp.as_str()))
        })
    }
}
