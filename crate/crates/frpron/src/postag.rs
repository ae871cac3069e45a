//! Pluggable POS tagging. The boundary model only needs *some* tag per
//! word; the default implementation is a deterministic lexicon lookup with
//! a fallback tag for unknown words.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::transcript::GraphemeString;

/// Fallback tag assigned to out-of-lexicon words.
pub const FALLBACK_TAG: &str = "X";

#[derive(Debug, Error)]
pub enum PosError {
    #[error("malformed tag lexicon line {0}")]
    Malformed(usize),
    #[error("tag set is empty")]
    EmptyTagSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered, unique tag symbols. Always contains the fallback tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    tags: Vec<String>,
}

impl TagSet {
    pub fn new(mut tags: Vec<String>) -> Result<Self, PosError> {
        if !tags.iter().any(|t| t == FALLBACK_TAG) {
            tags.push(FALLBACK_TAG.to_string());
        }
        let mut seen = std::collections::HashSet::new();
        tags.retain(|t| seen.insert(t.clone()));
        if tags.is_empty() {
            return Err(PosError::EmptyTagSet);
        }
        Ok(TagSet { tags })
    }

    /// Small default tag set used by the synthetic lexicon.
    pub fn toy() -> Self {
        let tags = [
            "DET", "NOUN", "VERB", "ADJ", "ADV", "PRON", "PREP", "CONJ", "NUM", "PART", "INTJ",
            FALLBACK_TAG,
        ];
        TagSet { tags: tags.iter().map(|t| t.to_string()).collect() }
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn load(path: &Path) -> Result<Self, PosError> {
        let text = std::fs::read_to_string(path)?;
        let tags: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(tags)
    }

    pub fn save(&self, path: &Path) -> Result<(), PosError> {
        let mut out = self.tags.join("\n");
        out.push('\n');
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Anything that maps a word sequence to a same-length tag sequence.
pub trait Tagger {
    fn tag(&self, words: &[GraphemeString]) -> Vec<String>;
}

/// Word → tag lookup with the fallback tag for unknown words.
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger {
    entries: HashMap<String, String>,
}

impl LexiconTagger {
    pub fn new(entries: HashMap<String, String>) -> Self {
        LexiconTagger { entries }
    }

    pub fn insert(&mut self, word: impl Into<String>, tag: impl Into<String>) {
        self.entries.insert(word.into(), tag.into());
    }

    /// Reads `word<TAB>tag` lines.
    pub fn load(path: &Path) -> Result<Self, PosError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, tag) = line.split_once('\t').ok_or(PosError::Malformed(i + 1))?;
            entries.insert(word.to_string(), tag.to_string());
        }
        Ok(LexiconTagger { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), PosError> {
        let mut lines: Vec<(&String, &String)> = self.entries.iter().collect();
        lines.sort();
        let mut out = String::new();
        for (word, tag) in lines {
            out.push_str(word);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, words: &[GraphemeString]) -> Vec<String> {
        words
            .iter()
            .map(|w| {
                self.entries
                    .get(w.as_str())
                    .cloned()
                    .unwrap_or_else(|| FALLBACK_TAG.to_string())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(s: &str) -> GraphemeString {
        GraphemeString::new(s)
    }

    #[test]
    fn lookup_with_fallback() {
        let mut t = LexiconTagger::default();
        t.insert("mes", "DET");
        t.insert("amis", "NOUN");
        assert_eq!(t.tag(&[g("mes"), g("amis")]), ["DET", "NOUN"]);
        assert_eq!(t.tag(&[g("inconnu")]), [FALLBACK_TAG]);
        assert!(t.tag(&[]).is_empty());
    }

    #[test]
    fn output_length_matches_input() {
        let t = LexiconTagger::default();
        for n in 0..8 {
            let words: Vec<_> = (0..n).map(|i| g(&format!("w{i}"))).collect();
            assert_eq!(t.tag(&words).len(), n);
        }
    }

    #[test]
    fn tagset_always_has_fallback() {
        let ts = TagSet::new(vec!["DET".into(), "NOUN".into()]).unwrap();
        assert!(ts.tags().iter().any(|t| t == FALLBACK_TAG));
        let toy = TagSet::toy();
        assert!(toy.tags().iter().any(|t| t == FALLBACK_TAG));
    }

    #[test]
    fn tagset_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.txt");
        let ts = TagSet::toy();
        ts.save(&path).unwrap();
        assert_eq!(TagSet::load(&path).unwrap(), ts);
    }
}
