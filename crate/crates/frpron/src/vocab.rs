//! Symbol tables mapping graphemes, phonemes, and POS tags to integer ids,
//! with fixed special tokens and a deterministic on-disk format.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD: usize = 0;
pub const SEP: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const UNK: usize = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<sep>", "<bos>", "<eos>", "<unk>"];
const FILE_VERSION: &str = "frpron-vocab-v1";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a symbol table from an empty stream")]
    EmptyStream,
    #[error("id {0} out of range (table size {1})")]
    IdOutOfRange(usize, usize),
    #[error("vocabulary file is malformed at line {0}")]
    Malformed(usize),
    #[error("unsupported vocabulary file version {0:?}")]
    BadVersion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bijection between symbols and integer ids. Ids 0..=4 are the special
/// tokens PAD, SEP, BOS, EOS, UNK; the rest follow in first-occurrence
/// order of the build input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    ids: HashMap<String, usize>,
}

impl SymbolTable {
    /// Builds a table from a symbol stream, deduplicating in order.
    pub fn build_from_corpus<I, S>(entries: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut symbols: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut ids: HashMap<String, usize> =
            SPECIALS.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect();
        let mut saw_any = false;
        for entry in entries {
            saw_any = true;
            let sym = entry.as_ref();
            if !ids.contains_key(sym) {
                ids.insert(sym.to_string(), symbols.len());
                symbols.push(sym.to_string());
            }
        }
        if !saw_any {
            return Err(VocabError::EmptyStream);
        }
        Ok(SymbolTable { symbols, ids })
    }

    /// Total size including the five specials.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a table always carries the specials
    }

    pub fn encode(&self, symbol: &str) -> usize {
        self.ids.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn decode(&self, id: usize) -> Result<&str, VocabError> {
        self.symbols
            .get(id)
            .map(String::as_str)
            .ok_or(VocabError::IdOutOfRange(id, self.symbols.len()))
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.ids.contains_key(symbol)
    }

    pub fn encode_sequence<S: AsRef<str>>(&self, seq: &[S]) -> Vec<usize> {
        seq.iter().map(|s| self.encode(s.as_ref())).collect()
    }

    pub fn decode_sequence(&self, ids: &[usize]) -> Result<Vec<String>, VocabError> {
        ids.iter().map(|&id| self.decode(id).map(String::from)).collect()
    }

    /// Non-special symbols, in id order.
    pub fn regular_symbols(&self) -> &[String] {
        &self.symbols[SPECIALS.len()..]
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from(FILE_VERSION);
        out.push('\n');
        for (id, sym) in self.symbols.iter().enumerate() {
            out.push_str(&id.to_string());
            out.push('\t');
            out.push_str(sym);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_string(&text)
    }

    pub fn from_file_string(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(VocabError::Malformed(1))?;
        if header != FILE_VERSION {
            return Err(VocabError::BadVersion(header.to_string()));
        }
        let mut symbols = Vec::new();
        let mut ids = HashMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id_str, sym) = line.split_once('\t').ok_or(VocabError::Malformed(i + 2))?;
            let id: usize = id_str.parse().map_err(|_| VocabError::Malformed(i + 2))?;
            if id != symbols.len() {
                return Err(VocabError::Malformed(i + 2));
            }
            ids.insert(sym.to_string(), id);
            symbols.push(sym.to_string());
        }
        if symbols.len() < SPECIALS.len()
            || symbols[..SPECIALS.len()] != SPECIALS.map(String::from)
        {
            return Err(VocabError::Malformed(2));
        }
        Ok(SymbolTable { symbols, ids })
    }

    /// Content hash used to tie checkpoints to the vocabularies they were
    /// trained with.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        format!("{digest:x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_dedups_in_order() {
        let t = SymbolTable::build_from_corpus(["a", "b", "a"]).unwrap();
        assert_eq!(t.len(), 5 + 2);
        assert_eq!(t.encode("a"), 5);
        assert_eq!(t.encode("b"), 6);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            SymbolTable::build_from_corpus(empty),
            Err(VocabError::EmptyStream)
        ));
    }

    #[test]
    fn unknown_maps_to_unk() {
        let t = SymbolTable::build_from_corpus(["a"]).unwrap();
        assert_eq!(t.encode("zzz"), UNK);
        assert_eq!(t.decode(UNK).unwrap(), "<unk>");
    }

    #[test]
    fn decode_out_of_range() {
        let t = SymbolTable::build_from_corpus(["a"]).unwrap();
        assert!(matches!(t.decode(99), Err(VocabError::IdOutOfRange(99, _))));
    }

    #[test]
    fn empty_sequence_roundtrip() {
        let t = SymbolTable::build_from_corpus(["a"]).unwrap();
        let ids = t.encode_sequence::<&str>(&[]);
        assert!(ids.is_empty());
        assert!(t.decode_sequence(&ids).unwrap().is_empty());
    }

    #[test]
    fn save_load_preserves_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let t = SymbolTable::build_from_corpus(["A~", "f", "9~", "z"]).unwrap();
        t.save(&path).unwrap();
        let back = SymbolTable::load(&path).unwrap();
        assert_eq!(t, back);
        for sym in ["A~", "f", "9~", "z", "<pad>"] {
            assert_eq!(t.encode(sym), back.encode(sym));
        }
        assert_eq!(t.hash(), back.hash());
    }

    #[test]
    fn special_ids_are_stable() {
        let t = SymbolTable::build_from_corpus(["x"]).unwrap();
        assert_eq!(t.encode("<pad>"), PAD);
        assert_eq!(t.encode("<sep>"), SEP);
        assert_eq!(t.encode("<bos>"), BOS);
        assert_eq!(t.encode("<eos>"), EOS);
        assert_eq!(t.encode("<unk>"), UNK);
    }

    #[test]
    fn file_format_is_deterministic() {
        let a = SymbolTable::build_from_corpus(["b", "a"]).unwrap();
        let b = SymbolTable::build_from_corpus(["b", "a"]).unwrap();
        assert_eq!(a.to_file_string(), b.to_file_string());
    }
}
