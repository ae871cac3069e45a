//! Textual and phonetic data model: preprocessing, the sentence transcript
//! format ('/' separator, '^' phenomenon marker), curation, and the lexicon,
//! corpus, and phoneme-inventory file formats.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Word length cap, in graphemes or phonemes, applied during curation.
pub const MAX_WORD_LEN: usize = 32;
/// Sentences must stay under this many characters in total.
pub const MAX_SENTENCE_CHARS: usize = 192;
/// Sentences must carry at least this many words.
pub const MIN_SENTENCE_WORDS: usize = 4;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("phoneme line has {chunks} word chunks but sentence has {words} words")]
    ChunkCountMismatch { chunks: usize, words: usize },
    #[error("unknown phoneme symbol in chunk {chunk:?} at byte {at}")]
    UnknownPhoneme { chunk: String, at: usize },
    #[error("phoneme line starts or ends with a boundary marker: {0:?}")]
    DanglingMarker(String),
    #[error("two consecutive boundary markers in phoneme line")]
    ConsecutiveMarkers,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("malformed lexicon line {line}: {reason}")]
    MalformedLexiconLine { line: usize, reason: String },
    #[error("corpus entry at line {0} is missing its phoneme line")]
    MissingPhonemeLine(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Case-folded text; apostrophes and hyphens are legal, other punctuation
/// appears only as the literal '#'.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphemeString(String);

impl GraphemeString {
    /// Wraps already-normalized text. Use [`preprocess_text`] for raw input.
    pub fn new(s: impl Into<String>) -> Self {
        GraphemeString(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.0.chars()
    }

    /// Length in grapheme symbols (chars; sufficient for French orthography).
    pub fn len(&self) -> usize {
        self.0.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whitespace-separated words.
    pub fn words(&self) -> Vec<GraphemeString> {
        self.0
            .split_whitespace()
            .map(|w| GraphemeString(w.to_string()))
            .collect()
    }
}

impl fmt::Display for GraphemeString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered phoneme symbols drawn from a declared X-SAMPA inventory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PhonemeSequence(Vec<String>);

impl PhonemeSequence {
    pub fn new(symbols: Vec<String>) -> Self {
        PhonemeSequence(symbols)
    }

    pub fn from_symbols(symbols: &[&str]) -> Self {
        PhonemeSequence(symbols.iter().map(|s| s.to_string()).collect())
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    pub fn last(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn push(&mut self, symbol: impl Into<String>) {
        self.0.push(symbol.into());
    }

    /// Concatenated chunk form used by the transcript phoneme line.
    pub fn chunk(&self) -> String {
        self.0.concat()
    }

    /// Space-separated form used by the lexicon file.
    pub fn spaced(&self) -> String {
        self.0.join(" ")
    }
}

/// Declared phoneme alphabet with longest-match chunk tokenization.
#[derive(Debug, Clone)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    set: HashSet<String>,
    max_symbol_len: usize,
}

impl PhonemeInventory {
    pub fn new(symbols: Vec<String>) -> Self {
        let set: HashSet<String> = symbols.iter().cloned().collect();
        let max_symbol_len = symbols.iter().map(|s| s.len()).max().unwrap_or(0);
        PhonemeInventory { symbols, set, max_symbol_len }
    }

    /// A workable French X-SAMPA inventory (nasal vowels as two-character
    /// symbols such as `A~`).
    pub fn french_xsampa() -> Self {
        const SYMS: &[&str] = &[
            "a", "e", "i", "o", "u", "y", "E", "O", "9", "2", "@", "A~", "E~", "O~", "9~", "p",
            "b", "t", "d", "k", "g", "f", "v", "s", "z", "S", "Z", "m", "n", "J", "N", "l", "R",
            "w", "H", "j",
        ];
        Self::new(SYMS.iter().map(|s| s.to_string()).collect())
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.set.contains(symbol)
    }

    /// Splits a concatenated phoneme chunk into inventory symbols,
    /// preferring the longest symbol at each position.
    pub fn tokenize(&self, chunk: &str) -> Result<PhonemeSequence, TranscriptError> {
        let mut out = Vec::new();
        let mut rest = chunk;
        let mut at = 0;
        while !rest.is_empty() {
            let mut matched = None;
            for take in (1..=self.max_symbol_len.min(rest.len())).rev() {
                if !rest.is_char_boundary(take) {
                    continue;
                }
                if self.set.contains(&rest[..take]) {
                    matched = Some(take);
                    break;
                }
            }
            match matched {
                Some(take) => {
                    out.push(rest[..take].to_string());
                    rest = &rest[take..];
                    at += take;
                }
                None => {
                    return Err(TranscriptError::UnknownPhoneme {
                        chunk: chunk.to_string(),
                        at,
                    })
                }
            }
        }
        Ok(PhonemeSequence(out))
    }

    /// Parses a space-separated phoneme string (lexicon file form).
    pub fn parse_spaced(&self, s: &str) -> Result<PhonemeSequence, TranscriptError> {
        let mut out = Vec::new();
        for sym in s.split_whitespace() {
            if !self.set.contains(sym) {
                return Err(TranscriptError::UnknownPhoneme {
                    chunk: s.to_string(),
                    at: 0,
                });
            }
            out.push(sym.to_string());
        }
        Ok(PhonemeSequence(out))
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path)?;
        let symbols: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if symbols.is_empty() {
            return Err(TranscriptError::Empty("phoneme inventory"));
        }
        Ok(Self::new(symbols))
    }

    pub fn save(&self, path: &Path) -> Result<(), TranscriptError> {
        let mut text = self.symbols.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// '/', no phonological phenomenon at this boundary.
    Separator,
    /// '^', liaison or linking at this boundary.
    Phenomenon,
}

/// Liaison vs linking; derived (see [`classify_phenomenon`]), never stored
/// in the transcript format itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhenomenonCategory {
    Liaison,
    Linking,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryMarker {
    pub kind: BoundaryKind,
    pub category: PhenomenonCategory,
}

impl BoundaryMarker {
    pub fn separator() -> Self {
        BoundaryMarker { kind: BoundaryKind::Separator, category: PhenomenonCategory::Unlabeled }
    }

    pub fn phenomenon() -> Self {
        BoundaryMarker { kind: BoundaryKind::Phenomenon, category: PhenomenonCategory::Unlabeled }
    }

    pub fn is_phenomenon(&self) -> bool {
        self.kind == BoundaryKind::Phenomenon
    }

    pub fn symbol(&self) -> &'static str {
        match self.kind {
            BoundaryKind::Separator => "/",
            BoundaryKind::Phenomenon => "^",
        }
    }
}

/// One word/pronunciation lexicon entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: GraphemeString,
    pub pronunciation: PhonemeSequence,
}

impl WordEntry {
    pub fn new(word: GraphemeString, pronunciation: PhonemeSequence) -> Self {
        WordEntry { word, pronunciation }
    }
}

/// A sentence with per-word phoneme chunks and per-boundary markers, as
/// carried by the transcript format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceTranscript {
    pub words: Vec<(GraphemeString, PhonemeSequence)>,
    pub boundaries: Vec<BoundaryMarker>,
}

impl SentenceTranscript {
    pub fn new(
        words: Vec<(GraphemeString, PhonemeSequence)>,
        boundaries: Vec<BoundaryMarker>,
    ) -> Self {
        assert_eq!(boundaries.len() + 1, words.len(), "boundary/word count mismatch");
        SentenceTranscript { words, boundaries }
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Sentence text line: words joined by single spaces.
    pub fn text_line(&self) -> String {
        self.words
            .iter()
            .map(|(w, _)| w.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Phoneme line: concatenated chunks joined with ` / ` or ` ^ `.
    pub fn phoneme_line(&self) -> String {
        let mut out = self.words[0].1.chunk();
        for (i, marker) in self.boundaries.iter().enumerate() {
            out.push(' ');
            out.push_str(marker.symbol());
            out.push(' ');
            out.push_str(&self.words[i + 1].1.chunk());
        }
        out
    }

    /// The connecting phoneme at boundary `i`: the first phoneme of the
    /// right-hand chunk when the boundary is marked as a phenomenon.
    pub fn boundary_phoneme(&self, i: usize) -> Option<&str> {
        if self.boundaries[i].is_phenomenon() {
            self.words[i + 1].1.first()
        } else {
            None
        }
    }

    /// Sentence-level phoneme sequence: all chunks concatenated in order.
    pub fn flat_phonemes(&self) -> PhonemeSequence {
        let mut out = Vec::new();
        for (_, chunk) in &self.words {
            out.extend_from_slice(chunk.symbols());
        }
        PhonemeSequence(out)
    }

    pub fn phenomenon_count(&self) -> usize {
        self.boundaries.iter().filter(|b| b.is_phenomenon()).count()
    }
}

/// Parses the two-line transcript form: sentence text plus a phoneme line
/// whose word chunks alternate with '/' and '^' markers.
pub fn parse_sentence_transcript(
    line_words: &str,
    line_phonemes: &str,
    inventory: &PhonemeInventory,
) -> Result<SentenceTranscript, TranscriptError> {
    let words: Vec<GraphemeString> = line_words
        .split_whitespace()
        .map(|w| GraphemeString(w.to_string()))
        .collect();
    if words.is_empty() {
        return Err(TranscriptError::Empty("sentence text line"));
    }

    let tokens: Vec<&str> = line_phonemes.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(TranscriptError::Empty("phoneme line"));
    }

    let mut chunks: Vec<PhonemeSequence> = Vec::new();
    let mut boundaries: Vec<BoundaryMarker> = Vec::new();
    let mut expect_chunk = true;
    for tok in &tokens {
        match (*tok, expect_chunk) {
            ("/", true) | ("^", true) => {
                if boundaries.is_empty() && chunks.is_empty() {
                    return Err(TranscriptError::DanglingMarker(tok.to_string()));
                }
                return Err(TranscriptError::ConsecutiveMarkers);
            }
            ("/", false) => {
                boundaries.push(BoundaryMarker::separator());
                expect_chunk = true;
            }
            ("^", false) => {
                boundaries.push(BoundaryMarker::phenomenon());
                expect_chunk = true;
            }
            (chunk, true) => {
                chunks.push(inventory.tokenize(chunk)?);
                expect_chunk = false;
            }
            (_, false) => {
                // Two adjacent chunks without a marker between them.
                return Err(TranscriptError::ChunkCountMismatch {
                    chunks: chunks.len() + 1,
                    words: words.len(),
                });
            }
        }
    }
    if expect_chunk {
        return Err(TranscriptError::DanglingMarker(
            tokens.last().unwrap().to_string(),
        ));
    }
    if chunks.len() != words.len() {
        return Err(TranscriptError::ChunkCountMismatch {
            chunks: chunks.len(),
            words: words.len(),
        });
    }

    Ok(SentenceTranscript {
        words: words.into_iter().zip(chunks).collect(),
        boundaries,
    })
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^<>]*>").unwrap());
static LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());

fn is_emoji_like(c: char) -> bool {
    matches!(u32::from(c),
        0x1F000..=0x1FAFF   // pictographs, emoticons, symbols
        | 0x2600..=0x27BF   // misc symbols, dingbats
        | 0x2190..=0x21FF   // arrows
        | 0x2B00..=0x2BFF
        | 0xFE00..=0xFE0F   // variation selectors
        | 0x200D            // zero-width joiner
        | 0x20E3            // combining keycap
    )
}

/// Normalizes raw text: case folding, HTML tag / link / emoji removal, and
/// punctuation replaced by '#'. Apostrophes and hyphens survive verbatim.
/// Total and idempotent.
pub fn preprocess_text(raw: &str) -> GraphemeString {
    let no_tags = HTML_TAG.replace_all(raw, "");
    let no_links = LINK.replace_all(&no_tags, " ");
    let mut mapped = String::with_capacity(no_links.len());
    for c in no_links.chars() {
        if is_emoji_like(c) {
            continue;
        }
        if c == '\u{2019}' {
            mapped.push('\'');
        } else if c.is_alphanumeric() || c == '\'' || c == '-' {
            for lc in c.to_lowercase() {
                mapped.push(lc);
            }
        } else if c.is_whitespace() {
            mapped.push(' ');
        } else {
            mapped.push('#');
        }
    }
    let collapsed = mapped.split_whitespace().collect::<Vec<_>>().join(" ");
    GraphemeString(collapsed)
}

/// Why a sentence failed curation; carries the first violated criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurationReject {
    IncompleteSentence,
    TooFewWords,
    WordTooLong,
    TooManyChars,
}

impl fmt::Display for CurationReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CurationReject::IncompleteSentence => "incomplete-sentence",
            CurationReject::TooFewWords => "min-words",
            CurationReject::WordTooLong => "max-word-len",
            CurationReject::TooManyChars => "max-chars",
        };
        f.write_str(s)
    }
}

/// Applies the curation criteria in order: complete structure (caller
/// flag), minimum word count, per-word length caps, total character cap.
pub fn curate(
    sentence: &SentenceTranscript,
    complete_structure: bool,
) -> Result<(), CurationReject> {
    if !complete_structure {
        return Err(CurationReject::IncompleteSentence);
    }
    if sentence.word_count() < MIN_SENTENCE_WORDS {
        return Err(CurationReject::TooFewWords);
    }
    for (word, pron) in &sentence.words {
        if word.len() > MAX_WORD_LEN || pron.len() > MAX_WORD_LEN {
            return Err(CurationReject::WordTooLong);
        }
    }
    if sentence.text_line().chars().count() >= MAX_SENTENCE_CHARS {
        return Err(CurationReject::TooManyChars);
    }
    Ok(())
}

/// Linking iff the connecting phoneme is already the final phoneme of the
/// left word's isolated pronunciation; liaison otherwise.
pub fn classify_phenomenon(
    left: &WordEntry,
    boundary_phoneme: &str,
    marker: &BoundaryMarker,
) -> PhenomenonCategory {
    debug_assert!(marker.is_phenomenon());
    match left.pronunciation.last() {
        Some(last) if last == boundary_phoneme => PhenomenonCategory::Linking,
        _ => PhenomenonCategory::Liaison,
    }
}

/// Reads a `word<TAB>phonemes` lexicon file.
pub fn load_lexicon(
    path: &Path,
    inventory: &PhonemeInventory,
) -> Result<Vec<WordEntry>, TranscriptError> {
    let text = std::fs::read_to_string(path)?;
    parse_lexicon(&text, inventory)
}

pub fn parse_lexicon(
    text: &str,
    inventory: &PhonemeInventory,
) -> Result<Vec<WordEntry>, TranscriptError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (word, phonemes) =
            line.split_once('\t')
                .ok_or_else(|| TranscriptError::MalformedLexiconLine {
                    line: i + 1,
                    reason: "missing tab".to_string(),
                })?;
        if word.is_empty() {
            return Err(TranscriptError::MalformedLexiconLine {
                line: i + 1,
                reason: "empty word".to_string(),
            });
        }
        let pron = inventory.parse_spaced(phonemes)?;
        if pron.is_empty() {
            return Err(TranscriptError::MalformedLexiconLine {
                line: i + 1,
                reason: "empty pronunciation".to_string(),
            });
        }
        entries.push(WordEntry::new(GraphemeString::new(word), pron));
    }
    Ok(entries)
}

pub fn save_lexicon(path: &Path, entries: &[WordEntry]) -> Result<(), TranscriptError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(e.word.as_str());
        out.push('\t');
        out.push_str(&e.pronunciation.spaced());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a sentence corpus: pairs of lines (text, phoneme line) separated
/// by blank lines.
pub fn load_corpus(
    path: &Path,
    inventory: &PhonemeInventory,
) -> Result<Vec<SentenceTranscript>, TranscriptError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, inventory)
}

pub fn parse_corpus(
    text: &str,
    inventory: &PhonemeInventory,
) -> Result<Vec<SentenceTranscript>, TranscriptError> {
    let mut sentences = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let (_, phon_line) = lines
            .next()
            .filter(|(_, l)| !l.trim().is_empty())
            .ok_or(TranscriptError::MissingPhonemeLine(i + 1))?;
        sentences.push(parse_sentence_transcript(line, phon_line, inventory)?);
    }
    Ok(sentences)
}

pub fn save_corpus(path: &Path, sentences: &[SentenceTranscript]) -> Result<(), TranscriptError> {
    std::fs::write(path, corpus_to_string(sentences))?;
    Ok(())
}

pub fn corpus_to_string(sentences: &[SentenceTranscript]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&s.text_line());
        out.push('\n');
        out.push_str(&s.phoneme_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhonemeInventory {
        PhonemeInventory::french_xsampa()
    }

    const B1_TEXT: &str = "un enfant innocent a oublié sa petite envelope";
    const B1_PHON: &str = "9~ ^ nA~fA~ / inOsA~ / a / ublije / sa / p@ti ^ tA~vlOp";

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess_text("Mes amis!").as_str(), "mes amis#");
        assert_eq!(preprocess_text("").as_str(), "");
        assert_eq!(
            preprocess_text("L'été, c'est <b>beau</b>.").as_str(),
            "l'été# c'est beau#"
        );
    }

    #[test]
    fn preprocess_removes_links_and_emoji() {
        assert_eq!(
            preprocess_text("voir https://exemple.fr/a?b=1 ici 😀").as_str(),
            "voir ici"
        );
        assert_eq!(preprocess_text("On y va www.site.fr !").as_str(), "on y va #");
    }

    #[test]
    fn preprocess_preserves_apostrophes_and_hyphens() {
        assert_eq!(
            preprocess_text("C'est un arc-en-ciel.").as_str(),
            "c'est un arc-en-ciel#"
        );
    }

    #[test]
    fn preprocess_idempotent_on_samples() {
        for raw in [
            "Mes amis!",
            "L'été, c'est <b>beau</b>.",
            "a<b et a>b",
            "émoji 🎉🎉 fin…",
            "<a href=\"x\">lien</a> http://t.co/x",
        ] {
            let once = preprocess_text(raw);
            let twice = preprocess_text(once.as_str());
            assert_eq!(once, twice, "not idempotent on {raw:?}");
        }
    }

    #[test]
    fn tokenize_longest_match() {
        let seq = inv().tokenize("nA~fA~").unwrap();
        assert_eq!(seq.symbols(), &["n", "A~", "f", "A~"]);
        let seq = inv().tokenize("9~").unwrap();
        assert_eq!(seq.symbols(), &["9~"]);
    }

    #[test]
    fn tokenize_rejects_unknown() {
        assert!(matches!(
            inv().tokenize("xyzzy"),
            Err(TranscriptError::UnknownPhoneme { .. })
        ));
    }

    #[test]
    fn parse_b1_example() {
        let t = parse_sentence_transcript(B1_TEXT, B1_PHON, &inv()).unwrap();
        assert_eq!(t.word_count(), 8);
        assert_eq!(t.boundaries.len(), 7);
        let kinds: Vec<_> = t.boundaries.iter().map(|b| b.symbol()).collect();
        assert_eq!(kinds, ["^", "/", "/", "/", "/", "/", "^"]);
        assert_eq!(t.boundary_phoneme(0), Some("n"));
        assert_eq!(t.boundary_phoneme(6), Some("t"));
        assert_eq!(t.boundary_phoneme(1), None);
    }

    #[test]
    fn parse_minimal() {
        let t = parse_sentence_transcript("a b", "a / b", &inv()).unwrap();
        assert_eq!(t.word_count(), 2);
        assert_eq!(t.boundaries.len(), 1);
        assert_eq!(t.boundaries[0].kind, BoundaryKind::Separator);
    }

    #[test]
    fn b1_roundtrip_byte_exact() {
        let t = parse_sentence_transcript(B1_TEXT, B1_PHON, &inv()).unwrap();
        assert_eq!(t.text_line(), B1_TEXT);
        assert_eq!(t.phoneme_line(), B1_PHON);
        let t2 = parse_sentence_transcript(&t.text_line(), &t.phoneme_line(), &inv()).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_sentence_transcript("a b c", "a / b", &inv()).is_err());
        assert!(parse_sentence_transcript("a b", "a / b / ", &inv()).is_err());
        assert!(parse_sentence_transcript("a b", "a / / b", &inv()).is_err());
        assert!(parse_sentence_transcript("a b", "/ a b", &inv()).is_err());
    }

    fn toy_sentence(words: usize, word_len: usize) -> SentenceTranscript {
        let w = "a".repeat(word_len);
        let words: Vec<_> = (0..words)
            .map(|_| (GraphemeString::new(w.clone()), PhonemeSequence::from_symbols(&["a"])))
            .collect();
        let boundaries = vec![BoundaryMarker::separator(); words.len() - 1];
        SentenceTranscript::new(words, boundaries)
    }

    #[test]
    fn curate_accepts_good_sentence() {
        let s = toy_sentence(12, 6);
        assert!(curate(&s, true).is_ok());
    }

    #[test]
    fn curate_rejects_in_order() {
        assert_eq!(curate(&toy_sentence(3, 4), true), Err(CurationReject::TooFewWords));
        assert_eq!(curate(&toy_sentence(5, 40), true), Err(CurationReject::WordTooLong));
        // 16 words x 11 chars + 15 spaces = 191 chars is still fine; 12 chars is not.
        assert!(curate(&toy_sentence(16, 11), true).is_ok());
        assert_eq!(curate(&toy_sentence(16, 12), true), Err(CurationReject::TooManyChars));
        assert_eq!(
            curate(&toy_sentence(12, 6), false),
            Err(CurationReject::IncompleteSentence)
        );
    }

    #[test]
    fn classify_linking_vs_liaison() {
        let une = WordEntry::new(
            GraphemeString::new("une"),
            PhonemeSequence::from_symbols(&["y", "n"]),
        );
        let mes = WordEntry::new(
            GraphemeString::new("mes"),
            PhonemeSequence::from_symbols(&["m", "e"]),
        );
        let marker = BoundaryMarker::phenomenon();
        assert_eq!(classify_phenomenon(&une, "n", &marker), PhenomenonCategory::Linking);
        assert_eq!(classify_phenomenon(&mes, "z", &marker), PhenomenonCategory::Liaison);
        let empty = WordEntry::new(GraphemeString::new("x"), PhonemeSequence::default());
        assert_eq!(classify_phenomenon(&empty, "z", &marker), PhenomenonCategory::Liaison);
    }

    #[test]
    fn lexicon_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        let entries = vec![
            WordEntry::new(
                GraphemeString::new("enfant"),
                PhonemeSequence::from_symbols(&["A~", "f", "A~"]),
            ),
            WordEntry::new(
                GraphemeString::new("l'été"),
                PhonemeSequence::from_symbols(&["l", "e", "t", "e"]),
            ),
        ];
        save_lexicon(&path, &entries).unwrap();
        let back = load_lexicon(&path, &inv()).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn corpus_roundtrip() {
        let t = parse_sentence_transcript(B1_TEXT, B1_PHON, &inv()).unwrap();
        let u = parse_sentence_transcript("a b", "a ^ ba", &inv()).unwrap();
        let text = corpus_to_string(&[t.clone(), u.clone()]);
        let back = parse_corpus(&text, &inv()).unwrap();
        assert_eq!(back, vec![t, u]);
    }
}
