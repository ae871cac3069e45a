//! Deterministic rule-based liaison/linking oracle over a toy lexicon.
//! Generates annotated synthetic corpora in the transcript format and
//! doubles as a hand-crafted post-lexical-rule reference predictor.

use std::collections::HashMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::postag::LexiconTagger;
use crate::transcript::{
    classify_phenomenon, curate, BoundaryMarker, GraphemeString, PhenomenonCategory,
    PhonemeInventory, PhonemeSequence, SentenceTranscript, TranscriptError, WordEntry,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("word {0:?} is not in the rule lexicon")]
    UnknownWord(String),
    #[error("template references POS {0:?} with no lexicon entries")]
    EmptyPosSlot(String),
    #[error("malformed lexicon line {0}: {1}")]
    MalformedLexicon(usize, String),
    #[error("malformed exception line {0}")]
    MalformedException(usize),
    #[error("no templates supplied")]
    NoTemplates,
    #[error("lexicon entry {0:?}: a liaison phoneme requires a vowel-final isolated pronunciation")]
    BadLiaisonEntry(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Behaviour of a word as left context of a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiaisonClass {
    Obligatory,
    Forbidden,
    ContextDependent,
}

impl LiaisonClass {
    fn as_str(self) -> &'static str {
        match self {
            LiaisonClass::Obligatory => "obligatory",
            LiaisonClass::Forbidden => "forbidden",
            LiaisonClass::ContextDependent => "context",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "obligatory" => Some(LiaisonClass::Obligatory),
            "forbidden" => Some(LiaisonClass::Forbidden),
            "context" => Some(LiaisonClass::ContextDependent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuleEntry {
    pub entry: WordEntry,
    pub pos: String,
    /// Phoneme surfaced by a silent final grapheme under liaison (e.g. s -> z).
    pub liaison_phoneme: Option<String>,
    /// Whether the isolated pronunciation starts with a vowel.
    pub vowel_initial: bool,
    pub class: LiaisonClass,
}

const VOWELS: &[&str] = &[
    "a", "e", "i", "o", "u", "y", "E", "O", "9", "2", "@", "A~", "E~", "O~", "9~",
];

fn is_vowel(sym: &str) -> bool {
    VOWELS.contains(&sym)
}

impl RuleEntry {
    /// Final pronounced consonant of the isolated form, if any.
    pub fn final_consonant(&self) -> Option<&str> {
        self.entry
            .pronunciation
            .last()
            .filter(|p| !is_vowel(p))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleLexicon {
    entries: Vec<RuleEntry>,
    index: HashMap<String, usize>,
}

impl RuleLexicon {
    pub fn new(entries: Vec<RuleEntry>) -> Result<Self, OracleError> {
        for e in &entries {
            if e.liaison_phoneme.is_some()
                && e.entry.pronunciation.last().map(is_vowel) != Some(true)
            {
                return Err(OracleError::BadLiaisonEntry(e.entry.word.as_str().to_string()));
            }
        }
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.entry.word.as_str().to_string(), i))
            .collect();
        Ok(RuleLexicon { entries, index })
    }

    pub fn entries(&self) -> &[RuleEntry] {
        &self.entries
    }

    pub fn get(&self, word: &str) -> Option<&RuleEntry> {
        self.index.get(word).map(|&i| &self.entries[i])
    }

    pub fn lookup(&self, word: &str) -> Result<&RuleEntry, OracleError> {
        self.get(word)
            .ok_or_else(|| OracleError::UnknownWord(word.to_string()))
    }

    pub fn word_entries(&self) -> Vec<WordEntry> {
        self.entries.iter().map(|e| e.entry.clone()).collect()
    }

    /// Word -> POS lookup table for the toy tagger.
    pub fn tagger(&self) -> LexiconTagger {
        let mut t = LexiconTagger::default();
        for e in &self.entries {
            t.insert(e.entry.word.as_str(), e.pos.clone());
        }
        t
    }

    fn by_pos(&self, pos: &str) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.pos == pos)
            .map(|(i, _)| i)
            .collect()
    }

    /// Tabular format: word / pronunciation / POS / liaison phoneme ('-' if
    /// none) / class / vowel-initial.
    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.entry.word.as_str(),
                e.entry.pronunciation.spaced(),
                e.pos,
                e.liaison_phoneme.as_deref().unwrap_or("-"),
                e.class.as_str(),
                if e.vowel_initial { "v" } else { "c" },
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path, inventory: &PhonemeInventory) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(OracleError::MalformedLexicon(i + 1, "expected 6 fields".into()));
            }
            let pron = inventory
                .parse_spaced(fields[1])
                .map_err(|e| OracleError::MalformedLexicon(i + 1, e.to_string()))?;
            let liaison_phoneme = match fields[3] {
                "-" => None,
                p if inventory.contains(p) => Some(p.to_string()),
                p => {
                    return Err(OracleError::MalformedLexicon(
                        i + 1,
                        format!("liaison phoneme {p:?} not in inventory"),
                    ))
                }
            };
            let class = LiaisonClass::parse(fields[4])
                .ok_or_else(|| OracleError::MalformedLexicon(i + 1, "bad class".into()))?;
            let vowel_initial = match fields[5] {
                "v" => true,
                "c" => false,
                _ => return Err(OracleError::MalformedLexicon(i + 1, "bad vowel flag".into())),
            };
            entries.push(RuleEntry {
                entry: WordEntry::new(GraphemeString::new(fields[0]), pron),
                pos: fields[2].to_string(),
                liaison_phoneme,
                vowel_initial,
                class,
            });
        }
        Self::new(entries)
    }
}

/// Fixed expressions that force a boundary phoneme regardless of the
/// general rules.
#[derive(Debug, Clone, Default)]
pub struct ExceptionTable {
    map: HashMap<(String, String), String>,
}

impl ExceptionTable {
    pub fn insert(&mut self, left: &str, right: &str, phoneme: &str) {
        self.map
            .insert((left.to_string(), right.to_string()), phoneme.to_string());
    }

    pub fn get(&self, left: &str, right: &str) -> Option<&str> {
        self.map
            .get(&(left.to_string(), right.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut rows: Vec<_> = self.map.iter().collect();
        rows.sort();
        let mut out = String::new();
        for ((l, r), p) in rows {
            out.push_str(&format!("{l}\t{r}\t{p}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(OracleError::MalformedException(i + 1));
            }
            map.insert(
                (fields[0].to_string(), fields[1].to_string()),
                fields[2].to_string(),
            );
        }
        Ok(ExceptionTable { map })
    }
}

/// How optional (context-dependent) liaison is resolved.
#[derive(Debug, Clone, Copy)]
pub enum OptionalLiaisonPolicy {
    Never,
    Always,
    /// Deterministic per ordered word pair, keyed by a corpus seed.
    Seeded(u64),
}

fn fnv1a64(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl OptionalLiaisonPolicy {
    fn realize(&self, left: &str, right: &str) -> bool {
        match self {
            OptionalLiaisonPolicy::Never => false,
            OptionalLiaisonPolicy::Always => true,
            OptionalLiaisonPolicy::Seeded(seed) => {
                fnv1a64(&[&seed.to_le_bytes(), left.as_bytes(), right.as_bytes()]) & 1 == 1
            }
        }
    }
}

/// Outcome of the rules at one boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryDecision {
    Separator,
    Phenomenon { phoneme: String },
}

/// Rule precedence: exceptions > forbidden > liaison > linking > separator.
pub fn apply_rules(
    left: &RuleEntry,
    right: &RuleEntry,
    exceptions: &ExceptionTable,
    policy: OptionalLiaisonPolicy,
) -> BoundaryDecision {
    if let Some(p) = exceptions.get(left.entry.word.as_str(), right.entry.word.as_str()) {
        return BoundaryDecision::Phenomenon { phoneme: p.to_string() };
    }
    if left.class == LiaisonClass::Forbidden {
        return BoundaryDecision::Separator;
    }
    if right.vowel_initial {
        if let Some(p) = &left.liaison_phoneme {
            let fire = match left.class {
                LiaisonClass::Obligatory => true,
                LiaisonClass::ContextDependent => {
                    policy.realize(left.entry.word.as_str(), right.entry.word.as_str())
                }
                LiaisonClass::Forbidden => unreachable!(),
            };
            if fire {
                return BoundaryDecision::Phenomenon { phoneme: p.clone() };
            }
        }
        if let Some(c) = left.final_consonant() {
            return BoundaryDecision::Phenomenon { phoneme: c.to_string() };
        }
    }
    BoundaryDecision::Separator
}

/// Renders a word sequence plus per-boundary decisions into a transcript,
/// applying the move-if-equal / insert-otherwise splicing rule.
pub fn render_transcript(
    words: &[WordEntry],
    decisions: &[BoundaryDecision],
) -> SentenceTranscript {
    assert_eq!(decisions.len() + 1, words.len());
    let mut chunks: Vec<Vec<String>> = words
        .iter()
        .map(|w| w.pronunciation.symbols().to_vec())
        .collect();
    let mut markers = Vec::with_capacity(decisions.len());
    for (i, d) in decisions.iter().enumerate() {
        match d {
            BoundaryDecision::Separator => markers.push(BoundaryMarker::separator()),
            BoundaryDecision::Phenomenon { phoneme } => {
                // Linking moves the final phoneme across the boundary;
                // liaison inserts a phoneme absent from the isolated form.
                if words[i].pronunciation.last() == Some(phoneme.as_str()) && chunks[i].len() > 1 {
                    chunks[i].pop();
                }
                chunks[i + 1].insert(0, phoneme.clone());
                markers.push(BoundaryMarker::phenomenon());
            }
        }
    }
    SentenceTranscript::new(
        words
            .iter()
            .zip(chunks)
            .map(|(w, c)| (w.word.clone(), PhonemeSequence::new(c)))
            .collect(),
        markers,
    )
}

/// The rule system used as a predictor over raw preprocessed text.
pub fn plr_predict(
    lexicon: &RuleLexicon,
    exceptions: &ExceptionTable,
    policy: OptionalLiaisonPolicy,
    sentence_text: &str,
) -> Result<SentenceTranscript, OracleError> {
    let words: Vec<&RuleEntry> = sentence_text
        .split_whitespace()
        .map(|w| lexicon.lookup(w))
        .collect::<Result<_, _>>()?;
    if words.is_empty() {
        return Err(OracleError::UnknownWord(String::new()));
    }
    let decisions: Vec<BoundaryDecision> = words
        .windows(2)
        .map(|pair| apply_rules(pair[0], pair[1], exceptions, policy))
        .collect();
    let entries: Vec<WordEntry> = words.iter().map(|e| e.entry.clone()).collect();
    Ok(render_transcript(&entries, &decisions))
}

/// Sentence template: one POS slot per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub slots: Vec<String>,
}

impl Template {
    pub fn parse(line: &str) -> Self {
        Template { slots: line.split_whitespace().map(String::from).collect() }
    }
}

pub fn load_templates(path: &Path) -> Result<Vec<Template>, OracleError> {
    let text = std::fs::read_to_string(path)?;
    let templates: Vec<Template> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(Template::parse)
        .collect();
    if templates.is_empty() {
        return Err(OracleError::NoTemplates);
    }
    Ok(templates)
}

/// Built-in templates, 8 to 16 slots, averaging close to 12 words.
pub fn builtin_templates() -> Vec<Template> {
    const LINES: &[&str] = &[
        "DET NOUN VERB DET ADJ NOUN PREP DET NOUN CONJ PRON VERB",
        "DET ADJ NOUN VERB ADV PREP DET NOUN CONJ DET NOUN VERB",
        "PRON VERB DET NOUN PREP DET NOUN CONJ DET ADJ NOUN VERB ADV",
        "DET NOUN PREP DET NOUN VERB DET NOUN CONJ PRON VERB ADV",
        "NUM NOUN VERB PREP DET NOUN CONJ NUM ADJ NOUN VERB",
        "DET NOUN VERB ADV CONJ DET NOUN VERB DET ADJ NOUN",
        "PRON VERB ADV PREP DET ADJ NOUN CONJ DET NOUN VERB DET NOUN",
        "DET ADJ NOUN PREP DET NOUN VERB ADV CONJ PRON VERB DET NOUN VERB",
        "DET NOUN CONJ DET NOUN VERB PREP DET NOUN ADV",
        "PRON VERB DET ADJ NOUN CONJ DET NOUN VERB PREP NUM NOUN ADV VERB",
    ];
    LINES.iter().map(|l| Template::parse(l)).collect()
}

pub fn save_templates(path: &Path, templates: &[Template]) -> Result<(), OracleError> {
    let mut out = String::new();
    for t in templates {
        out.push_str(&t.slots.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-corpus phenomenon bookkeeping.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub mean_words: f64,
    pub sd_words: f64,
    pub liaisons_per_sentence: f64,
    pub linkings_per_sentence: f64,
    pub total_phenomena: usize,
}

pub fn corpus_stats(lexicon: &RuleLexicon, sentences: &[SentenceTranscript]) -> CorpusStats {
    let n = sentences.len().max(1) as f64;
    let mut words = 0usize;
    let mut sq = 0.0f64;
    let mut liaisons = 0usize;
    let mut linkings = 0usize;
    let mut phen = 0usize;
    for s in sentences {
        words += s.word_count();
        sq += (s.word_count() as f64).powi(2);
        for i in 0..s.boundaries.len() {
            if let Some(ph) = s.boundary_phoneme(i) {
                phen += 1;
                let left = lexicon.get(s.words[i].0.as_str());
                let cat = left
                    .map(|e| classify_phenomenon(&e.entry, ph, &s.boundaries[i]))
                    .unwrap_or(PhenomenonCategory::Unlabeled);
                match cat {
                    PhenomenonCategory::Linking => linkings += 1,
                    _ => liaisons += 1,
                }
            }
        }
    }
    let mean = words as f64 / n;
    CorpusStats {
        sentences: sentences.len(),
        mean_words: mean,
        sd_words: (sq / n - mean * mean).max(0.0).sqrt(),
        liaisons_per_sentence: liaisons as f64 / n,
        linkings_per_sentence: linkings as f64 / n,
        total_phenomena: phen,
    }
}

/// Deterministically generates `count` curated sentences plus the word-level
/// training data (the lexicon itself).
pub fn generate_corpus(
    lexicon: &RuleLexicon,
    exceptions: &ExceptionTable,
    templates: &[Template],
    count: usize,
    seed: u64,
) -> Result<(Vec<WordEntry>, Vec<SentenceTranscript>), OracleError> {
    if templates.is_empty() {
        return Err(OracleError::NoTemplates);
    }
    let mut pools: HashMap<&str, Vec<usize>> = HashMap::new();
    for t in templates {
        for slot in &t.slots {
            if !pools.contains_key(slot.as_str()) {
                let pool = lexicon.by_pos(slot);
                if pool.is_empty() {
                    return Err(OracleError::EmptyPosSlot(slot.clone()));
                }
                pools.insert(slot, pool);
            }
        }
    }
    let policy = OptionalLiaisonPolicy::Seeded(seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(count);
    while sentences.len() < count {
        let template = &templates[rng.gen_range(0..templates.len())];
        let picks: Vec<&RuleEntry> = template
            .slots
            .iter()
            .map(|slot| {
                let pool = &pools[slot.as_str()];
                &lexicon.entries[pool[rng.gen_range(0..pool.len())]]
            })
            .collect();
        let decisions: Vec<BoundaryDecision> = picks
            .windows(2)
            .map(|p| apply_rules(p[0], p[1], exceptions, policy))
            .collect();
        let entries: Vec<WordEntry> = picks.iter().map(|e| e.entry.clone()).collect();
        let transcript = render_transcript(&entries, &decisions);
        if curate(&transcript, true).is_ok() {
            sentences.push(transcript);
        }
    }
    Ok((lexicon.word_entries(), sentences))
}

fn e(
    word: &str,
    pron: &[&str],
    pos: &str,
    liaison: Option<&str>,
    vowel_initial: bool,
    class: LiaisonClass,
) -> RuleEntry {
    RuleEntry {
        entry: WordEntry::new(GraphemeString::new(word), PhonemeSequence::from_symbols(pron)),
        pos: pos.to_string(),
        liaison_phoneme: liaison.map(String::from),
        vowel_initial,
        class,
    }
}

/// Curated seed lexicon covering the worked liaison/linking examples, plus
/// the matching exception table ("accent aigu").
pub fn seed_lexicon() -> (RuleLexicon, ExceptionTable) {
    use LiaisonClass::*;
    let entries = vec![
        // Determiners.
        e("un", &["9~"], "DET", Some("n"), true, Obligatory),
        e("une", &["y", "n"], "DET", None, true, Obligatory),
        e("mes", &["m", "e"], "DET", Some("z"), false, Obligatory),
        e("les", &["l", "e"], "DET", Some("z"), false, Obligatory),
        e("des", &["d", "e"], "DET", Some("z"), false, Obligatory),
        e("ses", &["s", "e"], "DET", Some("z"), false, Obligatory),
        e("mon", &["m", "O~"], "DET", Some("n"), false, Obligatory),
        e("ton", &["t", "O~"], "DET", Some("n"), false, Obligatory),
        e("sa", &["s", "a"], "DET", None, false, Obligatory),
        e("la", &["l", "a"], "DET", None, false, Obligatory),
        e("cette", &["s", "E", "t"], "DET", None, false, Obligatory),
        // Nouns (plural nouns as left context: no liaison).
        e("enfant", &["A~", "f", "A~"], "NOUN", None, true, Forbidden),
        e("amis", &["a", "m", "i"], "NOUN", None, true, Forbidden),
        e("ami", &["a", "m", "i"], "NOUN", None, true, Forbidden),
        e("amie", &["a", "m", "i"], "NOUN", None, true, Forbidden),
        e("envelope", &["A~", "v", "l", "O", "p"], "NOUN", None, true, Obligatory),
        e("frères", &["f", "R", "E", "R"], "NOUN", None, false, Obligatory),
        e("accent", &["a", "k", "s", "A~"], "NOUN", None, true, Forbidden),
        e("homme", &["O", "m"], "NOUN", None, true, Obligatory),
        e("femme", &["f", "a", "m"], "NOUN", None, false, Obligatory),
        e("arbre", &["a", "R", "b", "R"], "NOUN", None, true, Obligatory),
        e("livre", &["l", "i", "v", "R"], "NOUN", None, false, Obligatory),
        e("table", &["t", "a", "b", "l"], "NOUN", None, false, Obligatory),
        e("nuit", &["n", "H", "i"], "NOUN", None, false, Forbidden),
        e("oiseau", &["w", "a", "z", "o"], "NOUN", None, false, Forbidden),
        e("idée", &["i", "d", "e"], "NOUN", None, true, Forbidden),
        e("école", &["e", "k", "O", "l"], "NOUN", None, true, Obligatory),
        e("image", &["i", "m", "a", "Z"], "NOUN", None, true, Obligatory),
        // Verbs.
        e("est", &["E"], "VERB", Some("t"), true, Obligatory),
        e("sont", &["s", "O~"], "VERB", Some("t"), false, ContextDependent),
        e("ont", &["O~"], "VERB", Some("t"), true, ContextDependent),
        e("a", &["a"], "VERB", None, true, Forbidden),
        e("va", &["v", "a"], "VERB", None, false, Forbidden),
        e("oublié", &["u", "b", "l", "i", "j", "e"], "VERB", None, true, Forbidden),
        e("dort", &["d", "O", "R"], "VERB", None, false, Obligatory),
        e("écrit", &["e", "k", "R", "i"], "VERB", Some("t"), true, ContextDependent),
        e("aime", &["E", "m"], "VERB", None, true, Obligatory),
        e("porte", &["p", "O", "R", "t"], "VERB", None, false, Obligatory),
        // Adjectives.
        e("petit", &["p", "@", "t", "i"], "ADJ", Some("t"), false, Obligatory),
        e("petite", &["p", "@", "t", "i", "t"], "ADJ", None, false, Obligatory),
        e("grand", &["g", "R", "A~"], "ADJ", Some("t"), false, Obligatory),
        e("innocent", &["i", "n", "O", "s", "A~"], "ADJ", Some("t"), true, ContextDependent),
        e("joli", &["Z", "O", "l", "i"], "ADJ", None, false, Forbidden),
        e("aigu", &["e", "g", "y"], "ADJ", None, true, Forbidden),
        e("rouge", &["R", "u", "Z"], "ADJ", None, false, Obligatory),
        e("sage", &["s", "a", "Z"], "ADJ", None, false, Obligatory),
        // Pronouns.
        e("il", &["i", "l"], "PRON", None, true, Obligatory),
        e("elle", &["E", "l"], "PRON", None, true, Obligatory),
        e("nous", &["n", "u"], "PRON", Some("z"), false, Obligatory),
        e("vous", &["v", "u"], "PRON", Some("z"), false, Obligatory),
        e("on", &["O~"], "PRON", Some("n"), true, Obligatory),
        // Prepositions, conjunctions, adverbs, numerals.
        e("dans", &["d", "A~"], "PREP", Some("z"), false, Obligatory),
        e("sous", &["s", "u"], "PREP", Some("z"), false, Obligatory),
        e("chez", &["S", "e"], "PREP", Some("z"), false, Obligatory),
        e("avec", &["a", "v", "E", "k"], "PREP", None, true, Obligatory),
        e("sur", &["s", "y", "R"], "PREP", None, false, Obligatory),
        e("et", &["e"], "CONJ", None, true, Forbidden),
        e("quand", &["k", "A~"], "CONJ", Some("t"), false, Obligatory),
        e("mais", &["m", "E"], "CONJ", None, false, Forbidden),
        e("très", &["t", "R", "E"], "ADV", Some("z"), false, Obligatory),
        e("aussi", &["o", "s", "i"], "ADV", None, true, Forbidden),
        e("bien", &["b", "j", "E~"], "ADV", Some("n"), false, ContextDependent),
        e("ici", &["i", "s", "i"], "ADV", None, true, Forbidden),
        e("deux", &["d", "2"], "NUM", Some("z"), false, Obligatory),
        e("trois", &["t", "R", "w", "a"], "NUM", Some("z"), false, Obligatory),
        e("six", &["s", "i", "s"], "NUM", None, false, Obligatory),
    ];
    let lexicon = RuleLexicon::new(entries).expect("seed lexicon is valid");
    let mut exceptions = ExceptionTable::default();
    exceptions.insert("accent", "aigu", "t");
    (lexicon, exceptions)
}

/// Adds deterministic nonsense words with regular letter-to-phoneme
/// spellings, to scale the word-level data beyond the seed set.
pub fn extend_with_nonsense(
    lexicon: &RuleLexicon,
    count: usize,
    seed: u64,
) -> Result<RuleLexicon, OracleError> {
    const ONSETS: &[(&str, &str)] = &[
        ("b", "b"), ("d", "d"), ("f", "f"), ("g", "g"), ("k", "k"), ("l", "l"),
        ("m", "m"), ("n", "n"), ("p", "p"), ("r", "R"), ("s", "s"), ("t", "t"), ("v", "v"),
    ];
    const NUCLEI: &[(&str, &str)] = &[("a", "a"), ("e", "e"), ("i", "i"), ("o", "o"), ("u", "u")];
    const POS: &[&str] = &["NOUN", "VERB", "ADJ", "ADV"];

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6e6f6e73656e7365);
    let mut entries = lexicon.entries.clone();
    let mut used: std::collections::HashSet<String> =
        entries.iter().map(|e| e.entry.word.as_str().to_string()).collect();
    while entries.len() < lexicon.entries.len() + count {
        let syllables = rng.gen_range(2..=3);
        let vowel_start = rng.gen_bool(0.35);
        let mut word = String::new();
        let mut pron: Vec<String> = Vec::new();
        for s in 0..syllables {
            if s > 0 || !vowel_start {
                let (g, p) = ONSETS[rng.gen_range(0..ONSETS.len())];
                word.push_str(g);
                pron.push(p.to_string());
            }
            let (g, p) = NUCLEI[rng.gen_range(0..NUCLEI.len())];
            word.push_str(g);
            pron.push(p.to_string());
        }
        // Ending: plain vowel, pronounced consonant (linking capable), or a
        // silent grapheme with a liaison phoneme.
        let mut liaison = None;
        let mut class = LiaisonClass::Obligatory;
        match rng.gen_range(0..10) {
            0..=3 => {}
            4..=6 => {
                let (g, p) = ONSETS[rng.gen_range(0..ONSETS.len())];
                word.push_str(g);
                pron.push(p.to_string());
            }
            7..=8 => {
                word.push('s');
                liaison = Some("z".to_string());
            }
            _ => {
                word.push('t');
                liaison = Some("t".to_string());
            }
        }
        if liaison.is_none() && rng.gen_bool(0.15) {
            class = LiaisonClass::Forbidden;
        }
        if used.contains(&word) {
            continue;
        }
        used.insert(word.clone());
        let vowel_initial = is_vowel(&pron[0]);
        entries.push(RuleEntry {
            entry: WordEntry::new(
                GraphemeString::new(word),
                PhonemeSequence::new(pron),
            ),
            pos: POS[rng.gen_range(0..POS.len())].to_string(),
            liaison_phoneme: liaison,
            vowel_initial,
            class,
        });
    }
    RuleLexicon::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::parse_sentence_transcript;

    fn setup() -> (RuleLexicon, ExceptionTable) {
        seed_lexicon()
    }

    #[test]
    fn linking_une_amie() {
        let (lex, exc) = setup();
        let d = apply_rules(
            lex.get("une").unwrap(),
            lex.get("amie").unwrap(),
            &exc,
            OptionalLiaisonPolicy::Never,
        );
        assert_eq!(d, BoundaryDecision::Phenomenon { phoneme: "n".to_string() });
    }

    #[test]
    fn liaison_mes_amis_but_not_mes_freres() {
        let (lex, exc) = setup();
        let amis = apply_rules(
            lex.get("mes").unwrap(),
            lex.get("amis").unwrap(),
            &exc,
            OptionalLiaisonPolicy::Never,
        );
        assert_eq!(amis, BoundaryDecision::Phenomenon { phoneme: "z".to_string() });
        let freres = apply_rules(
            lex.get("mes").unwrap(),
            lex.get("frères").unwrap(),
            &exc,
            OptionalLiaisonPolicy::Never,
        );
        assert_eq!(freres, BoundaryDecision::Separator);
    }

    #[test]
    fn exception_accent_aigu() {
        let (lex, exc) = setup();
        // 'accent' is Forbidden as left context; the fixed expression wins.
        let d = apply_rules(
            lex.get("accent").unwrap(),
            lex.get("aigu").unwrap(),
            &exc,
            OptionalLiaisonPolicy::Never,
        );
        assert_eq!(d, BoundaryDecision::Phenomenon { phoneme: "t".to_string() });
    }

    #[test]
    fn forbidden_et_blocks_liaison() {
        let (lex, exc) = setup();
        let d = apply_rules(
            lex.get("et").unwrap(),
            lex.get("ami").unwrap(),
            &exc,
            OptionalLiaisonPolicy::Always,
        );
        assert_eq!(d, BoundaryDecision::Separator);
    }

    #[test]
    fn plr_renders_b1_style_boundaries() {
        let (lex, exc) = setup();
        let t = plr_predict(&lex, &exc, OptionalLiaisonPolicy::Never, "un enfant").unwrap();
        assert_eq!(t.phoneme_line(), "9~ ^ nA~fA~");
        let t = plr_predict(&lex, &exc, OptionalLiaisonPolicy::Never, "mes amis").unwrap();
        assert_eq!(t.phoneme_line(), "me ^ zami");
        let t = plr_predict(&lex, &exc, OptionalLiaisonPolicy::Never, "une amie").unwrap();
        assert_eq!(t.phoneme_line(), "y ^ nami");
        let t = plr_predict(&lex, &exc, OptionalLiaisonPolicy::Never, "mes frères").unwrap();
        assert_eq!(t.phoneme_line(), "me / fRER");
    }

    #[test]
    fn plr_rejects_unknown_word() {
        let (lex, exc) = setup();
        assert!(matches!(
            plr_predict(&lex, &exc, OptionalLiaisonPolicy::Never, "mes zorglub"),
            Err(OracleError::UnknownWord(_))
        ));
    }

    #[test]
    fn corpus_is_deterministic_and_parses() {
        let (lex, exc) = setup();
        let lex = extend_with_nonsense(&lex, 40, 7).unwrap();
        let templates = builtin_templates();
        let (words_a, sents_a) = generate_corpus(&lex, &exc, &templates, 50, 123).unwrap();
        let (words_b, sents_b) = generate_corpus(&lex, &exc, &templates, 50, 123).unwrap();
        assert_eq!(words_a, words_b);
        assert_eq!(sents_a, sents_b);
        let inv = PhonemeInventory::french_xsampa();
        for s in &sents_a {
            let t2 = parse_sentence_transcript(&s.text_line(), &s.phoneme_line(), &inv).unwrap();
            assert_eq!(&t2, s);
            assert!(curate(s, true).is_ok());
        }
    }

    #[test]
    fn generated_boundaries_match_rule_audit() {
        let (lex, exc) = setup();
        let seed = 99;
        let (_, sents) = generate_corpus(&lex, &exc, &builtin_templates(), 40, seed).unwrap();
        let policy = OptionalLiaisonPolicy::Seeded(seed);
        for s in &sents {
            let replayed =
                plr_predict(&lex, &exc, policy, &s.text_line()).unwrap();
            assert_eq!(&replayed, s);
        }
    }

    #[test]
    fn stats_shape_near_table_targets() {
        let (lex, exc) = setup();
        let lex = extend_with_nonsense(&lex, 60, 3).unwrap();
        let (_, sents) = generate_corpus(&lex, &exc, &builtin_templates(), 400, 42).unwrap();
        let stats = corpus_stats(&lex, &sents);
        assert!((stats.mean_words - 12.27).abs() <= 3.0, "mean words {}", stats.mean_words);
        assert!(stats.liaisons_per_sentence > 0.1, "{stats:?}");
        assert!(stats.linkings_per_sentence > 0.1, "{stats:?}");
    }

    #[test]
    fn lexicon_and_exception_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (lex, exc) = setup();
        let inv = PhonemeInventory::french_xsampa();
        let lp = dir.path().join("lexicon.tsv");
        lex.save(&lp).unwrap();
        let lex2 = RuleLexicon::load(&lp, &inv).unwrap();
        assert_eq!(lex.entries.len(), lex2.entries.len());
        for (a, b) in lex.entries.iter().zip(lex2.entries.iter()) {
            assert_eq!(a.entry, b.entry);
            assert_eq!(a.pos, b.pos);
            assert_eq!(a.liaison_phoneme, b.liaison_phoneme);
            assert_eq!(a.class, b.class);
            assert_eq!(a.vowel_initial, b.vowel_initial);
        }
        let ep = dir.path().join("exceptions.tsv");
        exc.save(&ep).unwrap();
        let exc2 = ExceptionTable::load(&ep).unwrap();
        assert_eq!(exc2.get("accent", "aigu"), Some("t"));
    }

    #[test]
    fn bad_liaison_entry_rejected() {
        let bad = vec![e("zut", &["z", "y", "t"], "INTJ", Some("z"), false, LiaisonClass::Obligatory)];
        assert!(matches!(
            RuleLexicon::new(bad),
            Err(OracleError::BadLiaisonEntry(_))
        ));
    }
}
