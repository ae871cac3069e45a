//! Experiment orchestration: declarative configuration, deterministic data
//! splitting, the subsampling schedule, artifact lineage, and the full
//! two-step training/evaluation chain shared by the CLI and the
//! acceptance suite.

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::g2p::{self, FitOptions, G2PConfig, G2PError, G2PModel};
use crate::metrics::{derive_categories, evaluate_report, EvalPair, EvalReport, MetricsError};
use crate::oracle::{OracleError, RuleLexicon};
use crate::plp::{
    self, extract_training_pairs, fit_plp, pos_weight_from_examples, BoundaryExample, PLPConfig,
    PLPError, PLPModel,
};
use crate::postag::{TagSet, Tagger};
use crate::transcript::{
    BoundaryMarker, PhonemeSequence, SentenceTranscript, TranscriptError, WordEntry,
};
use crate::vocab::{SymbolTable, VocabError};

/// Pipeline failures, grouped by CLI exit code: config errors exit 2,
/// data errors 3, lineage mismatches 4.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("lineage mismatch: {0}")]
    Lineage(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Lineage(_) => 4,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<TranscriptError> for PipelineError {
    fn from(e: TranscriptError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<VocabError> for PipelineError {
    fn from(e: VocabError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<OracleError> for PipelineError {
    fn from(e: OracleError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<MetricsError> for PipelineError {
    fn from(e: MetricsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<G2PError> for PipelineError {
    fn from(e: G2PError) -> Self {
        match e {
            G2PError::VocabHashMismatch(_) | G2PError::BadVersion(_) => {
                PipelineError::Lineage(e.to_string())
            }
            G2PError::BadConfig(_) => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<PLPError> for PipelineError {
    fn from(e: PLPError) -> Self {
        match e {
            PLPError::VocabHashMismatch(_) | PLPError::BadVersion(_) => {
                PipelineError::Lineage(e.to_string())
            }
            PLPError::BadConfig(_) => PipelineError::Config(e.to_string()),
            PLPError::G2P(inner) => PipelineError::from(inner),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

fn default_train_fraction() -> f64 {
    0.85
}
fn default_valid_fraction() -> f64 {
    0.05
}
fn default_test_fraction() -> f64 {
    0.10
}

/// Word-level split fractions (train/valid/test).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitFractions {
    #[serde(default = "default_train_fraction")]
    pub train: f64,
    #[serde(default = "default_valid_fraction")]
    pub valid: f64,
    #[serde(default = "default_test_fraction")]
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.85, valid: 0.05, test: 0.10 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let sum = self.train + self.valid + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PipelineError::Config(format!(
                "split fractions sum to {sum}, expected 1.0"
            )));
        }
        if self.train <= 0.0 || self.valid < 0.0 || self.test < 0.0 {
            return Err(PipelineError::Config("negative or zero split fraction".into()));
        }
        Ok(())
    }
}

fn default_threshold() -> f64 {
    0.5
}
fn default_plp_eval_size() -> usize {
    300
}

/// File locations used by the CLI commands. Relative paths are resolved
/// against the config file's directory by the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct PathsConfig {
    #[serde(default)]
    pub lexicon: PathBuf,
    #[serde(default)]
    pub corpus: PathBuf,
    #[serde(default)]
    pub vocab_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_dir: PathBuf,
}

/// One declarative file drives the whole experiment; CLI flags override
/// individual fields (flag > file > default).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub split: SplitFractions,
    /// PLP training-set size (boundary examples); defaults to everything
    /// available after the fixed validation/test carve-outs.
    #[serde(default)]
    pub plp_train_k: Option<usize>,
    /// Validation and test sizes for PLP, fixed independently of k.
    #[serde(default = "default_plp_eval_size")]
    pub plp_eval_size: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub g2p: G2PConfig,
    pub plp: PLPConfig,
    pub g2p_fit: FitOptions,
    pub plp_fit: FitOptions,
}

impl ExperimentConfig {
    /// Small deterministic defaults suitable for desk-scale runs.
    pub fn desk_scale() -> Self {
        ExperimentConfig {
            seed: 0,
            paths: PathsConfig::default(),
            split: SplitFractions::default(),
            plp_train_k: None,
            plp_eval_size: 300,
            threshold: 0.5,
            g2p: G2PConfig::tiny(128, 2),
            plp: PLPConfig::tiny(64),
            g2p_fit: FitOptions {
                lr: 1e-3,
                max_epochs: 40,
                patience: 20,
                batch_size: 16,
                ..Default::default()
            },
            plp_fit: FitOptions {
                lr: 1e-3,
                max_epochs: 30,
                patience: 30,
                batch_size: 32,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.split.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(PipelineError::Config("threshold must be in [0,1]".into()));
        }
        self.g2p
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.plp
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Content hash tying artifacts to the configuration that produced
    /// them.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        format!("{digest:x}")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = toml::to_string_pretty(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Deterministic shuffled partition of word entries; every entry lands in
/// exactly one split.
pub fn split_word_data(
    entries: &[WordEntry],
    fractions: SplitFractions,
    seed: u64,
) -> Result<(Vec<WordEntry>, Vec<WordEntry>, Vec<WordEntry>), PipelineError> {
    fractions.validate()?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = entries.len();
    let n_train = (n as f64 * fractions.train).round() as usize;
    let n_valid = ((n as f64 * fractions.valid).round() as usize).min(n - n_train);
    let take = |range: std::ops::Range<usize>| -> Vec<WordEntry> {
        order[range].iter().map(|&i| entries[i].clone()).collect()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_valid),
        take(n_train + n_valid..n),
    ))
}

/// Subsampling schedule in 25% steps, ceiling rounding (2045 → 512
/// endpoint).
pub fn subsample_schedule(full_k: usize) -> Result<Vec<usize>, PipelineError> {
    if full_k < 4 {
        return Err(PipelineError::Config(format!(
            "subsample schedule needs full_k >= 4, got {full_k}"
        )));
    }
    let step = |f: f64| (full_k as f64 * f).ceil() as usize;
    Ok(vec![full_k, step(0.75), step(0.5), step(0.25)])
}

const LINEAGE_PREFIX: &str = "# lineage: ";

/// Prepends a lineage header (config hash) to an artifact body.
pub fn with_lineage(hash: &str, body: &str) -> String {
    format!("{LINEAGE_PREFIX}{hash}\n{body}")
}

/// Splits a lineage header off an artifact; returns (hash, body).
pub fn split_lineage(text: &str) -> (Option<&str>, &str) {
    if let Some(rest) = text.strip_prefix(LINEAGE_PREFIX) {
        match rest.split_once('\n') {
            Some((hash, body)) => (Some(hash.trim()), body),
            None => (Some(rest.trim()), ""),
        }
    } else {
        (None, text)
    }
}

/// Refuses two artifacts with different recorded lineage (unless one has
/// none or `allow_mismatch` is set).
pub fn check_lineage(
    a: Option<&str>,
    b: Option<&str>,
    allow_mismatch: bool,
) -> Result<(), PipelineError> {
    if let (Some(a), Some(b)) = (a, b) {
        if a != b && !allow_mismatch {
            return Err(PipelineError::Lineage(format!(
                "artifact lineages differ: {a} vs {b}"
            )));
        }
    }
    Ok(())
}

/// Builds the three symbol tables from the word-level data and the
/// sentence corpus (graphemes from words, phonemes from pronunciations and
/// chunks, POS tags from the tag set).
pub fn build_vocabularies(
    entries: &[WordEntry],
    sentences: &[SentenceTranscript],
    tags: &TagSet,
) -> Result<(SymbolTable, SymbolTable, SymbolTable), PipelineError> {
    let mut graphemes: Vec<String> = Vec::new();
    let mut phonemes: Vec<String> = Vec::new();
    for e in entries {
        graphemes.extend(e.word.chars().map(|c| c.to_string()));
        phonemes.extend(e.pronunciation.symbols().iter().cloned());
    }
    for s in sentences {
        for (w, p) in &s.words {
            graphemes.extend(w.chars().map(|c| c.to_string()));
            phonemes.extend(p.symbols().iter().cloned());
        }
    }
    Ok((
        SymbolTable::build_from_corpus(graphemes)?,
        SymbolTable::build_from_corpus(phonemes)?,
        SymbolTable::build_from_corpus(tags.tags().iter())?,
    ))
}

/// Sentence-level corpus split: held-out validation and test slices sized
/// to carry at least `eval_boundaries` word boundaries each, remainder for
/// training.
pub struct CorpusSplit {
    pub train: Vec<SentenceTranscript>,
    pub valid: Vec<SentenceTranscript>,
    pub test: Vec<SentenceTranscript>,
}

pub fn split_sentences(
    sentences: &[SentenceTranscript],
    eval_boundaries: usize,
    seed: u64,
) -> Result<CorpusSplit, PipelineError> {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x73706c6974);
    order.shuffle(&mut rng);
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut train = Vec::new();
    let mut valid_b = 0usize;
    let mut test_b = 0usize;
    for &i in &order {
        let s = sentences[i].clone();
        let b = s.boundaries.len();
        if test_b < eval_boundaries {
            test_b += b;
            test.push(s);
        } else if valid_b < eval_boundaries {
            valid_b += b;
            valid.push(s);
        } else {
            train.push(s);
        }
    }
    if train.is_empty() {
        return Err(PipelineError::Data(
            "corpus too small for the requested validation/test carve-outs".into(),
        ));
    }
    Ok(CorpusSplit { train, valid, test })
}

/// Word-only baseline: isolated pronunciations joined with separator
/// markers everywhere — no post-lexical modeling at all.
pub fn word_only_baseline(
    reference: &SentenceTranscript,
    isolated: impl Fn(&str) -> Option<PhonemeSequence>,
) -> SentenceTranscript {
    let words: Vec<_> = reference
        .words
        .iter()
        .map(|(w, gold)| {
            let pron = isolated(w.as_str()).unwrap_or_else(|| gold.clone());
            (w.clone(), pron)
        })
        .collect();
    let boundaries = vec![BoundaryMarker::separator(); reference.boundaries.len()];
    SentenceTranscript::new(words, boundaries)
}

/// Evaluates hypothesis transcripts against references, deriving
/// liaison/linking categories through the lexicon's isolated
/// pronunciations when available.
pub fn evaluate_with_categories(
    hyps: &[SentenceTranscript],
    refs: &[SentenceTranscript],
    lexicon: Option<&RuleLexicon>,
) -> Result<EvalReport, PipelineError> {
    if hyps.len() != refs.len() {
        return Err(PipelineError::Data(format!(
            "hypothesis count {} != reference count {}",
            hyps.len(),
            refs.len()
        )));
    }
    let pairs: Vec<EvalPair> = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| EvalPair {
            hyp: h,
            reference: r,
            categories: derive_categories(r, |word| {
                lexicon.and_then(|lex| lex.get(word)).map(|e| e.entry.clone())
            }),
        })
        .collect();
    Ok(evaluate_report(&pairs)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct KRunReport {
    pub k: usize,
    pub pos_weight: f64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub report: EvalReport,
}

/// Everything the deterministic chain produces; serializes to a stable
/// JSON string for the determinism audit.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub g2p_params: usize,
    pub g2p_best_epoch: usize,
    pub g2p_train_per: f64,
    pub plp_params: usize,
    pub baseline: EvalReport,
    pub runs: Vec<KRunReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trained models kept alongside the report for further use (prediction,
/// checkpointing). The PLP model is the one trained at the first k of the
/// schedule (full k).
pub struct ExperimentArtifacts {
    pub graphemes: SymbolTable,
    pub phonemes: SymbolTable,
    pub pos_tags: SymbolTable,
    pub g2p: G2PModel,
    pub plp_full: Option<PLPModel>,
    pub report: ExperimentReport,
}

fn g2p_training_per(
    model: &G2PModel,
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    entries: &[WordEntry],
) -> Result<f64, PipelineError> {
    let mut dist = 0usize;
    let mut total = 0usize;
    for e in entries {
        let pred = model.pronounce(graphemes, phonemes, &e.word)?;
        dist += crate::metrics::levenshtein(pred.symbols(), e.pronunciation.symbols());
        total += e.pronunciation.len();
    }
    if total == 0 {
        return Err(PipelineError::Data("empty reference pronunciations".into()));
    }
    Ok(100.0 * dist as f64 / total as f64)
}

/// Runs the full two-step chain: G2P training on the word-level split,
/// then a PLP model per k of `ks` (freshly initialized each time),
/// evaluated sentence-level on the held-out test slice. Deterministic for
/// fixed config and inputs.
pub fn run_two_step(
    config: &ExperimentConfig,
    word_entries: &[WordEntry],
    sentences: &[SentenceTranscript],
    lexicon: Option<&RuleLexicon>,
    tagger: &dyn Tagger,
    ks: &[usize],
) -> Result<ExperimentArtifacts, PipelineError> {
    config.validate()?;
    let config_hash = config.hash();
    let tags = TagSet::toy();
    let (graphemes, phonemes, pos_tags) = build_vocabularies(word_entries, sentences, &tags)?;

    // Step one: word-level G2P.
    let (w_train, w_valid, _w_test) = split_word_data(word_entries, config.split, config.seed)?;
    let encode = |es: &[WordEntry]| -> Vec<g2p::EncodedPair> {
        es.iter().map(|e| g2p::encode_entry(&graphemes, &phonemes, e)).collect()
    };
    let mut g2p_model = G2PModel::new(config.g2p.clone(), &graphemes, &phonemes, config.seed)?;
    let valid_pairs = if w_valid.is_empty() { encode(&w_train) } else { encode(&w_valid) };
    let g2p_history = g2p::fit(&mut g2p_model, &encode(&w_train), &valid_pairs, &config.g2p_fit)?;
    let g2p_train_per = g2p_training_per(&g2p_model, &graphemes, &phonemes, &w_train)?;

    // Step two: boundary-level PLP over the sentence corpus.
    let corpus = split_sentences(sentences, config.plp_eval_size, config.seed)?;
    let mut pool = extract_training_pairs(
        &corpus.train,
        &g2p_model,
        tagger,
        &graphemes,
        &phonemes,
        &pos_tags,
        config.plp.window,
        false,
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x706f6f6c);
    pool.shuffle(&mut rng);
    if let Some(k) = config.plp_train_k {
        if k > pool.len() {
            return Err(PipelineError::Config(format!(
                "plp_train_k {k} exceeds available training examples {}",
                pool.len()
            )));
        }
        pool.truncate(k);
    }
    let mut valid_examples = extract_training_pairs(
        &corpus.valid,
        &g2p_model,
        tagger,
        &graphemes,
        &phonemes,
        &pos_tags,
        config.plp.window,
        false,
    )?;
    valid_examples.truncate(config.plp_eval_size);

    // Word-only baseline on the test slice.
    let isolated = |word: &str| -> Option<PhonemeSequence> {
        lexicon.and_then(|lex| lex.get(word)).map(|e| e.entry.pronunciation.clone())
    };
    let baseline_hyps: Vec<SentenceTranscript> = corpus
        .test
        .iter()
        .map(|s| word_only_baseline(s, isolated))
        .collect();
    let baseline = evaluate_with_categories(&baseline_hyps, &corpus.test, lexicon)?;

    let mut runs = Vec::new();
    let mut plp_full = None;
    let mut plp_params = 0;
    for (run_idx, &k) in ks.iter().enumerate() {
        if k > pool.len() {
            return Err(PipelineError::Config(format!(
                "k {k} exceeds available training examples {}",
                pool.len()
            )));
        }
        let train_slice: Vec<BoundaryExample> = pool[..k].to_vec();
        let mut plp_config = config.plp.clone();
        plp_config.pos_weight = pos_weight_from_examples(&train_slice);
        let mut plp_model =
            PLPModel::new(plp_config.clone(), &graphemes, &phonemes, &pos_tags, config.seed)?;
        let history = fit_plp(&mut plp_model, &train_slice, &valid_examples, &config.plp_fit)?;
        let hyps: Vec<SentenceTranscript> = corpus
            .test
            .iter()
            .map(|s| {
                plp::apply_to_sentence(
                    &plp_model,
                    &g2p_model,
                    tagger,
                    &graphemes,
                    &phonemes,
                    &pos_tags,
                    &s.text_line(),
                    config.threshold,
                )
            })
            .collect::<Result<_, _>>()?;
        let report = evaluate_with_categories(&hyps, &corpus.test, lexicon)?;
        runs.push(KRunReport {
            k,
            pos_weight: plp_config.pos_weight,
            best_epoch: history.best_epoch,
            epochs: history.epochs.len(),
            report,
        });
        plp_params = plp_model.param_count();
        if run_idx == 0 {
            plp_full = Some(plp_model);
        }
    }

    let report = ExperimentReport {
        config_hash,
        g2p_params: g2p_model.param_count(),
        g2p_best_epoch: g2p_history.best_epoch,
        g2p_train_per,
        plp_params,
        baseline,
        runs,
    };
    Ok(ExperimentArtifacts { graphemes, phonemes, pos_tags, g2p: g2p_model, plp_full, report })
}
