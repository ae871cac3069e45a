//! Post-lexical phonetization: a shallow non-autoregressive dual-head model
//! over adjacent-word boundary windows. One head predicts whether a
//! phonological phenomenon (liaison/linking) occurs at the boundary, the
//! other predicts the connecting phoneme.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::g2p::{FitOptions, G2PError, G2PModel};
use crate::nn::{
    decoder_layer_param_count, encoder_layer_param_count, positional_encoding, sigmoid,
    softmax_rows, tile_positions, AdamW, DecoderLayer, Embedding, EncoderLayer, LayerNorm,
    Linear, Matrix, NodeId, ParamSet, Tape,
};
use crate::oracle::{render_transcript, BoundaryDecision};
use crate::postag::Tagger;
use crate::transcript::{GraphemeString, PhonemeSequence, SentenceTranscript, WordEntry};
use crate::vocab::{SymbolTable, PAD, SEP};

/// Number of reserved special ids at the front of every symbol table.
const SPECIAL_IDS: usize = 5;

#[derive(Debug, Error)]
pub enum PLPError {
    #[error("empty word at a boundary")]
    EmptyWord,
    #[error("empty sentence")]
    EmptySentence,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("example has y_phen = 1 but no phoneme label")]
    MissingPhonemeLabel,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("example window size {0} does not match model window size {1}")]
    WindowMismatch(usize, usize),
    #[error("checkpoint vocabulary hash mismatch ({0})")]
    VocabHashMismatch(&'static str),
    #[error("unsupported checkpoint version {0:?}")]
    BadVersion(String),
    #[error("malformed {0}")]
    Malformed(String),
    #[error(transparent)]
    G2P(#[from] G2PError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary context window: last `n` symbols of the left word, first `m`
/// of the right word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub n: usize,
    pub m: usize,
}

impl Default for ContextWindow {
    fn default() -> Self {
        ContextWindow { n: 5, m: 5 }
    }
}

impl ContextWindow {
    pub fn validate(&self) -> Result<(), PLPError> {
        if self.n == 0 || self.m == 0 {
            return Err(PLPError::BadConfig("window sides must be >= 1".into()));
        }
        Ok(())
    }

    /// Window sequence length: left part, SEP, right part.
    pub fn len(&self) -> usize {
        self.n + 1 + self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PLPConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// WBCE positive-class weight; typically #negatives/#positives on the
    /// training split.
    pub pos_weight: f64,
    pub window: ContextWindow,
}

impl PLPConfig {
    /// Full-scale configuration: 2 layers (encoder and decoder each),
    /// 8 heads, 512-dimensional embeddings.
    pub fn full_scale() -> Self {
        PLPConfig {
            layers: 2,
            heads: 8,
            model_dim: 512,
            ff_dim: 2048,
            dropout: 0.1,
            pos_weight: 1.0,
            window: ContextWindow::default(),
        }
    }

    pub fn tiny(model_dim: usize) -> Self {
        PLPConfig {
            layers: 2,
            heads: if model_dim >= 64 { 4 } else { 2 },
            model_dim,
            ff_dim: model_dim * 2,
            dropout: 0.1,
            pos_weight: 1.0,
            window: ContextWindow::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PLPError> {
        if self.model_dim % self.heads != 0 {
            return Err(PLPError::BadConfig("model_dim not divisible by heads".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PLPError::BadConfig("dropout must be in [0,1)".into()));
        }
        if self.pos_weight <= 0.0 {
            return Err(PLPError::BadConfig("pos_weight must be positive".into()));
        }
        if self.layers == 0 || self.model_dim == 0 {
            return Err(PLPError::BadConfig("zero-sized architecture".into()));
        }
        self.window.validate()
    }
}

/// Closed-form parameter count; must agree exactly with the runtime
/// counter. POS tags share the encoder embedding table via an id offset.
pub fn plp_param_count(
    config: &PLPConfig,
    grapheme_vocab: usize,
    phoneme_vocab: usize,
    pos_vocab: usize,
) -> usize {
    let d = config.model_dim;
    let ff = config.ff_dim;
    let embeddings = (grapheme_vocab + pos_vocab) * d + phoneme_vocab * d;
    let encoder = config.layers * encoder_layer_param_count(d, ff) + 2 * d;
    let decoder = config.layers * decoder_layer_param_count(d, ff) + 2 * d;
    let heads = (d + 1) + (d * phoneme_vocab + phoneme_vocab);
    embeddings + encoder + decoder + heads
}

/// One boundary training/inference example. Grapheme and phoneme windows
/// share the layout: left part right-aligned with leading PAD, SEP at
/// index `n`, right part left-aligned with trailing PAD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryExample {
    pub enc_ids: Vec<usize>,
    pub enc_mask: Vec<bool>,
    /// POS-tag ids of the left and right words, in the tag table's space.
    pub pos_ids: [usize; 2],
    pub dec_ids: Vec<usize>,
    pub dec_mask: Vec<bool>,
    pub y_phen: bool,
    pub y_ph: Option<usize>,
}

fn window_ids<S: AsRef<str>>(
    left: &[S],
    right: &[S],
    window: ContextWindow,
    table: &SymbolTable,
) -> (Vec<usize>, Vec<bool>) {
    let n = window.n;
    let m = window.m;
    let mut ids = Vec::with_capacity(window.len());
    let mut mask = Vec::with_capacity(window.len());
    let left_take = left.len().min(n);
    for _ in 0..n - left_take {
        ids.push(PAD);
        mask.push(false);
    }
    for s in &left[left.len() - left_take..] {
        ids.push(table.encode(s.as_ref()));
        mask.push(true);
    }
    ids.push(SEP);
    mask.push(true);
    let right_take = right.len().min(m);
    for s in &right[..right_take] {
        ids.push(table.encode(s.as_ref()));
        mask.push(true);
    }
    for _ in 0..m - right_take {
        ids.push(PAD);
        mask.push(false);
    }
    (ids, mask)
}

/// Builds an unlabeled boundary example from the two words, their
/// pronunciations, and their POS tags. Labels are attached by the caller.
#[allow(clippy::too_many_arguments)]
pub fn build_boundary_example(
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    pos_tags: &SymbolTable,
    window: ContextWindow,
    word_i: &GraphemeString,
    word_i1: &GraphemeString,
    pron_i: &PhonemeSequence,
    pron_i1: &PhonemeSequence,
    pos_i: &str,
    pos_i1: &str,
) -> Result<BoundaryExample, PLPError> {
    if word_i.as_str().is_empty() || word_i1.as_str().is_empty() {
        return Err(PLPError::EmptyWord);
    }
    let left_g: Vec<String> = word_i.chars().map(|c| c.to_string()).collect();
    let right_g: Vec<String> = word_i1.chars().map(|c| c.to_string()).collect();
    let (enc_ids, enc_mask) = window_ids(&left_g, &right_g, window, graphemes);
    let (dec_ids, dec_mask) =
        window_ids(pron_i.symbols(), pron_i1.symbols(), window, phonemes);
    Ok(BoundaryExample {
        enc_ids,
        enc_mask,
        pos_ids: [pos_tags.encode(pos_i), pos_tags.encode(pos_i1)],
        dec_ids,
        dec_mask,
        y_phen: false,
        y_ph: None,
    })
}

fn empty_matrix() -> Matrix {
    Matrix::zeros((0, 0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PLPModel {
    pub config: PLPConfig,
    pub params: ParamSet,
    /// Shared encoder table: grapheme ids, then POS ids offset by the
    /// grapheme vocabulary size.
    enc_embed: Embedding,
    dec_embed: Embedding,
    enc_layers: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    dec_layers: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    phen_head: Linear,
    ph_head: Linear,
    pub grapheme_vocab: usize,
    pub phoneme_vocab: usize,
    pub pos_vocab: usize,
    pub grapheme_vocab_hash: String,
    pub phoneme_vocab_hash: String,
    pub pos_vocab_hash: String,
    #[serde(skip, default = "empty_matrix")]
    pe: Matrix,
}

impl PLPModel {
    pub fn new(
        config: PLPConfig,
        graphemes: &SymbolTable,
        phonemes: &SymbolTable,
        pos_tags: &SymbolTable,
        seed: u64,
    ) -> Result<Self, PLPError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut ps = ParamSet::default();
        let d = config.model_dim;
        let enc_embed =
            Embedding::new(&mut ps, &mut rng, "enc_embed", graphemes.len() + pos_tags.len(), d);
        let dec_embed = Embedding::new(&mut ps, &mut rng, "dec_embed", phonemes.len(), d);
        let enc_layers = (0..config.layers)
            .map(|i| EncoderLayer::new(&mut ps, &mut rng, &format!("enc{i}"), d, config.heads, config.ff_dim))
            .collect();
        let enc_norm = LayerNorm::new(&mut ps, "enc_norm", d);
        let dec_layers = (0..config.layers)
            .map(|i| DecoderLayer::new(&mut ps, &mut rng, &format!("dec{i}"), d, config.heads, config.ff_dim))
            .collect();
        let dec_norm = LayerNorm::new(&mut ps, "dec_norm", d);
        let phen_head = Linear::new(&mut ps, &mut rng, "phen_head", d, 1);
        let ph_head = Linear::new(&mut ps, &mut rng, "ph_head", d, phonemes.len());
        let pe = positional_encoding(config.window.len() + 2, d);
        Ok(PLPModel {
            config,
            params: ps,
            enc_embed,
            dec_embed,
            enc_layers,
            enc_norm,
            dec_layers,
            dec_norm,
            phen_head,
            ph_head,
            grapheme_vocab: graphemes.len(),
            phoneme_vocab: phonemes.len(),
            pos_vocab: pos_tags.len(),
            grapheme_vocab_hash: graphemes.hash(),
            phoneme_vocab_hash: phonemes.hash(),
            pos_vocab_hash: pos_tags.hash(),
            pe,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn rebuild_positional(&mut self) {
        self.pe = positional_encoding(self.config.window.len() + 2, self.config.model_dim);
    }

    /// Range of flat-gradient indices belonging to the phoneme head, for
    /// the gated-CE gradient probe.
    pub fn phoneme_head_flat_ranges(&self) -> Vec<std::ops::Range<usize>> {
        vec![
            self.params.flat_range(self.ph_head.w),
            self.params.flat_range(self.ph_head.b),
        ]
    }

    /// Single parallel pass over a batch: returns (phenomenon logits node,
    /// phoneme logits node), both read from the decoder SEP row.
    fn forward_batch(
        &self,
        tape: &mut Tape,
        batch: &[&BoundaryExample],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<(NodeId, NodeId), PLPError> {
        if batch.is_empty() {
            return Err(PLPError::EmptyBatch);
        }
        let w_len = self.config.window.len();
        let t_enc = w_len + 2; // grapheme window plus two POS positions
        let t_dec = w_len;
        let b = batch.len();
        let mut enc_ids = Vec::with_capacity(b * t_enc);
        let mut enc_mask = Vec::with_capacity(b * t_enc);
        let mut dec_ids = Vec::with_capacity(b * t_dec);
        let mut dec_mask = Vec::with_capacity(b * t_dec);
        for ex in batch {
            if ex.enc_ids.len() != w_len || ex.dec_ids.len() != w_len {
                return Err(PLPError::WindowMismatch(ex.enc_ids.len(), w_len));
            }
            enc_ids.extend_from_slice(&ex.enc_ids);
            enc_ids.push(self.grapheme_vocab + ex.pos_ids[0]);
            enc_ids.push(self.grapheme_vocab + ex.pos_ids[1]);
            enc_mask.extend_from_slice(&ex.enc_mask);
            enc_mask.push(true);
            enc_mask.push(true);
            dec_ids.extend_from_slice(&ex.dec_ids);
            dec_mask.extend_from_slice(&ex.dec_mask);
        }

        let x = self.enc_embed.forward(tape, &self.params, &enc_ids);
        let pos = tile_positions(&self.pe, b, t_enc);
        let mut x = tape.add_const(x, &pos);
        x = tape.dropout(x, dropout, rng);
        for layer in &self.enc_layers {
            x = layer.forward(tape, &self.params, x, t_enc, &enc_mask, dropout, rng);
        }
        let memory = self.enc_norm.forward(tape, &self.params, x);

        let y = self.dec_embed.forward(tape, &self.params, &dec_ids);
        let pos = tile_positions(&self.pe, b, t_dec);
        let mut y = tape.add_const(y, &pos);
        y = tape.dropout(y, dropout, rng);
        for layer in &self.dec_layers {
            // Non-autoregressive: no causal mask, one parallel pass.
            y = layer.forward(
                tape, &self.params, y, memory, t_dec, t_enc, false, &dec_mask, &enc_mask,
                dropout, rng,
            );
        }
        let y = self.dec_norm.forward(tape, &self.params, y);

        let sep_rows: Vec<usize> = (0..b).map(|i| i * t_dec + self.config.window.n).collect();
        let pooled = tape.gather_rows(y, &sep_rows);
        let phen_logits = self.phen_head.forward(tape, &self.params, pooled);
        let ph_logits = self.ph_head.forward(tape, &self.params, pooled);
        Ok((phen_logits, ph_logits))
    }

    /// Inference on one example: phenomenon probability plus a normalized
    /// distribution over the phoneme vocabulary.
    pub fn forward(&self, example: &BoundaryExample) -> Result<(f64, Vec<f64>), PLPError> {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut tape = Tape::new(false);
        let (phen, ph) = self.forward_batch(&mut tape, &[example], 0.0, &mut rng)?;
        let p = sigmoid(tape.value(phen)[[0, 0]]);
        let dist = softmax_rows(tape.value(ph)).row(0).to_vec();
        Ok((p, dist))
    }

    /// Builds the combined loss graph on a batch; returns
    /// (L_plp, L_phen, L_ph) and optionally backpropagates.
    fn loss_batch(
        &mut self,
        batch: &[&BoundaryExample],
        train: bool,
        rng: &mut ChaCha20Rng,
        backprop: bool,
    ) -> Result<(f64, f64, f64), PLPError> {
        let b = batch.len();
        let mut phen_targets = Vec::with_capacity(b);
        let mut ph_targets = Vec::with_capacity(b);
        let mut ph_weights = Vec::with_capacity(b);
        for ex in batch {
            phen_targets.push(if ex.y_phen { 1.0 } else { 0.0 });
            match (ex.y_phen, ex.y_ph) {
                (true, Some(id)) => {
                    ph_targets.push(id);
                    ph_weights.push(1.0);
                }
                (true, None) => return Err(PLPError::MissingPhonemeLabel),
                (false, _) => {
                    ph_targets.push(PAD); // inert: weight 0 gates it out
                    ph_weights.push(0.0);
                }
            }
        }
        let dropout = if train { self.config.dropout } else { 0.0 };
        let mut tape = Tape::new(train);
        let (phen_logits, ph_logits) = self.forward_batch(&mut tape, batch, dropout, rng)?;
        let l_phen =
            tape.wbce_with_logits(phen_logits, &phen_targets, self.config.pos_weight, b as f64);
        let l_ph = tape.cross_entropy(ph_logits, &ph_targets, &ph_weights, b as f64);
        let l_plp = tape.add(l_phen, l_ph);
        let total = tape.value(l_plp)[[0, 0]];
        let phen_v = tape.value(l_phen)[[0, 0]];
        let ph_v = tape.value(l_ph)[[0, 0]];
        if backprop {
            tape.backward(l_plp, &mut self.params);
        }
        Ok((total, phen_v, ph_v))
    }

    /// One optimizer update; returns (L_plp, L_phen, L_ph).
    pub fn train_step(
        &mut self,
        batch: &[&BoundaryExample],
        opt: &mut AdamW,
        rng: &mut ChaCha20Rng,
    ) -> Result<(f64, f64, f64), PLPError> {
        self.params.zero_grads();
        let losses = self.loss_batch(batch, true, rng, true)?;
        opt.step(&mut self.params);
        Ok(losses)
    }

    /// Evaluation-mode losses without an update.
    pub fn eval_loss(&mut self, batch: &[&BoundaryExample]) -> Result<(f64, f64, f64), PLPError> {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        self.loss_batch(batch, false, &mut rng, false)
    }

    /// Like [`eval_loss`](Self::eval_loss) but also backpropagates, for
    /// gradient probes.
    pub fn eval_loss_with_grads(
        &mut self,
        batch: &[&BoundaryExample],
    ) -> Result<(f64, f64, f64), PLPError> {
        self.params.zero_grads();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        self.loss_batch(batch, false, &mut rng, true)
    }
}

/// The three losses computed straight from probabilities, for oracle comparisons.
/// All inputs are per-example; returns (L_plp, L_phen, L_ph) means.
pub fn plp_loss_reference(
    p_phen: &[f64],
    ph_dists: &[Vec<f64>],
    y_phen: &[f64],
    y_ph: &[Option<usize>],
    pos_weight: f64,
) -> (f64, f64, f64) {
    let l_phen = wbce(p_phen, y_phen, pos_weight);
    let mut ce = 0.0;
    for ((dist, &y), ph) in ph_dists.iter().zip(y_phen).zip(y_ph) {
        if y > 0.5 {
            ce -= dist[ph.expect("labeled positive")].max(1e-300).ln();
        }
    }
    let l_ph = ce / p_phen.len() as f64;
    (l_phen + l_ph, l_phen, l_ph)
}

/// Weighted binary cross entropy over probabilities, mean over the
/// batch. `pos_weight = 1` reduces to plain BCE.
pub fn wbce(p: &[f64], y: &[f64], pos_weight: f64) -> f64 {
    const EPS: f64 = 1e-12;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / p.len() as f64
}

/// WBCE positive-class weight from label counts: #negatives / #positives
/// (1.0 when a class is absent).
pub fn pos_weight_from_examples(examples: &[BoundaryExample]) -> f64 {
    let pos = examples.iter().filter(|e| e.y_phen).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Word-to-pronunciation cache so repeated words cost one G2P decode.
pub struct PronCache<'a> {
    g2p: &'a G2PModel,
    graphemes: &'a SymbolTable,
    phonemes: &'a SymbolTable,
    cache: HashMap<String, PhonemeSequence>,
}

impl<'a> PronCache<'a> {
    pub fn new(g2p: &'a G2PModel, graphemes: &'a SymbolTable, phonemes: &'a SymbolTable) -> Self {
        PronCache { g2p, graphemes, phonemes, cache: HashMap::new() }
    }

    pub fn pronounce(&mut self, word: &GraphemeString) -> Result<PhonemeSequence, G2PError> {
        if let Some(p) = self.cache.get(word.as_str()) {
            return Ok(p.clone());
        }
        let p = self.g2p.pronounce(self.graphemes, self.phonemes, word)?;
        self.cache.insert(word.as_str().to_string(), p.clone());
        Ok(p)
    }
}

/// Extracts one labeled example per word boundary of every transcript.
/// Decoder phoneme windows come from G2P predictions (set `use_gold` to
/// substitute the annotated chunks for ablation).
#[allow(clippy::too_many_arguments)]
pub fn extract_training_pairs(
    corpus: &[SentenceTranscript],
    g2p: &G2PModel,
    tagger: &dyn Tagger,
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    pos_tags: &SymbolTable,
    window: ContextWindow,
    use_gold: bool,
) -> Result<Vec<BoundaryExample>, PLPError> {
    let mut cache = PronCache::new(g2p, graphemes, phonemes);
    let mut out = Vec::new();
    for sentence in corpus {
        let words: Vec<GraphemeString> =
            sentence.words.iter().map(|(w, _)| w.clone()).collect();
        let tags = tagger.tag(&words);
        let prons: Vec<PhonemeSequence> = if use_gold {
            sentence.words.iter().map(|(_, p)| p.clone()).collect()
        } else {
            words
                .iter()
                .map(|w| cache.pronounce(w))
                .collect::<Result<_, _>>()?
        };
        for i in 0..words.len() - 1 {
            let mut ex = build_boundary_example(
                graphemes,
                phonemes,
                pos_tags,
                window,
                &words[i],
                &words[i + 1],
                &prons[i],
                &prons[i + 1],
                &tags[i],
                &tags[i + 1],
            )?;
            if let Some(ph) = sentence.boundary_phoneme(i) {
                ex.y_phen = true;
                ex.y_ph = Some(phonemes.encode(ph));
            }
            out.push(ex);
        }
    }
    Ok(out)
}

/// Runs the full two-step pipeline on one preprocessed sentence: G2P per
/// word, then a boundary decision per adjacent pair at the given
/// threshold, rendered with the move-if-equal / insert-otherwise rule.
#[allow(clippy::too_many_arguments)]
pub fn apply_to_sentence(
    plp: &PLPModel,
    g2p: &G2PModel,
    tagger: &dyn Tagger,
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    pos_tags: &SymbolTable,
    sentence_text: &str,
    threshold: f64,
) -> Result<SentenceTranscript, PLPError> {
    let words: Vec<GraphemeString> = GraphemeString::new(sentence_text).words();
    if words.is_empty() {
        return Err(PLPError::EmptySentence);
    }
    let tags = tagger.tag(&words);
    let mut cache = PronCache::new(g2p, graphemes, phonemes);
    let prons: Vec<PhonemeSequence> =
        words.iter().map(|w| cache.pronounce(w)).collect::<Result<_, _>>()?;
    let mut decisions = Vec::with_capacity(words.len().saturating_sub(1));
    for i in 0..words.len() - 1 {
        let ex = build_boundary_example(
            graphemes,
            phonemes,
            pos_tags,
            plp.config.window,
            &words[i],
            &words[i + 1],
            &prons[i],
            &prons[i + 1],
            &tags[i],
            &tags[i + 1],
        )?;
        let (p, dist) = plp.forward(&ex)?;
        if p >= threshold {
            // Argmax over real phonemes; specials are never valid labels.
            let (best, _) = dist
                .iter()
                .enumerate()
                .skip(SPECIAL_IDS)
                .fold((SPECIAL_IDS, f64::NEG_INFINITY), |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            let phoneme = phonemes
                .decode(best)
                .map_err(|e| PLPError::Malformed(e.to_string()))?
                .to_string();
            decisions.push(BoundaryDecision::Phenomenon { phoneme });
        } else {
            decisions.push(BoundaryDecision::Separator);
        }
    }
    let entries: Vec<WordEntry> = words
        .into_iter()
        .zip(prons)
        .map(|(w, p)| WordEntry::new(w, p))
        .collect();
    Ok(render_transcript(&entries, &decisions))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossTriple {
    pub l_plp: f64,
    pub l_phen: f64,
    pub l_ph: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PLPEpochRecord {
    pub epoch: usize,
    pub train: LossTriple,
    pub valid: LossTriple,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PLPFitHistory {
    pub epochs: Vec<PLPEpochRecord>,
    pub best_epoch: usize,
    pub best_valid_l_plp: f64,
}

fn mean_triple(acc: (f64, f64, f64), n: usize) -> LossTriple {
    LossTriple { l_plp: acc.0 / n as f64, l_phen: acc.1 / n as f64, l_ph: acc.2 / n as f64 }
}

/// Trains the combined loss with AdamW; early stopping (patience on validation
/// L_plp) restores the best checkpoint.
pub fn fit_plp(
    model: &mut PLPModel,
    train: &[BoundaryExample],
    valid: &[BoundaryExample],
    options: &FitOptions,
) -> Result<PLPFitHistory, PLPError> {
    if train.is_empty() {
        return Err(PLPError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(PLPError::EmptySplit("valid"));
    }
    let mut opt = AdamW::new(&model.params, options.lr, options.weight_decay);
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Option<ParamSet> = None;
    let mut since_improve = 0usize;
    for epoch in 1..=options.max_epochs {
        order.shuffle(&mut rng);
        let mut train_acc = (0.0, 0.0, 0.0);
        let mut train_batches = 0usize;
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<&BoundaryExample> = chunk.iter().map(|&i| &train[i]).collect();
            let (a, b, c) = model.train_step(&batch, &mut opt, &mut rng)?;
            train_acc = (train_acc.0 + a, train_acc.1 + b, train_acc.2 + c);
            train_batches += 1;
        }
        let mut valid_acc = (0.0, 0.0, 0.0);
        let mut valid_batches = 0usize;
        for chunk in valid.chunks(options.batch_size) {
            let batch: Vec<&BoundaryExample> = chunk.iter().collect();
            let (a, b, c) = model.eval_loss(&batch)?;
            valid_acc = (valid_acc.0 + a, valid_acc.1 + b, valid_acc.2 + c);
            valid_batches += 1;
        }
        let record = PLPEpochRecord {
            epoch,
            train: mean_triple(train_acc, train_batches),
            valid: mean_triple(valid_acc, valid_batches),
        };
        let valid_l_plp = record.valid.l_plp;
        history.push(record);
        if valid_l_plp < best_valid {
            best_valid = valid_l_plp;
            best_epoch = epoch;
            best_params = Some(model.params.clone());
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= options.patience {
                break;
            }
        }
    }
    if let Some(best) = best_params {
        model.params = best;
    }
    Ok(PLPFitHistory { epochs: history, best_epoch, best_valid_l_plp: best_valid })
}

const CHECKPOINT_VERSION: &str = "frpron-plp-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    model: PLPModel,
}

pub fn save_checkpoint(model: &PLPModel, path: &std::path::Path) -> Result<(), PLPError> {
    let ckpt = Checkpoint { version: CHECKPOINT_VERSION.to_string(), model: model.clone() };
    let json = serde_json::to_string(&ckpt).map_err(|e| PLPError::Malformed(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(
    path: &std::path::Path,
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    pos_tags: &SymbolTable,
) -> Result<PLPModel, PLPError> {
    let json = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&json).map_err(|e| PLPError::Malformed(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(PLPError::BadVersion(ckpt.version));
    }
    let mut model = ckpt.model;
    if model.grapheme_vocab_hash != graphemes.hash() {
        return Err(PLPError::VocabHashMismatch("graphemes"));
    }
    if model.phoneme_vocab_hash != phonemes.hash() {
        return Err(PLPError::VocabHashMismatch("phonemes"));
    }
    if model.pos_vocab_hash != pos_tags.hash() {
        return Err(PLPError::VocabHashMismatch("pos"));
    }
    model.rebuild_positional();
    Ok(model)
}

fn ids_field(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_ids(field: &str) -> Result<Vec<usize>, PLPError> {
    field
        .split(',')
        .map(|s| s.parse().map_err(|_| PLPError::Malformed(format!("id field {field:?}"))))
        .collect()
}

/// One-record-per-line dump of boundary examples, for debugging and oracle
/// cross-checks. Masks are implied by PAD ids and are reconstructed on
/// parse.
pub fn dump_examples(examples: &[BoundaryExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&format!(
            "enc={} pos={},{} dec={} y_phen={} y_ph={}\n",
            ids_field(&ex.enc_ids),
            ex.pos_ids[0],
            ex.pos_ids[1],
            ids_field(&ex.dec_ids),
            u8::from(ex.y_phen),
            ex.y_ph.map_or("-".to_string(), |id| id.to_string()),
        ));
    }
    out
}

pub fn parse_examples_dump(text: &str) -> Result<Vec<BoundaryExample>, PLPError> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut fields = HashMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| PLPError::Malformed(format!("dump line {line:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| PLPError::Malformed(format!("missing field {k} in {line:?}")))
        };
        let enc_ids = parse_ids(get("enc")?)?;
        let dec_ids = parse_ids(get("dec")?)?;
        let pos = parse_ids(get("pos")?)?;
        if pos.len() != 2 {
            return Err(PLPError::Malformed(format!("pos field in {line:?}")));
        }
        let y_phen = match get("y_phen")? {
            "1" => true,
            "0" => false,
            other => return Err(PLPError::Malformed(format!("y_phen {other:?}"))),
        };
        let y_ph = match get("y_ph")? {
            "-" => None,
            id => Some(
                id.parse()
                    .map_err(|_| PLPError::Malformed(format!("y_ph {id:?}")))?,
            ),
        };
        let enc_mask = enc_ids.iter().map(|&i| i != PAD).collect();
        let dec_mask = dec_ids.iter().map(|&i| i != PAD).collect();
        out.push(BoundaryExample {
            enc_ids,
            enc_mask,
            pos_ids: [pos[0], pos[1]],
            dec_ids,
            dec_mask,
            y_phen,
            y_ph,
        });
    }
    Ok(out)
}
