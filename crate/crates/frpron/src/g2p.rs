//! Autoregressive transformer encoder-decoder mapping a word's grapheme
//! sequence to its phoneme sequence, trained with cross entropy over
//! word/pronunciation pairs.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    decoder_layer_param_count, encoder_layer_param_count, positional_encoding, softmax_rows,
    tile_positions, AdamW, DecoderLayer, Embedding, EncoderLayer, LayerNorm, Linear, Matrix,
    NodeId, ParamSet, Tape,
};
use crate::transcript::{GraphemeString, PhonemeSequence, WordEntry};
use crate::vocab::{SymbolTable, BOS, EOS, PAD};

#[derive(Debug, Error)]
pub enum G2PError {
    #[error("source sequence length {0} exceeds max_src_len {1}")]
    SourceTooLong(usize, usize),
    #[error("target sequence length {0} exceeds max_tgt_len {1}")]
    TargetTooLong(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("checkpoint vocabulary hash mismatch ({0})")]
    VocabHashMismatch(&'static str),
    #[error("unsupported checkpoint version {0:?}")]
    BadVersion(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct G2PConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    #[serde(default = "default_max_len")]
    pub max_src_len: usize,
    #[serde(default = "default_max_len")]
    pub max_tgt_len: usize,
}

fn default_max_len() -> usize {
    32
}

impl G2PConfig {
    /// The full-scale configuration (8 layers each, 8 heads, 512/2048).
    pub fn full_scale() -> Self {
        G2PConfig {
            encoder_layers: 8,
            decoder_layers: 8,
            heads: 8,
            model_dim: 512,
            ff_dim: 2048,
            dropout: 0.1,
            max_src_len: 32,
            max_tgt_len: 32,
        }
    }

    /// Small configuration for tests and desk-scale runs.
    pub fn tiny(model_dim: usize, layers: usize) -> Self {
        G2PConfig {
            encoder_layers: layers,
            decoder_layers: layers,
            heads: if model_dim >= 64 { 4 } else { 2 },
            model_dim,
            ff_dim: model_dim * 2,
            dropout: 0.1,
            max_src_len: 32,
            max_tgt_len: 32,
        }
    }

    pub fn validate(&self) -> Result<(), G2PError> {
        if self.model_dim % self.heads != 0 {
            return Err(G2PError::BadConfig("model_dim not divisible by heads".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(G2PError::BadConfig("dropout must be in [0,1)".into()));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 || self.model_dim == 0 {
            return Err(G2PError::BadConfig("zero-sized architecture".into()));
        }
        Ok(())
    }
}

/// Closed-form parameter count for a config and vocabulary sizes; must
/// agree exactly with the runtime counter.
pub fn g2p_param_count(config: &G2PConfig, grapheme_vocab: usize, phoneme_vocab: usize) -> usize {
    let d = config.model_dim;
    let ff = config.ff_dim;
    let embeddings = grapheme_vocab * d + phoneme_vocab * d;
    let encoder = config.encoder_layers * encoder_layer_param_count(d, ff) + 2 * d;
    let decoder = config.decoder_layers * decoder_layer_param_count(d, ff) + 2 * d;
    let output = d * phoneme_vocab + phoneme_vocab;
    embeddings + encoder + decoder + output
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2PModel {
    pub config: G2PConfig,
    pub params: ParamSet,
    src_embed: Embedding,
    tgt_embed: Embedding,
    enc_layers: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    dec_layers: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    out_proj: Linear,
    pub grapheme_vocab: usize,
    pub phoneme_vocab: usize,
    pub grapheme_vocab_hash: String,
    pub phoneme_vocab_hash: String,
    #[serde(skip, default = "empty_matrix")]
    pe: Matrix,
}

fn empty_matrix() -> Matrix {
    Matrix::zeros((0, 0))
}

/// One encoded training pair: grapheme ids and phoneme ids, no specials.
pub type EncodedPair = (Vec<usize>, Vec<usize>);

pub fn encode_word(table: &SymbolTable, word: &GraphemeString) -> Vec<usize> {
    word.chars().map(|c| table.encode(&c.to_string())).collect()
}

pub fn encode_pron(table: &SymbolTable, pron: &PhonemeSequence) -> Vec<usize> {
    table.encode_sequence(pron.symbols())
}

pub fn encode_entry(
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
    entry: &WordEntry,
) -> EncodedPair {
    (
        encode_word(graphemes, &entry.word),
        encode_pron(phonemes, &entry.pronunciation),
    )
}

impl G2PModel {
    pub fn new(
        config: G2PConfig,
        graphemes: &SymbolTable,
        phonemes: &SymbolTable,
        seed: u64,
    ) -> Result<Self, G2PError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut ps = ParamSet::default();
        let d = config.model_dim;
        let src_embed = Embedding::new(&mut ps, &mut rng, "src_embed", graphemes.len(), d);
        let tgt_embed = Embedding::new(&mut ps, &mut rng, "tgt_embed", phonemes.len(), d);
        let enc_layers = (0..config.encoder_layers)
            .map(|i| EncoderLayer::new(&mut ps, &mut rng, &format!("enc{i}"), d, config.heads, config.ff_dim))
            .collect();
        let enc_norm = LayerNorm::new(&mut ps, "enc_norm", d);
        let dec_layers = (0..config.decoder_layers)
            .map(|i| DecoderLayer::new(&mut ps, &mut rng, &format!("dec{i}"), d, config.heads, config.ff_dim))
            .collect();
        let dec_norm = LayerNorm::new(&mut ps, "dec_norm", d);
        let out_proj = Linear::new(&mut ps, &mut rng, "out_proj", d, phonemes.len());
        let pe = positional_encoding(config.max_src_len.max(config.max_tgt_len + 1), d);
        Ok(G2PModel {
            config,
            params: ps,
            src_embed,
            tgt_embed,
            enc_layers,
            enc_norm,
            dec_layers,
            dec_norm,
            out_proj,
            grapheme_vocab: graphemes.len(),
            phoneme_vocab: phonemes.len(),
            grapheme_vocab_hash: graphemes.hash(),
            phoneme_vocab_hash: phonemes.hash(),
            pe,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn rebuild_positional(&mut self) {
        self.pe = positional_encoding(
            self.config.max_src_len.max(self.config.max_tgt_len + 1),
            self.config.model_dim,
        );
    }

    fn encode_stack(
        &self,
        tape: &mut Tape,
        src: &[usize],
        t_src: usize,
        src_mask: &[bool],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> NodeId {
        let batch = src.len() / t_src;
        let x = self.src_embed.forward(tape, &self.params, src);
        let pos = tile_positions(&self.pe, batch, t_src);
        let mut x = tape.add_const(x, &pos);
        x = tape.dropout(x, dropout, rng);
        for layer in &self.enc_layers {
            x = layer.forward(tape, &self.params, x, t_src, src_mask, dropout, rng);
        }
        self.enc_norm.forward(tape, &self.params, x)
    }

    #[allow(clippy::too_many_arguments)]
    fn decode_stack(
        &self,
        tape: &mut Tape,
        memory: NodeId,
        dec_input: &[usize],
        t_dec: usize,
        t_src: usize,
        dec_mask: &[bool],
        src_mask: &[bool],
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> NodeId {
        let batch = dec_input.len() / t_dec;
        let y = self.tgt_embed.forward(tape, &self.params, dec_input);
        let pos = tile_positions(&self.pe, batch, t_dec);
        let mut y = tape.add_const(y, &pos);
        y = tape.dropout(y, dropout, rng);
        for layer in &self.dec_layers {
            y = layer.forward(
                tape, &self.params, y, memory, t_dec, t_src, true, dec_mask, src_mask, dropout,
                rng,
            );
        }
        let y = self.dec_norm.forward(tape, &self.params, y);
        self.out_proj.forward(tape, &self.params, y)
    }

    /// Builds padded batch tensors. Returns (src, t_src, src_mask,
    /// dec_input, t_dec, dec_mask, targets, weights).
    #[allow(clippy::type_complexity)]
    fn build_batch(
        &self,
        batch: &[EncodedPair],
    ) -> Result<(Vec<usize>, usize, Vec<bool>, Vec<usize>, usize, Vec<bool>, Vec<usize>, Vec<f64>), G2PError>
    {
        if batch.is_empty() {
            return Err(G2PError::EmptyBatch);
        }
        for (src, tgt) in batch {
            if src.len() > self.config.max_src_len {
                return Err(G2PError::SourceTooLong(src.len(), self.config.max_src_len));
            }
            if tgt.len() > self.config.max_tgt_len {
                return Err(G2PError::TargetTooLong(tgt.len(), self.config.max_tgt_len));
            }
        }
        let t_src = batch.iter().map(|(s, _)| s.len()).max().unwrap().max(1);
        let t_dec = batch.iter().map(|(_, t)| t.len()).max().unwrap() + 1; // BOS prefix
        let mut src = Vec::with_capacity(batch.len() * t_src);
        let mut src_mask = Vec::with_capacity(batch.len() * t_src);
        let mut dec_input = Vec::with_capacity(batch.len() * t_dec);
        let mut dec_mask = Vec::with_capacity(batch.len() * t_dec);
        let mut targets = Vec::with_capacity(batch.len() * t_dec);
        let mut weights = Vec::with_capacity(batch.len() * t_dec);
        for (s, t) in batch {
            for i in 0..t_src {
                src.push(s.get(i).copied().unwrap_or(PAD));
                src_mask.push(i < s.len());
            }
            dec_input.push(BOS);
            dec_mask.push(true);
            for i in 0..t_dec - 1 {
                dec_input.push(t.get(i).copied().unwrap_or(PAD));
                dec_mask.push(i < t.len());
            }
            // Shifted targets: y_1..y_l then EOS, PAD-weighted zero beyond.
            for i in 0..t_dec {
                if i < t.len() {
                    targets.push(t[i]);
                    weights.push(1.0);
                } else if i == t.len() {
                    targets.push(EOS);
                    weights.push(1.0);
                } else {
                    targets.push(PAD);
                    weights.push(0.0);
                }
            }
        }
        Ok((src, t_src, src_mask, dec_input, t_dec, dec_mask, targets, weights))
    }

    /// Mean cross entropy over non-PAD target positions; builds the graph
    /// and optionally backpropagates.
    fn batch_loss(
        &mut self,
        batch: &[EncodedPair],
        train: bool,
        rng: &mut ChaCha20Rng,
        backprop: bool,
    ) -> Result<f64, G2PError> {
        let (src, t_src, src_mask, dec_input, t_dec, dec_mask, targets, weights) =
            self.build_batch(batch)?;
        let denom: f64 = weights.iter().sum();
        let dropout = if train { self.config.dropout } else { 0.0 };
        let mut tape = Tape::new(train);
        let memory = self.encode_stack(&mut tape, &src, t_src, &src_mask, dropout, rng);
        let logits = self.decode_stack(
            &mut tape, memory, &dec_input, t_dec, t_src, &dec_mask, &src_mask, dropout, rng,
        );
        let loss = tape.cross_entropy(logits, &targets, &weights, denom);
        let value = tape.value(loss)[[0, 0]];
        if backprop {
            tape.backward(loss, &mut self.params);
        }
        Ok(value)
    }

    /// One optimizer update on a batch; returns the mean CE loss.
    pub fn train_step(
        &mut self,
        batch: &[EncodedPair],
        opt: &mut AdamW,
        rng: &mut ChaCha20Rng,
    ) -> Result<f64, G2PError> {
        self.params.zero_grads();
        let loss = self.batch_loss(batch, true, rng, true)?;
        opt.step(&mut self.params);
        Ok(loss)
    }

    /// Evaluation-mode mean CE loss, no update.
    pub fn eval_loss(&mut self, batch: &[EncodedPair]) -> Result<f64, G2PError> {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        self.batch_loss(batch, false, &mut rng, false)
    }

    /// Teacher-forced forward pass for one example. `tgt_ids` must begin
    /// with BOS; returns one probability distribution over the phoneme
    /// vocabulary per target position.
    pub fn forward_teacher_forced(
        &self,
        src_ids: &[usize],
        tgt_ids: &[usize],
    ) -> Result<Vec<Vec<f64>>, G2PError> {
        if src_ids.len() > self.config.max_src_len {
            return Err(G2PError::SourceTooLong(src_ids.len(), self.config.max_src_len));
        }
        if tgt_ids.len() > self.config.max_tgt_len + 1 {
            return Err(G2PError::TargetTooLong(tgt_ids.len(), self.config.max_tgt_len));
        }
        debug_assert_eq!(tgt_ids.first(), Some(&BOS), "decoder input must start with BOS");
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut tape = Tape::new(false);
        let src_mask = vec![true; src_ids.len()];
        let dec_mask = vec![true; tgt_ids.len()];
        let memory = self.encode_stack(&mut tape, src_ids, src_ids.len(), &src_mask, 0.0, &mut rng);
        let logits = self.decode_stack(
            &mut tape,
            memory,
            tgt_ids,
            tgt_ids.len(),
            src_ids.len(),
            &dec_mask,
            &src_mask,
            0.0,
            &mut rng,
        );
        let probs = softmax_rows(tape.value(logits));
        Ok(probs.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Argmax decoding from BOS until EOS or the length limit. Returns
    /// phoneme ids (specials stripped).
    pub fn greedy_decode(&self, src_ids: &[usize]) -> Result<Vec<usize>, G2PError> {
        self.beam_decode(src_ids, 1)
    }

    /// Beam search over log probabilities; beam width 1 is greedy.
    pub fn beam_decode(&self, src_ids: &[usize], beam_width: usize) -> Result<Vec<usize>, G2PError> {
        if src_ids.len() > self.config.max_src_len {
            return Err(G2PError::SourceTooLong(src_ids.len(), self.config.max_src_len));
        }
        let beam_width = beam_width.max(1);
        // (sequence without BOS, log prob, finished)
        let mut beams: Vec<(Vec<usize>, f64, bool)> = vec![(Vec::new(), 0.0, false)];
        for _ in 0..self.config.max_tgt_len {
            if beams.iter().all(|(_, _, done)| *done) {
                break;
            }
            let mut candidates: Vec<(Vec<usize>, f64, bool)> = Vec::new();
            for (seq, logp, done) in &beams {
                if *done {
                    candidates.push((seq.clone(), *logp, true));
                    continue;
                }
                let mut dec_input = Vec::with_capacity(seq.len() + 1);
                dec_input.push(BOS);
                dec_input.extend_from_slice(seq);
                let dists = self.forward_teacher_forced(src_ids, &dec_input)?;
                let last = dists.last().expect("non-empty decoder input");
                let mut scored: Vec<(usize, f64)> = last
                    .iter()
                    .enumerate()
                    .map(|(id, p)| (id, p.max(1e-300).ln()))
                    .collect();
                scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                for (id, lp) in scored.into_iter().take(beam_width) {
                    if id == EOS {
                        candidates.push((seq.clone(), logp + lp, true));
                    } else {
                        let mut next = seq.clone();
                        next.push(id);
                        candidates.push((next, logp + lp, false));
                    }
                }
            }
            candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            candidates.truncate(beam_width);
            beams = candidates;
        }
        let best = beams
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .expect("at least one beam");
        Ok(best.0)
    }

    /// Decodes a word end to end through the vocabulary tables.
    pub fn pronounce(
        &self,
        graphemes: &SymbolTable,
        phonemes: &SymbolTable,
        word: &GraphemeString,
    ) -> Result<PhonemeSequence, G2PError> {
        let src = encode_word(graphemes, word);
        let ids = self.greedy_decode(&src)?;
        let symbols = ids
            .iter()
            .map(|&id| phonemes.decode(id).unwrap_or("<unk>").to_string())
            .collect();
        Ok(PhonemeSequence::new(symbols))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitOptions {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lr: 1e-4,
            weight_decay: 0.0,
            max_epochs: 100,
            patience: 5,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

/// Trains with AdamW and early stopping on validation loss; the model is
/// left at the best-validation checkpoint.
pub fn fit(
    model: &mut G2PModel,
    train: &[EncodedPair],
    valid: &[EncodedPair],
    options: &FitOptions,
) -> Result<FitHistory, G2PError> {
    if train.is_empty() {
        return Err(G2PError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(G2PError::EmptySplit("valid"));
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
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| train[i].clone()).collect();
            total += model.train_step(&batch, &mut opt, &mut rng)?;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let mut valid_total = 0.0;
        let mut valid_batches = 0usize;
        for chunk in valid.chunks(options.batch_size) {
            valid_total += model.eval_loss(chunk)?;
            valid_batches += 1;
        }
        let valid_loss = valid_total / valid_batches as f64;
        history.push(EpochRecord { epoch, train_loss, valid_loss });
        if valid_loss < best_valid {
            best_valid = valid_loss;
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
    Ok(FitHistory { epochs: history, best_epoch, best_valid_loss: best_valid })
}

const CHECKPOINT_VERSION: &str = "frpron-g2p-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    model: G2PModel,
}

pub fn save_checkpoint(model: &G2PModel, path: &std::path::Path) -> Result<(), G2PError> {
    let ckpt = Checkpoint { version: CHECKPOINT_VERSION.to_string(), model: model.clone() };
    let json = serde_json::to_string(&ckpt).map_err(|e| G2PError::Malformed(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a checkpoint, verifying the vocabulary hashes match the supplied
/// tables.
pub fn load_checkpoint(
    path: &std::path::Path,
    graphemes: &SymbolTable,
    phonemes: &SymbolTable,
) -> Result<G2PModel, G2PError> {
    let json = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&json).map_err(|e| G2PError::Malformed(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(G2PError::BadVersion(ckpt.version));
    }
    let mut model = ckpt.model;
    if model.grapheme_vocab_hash != graphemes.hash() {
        return Err(G2PError::VocabHashMismatch("graphemes"));
    }
    if model.phoneme_vocab_hash != phonemes.hash() {
        return Err(G2PError::VocabHashMismatch("phonemes"));
    }
    model.rebuild_positional();
    Ok(model)
}

/// Zeroes the output projection; useful for the uniform-distribution probe.
pub fn zero_output_projection(model: &mut G2PModel) {
    let w = model.out_proj.w;
    let b = model.out_proj.b;
    model.params.params[w.0].value.fill(0.0);
    model.params.params[b.0].value.fill(0.0);
}

/// Cross-entropy gradient check helper: mean CE of one batch as a pure
/// function of the flat parameter vector.
pub fn loss_of_flat(model: &mut G2PModel, batch: &[EncodedPair], flat: &[f64]) -> f64 {
    model.params.set_flat_values(flat);
    model.eval_loss(batch).expect("valid batch")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::UNK;

    fn tables() -> (SymbolTable, SymbolTable) {
        let graphemes = SymbolTable::build_from_corpus(["a", "b", "c", "d", "e", "f"]).unwrap();
        let phonemes = SymbolTable::build_from_corpus(["A", "B", "C", "D"]).unwrap();
        (graphemes, phonemes)
    }

    fn tiny_model() -> (G2PModel, SymbolTable, SymbolTable) {
        let (g, p) = tables();
        let cfg = G2PConfig {
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 2,
            model_dim: 16,
            ff_dim: 32,
            dropout: 0.0,
            max_src_len: 32,
            max_tgt_len: 32,
        };
        let model = G2PModel::new(cfg, &g, &p, 7).unwrap();
        (model, g, p)
    }

    #[test]
    fn distributions_are_normalized() {
        let (model, g, p) = tiny_model();
        let src = vec![g.encode("a"), g.encode("b")];
        let tgt = vec![BOS, p.encode("A"), p.encode("B")];
        let dists = model.forward_teacher_forced(&src, &tgt).unwrap();
        assert_eq!(dists.len(), 3);
        for d in &dists {
            assert_eq!(d.len(), p.len());
            assert!(d.iter().all(|v| *v >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zeroed_output_projection_gives_uniform() {
        let (mut model, g, p) = tiny_model();
        zero_output_projection(&mut model);
        let src = vec![g.encode("a")];
        let dists = model.forward_teacher_forced(&src, &[BOS]).unwrap();
        let uniform = 1.0 / p.len() as f64;
        for v in &dists[0] {
            assert!((v - uniform).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_mask_probe() {
        let (model, g, p) = tiny_model();
        let src = vec![g.encode("a"), g.encode("c"), g.encode("e")];
        let base_tgt = vec![BOS, p.encode("A"), p.encode("B"), p.encode("C")];
        let base = model.forward_teacher_forced(&src, &base_tgt).unwrap();
        // Perturb the target token at position 2 (0-based in the decoder
        // input); outputs strictly before that position must not move.
        let mut perturbed_tgt = base_tgt.clone();
        perturbed_tgt[2] = p.encode("D");
        let perturbed = model.forward_teacher_forced(&src, &perturbed_tgt).unwrap();
        for pos in 0..2 {
            assert_eq!(base[pos], perturbed[pos], "position {pos} changed");
        }
        let changed: f64 = base[2]
            .iter()
            .zip(&perturbed[2])
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(changed > 1e-9, "position 2 should depend on its own input");
    }

    #[test]
    fn decode_is_deterministic() {
        let (model, g, _) = tiny_model();
        let src = vec![g.encode("a"), g.encode("b"), g.encode("c")];
        assert_eq!(model.greedy_decode(&src).unwrap(), model.greedy_decode(&src).unwrap());
    }

    #[test]
    fn uniform_ce_is_log_vocab() {
        let (mut model, g, p) = tiny_model();
        zero_output_projection(&mut model);
        let batch = vec![(vec![g.encode("a")], vec![p.encode("A")])];
        let loss = model.eval_loss(&batch).unwrap();
        assert!((loss - (p.len() as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn length_limits_enforced() {
        let (mut model, _, _) = tiny_model();
        let long = vec![UNK; 33];
        assert!(matches!(
            model.greedy_decode(&long),
            Err(G2PError::SourceTooLong(33, 32))
        ));
        let batch = vec![(long.clone(), vec![UNK])];
        assert!(model.eval_loss(&batch).is_err());
        let batch = vec![(vec![UNK], vec![UNK; 33])];
        assert!(model.eval_loss(&batch).is_err());
        assert!(model.eval_loss(&[]).is_err());
    }

    #[test]
    fn train_step_reduces_loss_on_tiny_set() {
        let (mut model, g, p) = tiny_model();
        let batch: Vec<EncodedPair> = vec![
            (vec![g.encode("a"), g.encode("b")], vec![p.encode("A"), p.encode("B")]),
            (vec![g.encode("c")], vec![p.encode("C")]),
        ];
        let mut opt = AdamW::new(&model.params, 1e-2, 0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let first = model.train_step(&batch, &mut opt, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..60 {
            last = model.train_step(&batch, &mut opt, &mut rng).unwrap();
        }
        assert!(last < first * 0.5, "loss {first} -> {last}");
    }

    #[test]
    fn early_stopping_patience_arithmetic() {
        // A validation set the model cannot fit while the train set drives
        // weights away: engineered by using disjoint random labels and a
        // tiny lr so improvements on valid stall quickly. Instead of
        // relying on dynamics, check the bookkeeping directly with a
        // strictly-worsening validation loss via zero train epochs is not
        // possible here, so this exercises fit() on a degenerate split.
        let (mut model, g, p) = tiny_model();
        let train: Vec<EncodedPair> =
            vec![(vec![g.encode("a")], vec![p.encode("A")])];
        let valid: Vec<EncodedPair> =
            vec![(vec![g.encode("b")], vec![p.encode("D")])];
        let options = FitOptions {
            lr: 5e-2,
            max_epochs: 40,
            patience: 5,
            batch_size: 4,
            seed: 3,
            weight_decay: 0.0,
        };
        let history = fit(&mut model, &train, &valid, &options).unwrap();
        assert!(history.epochs.len() <= 40);
        // Best checkpoint is at least as good as the final epoch.
        let final_valid = history.epochs.last().unwrap().valid_loss;
        assert!(history.best_valid_loss <= final_valid + 1e-12);
        // Stopped no later than patience epochs after the best one.
        assert!(history.epochs.len() <= history.best_epoch + options.patience);
    }

    #[test]
    fn closed_form_count_matches_runtime() {
        let (model, g, p) = tiny_model();
        assert_eq!(
            model.param_count(),
            g2p_param_count(&model.config, g.len(), p.len())
        );
    }

    #[test]
    fn full_scale_count_near_reference_total() {
        // 58.9M within 10% for any vocab sizes in [50, 600].
        let cfg = G2PConfig::full_scale();
        for (vg, vp) in [(50, 50), (600, 600), (50, 600), (300, 100)] {
            let n = g2p_param_count(&cfg, vg, vp) as f64;
            let rel = (n - 58.9e6).abs() / 58.9e6;
            assert!(rel < 0.10, "count {n} off by {rel} for ({vg},{vp})");
        }
    }

    #[test]
    fn checkpoint_roundtrip_and_hash_guard() {
        let (model, g, p) = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g2p.ckpt.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path, &g, &p).unwrap();
        assert_eq!(back.param_count(), model.param_count());
        let src = vec![g.encode("a"), g.encode("e")];
        assert_eq!(back.greedy_decode(&src).unwrap(), model.greedy_decode(&src).unwrap());
        // Wrong vocabulary: refused.
        let other = SymbolTable::build_from_corpus(["x", "y"]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &other, &p),
            Err(G2PError::VocabHashMismatch("graphemes"))
        ));
    }

    #[test]
    fn pad_positions_do_not_leak_into_loss() {
        // Two identical pairs, one padded against a longer partner: the
        // per-example loss contribution must be unchanged.
        let (mut model, g, p) = tiny_model();
        let short: EncodedPair = (vec![g.encode("a")], vec![p.encode("A")]);
        let long: EncodedPair = (
            vec![g.encode("b"), g.encode("c"), g.encode("d")],
            vec![p.encode("B"), p.encode("C"), p.encode("D")],
        );
        let alone = model.eval_loss(std::slice::from_ref(&short)).unwrap();
        let padded = model.eval_loss(&[short.clone(), long.clone()]).unwrap();
        let long_alone = model.eval_loss(std::slice::from_ref(&long)).unwrap();
        // Mean over non-PAD targets: combine by token counts (2 and 4).
        let expected = (alone * 2.0 + long_alone * 4.0) / 6.0;
        assert!((padded - expected).abs() < 1e-9, "{padded} vs {expected}");
    }
}
