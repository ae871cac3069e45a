//! `frpron`: CLI for the two-step French pronunciation toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 lineage
//! mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frpron::g2p::{self, G2PModel};
use frpron::oracle::{
    builtin_templates, corpus_stats, extend_with_nonsense, generate_corpus, load_templates,
    save_templates, seed_lexicon, ExceptionTable, RuleLexicon,
};
use frpron::pipeline::{
    check_lineage, split_lineage, split_sentences, split_word_data, with_lineage,
    ExperimentConfig, PipelineError,
};
use frpron::plp::{
    self, apply_to_sentence, extract_training_pairs, fit_plp, pos_weight_from_examples, PLPModel,
};
use frpron::postag::{LexiconTagger, TagSet, Tagger};
use frpron::transcript::{
    curate, load_corpus, load_lexicon, preprocess_text, save_corpus, save_lexicon,
    GraphemeString, PhonemeInventory, SentenceTranscript,
};
use frpron::vocab::SymbolTable;

#[derive(Parser)]
#[command(name = "frpron", version, about = "Two-step French pronunciation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and word-level lexicon from the rule
    /// oracle.
    GenSynthetic {
        /// Rule lexicon TSV (defaults to the built-in seed lexicon).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Exception table TSV (defaults to the built-in exceptions).
        #[arg(long)]
        exceptions: Option<PathBuf>,
        /// Sentence templates, one POS sequence per line (defaults to the
        /// built-in templates).
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Nonsense words added to the built-in seed lexicon.
        #[arg(long, default_value_t = 150)]
        extra_words: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Curate a transcript corpus; writes kept sentences and a rejection
    /// log.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Build grapheme/phoneme/POS symbol tables from a corpus and optional
    /// word lexicon.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the word-level G2P model.
    TrainG2p {
        #[arg(long)]
        config: PathBuf,
        /// Word lexicon override (defaults to the config's path).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Output directory (defaults to the config's checkpoint_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the boundary-level PLP model on top of a G2P checkpoint.
    TrainPlp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        g2p_checkpoint: PathBuf,
        /// Training-set size override (boundary examples).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both models over raw sentences (one per line) and emit
    /// transcripts.
    Predict {
        #[arg(long)]
        g2p: PathBuf,
        #[arg(long)]
        plp: PathBuf,
        /// POS tag lexicon (word<TAB>tag); unknown words get the fallback
        /// tag.
        #[arg(long)]
        tagger: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Evaluate hypothesis transcripts against references.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Rule lexicon for liaison/linking category derivation.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Where to write the JSON report (table goes to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_lineage_mismatch: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn ensure_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

/// Vocabulary file names shared by the training and inference commands.
const GRAPHEME_VOCAB: &str = "graphemes.vocab";
const PHONEME_VOCAB: &str = "phonemes.vocab";
const POS_VOCAB: &str = "pos.vocab";

fn load_vocab_triple(
    dir: &Path,
) -> Result<(SymbolTable, SymbolTable, SymbolTable), PipelineError> {
    Ok((
        SymbolTable::load(&dir.join(GRAPHEME_VOCAB))?,
        SymbolTable::load(&dir.join(PHONEME_VOCAB))?,
        SymbolTable::load(&dir.join(POS_VOCAB))?,
    ))
}

fn save_vocab_triple(
    dir: &Path,
    g: &SymbolTable,
    p: &SymbolTable,
    t: &SymbolTable,
) -> Result<(), PipelineError> {
    g.save(&dir.join(GRAPHEME_VOCAB))?;
    p.save(&dir.join(PHONEME_VOCAB))?;
    t.save(&dir.join(POS_VOCAB))?;
    Ok(())
}

/// Tags every word with the fallback tag; used when no tag lexicon is
/// supplied.
struct FallbackTagger;

impl Tagger for FallbackTagger {
    fn tag(&self, words: &[GraphemeString]) -> Vec<String> {
        vec![frpron::postag::FALLBACK_TAG.to_string(); words.len()]
    }
}

fn load_tagger(path: Option<&Path>) -> Result<Box<dyn Tagger>, PipelineError> {
    match path {
        Some(p) => Ok(Box::new(
            LexiconTagger::load(p).map_err(|e| PipelineError::Data(e.to_string()))?,
        )),
        None => Ok(Box::new(FallbackTagger)),
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    let inventory = PhonemeInventory::french_xsampa();
    match command {
        Command::GenSynthetic {
            lexicon,
            exceptions,
            templates,
            extra_words,
            count,
            seed,
            out,
        } => {
            ensure_dir(&out)?;
            let (mut rules, mut exc) = seed_lexicon();
            if let Some(path) = lexicon {
                rules = RuleLexicon::load(&path, &inventory)?;
            } else if extra_words > 0 {
                rules = extend_with_nonsense(&rules, extra_words, seed)?;
            }
            if let Some(path) = exceptions {
                exc = ExceptionTable::load(&path)?;
            }
            let templates = match templates {
                Some(path) => load_templates(&path)?,
                None => builtin_templates(),
            };
            let (word_entries, sentences) =
                generate_corpus(&rules, &exc, &templates, count, seed)?;
            save_corpus(&out.join("corpus.txt"), &sentences)?;
            save_lexicon(&out.join("word_lexicon.tsv"), &word_entries)?;
            rules.save(&out.join("rule_lexicon.tsv"))?;
            exc.save(&out.join("exceptions.tsv"))?;
            save_templates(&out.join("templates.txt"), &templates)?;
            rules
                .tagger()
                .save(&out.join("tags.tsv"))
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let stats = corpus_stats(&rules, &sentences);
            std::fs::write(
                out.join("stats.json"),
                serde_json::to_string_pretty(&stats)
                    .map_err(|e| PipelineError::Data(e.to_string()))?,
            )?;
            println!(
                "generated {} sentences ({} phenomena) into {}",
                stats.sentences,
                stats.total_phenomena,
                out.display()
            );
            Ok(())
        }
        Command::Preprocess { input, out, log } => {
            let sentences = load_corpus(&input, &inventory)?;
            let mut kept = Vec::new();
            let mut rejects = String::new();
            for (i, s) in sentences.iter().enumerate() {
                match curate(s, true) {
                    Ok(()) => kept.push(s.clone()),
                    Err(reason) => {
                        rejects.push_str(&format!("sentence {}: {reason}\n", i + 1));
                    }
                }
            }
            save_corpus(&out, &kept)?;
            if let Some(log_path) = log {
                std::fs::write(&log_path, &rejects)?;
            }
            println!(
                "kept {} of {} sentences ({} rejected)",
                kept.len(),
                sentences.len(),
                sentences.len() - kept.len()
            );
            Ok(())
        }
        Command::BuildVocab { corpus, lexicon, out } => {
            ensure_dir(&out)?;
            let sentences = load_corpus(&corpus, &inventory)?;
            let entries = match lexicon {
                Some(path) => load_lexicon(&path, &inventory)?,
                None => Vec::new(),
            };
            let tags = TagSet::toy();
            let (g, p, t) = frpron::pipeline::build_vocabularies(&entries, &sentences, &tags)?;
            save_vocab_triple(&out, &g, &p, &t)?;
            tags.save(&out.join("tags.txt"))
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            println!(
                "graphemes: {}, phonemes: {}, pos tags: {}",
                g.len(),
                p.len(),
                t.len()
            );
            Ok(())
        }
        Command::TrainG2p { config, lexicon, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let lexicon_path = lexicon.unwrap_or_else(|| cfg.paths.lexicon.clone());
            let entries = load_lexicon(&lexicon_path, &inventory)?;
            // Corpus is optional here but keeps the vocabularies aligned
            // with the PLP stage.
            let sentences = if cfg.paths.corpus.as_os_str().is_empty() {
                Vec::new()
            } else {
                load_corpus(&cfg.paths.corpus, &inventory)?
            };
            let tags = TagSet::toy();
            let (graphemes, phonemes, pos_tags) =
                frpron::pipeline::build_vocabularies(&entries, &sentences, &tags)?;
            let out_dir = out.unwrap_or_else(|| cfg.paths.checkpoint_dir.clone());
            ensure_dir(&out_dir)?;
            save_vocab_triple(&out_dir, &graphemes, &phonemes, &pos_tags)?;

            let (train, valid, _test) = split_word_data(&entries, cfg.split, cfg.seed)?;
            let encode = |es: &[frpron::transcript::WordEntry]| -> Vec<g2p::EncodedPair> {
                es.iter()
                    .map(|e| g2p::encode_entry(&graphemes, &phonemes, e))
                    .collect()
            };
            let mut model = G2PModel::new(cfg.g2p.clone(), &graphemes, &phonemes, cfg.seed)
                .map_err(PipelineError::from)?;
            let valid_pairs = if valid.is_empty() { encode(&train) } else { encode(&valid) };
            let history = g2p::fit(&mut model, &encode(&train), &valid_pairs, &cfg.g2p_fit)?;
            g2p::save_checkpoint(&model, &out_dir.join("g2p.ckpt.json"))?;
            let record = serde_json::json!({
                "config_hash": cfg.hash(),
                "params": model.param_count(),
                "history": history,
            });
            std::fs::write(
                out_dir.join("g2p.history.json"),
                serde_json::to_string_pretty(&record)
                    .map_err(|e| PipelineError::Data(e.to_string()))?,
            )?;
            println!(
                "g2p: {} params, best epoch {} (valid loss {:.4})",
                model.param_count(),
                history.best_epoch,
                history.best_valid_loss
            );
            Ok(())
        }
        Command::TrainPlp { config, g2p_checkpoint, k, corpus, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ckpt_dir = g2p_checkpoint
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let (graphemes, phonemes, pos_tags) = load_vocab_triple(&ckpt_dir)?;
            let g2p_model = g2p::load_checkpoint(&g2p_checkpoint, &graphemes, &phonemes)?;
            let corpus_path = corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
            let sentences = load_corpus(&corpus_path, &inventory)?;
            let split = split_sentences(&sentences, cfg.plp_eval_size, cfg.seed)?;
            let tagger = FallbackTagger;
            let mut pool = extract_training_pairs(
                &split.train,
                &g2p_model,
                &tagger,
                &graphemes,
                &phonemes,
                &pos_tags,
                cfg.plp.window,
                false,
            )?;
            let mut rng = {
                use rand::SeedableRng;
                rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x706f6f6c)
            };
            {
                use rand::seq::SliceRandom;
                pool.shuffle(&mut rng);
            }
            let k = k.or(cfg.plp_train_k).unwrap_or(pool.len());
            if k > pool.len() {
                return Err(PipelineError::Config(format!(
                    "k {k} exceeds available training examples {}",
                    pool.len()
                )));
            }
            pool.truncate(k);
            let mut valid = extract_training_pairs(
                &split.valid,
                &g2p_model,
                &tagger,
                &graphemes,
                &phonemes,
                &pos_tags,
                cfg.plp.window,
                false,
            )?;
            valid.truncate(cfg.plp_eval_size);
            let mut plp_cfg = cfg.plp.clone();
            plp_cfg.pos_weight = pos_weight_from_examples(&pool);
            let mut model = PLPModel::new(plp_cfg, &graphemes, &phonemes, &pos_tags, cfg.seed)
                .map_err(PipelineError::from)?;
            let history = fit_plp(&mut model, &pool, &valid, &cfg.plp_fit)?;
            let out_dir = out.unwrap_or(ckpt_dir);
            ensure_dir(&out_dir)?;
            plp::save_checkpoint(&model, &out_dir.join("plp.ckpt.json"))?;
            let record = serde_json::json!({
                "config_hash": cfg.hash(),
                "params": model.param_count(),
                "k": k,
                "history": history,
            });
            std::fs::write(
                out_dir.join("plp.history.json"),
                serde_json::to_string_pretty(&record)
                    .map_err(|e| PipelineError::Data(e.to_string()))?,
            )?;
            println!(
                "plp: {} params, k={k}, best epoch {} (valid L_plp {:.4})",
                model.param_count(),
                history.best_epoch,
                history.best_valid_l_plp
            );
            Ok(())
        }
        Command::Predict { g2p, plp, tagger, input, out, config, threshold } => {
            let ckpt_dir = g2p
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let (graphemes, phonemes, pos_tags) = load_vocab_triple(&ckpt_dir)?;
            let g2p_model = g2p::load_checkpoint(&g2p, &graphemes, &phonemes)?;
            let plp_model = plp::load_checkpoint(&plp, &graphemes, &phonemes, &pos_tags)?;
            let tagger = load_tagger(tagger.as_deref())?;
            let text = std::fs::read_to_string(&input)?;
            let mut transcripts: Vec<SentenceTranscript> = Vec::new();
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                // Normalize and drop punctuation markers before prediction.
                let normalized = preprocess_text(line).as_str().replace('#', " ");
                let cleaned = normalized.split_whitespace().collect::<Vec<_>>().join(" ");
                if cleaned.is_empty() {
                    continue;
                }
                transcripts.push(apply_to_sentence(
                    &plp_model,
                    &g2p_model,
                    tagger.as_ref(),
                    &graphemes,
                    &phonemes,
                    &pos_tags,
                    &cleaned,
                    threshold,
                )?);
            }
            let body = frpron::transcript::corpus_to_string(&transcripts);
            let output = match config {
                Some(path) => {
                    let cfg = ExperimentConfig::load(&path)?;
                    with_lineage(&cfg.hash(), &body)
                }
                None => body,
            };
            std::fs::write(&out, output)?;
            println!("wrote {} transcripts to {}", transcripts.len(), out.display());
            Ok(())
        }
        Command::Evaluate { hyp, reference, lexicon, out, allow_lineage_mismatch } => {
            let hyp_text = std::fs::read_to_string(&hyp)?;
            let ref_text = std::fs::read_to_string(&reference)?;
            let (hyp_lineage, hyp_body) = split_lineage(&hyp_text);
            let (ref_lineage, ref_body) = split_lineage(&ref_text);
            check_lineage(hyp_lineage, ref_lineage, allow_lineage_mismatch)?;
            let hyps = frpron::transcript::parse_corpus(hyp_body, &inventory)?;
            let refs = frpron::transcript::parse_corpus(ref_body, &inventory)?;
            let rules = match lexicon {
                Some(path) => Some(RuleLexicon::load(&path, &inventory)?),
                None => None,
            };
            let report =
                frpron::pipeline::evaluate_with_categories(&hyps, &refs, rules.as_ref())?;
            print!("{}", report.to_table_string());
            if let Some(path) = out {
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| PipelineError::Data(e.to_string()))?,
                )?;
            }
            Ok(())
        }
    }
}
