//! Evaluation: Levenshtein distance, PER, WER, Acc_plp, and the four-case
//! report (whole sentence / phonological phenomena / liaison / linking).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::{PhenomenonCategory, SentenceTranscript, WordEntry};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("hypothesis has {hyp} words but reference has {ref_len}")]
    WordCountMismatch { hyp: usize, ref_len: usize },
    #[error("hypothesis has {hyp} boundaries but reference has {ref_len}")]
    BoundaryCountMismatch { hyp: usize, ref_len: usize },
    #[error("evaluation set is empty")]
    EmptySet,
}

/// Minimum number of insertions, deletions, and substitutions (unit costs).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Phoneme error rate in percent; may exceed 100 for long hypotheses.
pub fn per<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(100.0 * levenshtein(hyp, reference) as f64 / reference.len() as f64)
}

/// Word error rate in percent: fraction of words whose full phoneme
/// sequence differs from the reference.
pub fn wer<T: PartialEq>(hyp_words: &[Vec<T>], ref_words: &[Vec<T>]) -> Result<f64, MetricsError> {
    if hyp_words.len() != ref_words.len() {
        return Err(MetricsError::WordCountMismatch {
            hyp: hyp_words.len(),
            ref_len: ref_words.len(),
        });
    }
    if ref_words.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let wrong = hyp_words
        .iter()
        .zip(ref_words)
        .filter(|(h, r)| h != r)
        .count();
    Ok(100.0 * wrong as f64 / ref_words.len() as f64)
}

/// Per-boundary label: `None` for a separator, `Some(phoneme)` for a
/// phenomenon with its connecting phoneme.
pub type BoundaryLabel = Option<String>;

pub fn boundary_labels(t: &SentenceTranscript) -> Vec<BoundaryLabel> {
    (0..t.boundaries.len())
        .map(|i| t.boundary_phoneme(i).map(String::from))
        .collect()
}

/// Accuracy over reference phenomenon boundaries: flag and phoneme must
/// both match. `Ok(None)` when the reference has no phenomenon boundaries.
pub fn acc_plp(
    pred: &[BoundaryLabel],
    reference: &[BoundaryLabel],
) -> Result<Option<f64>, MetricsError> {
    if pred.len() != reference.len() {
        return Err(MetricsError::BoundaryCountMismatch {
            hyp: pred.len(),
            ref_len: reference.len(),
        });
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for (p, r) in pred.iter().zip(reference) {
        if let Some(ref_ph) = r {
            total += 1;
            if p.as_deref() == Some(ref_ph.as_str()) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(100.0 * correct as f64 / total as f64))
}

/// Derives liaison/linking categories for a reference transcript using the
/// left word's isolated pronunciation from a lexicon lookup.
pub fn derive_categories(
    t: &SentenceTranscript,
    isolated: impl Fn(&str) -> Option<WordEntry>,
) -> Vec<PhenomenonCategory> {
    (0..t.boundaries.len())
        .map(|i| match t.boundary_phoneme(i) {
            Some(ph) => match isolated(t.words[i].0.as_str()) {
                Some(entry) => {
                    crate::transcript::classify_phenomenon(&entry, ph, &t.boundaries[i])
                }
                None => PhenomenonCategory::Unlabeled,
            },
            None => PhenomenonCategory::Unlabeled,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub sentences: usize,
    /// Phenomenon boundaries evaluated for Acc_plp in this case.
    pub boundaries: usize,
    pub correct: usize,
    pub acc_plp: Option<f64>,
    pub per: f64,
    pub wer: f64,
}

/// Four-case evaluation breakdown. Case rows with no qualifying sentences
/// are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub whole_sentence: CaseMetrics,
    pub phonological: Option<CaseMetrics>,
    pub liaison: Option<CaseMetrics>,
    pub linking: Option<CaseMetrics>,
}

/// One evaluated sentence: system output, reference, and per-boundary
/// reference categories (Unlabeled where no phenomenon occurs).
pub struct EvalPair<'a> {
    pub hyp: &'a SentenceTranscript,
    pub reference: &'a SentenceTranscript,
    pub categories: Vec<PhenomenonCategory>,
}

fn case_metrics(
    pairs: &[&EvalPair<'_>],
    restrict_category: Option<PhenomenonCategory>,
) -> Result<Option<CaseMetrics>, MetricsError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut total_dist = 0usize;
    let mut total_ref_len = 0usize;
    let mut total_words = 0usize;
    let mut wrong_words = 0usize;
    let mut boundaries = 0usize;
    let mut correct = 0usize;
    for pair in pairs {
        let hyp_flat = pair.hyp.flat_phonemes();
        let ref_flat = pair.reference.flat_phonemes();
        if ref_flat.is_empty() {
            return Err(MetricsError::EmptyReference);
        }
        total_dist += levenshtein(hyp_flat.symbols(), ref_flat.symbols());
        total_ref_len += ref_flat.len();
        for ((_, h), (_, r)) in pair.hyp.words.iter().zip(&pair.reference.words) {
            total_words += 1;
            if h != r {
                wrong_words += 1;
            }
        }
        let pred = boundary_labels(pair.hyp);
        let refs = boundary_labels(pair.reference);
        for (i, r) in refs.iter().enumerate() {
            let Some(ref_ph) = r else { continue };
            if let Some(cat) = restrict_category {
                if pair.categories[i] != cat {
                    continue;
                }
            }
            boundaries += 1;
            if pred[i].as_deref() == Some(ref_ph.as_str()) {
                correct += 1;
            }
        }
    }
    let acc = if boundaries > 0 {
        Some(100.0 * correct as f64 / boundaries as f64)
    } else {
        None
    };
    Ok(Some(CaseMetrics {
        sentences: pairs.len(),
        boundaries,
        correct,
        acc_plp: acc,
        per: 100.0 * total_dist as f64 / total_ref_len as f64,
        wer: 100.0 * wrong_words as f64 / total_words as f64,
    }))
}

/// Computes the four-case report. PER/WER for a case row are restricted to
/// sentences containing that case; Acc_plp for liaison/linking rows is
/// additionally restricted to boundaries of that category.
pub fn evaluate_report(pairs: &[EvalPair<'_>]) -> Result<EvalReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    for pair in pairs {
        if pair.hyp.word_count() != pair.reference.word_count() {
            return Err(MetricsError::WordCountMismatch {
                hyp: pair.hyp.word_count(),
                ref_len: pair.reference.word_count(),
            });
        }
    }
    let all: Vec<&EvalPair> = pairs.iter().collect();
    let with_phen: Vec<&EvalPair> = pairs
        .iter()
        .filter(|p| p.reference.phenomenon_count() > 0)
        .collect();
    let with_cat = |cat: PhenomenonCategory| -> Vec<&EvalPair> {
        pairs
            .iter()
            .filter(|p| p.categories.iter().any(|c| *c == cat))
            .collect()
    };
    Ok(EvalReport {
        whole_sentence: case_metrics(&all, None)?.expect("non-empty set"),
        phonological: case_metrics(&with_phen, None)?,
        liaison: case_metrics(&with_cat(PhenomenonCategory::Liaison), Some(PhenomenonCategory::Liaison))?,
        linking: case_metrics(&with_cat(PhenomenonCategory::Linking), Some(PhenomenonCategory::Linking))?,
    })
}

impl EvalReport {
    /// Plain-text table in the four-row layout.
    pub fn to_table_string(&self) -> String {
        fn row(name: &str, m: &Option<CaseMetrics>) -> String {
            match m {
                Some(m) => {
                    let acc = m
                        .acc_plp
                        .map(|a| format!("{a:.2}"))
                        .unwrap_or_else(|| "NA".to_string());
                    format!(
                        "{name:<22} {acc:>8} {per:>8.2} {wer:>8.2} {s:>6} {b:>6} {c:>6}\n",
                        per = m.per,
                        wer = m.wer,
                        s = m.sentences,
                        b = m.boundaries,
                        c = m.correct,
                    )
                }
                None => format!("{name:<22} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n", "NA", "NA", "NA", 0, 0, 0),
            }
        }
        let mut out = format!(
            "{:<22} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n",
            "Case", "Acc_plp", "PER", "WER", "sents", "bnds", "corr"
        );
        out.push_str(&row("Whole sentence", &Some(self.whole_sentence.clone())));
        out.push_str(&row("Phonological phen.", &self.phonological));
        out.push_str(&row("Liaison", &self.liaison));
        out.push_str(&row("Linking", &self.linking));
        out
    }
}
