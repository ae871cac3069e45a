//! End-to-end acceptance suite. Each test prints a single PASS/FAIL line
//! for its criterion; tolerances are pinned in the assertions.

use std::sync::OnceLock;

use frpron::g2p::{self, G2PConfig, G2PModel};
use frpron::metrics::{acc_plp, levenshtein, per, wer};
use frpron::oracle::{builtin_templates, extend_with_nonsense, generate_corpus, seed_lexicon};
use frpron::pipeline::{
    build_vocabularies, evaluate_with_categories, run_two_step, word_only_baseline,
    ExperimentConfig, ExperimentReport,
};
use frpron::plp::{
    build_boundary_example, plp_param_count, wbce, BoundaryExample, ContextWindow, PLPConfig,
    PLPModel,
};
use frpron::postag::TagSet;
use frpron::transcript::{
    corpus_to_string, parse_corpus, GraphemeString, PhonemeInventory, PhonemeSequence,
};
use frpron::vocab::SymbolTable;

fn verdict(criterion: usize, name: &str, ok: bool) {
    println!(
        "criterion {criterion} ({name}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed");
}

// ---------------------------------------------------------------- shared

fn plp_fixture() -> (PLPModel, SymbolTable, SymbolTable, SymbolTable) {
    let graphemes = SymbolTable::build_from_corpus(
        "mesamisfrèrespetitenfantdbcovxyz".chars().map(|c| c.to_string()),
    )
    .unwrap();
    let phonemes = SymbolTable::build_from_corpus([
        "m", "e", "z", "a", "i", "f", "R", "E", "t", "n", "s", "A~", "9~", "@",
    ])
    .unwrap();
    let pos = SymbolTable::build_from_corpus(TagSet::toy().tags().iter()).unwrap();
    let mut cfg = PLPConfig::tiny(16);
    cfg.dropout = 0.0;
    let model = PLPModel::new(cfg, &graphemes, &phonemes, &pos, 11).unwrap();
    (model, graphemes, phonemes, pos)
}

#[allow(clippy::too_many_arguments)]
fn boundary(
    g: &SymbolTable,
    p: &SymbolTable,
    t: &SymbolTable,
    left: &str,
    right: &str,
    pron_l: &[&str],
    pron_r: &[&str],
    label: Option<&str>,
) -> BoundaryExample {
    let mut ex = build_boundary_example(
        g,
        p,
        t,
        ContextWindow::default(),
        &GraphemeString::new(left),
        &GraphemeString::new(right),
        &PhonemeSequence::from_symbols(pron_l),
        &PhonemeSequence::from_symbols(pron_r),
        "DET",
        "NOUN",
    )
    .unwrap();
    if let Some(ph) = label {
        ex.y_phen = true;
        ex.y_ph = Some(p.encode(ph));
    }
    ex
}

// ------------------------------------------------------------ criterion 1

#[test]
fn loss_structure() {
    let (mut model, g, p, t) = plp_fixture();

    // Gate: with no positive examples the phoneme head must receive an
    // exactly-zero gradient, analytically and by central differences.
    let negatives = vec![
        boundary(&g, &p, &t, "mes", "frères", &["m", "e"], &["f", "R", "E", "R"], None),
        boundary(&g, &p, &t, "petit", "mes", &["p", "@", "t", "i"], &["m", "e"], None),
        boundary(&g, &p, &t, "ami", "dos", &["a", "m", "i"], &["d", "o"], None),
    ];
    let neg_refs: Vec<&BoundaryExample> = negatives.iter().collect();
    let (l0, _, l_ph0) = model.eval_loss_with_grads(&neg_refs).unwrap();
    assert_eq!(l_ph0, 0.0, "gated CE must be exactly zero on negatives");
    let grads = model.params.flat_grads();
    let head_ranges = model.phoneme_head_flat_ranges();
    let mut gate_ok = true;
    for r in &head_ranges {
        for i in r.clone() {
            if grads[i] != 0.0 {
                gate_ok = false;
            }
        }
    }
    // Central differences on three head coordinates: the loss must be
    // bitwise invariant, so the FD derivative is exactly zero.
    let base = model.params.flat_values();
    let h = 1e-4;
    for &i in &[head_ranges[0].start, head_ranges[0].start + 1, head_ranges[1].start] {
        for sign in [1.0, -1.0] {
            let mut flat = base.clone();
            flat[i] += sign * h;
            model.params.set_flat_values(&flat);
            let (l, _, _) = model.eval_loss(&neg_refs).unwrap();
            if l.to_bits() != l0.to_bits() {
                gate_ok = false;
            }
        }
    }
    model.params.set_flat_values(&base);

    // Finite-difference validation of the analytic gradient on a mixed
    // batch, 1e-3 relative tolerance at the largest-magnitude coordinates.
    let mixed = vec![
        boundary(&g, &p, &t, "mes", "amis", &["m", "e"], &["a", "m", "i"], Some("z")),
        boundary(&g, &p, &t, "mes", "frères", &["m", "e"], &["f", "R", "E", "R"], None),
        boundary(&g, &p, &t, "petit", "ami", &["p", "@", "t", "i"], &["a", "m", "i"], Some("t")),
    ];
    let mixed_refs: Vec<&BoundaryExample> = mixed.iter().collect();
    let (l_plp, l_phen, l_ph) = model.eval_loss_with_grads(&mixed_refs).unwrap();
    let analytic = model.params.flat_grads();
    let mut idx: Vec<usize> = (0..analytic.len()).collect();
    idx.sort_by(|&a, &b| analytic[b].abs().partial_cmp(&analytic[a].abs()).unwrap());
    let mut fd_ok = true;
    for &i in idx.iter().take(5) {
        let mut plus = base.clone();
        plus[i] += h;
        model.params.set_flat_values(&plus);
        let (lp, _, _) = model.eval_loss(&mixed_refs).unwrap();
        let mut minus = base.clone();
        minus[i] -= h;
        model.params.set_flat_values(&minus);
        let (lm, _, _) = model.eval_loss(&mixed_refs).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        if (fd - analytic[i]).abs() > 1e-3 * analytic[i].abs().max(1e-6) {
            fd_ok = false;
        }
    }
    model.params.set_flat_values(&base);

    // Additivity of the combined objective.
    let additive = (l_plp - (l_phen + l_ph)).abs() < 1e-6;

    // Weight-1 WBCE reduces to plain BCE.
    let ps = [0.9f64, 0.2, 0.5, 0.75];
    let ys = [1.0f64, 0.0, 1.0, 0.0];
    let bce: f64 = ps
        .iter()
        .zip(&ys)
        .map(|(&pv, &yv)| -(yv * pv.ln() + (1.0 - yv) * (1.0 - pv).ln()))
        .sum::<f64>()
        / ps.len() as f64;
    let reduces = (wbce(&ps, &ys, 1.0) - bce).abs() < 1e-9;

    verdict(1, "loss structure", gate_ok && fd_ok && additive && reduces);
}

// ------------------------------------------------------------ criterion 2

fn lev_recursive(a: &[u8], b: &[u8]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((la, ra)), Some((lb, rb))) => {
            let sub = lev_recursive(ra, rb) + usize::from(la != lb);
            let del = lev_recursive(ra, b) + 1;
            let ins = lev_recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn all_strings(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                out.push(t.clone());
                next.push(t);
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn metric_oracles() {
    // Exhaustive agreement with the naive recursion: all binary strings up
    // to length 4, plus every length-(5|6) pair over {a,b} with b fixed
    // short enough to keep the recursion tractable.
    let mut lev_ok = true;
    let short = all_strings(b"ab", 4);
    for a in &short {
        for b in &short {
            if levenshtein(a, b) != lev_recursive(a, b) {
                lev_ok = false;
            }
        }
    }
    let long = all_strings(b"abc", 6);
    for (i, a) in long.iter().enumerate().filter(|(_, s)| s.len() >= 5) {
        // Deterministic sparse sample of partners up to length 6.
        let b = &long[(i * 131) % long.len()];
        if levenshtein(a, b) != lev_recursive(a, b) {
            lev_ok = false;
        }
    }

    // Hand-computed fixtures, exact.
    let per_ok = per(&["a", "b", "c"], &["a", "x", "c"]).unwrap() == 100.0 / 3.0
        && per::<&str>(&["a", "b"], &["a"]).unwrap() == 100.0
        && per(&["a"], &["a"]).unwrap() == 0.0;
    let wer_ok = wer(
        &[vec!["a", "b"], vec!["c"]],
        &[vec!["a", "b"], vec!["d"]],
    )
    .unwrap()
        == 50.0;
    let acc_ok = acc_plp(
        &[Some("z".into()), None, Some("n".into())],
        &[Some("z".into()), None, Some("t".into())],
    )
    .unwrap()
        == Some(50.0)
        && acc_plp(&[None, None], &[None, None]).unwrap().is_none();

    // Transcript parse/serialize byte-exact round-trip.
    let text = "un enfant innocent a oublié sa petite envelope\n\
                9~ ^ nA~fA~ / inOsA~ / a / ublije / sa / p@ti ^ tA~vlOp\n";
    let parsed = parse_corpus(text, &PhonemeInventory::french_xsampa()).unwrap();
    let round_ok = corpus_to_string(&parsed) == text;

    verdict(2, "metric oracles", lev_ok && per_ok && wer_ok && acc_ok && round_ok);
}

// ------------------------------------------------------------ criterion 3

#[test]
fn g2p_memorization() {
    let (lexicon, _) = seed_lexicon();
    let entries: Vec<_> = lexicon.word_entries().into_iter().take(64).collect();
    assert_eq!(entries.len(), 64);
    let tags = TagSet::toy();
    let (graphemes, phonemes, _) = build_vocabularies(&entries, &[], &tags).unwrap();
    let mut model =
        G2PModel::new(G2PConfig::tiny(64, 2), &graphemes, &phonemes, 0).unwrap();
    let pairs: Vec<_> = entries
        .iter()
        .map(|e| g2p::encode_entry(&graphemes, &phonemes, e))
        .collect();
    // 64 pairs / batch 16 = 4 steps per epoch; 125 epochs = 500 steps.
    let options = g2p::FitOptions {
        lr: 3e-3,
        max_epochs: 125,
        patience: 125,
        batch_size: 16,
        ..Default::default()
    };
    g2p::fit(&mut model, &pairs, &pairs, &options).unwrap();

    let mut dist = 0usize;
    let mut ref_len = 0usize;
    let mut wrong = 0usize;
    for e in &entries {
        let pred = model.pronounce(&graphemes, &phonemes, &e.word).unwrap();
        dist += levenshtein(pred.symbols(), e.pronunciation.symbols());
        ref_len += e.pronunciation.len();
        if pred != e.pronunciation {
            wrong += 1;
        }
    }
    let train_per = 100.0 * dist as f64 / ref_len as f64;
    let train_wer = 100.0 * wrong as f64 / entries.len() as f64;
    println!("  memorization: PER {train_per:.2}%, WER {train_wer:.2}%");
    verdict(3, "word-model memorization", train_per <= 1.0 && train_wer <= 2.0);
}

// ------------------------------------------------------------ criterion 4

#[test]
fn word_only_baseline_floor() {
    let (lexicon, exceptions) = seed_lexicon();
    let (_, sentences) =
        generate_corpus(&lexicon, &exceptions, &builtin_templates(), 150, 3).unwrap();
    let hyps: Vec<_> = sentences
        .iter()
        .map(|s| {
            word_only_baseline(s, |w| {
                lexicon.get(w).map(|e| e.entry.pronunciation.clone())
            })
        })
        .collect();
    let report = evaluate_with_categories(&hyps, &sentences, Some(&lexicon)).unwrap();
    let phon = report.phonological.as_ref().expect("corpus has phenomena");
    let mut ok = phon.boundaries > 0 && phon.acc_plp == Some(0.0);
    for case in [&report.liaison, &report.linking] {
        if let Some(c) = case {
            ok &= c.acc_plp.is_none() || c.acc_plp == Some(0.0);
        }
    }
    verdict(4, "word-only baseline floor", ok);
}

// ---------------------------------------------------------- criteria 5, 7

struct ChainOutcome {
    first: ExperimentReport,
    first_json: String,
    second_json: String,
}

fn chain() -> &'static ChainOutcome {
    static OUTCOME: OnceLock<ChainOutcome> = OnceLock::new();
    OUTCOME.get_or_init(|| {
        let (lexicon, exceptions) = seed_lexicon();
        let lexicon = extend_with_nonsense(&lexicon, 800, 7).unwrap();
        let (words, sentences) =
            generate_corpus(&lexicon, &exceptions, &builtin_templates(), 2000, 7).unwrap();
        let tagger = lexicon.tagger();
        let total_boundaries: usize = sentences.iter().map(|s| s.boundaries.len()).sum();
        let full_k = total_boundaries.saturating_sub(800).min(4000);
        let mut config = ExperimentConfig::desk_scale();
        config.plp_train_k = Some(full_k);
        let ks = [full_k, full_k / 4];
        let run = || {
            run_two_step(&config, &words, &sentences, Some(&lexicon), &tagger, &ks)
                .unwrap()
                .report
        };
        let first = run();
        let second = run();
        let first_json = first.to_json();
        let second_json = second.to_json();
        ChainOutcome { first, first_json, second_json }
    })
}

#[test]
fn two_step_accuracy_trend() {
    let outcome = chain();
    let full = &outcome.first.runs[0].report;
    let quarter = &outcome.first.runs[1].report;
    let overall = full.whole_sentence.acc_plp.expect("phenomena in test set");
    let liaison = full
        .liaison
        .as_ref()
        .and_then(|c| c.acc_plp)
        .expect("liaison cases in test set");
    let linking = full
        .linking
        .as_ref()
        .and_then(|c| c.acc_plp)
        .expect("linking cases in test set");
    let quarter_overall = quarter.whole_sentence.acc_plp.expect("phenomena in test set");
    println!(
        "  full k: overall {overall:.2}%, liaison {liaison:.2}%, linking {linking:.2}%; \
         quarter k overall {quarter_overall:.2}%"
    );
    verdict(
        5,
        "two-step accuracy and k-trend",
        overall >= 95.0
            && liaison >= 90.0
            && linking >= 90.0
            && overall >= quarter_overall - 2.0,
    );
}

#[test]
fn determinism() {
    let outcome = chain();
    verdict(7, "bit-exact rerun", outcome.first_json == outcome.second_json);
}

// ------------------------------------------------------------ criterion 6

#[test]
fn architecture_counts() {
    let tags = TagSet::toy();
    let (lexicon, _) = seed_lexicon();
    let entries = lexicon.word_entries();
    let (g, p, t) = build_vocabularies(&entries, &[], &tags).unwrap();

    let g2p_model = G2PModel::new(G2PConfig::tiny(32, 1), &g, &p, 0).unwrap();
    let g2p_exact =
        g2p_model.param_count() == g2p::g2p_param_count(&G2PConfig::tiny(32, 1), g.len(), p.len());
    let plp_model = PLPModel::new(PLPConfig::tiny(16), &g, &p, &t, 0).unwrap();
    let plp_exact = plp_model.param_count()
        == plp_param_count(&PLPConfig::tiny(16), g.len(), p.len(), t.len());

    let mut range_ok = true;
    for vocab in [50usize, 100, 300, 600] {
        let ng = g2p::g2p_param_count(&G2PConfig::full_scale(), vocab, vocab) as f64;
        if (ng - 58.9e6).abs() / 58.9e6 >= 0.10 {
            range_ok = false;
        }
        let np = plp_param_count(&PLPConfig::full_scale(), vocab, vocab, 20) as f64;
        if (np - 14.8e6).abs() / 14.8e6 >= 0.15 {
            range_ok = false;
        }
    }
    verdict(6, "parameter accounting", g2p_exact && plp_exact && range_ok);
}
