//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs without the libtest harness so the lines reach the terminal even when
//! everything passes. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convsr_core::eval::{
    ablation_table, heq_aggregate, question_stats, render_stats, token_f1, Aggregates, EvaluationReport, QuestionResult,
    StatsRow,
};
use convsr_core::eval::metrics::question_counts;
use convsr_core::eval::report::STATS_COLUMNS;
use convsr_core::fixtures::{canard_fixture_json, labeler_corpus, labeler_fixtures, quac_json, synthetic_corpus};
use convsr_core::ingest::{parse_quac, split_validation, write_corpus_dir, Corpus, Split};
use convsr_core::pipeline::{IdentityRewriter, Mode, Pipeline};
use convsr_core::reader::{HistoryPolicy, LexicalReader, Reader, ReaderInput};
use convsr_core::similarity::{select_history, soft_cosine};
use convsr_core::sr::{augment_question, is_accepting, label_sr};
use convsr_core::text::contains_ci;
use convsr_core::{SelectionConfig, TermSimilarityModel, TermVector, TurnScore, DEFAULT_THRESHOLD};

const INSTANCES: usize = 1000;
const SEED: u64 = 0x5eed;
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
const EVAL_BUDGET: Duration = Duration::from_secs(60);
const F1_HAND_TOL: f64 = 1e-4;
const E2E_DIALOGUES: usize = 50;
const VAL_FRACTION: f64 = 0.05;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

/// Random vocabulary `t0..tn`; each term has an embedding with probability 0.8.
struct World {
    embeddings: Vec<Option<Vec<f64>>>,
}

impl World {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(1..=20);
        let dim = rng.gen_range(2..=6);
        let embeddings = (0..n)
            .map(|_| rng.gen_bool(0.8).then(|| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        Self { embeddings }
    }

    fn len(&self) -> usize {
        self.embeddings.len()
    }

    fn model(&self) -> TermSimilarityModel {
        let dim = self.embeddings.iter().flatten().map(Vec::len).next().unwrap_or(1);
        let mut m = TermSimilarityModel::new(dim).expect("positive dimension");
        for (i, e) in self.embeddings.iter().enumerate() {
            if let Some(v) = e {
                m.insert(&format!("t{i}"), v.clone()).expect("matching dimension");
            }
        }
        m
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot / (na * nb)).clamp(-1.0, 1.0)
            }
        };
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i == j, &self.embeddings[i], &self.embeddings[j]) {
                        (true, _, _) => 1.0,
                        (false, Some(a), Some(b)) => cos(a, b).max(0.0).powi(2),
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect()
    }

    fn weights(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.len()).map(|_| if rng.gen_bool(1.0 / 3.0) { 0.0 } else { rng.gen_range(0.1..5.0) }).collect()
    }
}

fn vector(weights: &[f64]) -> TermVector {
    TermVector::from_weights(weights.iter().enumerate().map(|(i, &w)| (format!("t{i}"), w)))
}

fn dense_soft_cosine(s: &[Vec<f64>], q: &[f64], h: &[f64]) -> f64 {
    let form = |a: &[f64], b: &[f64]| -> f64 {
        (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).map(|(i, j)| s[i][j] * a[i] * b[j]).sum()
    };
    let (qq, hh) = (form(q, q), form(h, h));
    if qq <= 0.0 || hh <= 0.0 {
        return 0.0;
    }
    (form(q, h) / (qq.sqrt() * hh.sqrt())).clamp(0.0, 1.0)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let started = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..INSTANCES {
        let w = World::random(&mut rng);
        let (q, h) = (w.weights(&mut rng), w.weights(&mut rng));
        let sparse = soft_cosine(&vector(&q), &vector(&h), &w.model());
        let dense = dense_soft_cosine(&w.matrix(), &q, &h);
        let gap = (sparse - dense).abs();
        ensure(gap < ORACLE_TOL, || format!("case {case}: sparse {sparse} vs dense {dense}"))?;
        worst = worst.max(gap);
    }
    let elapsed = started.elapsed();
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}, budget {ORACLE_BUDGET:?}"))?;
    Ok(format!("{INSTANCES} pairs, max gap {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let identity = TermSimilarityModel::identity();
    let mut self_checked = 0;
    for case in 0..INSTANCES {
        let w = World::random(&mut rng);
        let m = w.model();
        let (qw, hw) = (w.weights(&mut rng), w.weights(&mut rng));
        let (q, h) = (vector(&qw), vector(&hw));

        let forward = soft_cosine(&q, &h, &m);
        let backward = soft_cosine(&h, &q, &m);
        ensure((forward - backward).abs() < ORACLE_TOL, || format!("case {case}: asymmetric {forward} vs {backward}"))?;

        if !q.is_empty() {
            let s = soft_cosine(&q, &q, &m);
            ensure((s - 1.0).abs() < ORACLE_TOL, || format!("case {case}: self-similarity {s}"))?;
            self_checked += 1;
        }

        let (a, b) = (rng.gen_range(0.01..100.0), rng.gen_range(0.01..100.0));
        let scaled = soft_cosine(&q.scaled(a), &h.scaled(b), &m);
        ensure((scaled - forward).abs() < ORACLE_TOL, || format!("case {case}: scaling by {a}, {b} gave {scaled} vs {forward}"))?;

        let dot: f64 = qw.iter().zip(&hw).map(|(x, y)| x * y).sum();
        let (nq, nh) = (qw.iter().map(|x| x * x).sum::<f64>().sqrt(), hw.iter().map(|x| x * x).sum::<f64>().sqrt());
        let cosine = if nq == 0.0 || nh == 0.0 { 0.0 } else { dot / (nq * nh) };
        let reduced = soft_cosine(&q, &h, &identity);
        ensure((reduced - cosine).abs() < ORACLE_TOL, || format!("case {case}: identity gave {reduced}, cosine {cosine}"))?;
    }
    Ok(format!("{INSTANCES} instances: symmetry, scaling, identity; self-similarity on {self_checked} non-empty vectors"))
}

fn random_scores(rng: &mut ChaCha8Rng) -> Vec<TurnScore> {
    let n = rng.gen_range(0..24);
    (0..n)
        .map(|turn_index| {
            let score = match rng.gen_range(0..7) {
                0 => DEFAULT_THRESHOLD,
                1 => 0.0,
                2 => 1.0,
                _ => rng.gen_range(0.0..=1.0),
            };
            TurnScore { turn_index, score }
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut at_threshold = 0;
    for case in 0..INSTANCES {
        let scores = random_scores(&mut rng);
        let (a, b): (f64, f64) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let k = rng.gen_range(1..6);

        let low = select_history(&scores, &SelectionConfig::new(lo, None).unwrap());
        let high = select_history(&scores, &SelectionConfig::new(hi, None).unwrap());
        ensure(low.windows(2).all(|w| w[0] < w[1]), || format!("case {case}: not chronological {low:?}"))?;
        ensure(low.iter().all(|&i| scores[i].score >= lo), || format!("case {case}: below threshold kept"))?;
        ensure(high.iter().all(|i| low.contains(i)), || format!("case {case}: raising θ added a turn"))?;

        let capped = select_history(&scores, &SelectionConfig::new(lo, Some(k)).unwrap());
        let expected = &low[low.len().saturating_sub(k)..];
        ensure(capped == expected, || format!("case {case}: k={k} kept {capped:?}, expected {expected:?}"))?;

        let default = select_history(&scores, &SelectionConfig::default());
        for s in scores.iter().filter(|s| s.score == DEFAULT_THRESHOLD) {
            ensure(default.contains(&s.turn_index), || format!("case {case}: score 0.75 dropped"))?;
            at_threshold += 1;
        }
    }
    Ok(format!("{INSTANCES} score lists, {at_threshold} scores exactly at 0.75 kept"))
}

fn oracle_f1(prediction: &str, reference: &str) -> f64 {
    let (pm, rm) = (prediction.trim() == "CANNOTANSWER", reference.trim() == "CANNOTANSWER");
    if pm || rm {
        return if pm && rm { 1.0 } else { 0.0 };
    }
    let tokens = |s: &str| -> Vec<String> {
        let kept: String = s.to_lowercase().chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
        kept.split_whitespace().filter(|t| !matches!(*t, "a" | "an" | "the")).map(String::from).collect()
    };
    let (p, r) = (tokens(prediction), tokens(reference));
    if p.is_empty() || r.is_empty() {
        return if p.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let mut remaining = r.clone();
    let mut common = 0usize;
    for t in &p {
        if let Some(pos) = remaining.iter().position(|x| x == t) {
            remaining.swap_remove(pos);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let (precision, recall) = (common as f64 / p.len() as f64, common as f64 / r.len() as f64);
    2.0 * precision * recall / (precision + recall)
}

fn random_answer(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[&str] =
        &["the", "The", "a", "An", "Monica,", "monica", "Geller.", "fourteenth", "episode", "CANNOTANSWER", "cox", "Cox!", "x", "y"];
    let n = rng.gen_range(0..8);
    (0..n).map(|_| *POOL.choose(rng).expect("non-empty pool")).collect::<Vec<_>>().join(" ")
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    for case in 0..INSTANCES {
        let (p, r) = (random_answer(&mut rng), random_answer(&mut rng));
        let (got, want) = (token_f1(&p, &r), oracle_f1(&p, &r));
        ensure((got - want).abs() < ORACLE_TOL, || format!("case {case}: {p:?} vs {r:?}: {got} != {want}"))?;
    }
    let hand = token_f1("the fourteenth episode", "fourteenth");
    ensure((hand - 0.6667).abs() < F1_HAND_TOL, || format!("hand case gave {hand}"))?;

    let row = |d: &str, t: usize, pass: bool| {
        QuestionResult::new(d, t, "convsr", "dynamic", "q", "q", "p", if pass { 1.0 } else { 0.0 }, 1.0)
    };
    let mut rows = vec![row("single", 0, true)];
    rows.extend((0..10).map(|t| row("long", t, t != 4)));
    let (heq_q, heq_d) = heq_aggregate(&rows).map_err(|e| e.to_string())?;
    ensure((heq_q - 1000.0 / 11.0).abs() < ORACLE_TOL && (heq_q - 90.91).abs() < 0.01, || format!("HEQ-Q {heq_q}"))?;
    ensure(heq_d == 50.0, || format!("HEQ-D {heq_d}"))?;
    Ok(format!("{INSTANCES} string pairs; hand F1 {hand:.4}; HEQ ({heq_q:.2}, {heq_d:.1})"))
}

fn ask(reader: &LexicalReader, passage: &Arc<convsr_core::types::Passage>, text: &str) -> Result<convsr_core::types::AnswerSpan, String> {
    let input = ReaderInput { passage: passage.clone(), question_text: text.to_string(), history: vec![], policy_tag: "acceptance".into() };
    reader.predict(&input).map_err(|e| e.to_string())
}

fn criterion_5() -> Outcome {
    let reader = LexicalReader::default();
    let fixtures = labeler_fixtures();
    ensure(fixtures.len() >= 10, || format!("only {} fixtures", fixtures.len()))?;
    let mut failures = Vec::new();
    for f in &fixtures {
        let id = &f.dialogue.id;
        let turn = f.turn();
        let check = || -> Result<(), String> {
            let bare = ask(&reader, &f.dialogue.passage, &turn.question.text)?;
            ensure(!is_accepting(&bare, &turn.gold_answers), || format!("bare question answered: {:?}", bare.text))?;
            let out = label_sr(turn, &f.rewrite, f.history(), &f.dialogue.passage, &reader).map_err(|e| e.to_string())?;
            ensure(!out.sr.is_empty(), || "empty representation".into())?;
            ensure(out.accepted, || format!("not accepted: {}", out.sr))?;
            for e in out.sr.entities() {
                ensure(contains_ci(&f.rewrite, e), || format!("{e:?} not in rewrite"))?;
                ensure(!contains_ci(&turn.question.text, e), || format!("{e:?} already in question"))?;
            }
            let helped = ask(&reader, &f.dialogue.passage, &augment_question(&turn.question.text, &out.sr))?;
            ensure(is_accepting(&helped, &turn.gold_answers), || format!("augmented answer {:?}", helped.text))
        };
        if let Err(e) = check() {
            failures.push(format!("{id}: {e}"));
        }
    }
    let passed = fixtures.len() - failures.len();
    ensure(failures.is_empty(), || format!("{passed}/{} fixtures; {}", fixtures.len(), failures.join("; ")))?;
    Ok(format!("{passed}/{} fixtures", fixtures.len()))
}

fn pipeline(mode: Mode) -> Pipeline {
    Pipeline::new(mode, Arc::new(LexicalReader::default()), Arc::new(TermSimilarityModel::identity()))
}

fn previous_turn_only() -> SelectionConfig {
    SelectionConfig::new(0.0, Some(1)).expect("valid selection")
}

fn criterion_6() -> Outcome {
    let p = pipeline(Mode::Convsr { selection: previous_turn_only() });
    let (rows, _) = ablation_table(&p, &labeler_corpus(), BTreeMap::new(), None).map_err(|e| e.to_string())?;
    let f1 = |label: &str| rows.iter().find(|r| r.label == label).map(|r| r.f1).ok_or(format!("no {label} row"));
    let (full, no_ce, no_qe) = (f1("full")?, f1("no_context_entity")?, f1("no_question_entity")?);
    let summary = format!("full {full:.1}, no_context_entity {no_ce:.1}, no_question_entity {no_qe:.1}");
    ensure(full >= no_ce && full > no_qe, || summary.clone())?;
    Ok(summary)
}

fn criterion_7() -> Outcome {
    let mut dialogues: Vec<_> = labeler_fixtures().into_iter().map(|f| f.dialogue).collect();
    dialogues.push(convsr_core::fixtures::episode_dialogue());
    let convsr = pipeline(Mode::Convsr { selection: previous_turn_only() });
    let prev_sr = pipeline(Mode::Baseline { policy: HistoryPolicy::PrependPrev, with_sr: true });
    let mut compared = 0;
    for d in &dialogues {
        for turn in &d.turns {
            let at = format!("{} turn {}", d.id, turn.question.turn_index);
            let a = convsr.prepare(&turn.question, d).map_err(|e| format!("{at}: {e}"))?;
            let b = prev_sr.prepare(&turn.question, d).map_err(|e| format!("{at}: {e}"))?;
            let bytes = |x: &convsr_core::pipeline::PreparedTurn| serde_json::to_vec(&x.input.wire_payload()).expect("payload serializes");
            ensure(bytes(&a) == bytes(&b), || format!("(a) {at}: reader inputs differ"))?;
            compared += 1;
        }
    }

    let qr = pipeline(Mode::Pipeline).with_rewriter(Arc::new(IdentityRewriter));
    let all = pipeline(Mode::Baseline { policy: HistoryPolicy::PrependAll, with_sr: false });
    let mut answered = 0;
    for d in &dialogues {
        for turn in &d.turns {
            let at = format!("{} turn {}", d.id, turn.question.turn_index);
            let a = qr.answer(&turn.question, d).map_err(|e| format!("{at}: {e}"))?;
            let b = all.answer(&turn.question, d).map_err(|e| format!("{at}: {e}"))?;
            ensure(
                a.answer == b.answer && a.augmented_question == b.augmented_question && a.history == b.history,
                || format!("(b) {at}: identity rewriter diverges from prepend_all"),
            )?;
            answered += 1;
        }
    }
    Ok(format!("(a) {compared} reader inputs byte-identical; (b) {answered} answers identical"))
}

fn convsr(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_convsr")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("convsr {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Writes the fixture corpus as a corpus directory whose val split holds every dialogue.
fn fixture_corpus_dir(dir: &Path) -> Result<(), String> {
    let (corpus, records) = synthetic_corpus(E2E_DIALOGUES);
    let val = Corpus::new(corpus.name, Split::Val, corpus.dialogues).map_err(|e| e.to_string())?;
    write_corpus_dir(dir, &[&val], &records).map_err(|e| e.to_string())
}

fn report_body(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text.lines().filter(|l| !l.trim_start().starts_with("\"generated_at\"")).collect::<Vec<_>>().join("\n"))
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("corpus");
    fixture_corpus_dir(&data)?;
    let data = data.to_str().ok_or("non-UTF-8 temp path")?;

    let mut bodies = Vec::new();
    let mut slowest = Duration::ZERO;
    for (run, jobs) in [(1, "4"), (2, "1")] {
        let report = tmp.path().join(format!("report{run}.json"));
        let started = Instant::now();
        let report_arg = report.to_str().ok_or("non-UTF-8 temp path")?;
        convsr(&["--jobs", jobs, "eval", "--corpus", data, "--split", "val", "--mode", "convsr", "--reader", "lexical", "--rewriter", "oracle", "--report", report_arg])?;
        let elapsed = started.elapsed();
        ensure(elapsed < EVAL_BUDGET, || format!("run {run} took {elapsed:?}"))?;
        slowest = slowest.max(elapsed);
        bodies.push(report_body(&report)?);

        let parsed: EvaluationReport = serde_json::from_str(&fs::read_to_string(&report).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(parsed.generated_at.is_some(), || "report lacks a timestamp".into())?;
        ensure(parsed.aggregates.dialogues == E2E_DIALOGUES, || format!("{} dialogues evaluated", parsed.aggregates.dialogues))?;
        let recomputed = Aggregates::compute(&parsed.results).map_err(|e| e.to_string())?;
        ensure(recomputed == parsed.aggregates, || format!("stored {:?} vs recomputed {recomputed:?}", parsed.aggregates))?;
    }
    ensure(bodies[0].as_bytes() == bodies[1].as_bytes(), || "report bodies differ between runs".into())?;
    Ok(format!("{E2E_DIALOGUES} dialogues, slowest run {:.2} s, bodies identical, aggregates recomputed", slowest.as_secs_f64()))
}

fn criterion_9() -> Outcome {
    let (fixture, _) = synthetic_corpus(E2E_DIALOGUES);
    let corpus = parse_quac(&quac_json(&fixture), "fixture", Split::Train).map_err(|e| e.to_string())?;
    let spans: Vec<_> = corpus.dialogues.iter().flat_map(|d| d.turns.iter().flat_map(move |t| t.gold_answers.iter().map(move |a| (d, a)))).collect();
    let intact = spans.iter().filter(|(d, a)| a.is_consistent_with(&d.passage)).count();
    ensure(intact == spans.len() && !spans.is_empty(), || format!("{intact}/{} spans intact", spans.len()))?;

    let (train, val) = split_validation(&corpus, VAL_FRACTION, 13).map_err(|e| e.to_string())?;
    let (train2, val2) = split_validation(&corpus, VAL_FRACTION, 13).map_err(|e| e.to_string())?;
    let ids = |c: &Corpus| c.dialogues.iter().map(|d| d.id.clone()).collect::<Vec<_>>();
    ensure(ids(&train) == ids(&train2) && ids(&val) == ids(&val2), || "split differs under the same seed".into())?;
    ensure(!val.dialogues.is_empty(), || "empty validation split".into())?;
    for d in &corpus.dialogues {
        let placed: Vec<_> = train.dialogues.iter().chain(&val.dialogues).filter(|x| x.id == d.id).collect();
        ensure(placed.len() == 1, || format!("{} placed {} times", d.id, placed.len()))?;
        ensure(placed[0].turns.len() == d.turns.len(), || format!("{} lost turns", d.id))?;
    }

    // The CLI writes the same split.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let quac = tmp.path().join("quac.json");
    let canard = tmp.path().join("canard.json");
    let (_, records) = synthetic_corpus(E2E_DIALOGUES);
    fs::write(&quac, quac_json(&fixture)).map_err(|e| e.to_string())?;
    fs::write(&canard, canard_fixture_json(&records)).map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    let path = |p: &Path| p.to_str().map(String::from).ok_or("non-UTF-8 temp path".to_string());
    convsr(&["ingest", "--quac", &path(&quac)?, "--canard", &path(&canard)?, "--out", &path(&out)?, "--seed", "13"])?;
    let written = Corpus::load(&out.join("val.json")).map_err(|e| e.to_string())?;
    ensure(ids(&written) == ids(&val), || "CLI validation split differs from the library split".into())?;

    Ok(format!("{}/{} spans intact; {} of {} dialogues held out, stable under seed 13", intact, spans.len(), val.dialogues.len(), corpus.dialogues.len()))
}

/// Ten questions with hand-counted (tokens, pronouns, proper nouns).
const HAND_COUNTED: [(&str, (usize, usize, usize)); 10] = [
    ("What was Courteney Cox famous for?", (6, 0, 2)),
    ("Did she win an Emmy?", (5, 1, 1)),
    ("Where did he grow up?", (5, 1, 0)),
    ("Who played Monica Geller on Friends?", (6, 0, 3)),
    ("What happened after that?", (4, 0, 0)),
    ("Was it filmed in Los Angeles?", (6, 1, 2)),
    ("How did they meet Matt LeBlanc?", (6, 1, 2)),
    ("What was his role in Scream?", (6, 1, 1)),
    ("Did her career continue?", (4, 1, 0)),
    ("Is there anything else interesting about this article?", (8, 0, 0)),
];

fn criterion_10() -> Outcome {
    for (q, expected) in HAND_COUNTED {
        let got = question_counts(q);
        ensure(got == expected, || format!("{q:?}: counted {got:?}, hand count {expected:?}"))?;
    }
    let questions: Vec<&str> = HAND_COUNTED.iter().map(|(q, _)| *q).collect();
    let stats = question_stats(&questions);
    ensure(stats.avg_length == 5.6 && stats.avg_pronouns == 0.6 && stats.avg_proper_nouns == 1.1, || format!("{stats:?}"))?;

    ensure(STATS_COLUMNS == ["Avg Length", "Pronoun", "Proper Noun", "F1"], || format!("columns {STATS_COLUMNS:?}"))?;
    let table = render_stats(&[StatsRow { label: "Original".into(), stats, f1: 0.0 }]);
    let header_ok = |header: &str| {
        let mut rest = header;
        STATS_COLUMNS.iter().all(|c| match rest.find(c) {
            Some(at) => {
                rest = &rest[at + c.len()..];
                true
            }
            None => false,
        })
    };
    ensure(header_ok(table.lines().next().unwrap_or("")), || format!("table header {table:?}"))?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("corpus");
    fixture_corpus_dir(&data)?;
    let printed = convsr(&["stats", "--corpus", data.to_str().ok_or("non-UTF-8 temp path")?, "--augmented"])?;
    let header = printed.lines().next().unwrap_or("");
    ensure(header_ok(header), || format!("stats header {header:?}"))?;
    ensure(printed.lines().count() == 4, || format!("expected three rows:\n{printed}"))?;
    Ok(format!("10 questions: avg length {}, pronouns {}, proper nouns {}; columns {}", stats.avg_length, stats.avg_pronouns, stats.avg_proper_nouns, STATS_COLUMNS.join(" | ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("soft-cosine oracle equivalence", criterion_1),
        ("soft-cosine algebraic suite", criterion_2),
        ("selection contract", criterion_3),
        ("metric oracle equivalence", criterion_4),
        ("labeler effectiveness fixtures", criterion_5),
        ("slot ablation direction", criterion_6),
        ("mode equivalences", criterion_7),
        ("end-to-end determinism", criterion_8),
        ("ingestion integrity", criterion_9),
        ("statistics analyzer", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let message = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", message.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{n:>2}] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{n:>2}] {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
