//! Loading and indexing of QuAC-style dialogue corpora and CANARD-style
//! rewrite records, plus the dialogue-level validation split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{AnswerSpan, Dialogue, DialogueError, Passage, Question, Turn, CANNOT_ANSWER};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("answer spans do not match the passage text for qa ids: {}", .0.join(", "))]
    SpanMismatch(Vec<String>),
    #[error("qa {0} has no reference answer")]
    MissingAnswer(String),
    #[error("paragraph {0}: context does not end with the no-answer marker")]
    MissingMarker(String),
    #[error("paragraph {0}: empty context")]
    EmptyContext(String),
    #[error("duplicate dialogue id {0}")]
    DuplicateDialogue(String),
    #[error("record {index}: missing field {field:?}")]
    MissingField { index: usize, field: &'static str },
    #[error("record {index}: field {field:?} has the wrong type")]
    FieldType { index: usize, field: &'static str },
    #[error("duplicate rewrite key ({0}, {1})")]
    DuplicateKey(String, usize),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("validation fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, split: Split, dialogues: Vec<Dialogue>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for d in &dialogues {
            if !seen.insert(d.id.as_str()) {
                return Err(IngestError::DuplicateDialogue(d.id.clone()));
            }
        }
        Ok(Self { name: name.into(), split, dialogues })
    }

    pub fn question_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn dialogue(&self, id: &str) -> Option<&Dialogue> {
        self.dialogues.iter().find(|d| d.id == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let body = serde_json::to_string(self).expect("corpus serializes");
        fs::write(path, body).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
    }

    /// Reads a corpus persisted by [`Corpus::save`].
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let raw = read(path)?;
        let corpus: Corpus = parse_json(&raw)?;
        for d in &corpus.dialogues {
            d.validate(true)?;
        }
        Self::new(corpus.name, corpus.split, corpus.dialogues)
    }
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn parse_json<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<T, IngestError> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| IngestError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[derive(Deserialize)]
struct QuacFile {
    data: Vec<QuacArticle>,
}

#[derive(Deserialize)]
struct QuacArticle {
    #[serde(default)]
    title: String,
    #[serde(default)]
    background: String,
    paragraphs: Vec<QuacParagraph>,
}

#[derive(Deserialize)]
struct QuacParagraph {
    id: String,
    context: String,
    qas: Vec<QuacQa>,
}

#[derive(Deserialize)]
struct QuacQa {
    id: String,
    question: String,
    #[serde(default)]
    orig_answer: Option<QuacAnswer>,
    #[serde(default)]
    answers: Vec<QuacAnswer>,
}

#[derive(Deserialize)]
struct QuacAnswer {
    text: String,
    answer_start: i64,
}

/// Loads a QuAC-format JSON file. Every qa becomes one turn carrying all of
/// its reference answers (`orig_answer` is used only when `answers` is empty).
/// Answers whose text is the no-answer marker become the no-answer span.
pub fn load_quac(path: &Path, name: &str, split: Split) -> Result<Corpus, IngestError> {
    parse_quac(&read(path)?, name, split)
}

pub fn parse_quac(raw: &str, name: &str, split: Split) -> Result<Corpus, IngestError> {
    let file: QuacFile = parse_json(raw)?;
    let mut dialogues = Vec::new();
    let mut mismatched = Vec::new();

    for article in file.data {
        for paragraph in article.paragraphs {
            if paragraph.context.is_empty() {
                return Err(IngestError::EmptyContext(paragraph.id));
            }
            let passage = Passage {
                id: paragraph.id.clone(),
                title: article.title.clone(),
                background: article.background.clone(),
                text: paragraph.context,
                cannot_answer_marker: CANNOT_ANSWER.to_string(),
            };
            if !passage.ends_with_marker() {
                return Err(IngestError::MissingMarker(paragraph.id));
            }
            let mut turns = Vec::with_capacity(paragraph.qas.len());
            for (turn_index, qa) in paragraph.qas.into_iter().enumerate() {
                let refs = if qa.answers.is_empty() {
                    qa.orig_answer.into_iter().collect()
                } else {
                    qa.answers
                };
                if refs.is_empty() {
                    return Err(IngestError::MissingAnswer(qa.id));
                }
                let gold: Vec<AnswerSpan> = refs
                    .into_iter()
                    .map(|a| {
                        if a.text.trim() == passage.cannot_answer_marker {
                            passage.no_answer()
                        } else {
                            AnswerSpan { text: a.text, start_char: a.answer_start, score: 0.0 }
                        }
                    })
                    .collect();
                if gold.iter().any(|a| !a.is_consistent_with(&passage)) {
                    mismatched.push(qa.id.clone());
                }
                turns.push(Turn::new(Question::new(qa.id, qa.question, turn_index), gold));
            }
            dialogues.push(Dialogue::new(paragraph.id, passage, turns));
        }
    }

    if !mismatched.is_empty() {
        return Err(IngestError::SpanMismatch(mismatched));
    }
    Corpus::new(name, split, dialogues)
}

/// One human rewrite of a context-dependent question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub history_texts: Vec<String>,
    pub original_question: String,
    pub rewrite: String,
}

/// How `Question_no` maps onto turn indices. The original CANARD release
/// numbers questions from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuestionNumbering {
    #[default]
    ZeroBased,
    OneBased,
}

pub fn load_canard(path: &Path, numbering: QuestionNumbering) -> Result<Vec<RewriteRecord>, IngestError> {
    parse_canard(&read(path)?, numbering)
}

pub fn parse_canard(raw: &str, numbering: QuestionNumbering) -> Result<Vec<RewriteRecord>, IngestError> {
    let entries: Vec<serde_json::Map<String, Value>> = parse_json(raw)?;
    entries
        .iter()
        .enumerate()
        .map(|(index, entry)| {
            let field = |name: &'static str| entry.get(name).ok_or(IngestError::MissingField { index, field: name });
            let string = |name: &'static str| -> Result<String, IngestError> {
                field(name)?
                    .as_str()
                    .map(str::to_string)
                    .ok_or(IngestError::FieldType { index, field: name })
            };
            let history = field("History")?
                .as_array()
                .and_then(|items| items.iter().map(|v| v.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
                .ok_or(IngestError::FieldType { index, field: "History" })?;
            let number = field("Question_no")?
                .as_u64()
                .ok_or(IngestError::FieldType { index, field: "Question_no" })? as usize;
            let turn_index = match numbering {
                QuestionNumbering::ZeroBased => number,
                QuestionNumbering::OneBased => number
                    .checked_sub(1)
                    .ok_or(IngestError::FieldType { index, field: "Question_no" })?,
            };
            Ok(RewriteRecord {
                dialogue_id: string("QuAC_dialog_id")?,
                turn_index,
                history_texts: history,
                original_question: string("Question")?,
                rewrite: string("Rewrite")?,
            })
        })
        .collect()
}

/// Writes records back in the CANARD JSON layout (zero-based numbering).
pub fn canard_json(records: &[RewriteRecord]) -> String {
    let entries: Vec<Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "History": r.history_texts,
                "Question": r.original_question,
                "Rewrite": r.rewrite,
                "QuAC_dialog_id": r.dialogue_id,
                "Question_no": r.turn_index,
            })
        })
        .collect();
    serde_json::to_string(&entries).expect("records serialize")
}

/// Partitions dialogues into `(train, val)` with `|val| = round(fraction * N)`
/// (half rounds up). Each output keeps the input's dialogue order.
pub fn split_validation(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus), IngestError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(IngestError::Fraction(fraction));
    }
    let n = corpus.dialogues.len();
    if n == 0 {
        return Err(IngestError::EmptyCorpus);
    }
    // The epsilon keeps products like 0.05 * 10 on the half-up side.
    let val_count = ((fraction * n as f64) + 0.5 + 1e-9).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val_set: HashSet<usize> = order.into_iter().take(val_count).collect();

    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, d) in corpus.dialogues.iter().enumerate() {
        if val_set.contains(&i) {
            val.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    Ok((
        Corpus::new(corpus.name.clone(), Split::Train, train)?,
        Corpus::new(corpus.name.clone(), Split::Val, val)?,
    ))
}

pub type RewriteKey = (String, usize);

/// Rewrites keyed by `(dialogue_id, turn_index)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewriteIndex {
    records: BTreeMap<String, BTreeMap<usize, RewriteRecord>>,
}

impl RewriteIndex {
    pub fn get(&self, dialogue_id: &str, turn_index: usize) -> Option<&RewriteRecord> {
        self.records.get(dialogue_id)?.get(&turn_index)
    }

    pub fn len(&self) -> usize {
        self.records.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &RewriteRecord> {
        self.records.values().flat_map(BTreeMap::values)
    }

    /// Builds an index without a corpus, rejecting duplicate keys.
    pub fn from_records(records: impl IntoIterator<Item = RewriteRecord>) -> Result<Self, IngestError> {
        let mut index = Self::default();
        for r in records {
            index.insert(r)?;
        }
        Ok(index)
    }

    fn insert(&mut self, record: RewriteRecord) -> Result<(), IngestError> {
        let slot = self.records.entry(record.dialogue_id.clone()).or_default();
        if slot.contains_key(&record.turn_index) {
            return Err(IngestError::DuplicateKey(record.dialogue_id, record.turn_index));
        }
        slot.insert(record.turn_index, record);
        Ok(())
    }
}

/// Why a rewrite record was left out of the index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentDiagnostic {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub reason: String,
}

/// Indexes the records whose `(dialogue_id, turn_index)` exists in the corpus.
/// Unmatched records are returned as diagnostics; repeated keys are an error.
pub fn align_rewrites(
    corpus: &Corpus,
    records: &[RewriteRecord],
) -> Result<(RewriteIndex, Vec<AlignmentDiagnostic>), IngestError> {
    let mut seen: HashSet<(&str, usize)> = HashSet::new();
    for r in records {
        if !seen.insert((r.dialogue_id.as_str(), r.turn_index)) {
            return Err(IngestError::DuplicateKey(r.dialogue_id.clone(), r.turn_index));
        }
    }
    let turn_counts: HashMap<&str, usize> =
        corpus.dialogues.iter().map(|d| (d.id.as_str(), d.turns.len())).collect();

    let mut index = RewriteIndex::default();
    let mut diagnostics = Vec::new();
    for r in records {
        let reason = match turn_counts.get(r.dialogue_id.as_str()) {
            None => Some("dialogue not in corpus".to_string()),
            Some(&n) if r.turn_index >= n => Some(format!("turn index beyond the {n} turns of the dialogue")),
            Some(_) => None,
        };
        match reason {
            Some(reason) => diagnostics.push(AlignmentDiagnostic {
                dialogue_id: r.dialogue_id.clone(),
                turn_index: r.turn_index,
                reason,
            }),
            None => index.insert(r.clone())?,
        }
    }
    Ok((index, diagnostics))
}

/// File holding the aligned rewrite records inside a corpus directory.
pub const REWRITES_FILE: &str = "rewrites.json";

/// `DIR/{split}.json`, as written by [`write_corpus_dir`].
pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}.json"))
}

/// Persists each corpus under its split name plus the rewrite records.
pub fn write_corpus_dir(dir: &Path, corpora: &[&Corpus], rewrites: &[RewriteRecord]) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?;
    for c in corpora {
        c.save(&split_path(dir, c.split))?;
    }
    let path = dir.join(REWRITES_FILE);
    let body = serde_json::to_string_pretty(rewrites).expect("records serialize");
    fs::write(&path, body).map_err(|source| IngestError::Io { path, source })
}

pub fn read_split(dir: &Path, split: Split) -> Result<Corpus, IngestError> {
    Corpus::load(&split_path(dir, split))
}

/// The splits present in a corpus directory.
pub fn available_splits(dir: &Path) -> Vec<Split> {
    Split::ALL.into_iter().filter(|s| split_path(dir, *s).is_file()).collect()
}

/// Rewrite records of a corpus directory; none when the file is absent.
pub fn read_rewrites(dir: &Path) -> Result<Vec<RewriteRecord>, IngestError> {
    let path = dir.join(REWRITES_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    parse_json(&read(&path)?)
}
