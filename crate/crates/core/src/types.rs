//! Domain types shared across the crate: passages, dialogues, answer spans,
//! structured representations and the history selection settings.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::text::char_slice;

pub const CANNOT_ANSWER: &str = "CANNOTANSWER";

fn default_marker() -> String {
    CANNOT_ANSWER.to_string()
}

/// The conversational context every question in a dialogue is answered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub background: String,
    pub text: String,
    #[serde(default = "default_marker")]
    pub cannot_answer_marker: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            background: String::new(),
            text: text.into(),
            cannot_answer_marker: default_marker(),
        }
    }

    pub fn with_background(mut self, background: impl Into<String>) -> Self {
        self.background = background.into();
        self
    }

    /// Builds a QuAC-style passage whose text ends with the no-answer marker.
    pub fn quac_style(id: impl Into<String>, title: impl Into<String>, text: &str) -> Self {
        let text = if text.trim_end().ends_with(CANNOT_ANSWER) {
            text.to_string()
        } else {
            format!("{} {}", text.trim_end(), CANNOT_ANSWER)
        };
        Self::new(id, title, text)
    }

    pub fn ends_with_marker(&self) -> bool {
        self.text.trim_end().ends_with(&self.cannot_answer_marker)
    }

    pub fn no_answer(&self) -> AnswerSpan {
        AnswerSpan::no_answer(&self.cannot_answer_marker)
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub turn_index: usize,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>, turn_index: usize) -> Self {
        Self { id: id.into(), text: text.into(), turn_index }
    }
}

/// An extractive answer. `start_char` is a character offset into the passage
/// text, or `-1` for the no-answer span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub start_char: i64,
    #[serde(default)]
    pub score: f64,
}

impl AnswerSpan {
    pub fn new(text: impl Into<String>, start_char: usize, score: f64) -> Self {
        Self { text: text.into(), start_char: start_char as i64, score }
    }

    pub fn no_answer(marker: &str) -> Self {
        Self { text: marker.to_string(), start_char: -1, score: 0.0 }
    }

    pub fn is_no_answer(&self) -> bool {
        self.start_char < 0
    }

    /// Checks that slicing the passage at this span reproduces its text.
    pub fn is_consistent_with(&self, passage: &Passage) -> bool {
        if self.start_char < 0 {
            return self.text == passage.cannot_answer_marker;
        }
        char_slice(&passage.text, self.start_char as usize, self.text.chars().count())
            == Some(self.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub question: Question,
    #[serde(default)]
    pub gold_answers: Vec<AnswerSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_answer: Option<AnswerSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr: Option<StructuredRepresentation>,
}

impl Turn {
    pub fn new(question: Question, gold_answers: Vec<AnswerSpan>) -> Self {
        Self { question, gold_answers, predicted_answer: None, sr: None }
    }

    /// The answer that stands for this turn in later history: the first gold
    /// reference that is not a no-answer (falling back to the first gold), or
    /// the prediction for live turns without gold.
    pub fn answer(&self) -> Option<&AnswerSpan> {
        self.gold_answers
            .iter()
            .find(|a| !a.is_no_answer())
            .or_else(|| self.gold_answers.first())
            .or(self.predicted_answer.as_ref())
    }

    /// Answer text used for similarity scoring; no-answer spans contribute nothing.
    pub fn answer_text(&self) -> &str {
        match self.answer() {
            Some(a) if !a.is_no_answer() => &a.text,
            _ => "",
        }
    }

    /// Answer text as shown to a reader in history, including the marker.
    pub fn history_answer_text(&self) -> &str {
        self.answer().map(|a| a.text.as_str()).unwrap_or("")
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.gold_answers.iter().map(|a| a.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub passage: Arc<Passage>,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogueError {
    #[error("dialogue {dialogue}: turn at position {position} has index {found}")]
    TurnIndex { dialogue: String, position: usize, found: usize },
    #[error("dialogue {dialogue}: answer spans do not match the passage for {}", .questions.join(", "))]
    SpanMismatch { dialogue: String, questions: Vec<String> },
    #[error("dialogue {dialogue}: question {question} has no gold answer")]
    MissingGold { dialogue: String, question: String },
    #[error("dialogue {dialogue}: empty passage text")]
    EmptyPassage { dialogue: String },
}

impl Dialogue {
    pub fn new(id: impl Into<String>, passage: Passage, turns: Vec<Turn>) -> Self {
        Self { id: id.into(), passage: Arc::new(passage), turns }
    }

    /// A live dialogue over a passage, with no turns yet.
    pub fn live(id: impl Into<String>, passage: Arc<Passage>) -> Self {
        Self { id: id.into(), passage, turns: Vec::new() }
    }

    /// Checks indices are contiguous from 0 and every span slices cleanly.
    /// `require_gold` additionally demands a gold answer on each turn.
    pub fn validate(&self, require_gold: bool) -> Result<(), DialogueError> {
        if self.passage.text.is_empty() {
            return Err(DialogueError::EmptyPassage { dialogue: self.id.clone() });
        }
        let mut bad = Vec::new();
        for (position, turn) in self.turns.iter().enumerate() {
            if turn.question.turn_index != position {
                return Err(DialogueError::TurnIndex {
                    dialogue: self.id.clone(),
                    position,
                    found: turn.question.turn_index,
                });
            }
            if require_gold && turn.gold_answers.is_empty() {
                return Err(DialogueError::MissingGold {
                    dialogue: self.id.clone(),
                    question: turn.question.id.clone(),
                });
            }
            let spans = turn.gold_answers.iter().chain(turn.predicted_answer.iter());
            if spans.into_iter().any(|a| !a.is_consistent_with(&self.passage)) {
                bad.push(turn.question.id.clone());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DialogueError::SpanMismatch { dialogue: self.id.clone(), questions: bad })
        }
    }

    /// Turns strictly before `turn_index`.
    pub fn history(&self, turn_index: usize) -> &[Turn] {
        &self.turns[..turn_index.min(self.turns.len())]
    }
}

const SLOT_DELIMITERS: [char; 4] = ['(', ')', '|', ','];

/// A pair of entity lists: context entities and question entities.
///
/// Construction strips slot delimiters from every entity, trims whitespace,
/// drops empties and removes case-insensitive duplicates (first one wins), so
/// the serialized form `(ce1, ce2 | qe1, qe2)` is always unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "RawSr")]
pub struct StructuredRepresentation {
    pub context_entities: Vec<String>,
    pub question_entities: Vec<String>,
}

#[derive(Deserialize)]
struct RawSr {
    #[serde(default)]
    context_entities: Vec<String>,
    #[serde(default)]
    question_entities: Vec<String>,
}

impl From<RawSr> for StructuredRepresentation {
    fn from(raw: RawSr) -> Self {
        Self::new(raw.context_entities, raw.question_entities)
    }
}

fn clean_entities<I, S>(items: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out: Vec<String> = Vec::new();
    for item in items {
        let stripped: String = item.as_ref().chars().filter(|c| !SLOT_DELIMITERS.contains(c)).collect();
        let entity = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
        if entity.is_empty() {
            continue;
        }
        let lower = entity.to_lowercase();
        if !out.iter().any(|e| e.to_lowercase() == lower) {
            out.push(entity);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SrParseError {
    #[error("malformed structured representation {0:?}: missing enclosing parentheses")]
    MissingParentheses(String),
    #[error("malformed structured representation {0:?}: expected exactly one '|' separator")]
    MissingSeparator(String),
}

impl StructuredRepresentation {
    pub fn new<I, J, S, T>(context_entities: I, question_entities: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            context_entities: clean_entities(context_entities),
            question_entities: clean_entities(question_entities),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.context_entities.is_empty() && self.question_entities.is_empty()
    }

    /// True when either slot holds `entity` (case-insensitive).
    pub fn contains(&self, entity: &str) -> bool {
        let lower = entity.to_lowercase();
        self.context_entities
            .iter()
            .chain(&self.question_entities)
            .any(|e| e.to_lowercase() == lower)
    }

    pub fn push_context(&mut self, entity: &str) {
        if !self.contains(entity) {
            self.context_entities.extend(clean_entities([entity]));
        }
    }

    pub fn push_question(&mut self, entity: &str) {
        if !self.contains(entity) {
            self.question_entities.extend(clean_entities([entity]));
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.context_entities.iter().chain(&self.question_entities).map(String::as_str)
    }

    /// Renders `(ce1, ce2 | qe1, qe2)`.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(s: &str) -> Result<Self, SrParseError> {
        let trimmed = s.trim();
        let inner = trimmed
            .strip_prefix('(')
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| SrParseError::MissingParentheses(s.to_string()))?;
        let mut sides = inner.split('|');
        let (Some(context), Some(question), None) = (sides.next(), sides.next(), sides.next()) else {
            return Err(SrParseError::MissingSeparator(s.to_string()));
        };
        if context.contains(['(', ')']) || question.contains(['(', ')']) {
            return Err(SrParseError::MissingParentheses(s.to_string()));
        }
        Ok(Self::new(context.split(','), question.split(',')))
    }
}

impl fmt::Display for StructuredRepresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({} | {})",
            self.context_entities.join(", "),
            self.question_entities.join(", ")
        )
    }
}

impl FromStr for StructuredRepresentation {
    type Err = SrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Hard history selection settings: keep turns scoring at or above
/// `threshold`, and at most the `max_turns` most recent of those.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SelectionConfig<F: Scalar> {
    pub threshold: F,
    #[serde(default)]
    pub max_turns: Option<usize>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionConfigError {
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("max_turns must be positive")]
    ZeroTurns,
}

impl<F: Scalar> SelectionConfig<F> {
    pub fn new(threshold: F, max_turns: Option<usize>) -> Result<Self, SelectionConfigError> {
        if !(threshold >= F::zero() && threshold <= F::one()) {
            return Err(SelectionConfigError::Threshold(threshold.as_f64()));
        }
        if max_turns == Some(0) {
            return Err(SelectionConfigError::ZeroTurns);
        }
        Ok(Self { threshold, max_turns })
    }
}

impl<F: Scalar> Default for SelectionConfig<F> {
    fn default() -> Self {
        Self { threshold: F::of(DEFAULT_THRESHOLD), max_turns: None }
    }
}
