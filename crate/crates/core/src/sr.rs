//! Structured representation generation: mention extraction and
//! classification, the distantly supervised labeler, heuristic and remote
//! generators, and question augmentation.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::metrics::question_f1;
use crate::reader::{Reader, ReaderError, ReaderInput};
use crate::remote::{JsonClient, RemoteError};
use crate::text::{char_slice, contains_ci, contains_phrase, is_pronoun, is_stopword, words, Word};
use crate::types::{AnswerSpan, Passage, StructuredRepresentation, Turn};

/// Token F1 at or above which a predicted span counts as retrieving the gold answer.
pub const ACCEPT_F1: f64 = 0.8;

/// Lowercase words allowed inside a capitalized run, as in "Bank of America".
const CONNECTORS: &[&str] = &["of", "the", "de", "la", "le", "du", "del", "da", "von", "van", "der", "y", "&"];

pub const DEFAULT_DELIMITER: &str = "|||";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    PriorQuestion,
    PriorAnswer,
    Passage,
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub source: MentionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    ContextEntity,
    QuestionEntity,
}

fn joinable(gap: &str) -> bool {
    gap.chars().all(char::is_whitespace) || matches!(gap, "." | "-" | "'" | "&" | " & " | " - ")
}

fn starts_mention(w: &Word) -> bool {
    w.is_capitalized() && !is_pronoun(&w.lower) && w.lower != "i"
}

fn is_acronym(w: &Word) -> bool {
    w.surface.chars().count() >= 2 && w.surface.chars().all(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Capitalization-based mention extractor: maximal runs of capitalized words
/// (connectors such as "of" may sit between two capitalized words). A run
/// that starts a sentence loses a leading stopword, and a single word at the
/// start of a sentence is dropped unless it is an acronym. Pronouns never
/// start a run. Results are deduplicated case-insensitively.
pub fn extract_mentions(text: &str, source: MentionSource) -> Vec<EntityMention> {
    let ws = words(text);
    let n = ws.len();
    let mut out: Vec<EntityMention> = Vec::new();
    let mut i = 0;
    while i < n {
        if !starts_mention(&ws[i]) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        let mut j = i + 1;
        while j < n && joinable(&ws[j].gap_before) {
            let glued = !ws[j].gap_before.trim().is_empty() && ws[j].is_capitalized();
            if starts_mention(&ws[j]) || glued {
                end = j + 1;
                j += 1;
            } else if CONNECTORS.contains(&ws[j].lower.as_str())
                && j + 1 < n
                && joinable(&ws[j + 1].gap_before)
                && starts_mention(&ws[j + 1])
            {
                j += 1;
            } else {
                break;
            }
        }

        let mut start = i;
        if ws[start].sentence_initial && is_stopword(&ws[start].lower) {
            start += 1;
            while start < end && CONNECTORS.contains(&ws[start].lower.as_str()) {
                start += 1;
            }
        }
        let keep = match end.saturating_sub(start) {
            0 => false,
            1 => {
                let w = &ws[start];
                !is_stopword(&w.lower) && (!w.sentence_initial || is_acronym(w))
            }
            _ => true,
        };
        if keep {
            let from = ws[start].start;
            let surface = char_slice(text, from, ws[end - 1].end - from).unwrap_or_default().to_string();
            if !out.iter().any(|m| m.surface.to_lowercase() == surface.to_lowercase()) {
                out.push(EntityMention { surface, source });
            }
        }
        i = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("mention {0:?} occurs nowhere in the history or passage")]
pub struct Unclassifiable(pub String);

fn classify_in<'a>(
    surface: &str,
    prior_questions: impl IntoIterator<Item = &'a str>,
    context_texts: impl IntoIterator<Item = &'a str>,
) -> Result<EntityClass, Unclassifiable> {
    if prior_questions.into_iter().any(|q| contains_phrase(q, surface)) {
        Ok(EntityClass::QuestionEntity)
    } else if context_texts.into_iter().any(|t| contains_phrase(t, surface)) {
        Ok(EntityClass::ContextEntity)
    } else {
        Err(Unclassifiable(surface.to_string()))
    }
}

/// Question entity if the mention occurs in a prior question; otherwise
/// context entity if it occurs in the passage, its title or background, or a
/// prior answer.
pub fn classify_mention(mention: &EntityMention, history: &[Turn], passage: &Passage) -> Result<EntityClass, Unclassifiable> {
    classify_in(
        &mention.surface,
        history.iter().map(|t| t.question.text.as_str()),
        [passage.text.as_str(), passage.title.as_str(), passage.background.as_str()]
            .into_iter()
            .chain(history.iter().map(|t| t.history_answer_text())),
    )
}

/// Appends the serialized representation; an empty one leaves the question as is.
pub fn augment_question(question: &str, sr: &StructuredRepresentation) -> String {
    if sr.is_empty() {
        question.to_string()
    } else {
        format!("{question} {sr}")
    }
}

/// Whether a predicted span retrieves the gold answer: an exact span match or
/// token F1 of at least [`ACCEPT_F1`] against the best reference.
pub fn is_accepting(prediction: &AnswerSpan, gold: &[AnswerSpan]) -> bool {
    if gold.iter().any(|g| g.start_char == prediction.start_char && g.text == prediction.text) {
        return true;
    }
    best_f1(prediction, gold) >= ACCEPT_F1
}

fn best_f1(prediction: &AnswerSpan, gold: &[AnswerSpan]) -> f64 {
    let refs: Vec<&str> = gold.iter().map(|g| g.text.as_str()).collect();
    question_f1(&prediction.text, &refs).unwrap_or(0.0)
}

/// Result of labeling one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub sr: StructuredRepresentation,
    /// Whether the final augmented question retrieves the gold answer.
    pub accepted: bool,
    /// Candidate mentions considered, in rewrite order.
    pub candidates: Vec<String>,
    pub bare_f1: f64,
    pub final_f1: f64,
}

/// Distantly supervised SR labeling. Candidates are the mentions of the
/// rewrite that do not appear in the original question. Going through them
/// in rewrite order, each is kept only if adding it to the representation
/// raises the reader's F1 against the gold answers or turns its answer into
/// an accepting match.
pub fn label_sr(
    turn: &Turn,
    rewrite: &str,
    history: &[Turn],
    passage: &Arc<Passage>,
    reader: &dyn Reader,
) -> Result<LabelOutcome, ReaderError> {
    let question = &turn.question.text;
    let ask = |text: String| {
        reader.predict(&ReaderInput {
            passage: passage.clone(),
            question_text: text,
            history: Vec::new(),
            policy_tag: "label".into(),
        })
    };

    let candidates: Vec<(String, EntityClass)> = extract_mentions(rewrite, MentionSource::PriorQuestion)
        .into_iter()
        .filter(|m| !contains_ci(question, &m.surface))
        .filter_map(|m| classify_mention(&m, history, passage).ok().map(|c| (m.surface, c)))
        .collect();

    let bare = ask(question.clone())?;
    let bare_f1 = best_f1(&bare, &turn.gold_answers);
    let mut current_f1 = bare_f1;
    let mut current_accepting = is_accepting(&bare, &turn.gold_answers);
    let mut sr = StructuredRepresentation::empty();

    for (surface, class) in &candidates {
        let mut trial = sr.clone();
        match class {
            EntityClass::ContextEntity => trial.push_context(surface),
            EntityClass::QuestionEntity => trial.push_question(surface),
        }
        if trial == sr {
            continue;
        }
        let answer = ask(augment_question(question, &trial))?;
        let f1 = best_f1(&answer, &turn.gold_answers);
        let accepting = is_accepting(&answer, &turn.gold_answers);
        if f1 > current_f1 || (accepting && !current_accepting) {
            sr = trial;
            current_f1 = f1;
            current_accepting = accepting;
        }
    }

    Ok(LabelOutcome {
        sr,
        accepted: current_accepting,
        candidates: candidates.into_iter().map(|(s, _)| s).collect(),
        bare_f1,
        final_f1: current_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrTurnPayload {
    pub q: String,
    pub a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr: Option<String>,
}

/// Generator input: the current question plus the selected turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrGeneratorInput {
    #[serde(rename = "question")]
    pub current_question: String,
    #[serde(rename = "turns")]
    pub selected_turns: Vec<SrTurnPayload>,
    pub delimiter: String,
}

impl SrGeneratorInput {
    pub fn new(current_question: impl Into<String>, selected_turns: Vec<SrTurnPayload>) -> Self {
        Self { current_question: current_question.into(), selected_turns, delimiter: DEFAULT_DELIMITER.to_string() }
    }

    pub fn from_turns<'a>(current_question: &str, turns: impl IntoIterator<Item = &'a Turn>) -> Self {
        let payload = turns
            .into_iter()
            .map(|t| SrTurnPayload {
                q: t.question.text.clone(),
                a: t.history_answer_text().to_string(),
                sr: t.sr.as_ref().map(StructuredRepresentation::serialize),
            })
            .collect();
        Self::new(current_question, payload)
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let payload = std::iter::once(self.current_question.as_str())
            .chain(self.selected_turns.iter().flat_map(|t| [t.q.as_str(), t.a.as_str()].into_iter().chain(t.sr.as_deref())));
        if self.delimiter.is_empty() {
            return Err(GeneratorError::Delimiter(self.delimiter.clone()));
        }
        for text in payload {
            if text.contains(&self.delimiter) {
                return Err(GeneratorError::Delimiter(self.delimiter.clone()));
            }
        }
        Ok(())
    }

    /// The delimiter-joined sequence: question, then each turn's question,
    /// answer and serialized representation.
    pub fn joined(&self) -> String {
        let sep = format!(" {} ", self.delimiter);
        std::iter::once(self.current_question.clone())
            .chain(self.selected_turns.iter().map(|t| match &t.sr {
                Some(sr) => format!("{} {} {}", t.q, t.a, sr),
                None => format!("{} {}", t.q, t.a),
            }))
            .collect::<Vec<_>>()
            .join(&sep)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("delimiter {0:?} is empty or occurs in the generator input")]
    Delimiter(String),
}

/// What a generator may consult besides its input.
#[derive(Debug, Clone, Copy)]
pub struct GenerationContext<'a> {
    pub passage: &'a Passage,
    /// Representations already assigned to the selected turns.
    pub history_srs: &'a [StructuredRepresentation],
}

pub trait SrGenerator: Send + Sync {
    fn generate(&self, input: &SrGeneratorInput, ctx: &GenerationContext<'_>) -> Result<StructuredRepresentation, GeneratorError>;

    fn describe(&self) -> String;
}

/// Copies entities forward from the selected turns: their representations
/// first, then mentions found in their questions (question entities) and
/// answers (context entities unless also asked about). Entities already in
/// the current question are left out.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicGenerator;

impl SrGenerator for HeuristicGenerator {
    fn generate(&self, input: &SrGeneratorInput, ctx: &GenerationContext<'_>) -> Result<StructuredRepresentation, GeneratorError> {
        let mut sr = StructuredRepresentation::empty();
        for prior in ctx.history_srs {
            prior.context_entities.iter().for_each(|e| sr.push_context(e));
            prior.question_entities.iter().for_each(|e| sr.push_question(e));
        }
        let questions: Vec<&str> = input.selected_turns.iter().map(|t| t.q.as_str()).collect();
        for turn in &input.selected_turns {
            for m in extract_mentions(&turn.q, MentionSource::PriorQuestion) {
                sr.push_question(&m.surface);
            }
            if turn.a.trim() == ctx.passage.cannot_answer_marker {
                continue;
            }
            for m in extract_mentions(&turn.a, MentionSource::PriorAnswer) {
                match classify_in(&m.surface, questions.iter().copied(), [turn.a.as_str()]) {
                    Ok(EntityClass::QuestionEntity) => sr.push_question(&m.surface),
                    _ => sr.push_context(&m.surface),
                }
            }
        }
        let keep = |e: &String| !contains_ci(&input.current_question, e);
        Ok(StructuredRepresentation::new(
            sr.context_entities.iter().filter(|e| keep(e)),
            sr.question_entities.iter().filter(|e| keep(e)),
        ))
    }

    fn describe(&self) -> String {
        "heuristic".to_string()
    }
}

#[derive(Deserialize)]
struct RemoteSr {
    sr: String,
}

/// Client for a generator server implementing `POST /generate_sr`.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: JsonClient,
    fallback: Option<HeuristicGenerator>,
}

impl RemoteGenerator {
    pub fn new(client: JsonClient) -> Self {
        Self { client, fallback: None }
    }

    /// Falls back to the heuristic generator when the remote call fails.
    pub fn with_fallback(mut self) -> Self {
        self.fallback = Some(HeuristicGenerator);
        self
    }

    fn call(&self, input: &SrGeneratorInput) -> Result<StructuredRepresentation, GeneratorError> {
        let reply: RemoteSr = self
            .client
            .post("/generate_sr", input)
            .map_err(|e: RemoteError| GeneratorError::Unavailable(e.to_string()))?;
        StructuredRepresentation::parse(&reply.sr).map_err(|e| GeneratorError::Unavailable(e.to_string()))
    }
}

impl SrGenerator for RemoteGenerator {
    fn generate(&self, input: &SrGeneratorInput, ctx: &GenerationContext<'_>) -> Result<StructuredRepresentation, GeneratorError> {
        input.validate()?;
        match (self.call(input), &self.fallback) {
            (Ok(sr), _) => Ok(sr),
            (Err(GeneratorError::Unavailable(_)), Some(fallback)) => fallback.generate(input, ctx),
            (Err(e), _) => Err(e),
        }
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.client.endpoint())
    }
}

/// `heuristic` or `remote:URL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "endpoint", rename_all = "snake_case")]
pub enum GeneratorBackend {
    Heuristic,
    Remote(String),
}

impl FromStr for GeneratorBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(GeneratorBackend::Heuristic),
            _ => s
                .strip_prefix("remote:")
                .map(|url| GeneratorBackend::Remote(url.to_string()))
                .ok_or_else(|| format!("unknown generator {s:?} (expected heuristic or remote:URL)")),
        }
    }
}

impl GeneratorBackend {
    pub fn build(&self, fallback: bool) -> Result<Arc<dyn SrGenerator>, RemoteError> {
        Ok(match self {
            GeneratorBackend::Heuristic => Arc::new(HeuristicGenerator),
            GeneratorBackend::Remote(url) => {
                let remote = RemoteGenerator::new(JsonClient::new(url, crate::remote::DEFAULT_TIMEOUT)?);
                Arc::new(if fallback { remote.with_fallback() } else { remote })
            }
        })
    }
}
