//! Turn-level orchestration of the approaches: structured-representation
//! answering (select, generate, augment, answer), the question-rewriting
//! pipeline (rewrite, answer) and the prepend baselines, plus live sessions.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RewriteIndex;
use crate::reader::{input_from_selection, select_for_policy, HistoryEntry, HistoryPolicy, Reader, ReaderError, ReaderInput};
use crate::remote::{JsonClient, RemoteError};
use crate::sr::{augment_question, extract_mentions, GenerationContext, HeuristicGenerator, MentionSource, SrGenerator, SrGeneratorInput};
use crate::text::{is_pronoun, tokenize};
use crate::types::{AnswerSpan, Dialogue, Passage, Question, StructuredRepresentation, Turn};
use crate::{SelectionConfig, TermSimilarityModel, TurnScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assessment {
    SelfContained,
    NeedsResolution,
}

/// Settings of the question-understanding heuristic. When disabled every
/// question needs resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentRules {
    pub enabled: bool,
    /// Questions with at most this many tokens and no entity mention are
    /// treated as incomplete.
    pub max_short_tokens: usize,
}

impl Default for AssessmentRules {
    fn default() -> Self {
        Self { enabled: true, max_short_tokens: 6 }
    }
}

impl AssessmentRules {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn assess(&self, question: &str, turn_index: usize) -> Assessment {
        if !self.enabled {
            return Assessment::NeedsResolution;
        }
        if turn_index == 0 {
            return Assessment::SelfContained;
        }
        let tokens = tokenize(question);
        let has_pronoun = tokens.iter().any(|t| is_pronoun(t));
        let short_without_entity =
            tokens.len() <= self.max_short_tokens && extract_mentions(question, MentionSource::PriorQuestion).is_empty();
        if has_pronoun || short_without_entity {
            Assessment::NeedsResolution
        } else {
            Assessment::SelfContained
        }
    }
}

/// Assessment under the default rules.
pub fn assess_question(question: &str, turn_index: usize) -> Assessment {
    AssessmentRules::default().assess(question, turn_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Convsr { selection: SelectionConfig },
    Pipeline,
    Baseline { policy: HistoryPolicy, with_sr: bool },
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Convsr { .. } => "convsr",
            Mode::Pipeline => "pipeline",
            Mode::Baseline { .. } => "baseline",
        }
    }

    /// The history policy that decides which turns reach the reader.
    pub fn policy(&self) -> HistoryPolicy {
        match self {
            Mode::Convsr { selection } => HistoryPolicy::Dynamic(*selection),
            Mode::Pipeline => HistoryPolicy::PrependAll,
            Mode::Baseline { policy, .. } => *policy,
        }
    }

    pub fn generates_sr(&self) -> bool {
        match self {
            Mode::Convsr { .. } => true,
            Mode::Pipeline => false,
            Mode::Baseline { with_sr, .. } => *with_sr,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Baseline { policy, with_sr: true } => write!(f, "baseline:{policy}+sr"),
            Mode::Baseline { policy, with_sr: false } => write!(f, "baseline:{policy}"),
            other => f.write_str(other.tag()),
        }
    }
}

/// Which SR slot is emptied before augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotAblation {
    #[default]
    Full,
    NoContextEntity,
    NoQuestionEntity,
}

impl SlotAblation {
    pub const ALL: [SlotAblation; 3] = [SlotAblation::Full, SlotAblation::NoContextEntity, SlotAblation::NoQuestionEntity];

    pub fn label(self) -> &'static str {
        match self {
            SlotAblation::Full => "full",
            SlotAblation::NoContextEntity => "no_context_entity",
            SlotAblation::NoQuestionEntity => "no_question_entity",
        }
    }

    pub fn apply(self, sr: StructuredRepresentation) -> StructuredRepresentation {
        match self {
            SlotAblation::Full => sr,
            SlotAblation::NoContextEntity => StructuredRepresentation { context_entities: Vec::new(), ..sr },
            SlotAblation::NoQuestionEntity => StructuredRepresentation { question_entities: Vec::new(), ..sr },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriterError {
    #[error("rewriter unavailable: {0}")]
    Unavailable(#[from] RemoteError),
}

pub trait Rewriter: Send + Sync {
    fn rewrite(&self, question: &Question, dialogue: &Dialogue) -> Result<Rewrite, RewriterError>;

    fn describe(&self) -> String;
}

/// Returns the question unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRewriter;

impl Rewriter for IdentityRewriter {
    fn rewrite(&self, question: &Question, _dialogue: &Dialogue) -> Result<Rewrite, RewriterError> {
        Ok(Rewrite { text: question.text.clone(), diagnostic: None })
    }

    fn describe(&self) -> String {
        "identity".to_string()
    }
}

/// Looks up gold rewrites; a missing key falls back to the original question
/// with a diagnostic.
#[derive(Debug, Clone, Default)]
pub struct OracleRewriter {
    index: RewriteIndex,
}

impl OracleRewriter {
    pub fn new(index: RewriteIndex) -> Self {
        Self { index }
    }
}

pub const ORACLE_MISS: &str = "oracle rewrite missing";

impl Rewriter for OracleRewriter {
    fn rewrite(&self, question: &Question, dialogue: &Dialogue) -> Result<Rewrite, RewriterError> {
        Ok(match self.index.get(&dialogue.id, question.turn_index) {
            Some(record) => Rewrite { text: record.rewrite.clone(), diagnostic: None },
            None => Rewrite {
                text: question.text.clone(),
                diagnostic: Some(format!("{ORACLE_MISS} for {}#{}", dialogue.id, question.turn_index)),
            },
        })
    }

    fn describe(&self) -> String {
        "oracle".to_string()
    }
}

#[derive(Serialize)]
struct RewriteRequest<'a> {
    question: &'a str,
    history: Vec<HistoryEntry>,
}

#[derive(Deserialize)]
struct RewriteReply {
    rewrite: String,
}

/// Client for a rewriting server: `POST /rewrite {"question", "history"}`
/// answered by `{"rewrite"}`.
#[derive(Debug, Clone)]
pub struct RemoteRewriter {
    client: JsonClient,
}

impl RemoteRewriter {
    pub fn new(client: JsonClient) -> Self {
        Self { client }
    }
}

impl Rewriter for RemoteRewriter {
    fn rewrite(&self, question: &Question, dialogue: &Dialogue) -> Result<Rewrite, RewriterError> {
        let history = dialogue
            .history(question.turn_index)
            .iter()
            .map(|t| HistoryEntry { q: t.question.text.clone(), a: t.history_answer_text().to_string() })
            .collect();
        let reply: RewriteReply = self.client.post("/rewrite", &RewriteRequest { question: &question.text, history })?;
        Ok(Rewrite { text: reply.rewrite, diagnostic: None })
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.client.endpoint())
    }
}

/// `oracle`, `identity` or `remote:URL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "endpoint", rename_all = "snake_case")]
pub enum RewriterBackend {
    Oracle,
    Identity,
    Remote(String),
}

impl FromStr for RewriterBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(RewriterBackend::Oracle),
            "identity" => Ok(RewriterBackend::Identity),
            _ => s
                .strip_prefix("remote:")
                .map(|url| RewriterBackend::Remote(url.to_string()))
                .ok_or_else(|| format!("unknown rewriter {s:?} (expected oracle, identity or remote:URL)")),
        }
    }
}

impl RewriterBackend {
    /// The oracle needs the aligned rewrite index.
    pub fn build(&self, index: Option<RewriteIndex>) -> Result<Arc<dyn Rewriter>, RemoteError> {
        Ok(match self {
            RewriterBackend::Oracle => Arc::new(OracleRewriter::new(index.unwrap_or_default())),
            RewriterBackend::Identity => Arc::new(IdentityRewriter),
            RewriterBackend::Remote(url) => Arc::new(RemoteRewriter::new(JsonClient::new(url, crate::remote::DEFAULT_TIMEOUT)?)),
        })
    }
}

/// Everything computed for one answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn_index: usize,
    pub question: String,
    pub mode: String,
    pub assessment: Assessment,
    pub scores: Vec<TurnScore>,
    pub selected: Vec<usize>,
    pub sr: StructuredRepresentation,
    pub augmented_question: String,
    pub reader_input_tag: String,
    pub history: Vec<HistoryEntry>,
    pub answer: AnswerSpan,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Stage names reported with backend failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rewriter,
    Generator,
    Reader,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rewriter => "rewriter",
            Stage::Generator => "generator",
            Stage::Reader => "reader",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Trace fields computed before a failing stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialTrace {
    pub scores: Vec<TurnScore>,
    pub selected: Vec<usize>,
    pub sr: Option<StructuredRepresentation>,
    pub augmented_question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
    pub partial: Box<PartialTrace>,
}

/// A reader input ready to send, with the trace fields that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTurn {
    pub input: ReaderInput,
    pub assessment: Assessment,
    pub scores: Vec<TurnScore>,
    pub selected: Vec<usize>,
    pub sr: StructuredRepresentation,
    pub diagnostics: Vec<String>,
}

/// One configured approach with its backends.
#[derive(Clone)]
pub struct Pipeline {
    pub mode: Mode,
    pub reader: Arc<dyn Reader>,
    pub generator: Arc<dyn SrGenerator>,
    pub rewriter: Arc<dyn Rewriter>,
    pub model: Arc<TermSimilarityModel>,
    pub slots: SlotAblation,
    pub assessment: AssessmentRules,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("mode", &self.mode)
            .field("reader", &self.reader.describe())
            .field("generator", &self.generator.describe())
            .field("rewriter", &self.rewriter.describe())
            .field("slots", &self.slots)
            .finish()
    }
}

impl Pipeline {
    /// Heuristic generator and identity rewriter until replaced.
    pub fn new(mode: Mode, reader: Arc<dyn Reader>, model: Arc<TermSimilarityModel>) -> Self {
        Self {
            mode,
            reader,
            generator: Arc::new(HeuristicGenerator),
            rewriter: Arc::new(IdentityRewriter),
            model,
            slots: SlotAblation::Full,
            assessment: AssessmentRules::default(),
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn SrGenerator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_rewriter(mut self, rewriter: Arc<dyn Rewriter>) -> Self {
        self.rewriter = rewriter;
        self
    }

    pub fn with_slots(mut self, slots: SlotAblation) -> Self {
        self.slots = slots;
        self
    }

    pub fn with_assessment(mut self, rules: AssessmentRules) -> Self {
        self.assessment = rules;
        self
    }

    /// Runs every stage up to, but not including, the reader. Prior turns of
    /// `dialogue` must carry answers and, for SR modes, their SRs.
    pub fn prepare(&self, question: &Question, dialogue: &Dialogue) -> Result<PreparedTurn, PipelineError> {
        let policy = self.mode.policy();
        let selection = select_for_policy(question, dialogue, &policy, &self.model);
        let assessment = self.assessment.assess(&question.text, question.turn_index);
        let mut diagnostics = Vec::new();

        let (sr, question_text) = match self.mode {
            Mode::Pipeline => {
                let rewrite = self.rewriter.rewrite(question, dialogue).map_err(|e| PipelineError {
                    stage: Stage::Rewriter,
                    message: e.to_string(),
                    partial: Box::new(PartialTrace {
                        scores: selection.scores.clone(),
                        selected: selection.selected.clone(),
                        ..PartialTrace::default()
                    }),
                })?;
                diagnostics.extend(rewrite.diagnostic);
                (StructuredRepresentation::empty(), rewrite.text)
            }
            mode if mode.generates_sr() && assessment == Assessment::NeedsResolution => {
                let sr = self.generate(question, dialogue, &selection.selected).map_err(|message| PipelineError {
                    stage: Stage::Generator,
                    message,
                    partial: Box::new(PartialTrace {
                        scores: selection.scores.clone(),
                        selected: selection.selected.clone(),
                        ..PartialTrace::default()
                    }),
                })?;
                let sr = self.slots.apply(sr);
                let text = augment_question(&question.text, &sr);
                (sr, text)
            }
            _ => (StructuredRepresentation::empty(), question.text.clone()),
        };

        let input = input_from_selection(question, dialogue, &selection.selected, &policy, Some(&question_text));
        Ok(PreparedTurn { input, assessment, scores: selection.scores, selected: selection.selected, sr, diagnostics })
    }

    fn generate(&self, question: &Question, dialogue: &Dialogue, selected: &[usize]) -> Result<StructuredRepresentation, String> {
        let turns: Vec<&Turn> = selected.iter().filter_map(|&j| dialogue.turns.get(j)).collect();
        let history_srs: Vec<StructuredRepresentation> = turns.iter().filter_map(|t| t.sr.clone()).collect();
        let input = SrGeneratorInput::from_turns(&question.text, turns.iter().copied());
        let ctx = GenerationContext { passage: &dialogue.passage, history_srs: &history_srs };
        self.generator.generate(&input, &ctx).map_err(|e| e.to_string())
    }

    /// Answers `question` against the prior turns of `dialogue`.
    pub fn answer(&self, question: &Question, dialogue: &Dialogue) -> Result<TurnTrace, PipelineError> {
        let prepared = self.prepare(question, dialogue)?;
        let answer = self.reader.predict(&prepared.input).map_err(|e: ReaderError| PipelineError {
            stage: Stage::Reader,
            message: e.to_string(),
            partial: Box::new(PartialTrace {
                scores: prepared.scores.clone(),
                selected: prepared.selected.clone(),
                sr: Some(prepared.sr.clone()),
                augmented_question: Some(prepared.input.question_text.clone()),
            }),
        })?;
        Ok(TurnTrace {
            turn_index: question.turn_index,
            question: question.text.clone(),
            mode: self.mode.to_string(),
            assessment: prepared.assessment,
            scores: prepared.scores,
            selected: prepared.selected,
            sr: prepared.sr,
            augmented_question: prepared.input.question_text,
            reader_input_tag: prepared.input.policy_tag,
            history: prepared.input.history,
            answer,
            diagnostics: prepared.diagnostics,
        })
    }
}

/// Structured-representation answering with dynamic selection.
pub fn answer_convsr(
    question: &Question,
    dialogue: &Dialogue,
    selection: SelectionConfig,
    generator: Arc<dyn SrGenerator>,
    reader: Arc<dyn Reader>,
    model: Arc<TermSimilarityModel>,
) -> Result<TurnTrace, PipelineError> {
    Pipeline::new(Mode::Convsr { selection }, reader, model).with_generator(generator).answer(question, dialogue)
}

/// Rewrite, then answer the rewrite with the full history.
pub fn answer_qr_pipeline(
    question: &Question,
    dialogue: &Dialogue,
    rewriter: Arc<dyn Rewriter>,
    reader: Arc<dyn Reader>,
    model: Arc<TermSimilarityModel>,
) -> Result<TurnTrace, PipelineError> {
    Pipeline::new(Mode::Pipeline, reader, model).with_rewriter(rewriter).answer(question, dialogue)
}

pub fn answer_baseline(
    question: &Question,
    dialogue: &Dialogue,
    policy: HistoryPolicy,
    with_sr: bool,
    reader: Arc<dyn Reader>,
    model: Arc<TermSimilarityModel>,
) -> Result<TurnTrace, PipelineError> {
    Pipeline::new(Mode::Baseline { policy, with_sr }, reader, model).answer(question, dialogue)
}

/// A live conversation: each answered question becomes a turn whose
/// predicted answer and SR feed later history.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub dialogue: Dialogue,
    pub pipeline: Pipeline,
    pub traces: Vec<TurnTrace>,
    in_flight: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session {0} already has a question in flight")]
    ConcurrentTurn(String),
    #[error("empty question")]
    EmptyQuestion,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Serializable view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub mode: Mode,
    pub dialogue: Dialogue,
    pub traces: Vec<TurnTrace>,
}

impl Session {
    pub fn new(id: impl Into<String>, passage: Arc<Passage>, pipeline: Pipeline) -> Self {
        let id = id.into();
        Self { dialogue: Dialogue::live(id.clone(), passage), id, pipeline, traces: Vec::new(), in_flight: false }
    }

    pub fn in_flight(&self) -> bool {
        self.in_flight
    }

    /// Claims the session for one question.
    pub fn begin_turn(&mut self, text: &str) -> Result<(Question, Dialogue, Pipeline), SessionError> {
        if self.in_flight {
            return Err(SessionError::ConcurrentTurn(self.id.clone()));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::EmptyQuestion);
        }
        self.in_flight = true;
        let index = self.dialogue.turns.len();
        let question = Question::new(format!("{}_q{index}", self.id), text, index);
        Ok((question, self.dialogue.clone(), self.pipeline.clone()))
    }

    /// Records the outcome of the question claimed by [`Session::begin_turn`].
    pub fn finish_turn(&mut self, question: Question, outcome: &Result<TurnTrace, PipelineError>) {
        self.in_flight = false;
        if let Ok(trace) = outcome {
            self.dialogue.turns.push(Turn {
                question,
                gold_answers: Vec::new(),
                predicted_answer: Some(trace.answer.clone()),
                sr: Some(trace.sr.clone()),
            });
            self.traces.push(trace.clone());
        }
    }

    /// Answers a question while holding the session exclusively.
    pub fn ask(&mut self, text: &str) -> Result<TurnTrace, SessionError> {
        let (question, dialogue, pipeline) = self.begin_turn(text)?;
        let outcome = pipeline.answer(&question, &dialogue);
        self.finish_turn(question, &outcome);
        Ok(outcome?)
    }

    pub fn transcript(&self) -> Transcript {
        Transcript { id: self.id.clone(), mode: self.pipeline.mode, dialogue: self.dialogue.clone(), traces: self.traces.clone() }
    }

    /// Re-asks every question in a fresh session with the same pipeline.
    pub fn replay(&self) -> Result<Vec<TurnTrace>, SessionError> {
        let mut fresh = Session::new(format!("{}-replay", self.id), self.dialogue.passage.clone(), self.pipeline.clone());
        self.dialogue.turns.iter().map(|t| fresh.ask(&t.question.text)).collect()
    }
}

/// Runs one live turn. The lock is released while the pipeline runs; a
/// second question arriving meanwhile gets [`SessionError::ConcurrentTurn`].
pub fn run_session_turn(session: &Mutex<Session>, question_text: &str) -> Result<TurnTrace, SessionError> {
    let (question, dialogue, pipeline) = session.lock().expect("session lock").begin_turn(question_text)?;
    let outcome = pipeline.answer(&question, &dialogue);
    session.lock().expect("session lock").finish_turn(question, &outcome);
    Ok(outcome?)
}
