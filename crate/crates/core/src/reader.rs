//! Answer prediction: reader input composition under the history policies,
//! the passage-local lexical reader and the remote reader client.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::{JsonClient, RemoteError};
use crate::text::{char_slice, is_stopword, tokenize, words, Word};
use crate::types::{AnswerSpan, Dialogue, Passage, Question};
use crate::{SelectionConfig, TermSimilarityModel, TurnScore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub q: String,
    pub a: String,
}

/// Everything a reader sees for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderInput {
    pub passage: Arc<Passage>,
    pub question_text: String,
    pub history: Vec<HistoryEntry>,
    pub policy_tag: String,
}

impl ReaderInput {
    /// The request body sent to a remote reader.
    pub fn wire_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "context": self.passage.text,
            "question": self.question_text,
            "history": self.history,
        })
    }
}

/// How prior turns are composed into the reader input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryPolicy {
    None,
    PrependInit,
    PrependPrev,
    PrependInitPrev,
    PrependAll,
    Dynamic(SelectionConfig),
}

impl HistoryPolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            HistoryPolicy::None => "none",
            HistoryPolicy::PrependInit => "prepend_init",
            HistoryPolicy::PrependPrev => "prepend_prev",
            HistoryPolicy::PrependInitPrev => "prepend_init_prev",
            HistoryPolicy::PrependAll => "prepend_all",
            HistoryPolicy::Dynamic(_) => "dynamic",
        }
    }

    /// Parses the command-line names `none|init|prev|init-prev|all|dynamic`
    /// (and the tags above); `dynamic` takes the given selection settings.
    pub fn parse(name: &str, selection: SelectionConfig) -> Result<Self, String> {
        Ok(match name {
            "none" => HistoryPolicy::None,
            "init" | "prepend_init" => HistoryPolicy::PrependInit,
            "prev" | "prepend_prev" => HistoryPolicy::PrependPrev,
            "init-prev" | "prepend_init_prev" => HistoryPolicy::PrependInitPrev,
            "all" | "prepend_all" => HistoryPolicy::PrependAll,
            "dynamic" => HistoryPolicy::Dynamic(selection),
            other => return Err(format!("unknown history policy {other:?}")),
        })
    }
}

impl fmt::Display for HistoryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Scores for every prior turn and the indices the policy keeps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistorySelection {
    pub scores: Vec<TurnScore>,
    pub selected: Vec<usize>,
}

/// Applies a policy at `question.turn_index`. Scores are computed for every
/// prior turn regardless of policy so traces can show them.
pub fn select_for_policy(
    question: &Question,
    dialogue: &Dialogue,
    policy: &HistoryPolicy,
    model: &TermSimilarityModel,
) -> HistorySelection {
    let i = question.turn_index.min(dialogue.turns.len());
    let history = dialogue.history(i);
    let scores = crate::similarity::score_history(question, history, model);
    let selected = match policy {
        _ if i == 0 => Vec::new(),
        HistoryPolicy::None => Vec::new(),
        HistoryPolicy::PrependInit => vec![0],
        HistoryPolicy::PrependPrev => vec![i - 1],
        HistoryPolicy::PrependInitPrev if i == 1 => vec![0],
        HistoryPolicy::PrependInitPrev => vec![0, i - 1],
        HistoryPolicy::PrependAll => (0..i).collect(),
        HistoryPolicy::Dynamic(config) => crate::similarity::select_history(&scores, config),
    };
    HistorySelection { scores, selected }
}

/// Builds the reader input from already selected turn indices.
pub fn input_from_selection(
    question: &Question,
    dialogue: &Dialogue,
    selected: &[usize],
    policy: &HistoryPolicy,
    augmented_text: Option<&str>,
) -> ReaderInput {
    let history = selected
        .iter()
        .filter_map(|&j| dialogue.turns.get(j))
        .map(|t| HistoryEntry { q: t.question.text.clone(), a: t.history_answer_text().to_string() })
        .collect();
    ReaderInput {
        passage: dialogue.passage.clone(),
        question_text: augmented_text.unwrap_or(&question.text).to_string(),
        history,
        policy_tag: policy.tag().to_string(),
    }
}

pub fn compose_input(
    question: &Question,
    dialogue: &Dialogue,
    policy: &HistoryPolicy,
    augmented_text: Option<&str>,
    model: &TermSimilarityModel,
) -> ReaderInput {
    let selection = select_for_policy(question, dialogue, policy, model);
    input_from_selection(question, dialogue, &selection.selected, policy, augmented_text)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReaderError {
    #[error("reader unavailable: {0}")]
    Unavailable(#[from] RemoteError),
    #[error("remote reader returned a span not found in the passage: {text:?} at {start_char}")]
    InvalidRemoteSpan { text: String, start_char: i64 },
    #[error("empty passage")]
    EmptyPassage,
}

pub trait Reader: Send + Sync {
    fn predict(&self, input: &ReaderInput) -> Result<AnswerSpan, ReaderError>;

    /// Short description used in reports, e.g. `lexical` or `remote:URL`.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalParams {
    /// Longest answer window, in tokens.
    pub max_span_tokens: usize,
    /// Best scores below this yield the no-answer span.
    pub no_answer_threshold: f64,
    /// Tokens on each side of a window that count as its context.
    pub context_window: usize,
    /// Query weight of tokens coming from history turns.
    pub history_weight: f64,
}

impl Default for LexicalParams {
    fn default() -> Self {
        Self { max_span_tokens: 30, no_answer_threshold: 0.1, context_window: 10, history_weight: 0.5 }
    }
}

/// Passage tokens with sentence boundaries and sentence-level idf.
#[derive(Debug, Clone)]
pub struct PreparedPassage {
    pub words: Vec<Word>,
    sentences: Vec<(usize, usize)>,
    idf: HashMap<String, f64>,
}

impl PreparedPassage {
    pub fn new(passage: &Passage) -> Self {
        let mut ws = words(&passage.text);
        let marker = tokenize(&passage.cannot_answer_marker);
        if !marker.is_empty() && ws.len() >= marker.len() {
            let tail = ws.len() - marker.len();
            if ws[tail..].iter().map(|w| &w.lower).eq(marker.iter()) {
                ws.truncate(tail);
            }
        }

        let mut sentences: Vec<(usize, usize)> = Vec::new();
        for (i, w) in ws.iter().enumerate() {
            match sentences.last_mut() {
                Some((_, end)) if !w.sentence_initial => *end = i + 1,
                _ => sentences.push((i, i + 1)),
            }
        }

        let n = sentences.len() as f64;
        let mut df: HashMap<&str, usize> = HashMap::new();
        for &(a, b) in &sentences {
            let distinct: HashSet<&str> = ws[a..b].iter().map(|w| w.lower.as_str()).collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        let idf = df.into_iter().map(|(t, c)| (t.to_string(), (1.0 + n / c as f64).ln())).collect();
        Self { words: ws, sentences, idf }
    }

    /// `ln(1 + S / df)` over the passage's sentences; 0 for absent terms.
    pub fn idf(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(0.0)
    }

    pub fn sentences(&self) -> &[(usize, usize)] {
        &self.sentences
    }

    fn sentence_of(&self, word: usize) -> (usize, usize) {
        self.sentences[self.words[word].sentence]
    }
}

/// A candidate answer window `[start, end)` in passage word positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredWindow {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Deterministic extractive reader working on the passage alone.
///
/// The query bag holds the question tokens (weight 1 each) and the history
/// tokens (weight `history_weight` each). A window's score is the sum of
/// `weight(t) · idf(t)` over distinct query terms `t` found in the window or
/// within `context_window` tokens of it, inside the same sentence. Candidate
/// windows are the query-free stretches of a sentence, trimmed to start and
/// end on non-stopwords and cut into `max_span_tokens` pieces when longer.
/// The best window wins; ties go to the earliest start, then the shortest.
#[derive(Debug, Clone, Default)]
pub struct LexicalReader {
    pub params: LexicalParams,
}

impl LexicalReader {
    pub fn new(params: LexicalParams) -> Self {
        Self { params }
    }

    pub fn query_bag(&self, input: &ReaderInput) -> HashMap<String, f64> {
        let marker: HashSet<String> = tokenize(&input.passage.cannot_answer_marker).into_iter().collect();
        let mut bag: HashMap<String, f64> = HashMap::new();
        let mut add = |text: &str, weight: f64| {
            for t in tokenize(text) {
                if !marker.contains(&t) {
                    *bag.entry(t).or_default() += weight;
                }
            }
        };
        add(&input.question_text, 1.0);
        for h in &input.history {
            add(&h.q, self.params.history_weight);
            add(&h.a, self.params.history_weight);
        }
        bag
    }

    /// Score of window `[start, end)` against the query bag.
    pub fn window_score(&self, passage: &PreparedPassage, bag: &HashMap<String, f64>, start: usize, end: usize) -> f64 {
        let (s_start, s_end) = passage.sentence_of(start);
        let from = start.saturating_sub(self.params.context_window).max(s_start);
        let to = (end + self.params.context_window).min(s_end);
        let distinct: HashSet<&str> = passage.words[from..to].iter().map(|w| w.lower.as_str()).collect();
        let mut terms: Vec<&str> = distinct.into_iter().filter(|t| bag.contains_key(*t)).collect();
        terms.sort_unstable();
        terms.iter().map(|t| bag[*t] * passage.idf(t)).sum()
    }

    pub fn candidate_windows(&self, passage: &PreparedPassage, bag: &HashMap<String, f64>) -> Vec<(usize, usize)> {
        let limit = self.params.max_span_tokens.max(1);
        let mut out = Vec::new();
        for &(s_start, s_end) in passage.sentences() {
            let mut i = s_start;
            while i < s_end {
                if bag.contains_key(&passage.words[i].lower) {
                    i += 1;
                    continue;
                }
                let mut j = i;
                while j < s_end && !bag.contains_key(&passage.words[j].lower) {
                    j += 1;
                }
                let (mut a, mut b) = (i, j);
                while a < b && is_stopword(&passage.words[a].lower) {
                    a += 1;
                }
                while b > a && is_stopword(&passage.words[b - 1].lower) {
                    b -= 1;
                }
                if b > a {
                    if b - a <= limit {
                        out.push((a, b));
                    } else {
                        out.extend((a..=b - limit).map(|s| (s, s + limit)));
                    }
                }
                i = j;
            }
        }
        out
    }

    pub fn score_windows(&self, input: &ReaderInput) -> Vec<ScoredWindow> {
        let prepared = PreparedPassage::new(&input.passage);
        let bag = self.query_bag(input);
        self.candidate_windows(&prepared, &bag)
            .into_iter()
            .map(|(start, end)| ScoredWindow { start, end, score: self.window_score(&prepared, &bag, start, end) })
            .collect()
    }
}

/// Picks the best window: highest score, then earliest start, then shortest.
pub fn best_window(windows: &[ScoredWindow]) -> Option<ScoredWindow> {
    windows.iter().copied().reduce(|best, w| {
        let better = w.score > best.score
            || (w.score == best.score && (w.start < best.start || (w.start == best.start && w.end < best.end)));
        if better {
            w
        } else {
            best
        }
    })
}

impl Reader for LexicalReader {
    fn predict(&self, input: &ReaderInput) -> Result<AnswerSpan, ReaderError> {
        if input.passage.text.is_empty() {
            return Err(ReaderError::EmptyPassage);
        }
        let prepared = PreparedPassage::new(&input.passage);
        let bag = self.query_bag(input);
        let windows: Vec<ScoredWindow> = self
            .candidate_windows(&prepared, &bag)
            .into_iter()
            .map(|(start, end)| ScoredWindow { start, end, score: self.window_score(&prepared, &bag, start, end) })
            .collect();
        match best_window(&windows) {
            Some(w) if w.score >= self.params.no_answer_threshold => {
                let from = prepared.words[w.start].start;
                let to = prepared.words[w.end - 1].end;
                let text = char_slice(&input.passage.text, from, to - from).expect("window inside passage");
                Ok(AnswerSpan::new(text, from, w.score))
            }
            _ => Ok(input.passage.no_answer()),
        }
    }

    fn describe(&self) -> String {
        "lexical".to_string()
    }
}

#[derive(Deserialize)]
struct RemoteAnswer {
    text: String,
    start_char: i64,
    #[serde(default)]
    score: f64,
}

/// Client for a model server implementing `POST /predict`.
#[derive(Debug, Clone)]
pub struct RemoteReader {
    client: JsonClient,
}

impl RemoteReader {
    pub fn new(client: JsonClient) -> Self {
        Self { client }
    }
}

impl Reader for RemoteReader {
    fn predict(&self, input: &ReaderInput) -> Result<AnswerSpan, ReaderError> {
        let answer: RemoteAnswer = self.client.post("/predict", &input.wire_payload())?;
        let passage = &input.passage;
        let span = if answer.start_char < 0 || answer.text.trim() == passage.cannot_answer_marker {
            if answer.text.trim() != passage.cannot_answer_marker {
                return Err(ReaderError::InvalidRemoteSpan { text: answer.text, start_char: answer.start_char });
            }
            AnswerSpan { score: answer.score, ..passage.no_answer() }
        } else {
            AnswerSpan { text: answer.text, start_char: answer.start_char, score: answer.score }
        };
        if !span.is_consistent_with(passage) {
            return Err(ReaderError::InvalidRemoteSpan { text: span.text, start_char: span.start_char });
        }
        Ok(span)
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.client.endpoint())
    }
}

/// Reader backend selector as written on the command line and in config
/// files: `lexical` or `remote:URL`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "endpoint", rename_all = "snake_case")]
pub enum ReaderBackend {
    Lexical,
    Remote(String),
}

impl FromStr for ReaderBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(ReaderBackend::Lexical),
            _ => s
                .strip_prefix("remote:")
                .map(|url| ReaderBackend::Remote(url.to_string()))
                .ok_or_else(|| format!("unknown reader {s:?} (expected lexical or remote:URL)")),
        }
    }
}

impl ReaderBackend {
    pub fn build(&self, params: LexicalParams) -> Result<Arc<dyn Reader>, RemoteError> {
        Ok(match self {
            ReaderBackend::Lexical => Arc::new(LexicalReader::new(params)),
            ReaderBackend::Remote(url) => Arc::new(RemoteReader::new(JsonClient::new(url, crate::remote::DEFAULT_TIMEOUT)?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Turn;

    fn input(passage: &str, question: &str) -> ReaderInput {
        ReaderInput {
            passage: Arc::new(Passage::quac_style("p", "t", passage)),
            question_text: question.to_string(),
            history: vec![],
            policy_tag: "none".into(),
        }
    }

    #[test]
    fn finds_the_actor() {
        let answer = LexicalReader::default()
            .predict(&input("Courteney Cox played Monica Geller.", "Who played Monica Geller? (FRIENDS | )"))
            .unwrap();
        assert_eq!(answer.text, "Courteney Cox");
        assert_eq!(answer.start_char, 0);
        assert!((answer.score - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_gives_no_answer() {
        let answer = LexicalReader::default()
            .predict(&input("Courteney Cox played Monica Geller.", "Where is Paris?"))
            .unwrap();
        assert!(answer.is_no_answer());
        assert_eq!(answer.text, "CANNOTANSWER");
    }

    #[test]
    fn ties_go_to_earliest_start() {
        let answer = LexicalReader::default()
            .predict(&input("Alpha beta gamma. Alpha beta delta.", "alpha beta"))
            .unwrap();
        assert_eq!(answer.text, "gamma");
        assert_eq!(answer.start_char, 11);
    }

    #[test]
    fn best_window_tie_rules() {
        let w = |start, end, score| ScoredWindow { start, end, score };
        assert_eq!(best_window(&[w(3, 5, 1.0), w(1, 4, 1.0), w(1, 2, 1.0)]), Some(w(1, 2, 1.0)));
        assert_eq!(best_window(&[w(3, 5, 2.0), w(1, 4, 1.0)]), Some(w(3, 5, 2.0)));
        assert_eq!(best_window(&[]), None);
    }

    #[test]
    fn long_runs_are_cut_to_the_span_limit() {
        let reader = LexicalReader::new(LexicalParams { max_span_tokens: 2, ..Default::default() });
        let p = PreparedPassage::new(&Passage::new("p", "t", "Key one two three four."));
        let bag = HashMap::from([("key".to_string(), 1.0)]);
        assert_eq!(reader.candidate_windows(&p, &bag), [(1, 3), (2, 4), (3, 5)]);
    }

    fn dialogue(n: usize) -> Dialogue {
        let p = Passage::quac_style("p", "t", "Some words here.");
        let turns = (0..n)
            .map(|i| Turn::new(Question::new(format!("q{i}"), format!("question {i}"), i), vec![p.no_answer()]))
            .collect();
        Dialogue::new("d", p, turns)
    }

    #[test]
    fn policy_history_shapes() {
        let d = dialogue(5);
        let m = TermSimilarityModel::identity();
        let q3 = d.turns[3].question.clone();
        let hist = |p: HistoryPolicy| -> Vec<String> {
            compose_input(&q3, &d, &p, None, &m).history.into_iter().map(|h| h.q).collect()
        };
        assert!(hist(HistoryPolicy::None).is_empty());
        assert_eq!(hist(HistoryPolicy::PrependInit), ["question 0"]);
        assert_eq!(hist(HistoryPolicy::PrependPrev), ["question 2"]);
        assert_eq!(hist(HistoryPolicy::PrependInitPrev), ["question 0", "question 2"]);
        assert_eq!(hist(HistoryPolicy::PrependAll).len(), 3);

        let q1 = d.turns[1].question.clone();
        assert_eq!(compose_input(&q1, &d, &HistoryPolicy::PrependInitPrev, None, &m).history.len(), 1);

        let q0 = d.turns[0].question.clone();
        assert!(compose_input(&q0, &d, &HistoryPolicy::PrependAll, None, &m).history.is_empty());

        let aug = compose_input(&q3, &d, &HistoryPolicy::None, Some("question 3 (x | )"), &m);
        assert_eq!(aug.question_text, "question 3 (x | )");
        assert!(aug.history.is_empty());
    }

    #[test]
    fn backend_selector_parsing() {
        assert_eq!("lexical".parse::<ReaderBackend>().unwrap(), ReaderBackend::Lexical);
        assert_eq!(
            "remote:http://localhost:9000".parse::<ReaderBackend>().unwrap(),
            ReaderBackend::Remote("http://localhost:9000".into())
        );
        assert!("bert".parse::<ReaderBackend>().is_err());
    }
}
