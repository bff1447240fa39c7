//! Term vectors, embedding-derived term similarity, soft cosine similarity
//! and hard history selection.
//!
//! Soft cosine between a question vector `q` and a history vector `h` is
//!
//! ```text
//!            Σ_ij s_ij q_i h_j
//! ─────────────────────────────────────────
//!  √(Σ_ij s_ij q_i q_j) · √(Σ_ij s_ij h_i h_j)
//! ```
//!
//! where `s_ij` is the similarity of terms `i` and `j`. The result is clamped
//! to `[0, 1]`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{Question, SelectionConfig, Turn};

pub use crate::text::tokenize;

/// Sparse term → weight map. Weights are strictly positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermVector<F: Scalar> {
    weights: BTreeMap<String, F>,
}

impl<F: Scalar> TermVector<F> {
    /// Raw term counts of the tokenized text.
    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(tokenize(text))
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut weights = BTreeMap::new();
        for t in tokens {
            let slot = weights.entry(t).or_insert_with(F::zero);
            *slot = *slot + F::one();
        }
        Self { weights }
    }

    /// Builds a vector from explicit weights, dropping non-positive entries.
    pub fn from_weights<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, F)>,
        S: Into<String>,
    {
        let mut weights = BTreeMap::new();
        for (term, w) in pairs {
            if w > F::zero() {
                let slot = weights.entry(term.into()).or_insert_with(F::zero);
                *slot = *slot + w;
            }
        }
        Self { weights }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, term: &str) -> F {
        self.weights.get(term).copied().unwrap_or_else(F::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, F)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn scaled(&self, factor: F) -> Self {
        Self::from_weights(self.iter().map(|(t, w)| (t.to_string(), w * factor)))
    }

    fn weighted_by(&self, idf: &HashMap<String, F>) -> Self {
        Self::from_weights(self.iter().map(|(t, w)| (t.to_string(), w * idf.get(t).copied().unwrap_or_else(F::one))))
    }
}

/// Anything that can provide the term-term similarity `s_ij`.
pub trait TermSimilarity<F: Scalar> {
    fn similarity(&self, a: &str, b: &str) -> F;
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid number {value:?}")]
    Number { line: usize, value: String },
    #[error("line {line}: entry has no vector components")]
    Empty { line: usize },
    #[error("embedding vectors must have positive dimension")]
    ZeroDimension,
}

#[derive(Debug, Clone)]
struct Embedding<F> {
    vector: Vec<F>,
    norm: F,
}

/// Static word embeddings inducing `s_ij`.
///
/// Identical terms have similarity 1. Two distinct in-vocabulary terms have
/// `max(0, cos)^p` (or `sign(cos)·|cos|^p` with flooring off); any pair
/// involving an out-of-vocabulary term has similarity 0.
#[derive(Debug, Clone)]
pub struct SimilarityModel<F: Scalar> {
    embeddings: HashMap<String, Embedding<F>>,
    dimension: usize,
    pub exponent: F,
    pub floor_at_zero: bool,
    /// Weight term counts by idf over the scored turns before comparing.
    pub idf_weighting: bool,
}

impl<F: Scalar> SimilarityModel<F> {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            embeddings: HashMap::new(),
            dimension,
            exponent: F::of(2.0),
            floor_at_zero: true,
            idf_weighting: false,
        })
    }

    /// A model without vocabulary: soft cosine reduces to classical cosine.
    pub fn identity() -> Self {
        Self::new(1).expect("positive dimension")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocabulary_size(&self) -> usize {
        self.embeddings.len()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.embeddings.contains_key(term)
    }

    /// Adds a vector; the first entry for a term wins. Returns whether it was inserted.
    pub fn insert(&mut self, term: &str, vector: Vec<F>) -> Result<bool, EmbeddingError> {
        if vector.len() != self.dimension {
            return Err(EmbeddingError::Dimension { line: 0, expected: self.dimension, found: vector.len() });
        }
        let key = term.to_lowercase();
        if self.embeddings.contains_key(&key) {
            return Ok(false);
        }
        let norm = vector.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt();
        self.embeddings.insert(key, Embedding { vector, norm });
        Ok(true)
    }

    /// Parses `token v1 v2 ... vd` lines. The dimension comes from the first
    /// entry; a leading `count dim` header line is skipped.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let mut model: Option<Self> = None;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if model.is_none() && rest.len() == 1 && token.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
                continue;
            }
            if rest.is_empty() {
                return Err(EmbeddingError::Empty { line: line_no });
            }
            let vector = rest
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map(F::of)
                        .map_err(|_| EmbeddingError::Number { line: line_no, value: v.to_string() })
                })
                .collect::<Result<Vec<F>, _>>()?;
            if model.is_none() {
                model = Some(Self::new(vector.len())?);
            }
            let m = model.as_mut().expect("model initialized");
            if vector.len() != m.dimension {
                return Err(EmbeddingError::Dimension { line: line_no, expected: m.dimension, found: vector.len() });
            }
            m.insert(token, vector)?;
        }
        Ok(model.unwrap_or_else(Self::identity))
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::from_reader(fs::File::open(path)?)
    }

    fn cosine(&self, a: &Embedding<F>, b: &Embedding<F>) -> F {
        if a.norm == F::zero() || b.norm == F::zero() {
            return F::zero();
        }
        let dot = a.vector.iter().zip(&b.vector).fold(F::zero(), |acc, (&x, &y)| acc + x * y);
        (dot / (a.norm * b.norm)).max(-F::one()).min(F::one())
    }

    pub fn term_similarity(&self, a: &str, b: &str) -> F {
        if a == b {
            return F::one();
        }
        let (Some(ea), Some(eb)) = (self.embeddings.get(a), self.embeddings.get(b)) else {
            return F::zero();
        };
        let mut cos = self.cosine(ea, eb);
        if self.floor_at_zero {
            cos = cos.max(F::zero());
        }
        if cos == F::zero() {
            return F::zero();
        }
        cos.signum() * cos.abs().powf(self.exponent)
    }
}

impl<F: Scalar> TermSimilarity<F> for SimilarityModel<F> {
    fn similarity(&self, a: &str, b: &str) -> F {
        self.term_similarity(a, b)
    }
}

fn soft_inner<F: Scalar, S: TermSimilarity<F> + ?Sized>(a: &TermVector<F>, b: &TermVector<F>, sim: &S) -> F {
    let mut total = F::zero();
    for (ta, wa) in a.iter() {
        for (tb, wb) in b.iter() {
            let s = sim.similarity(ta, tb);
            if s != F::zero() {
                total = total + s * wa * wb;
            }
        }
    }
    total
}

/// Soft cosine similarity of two term vectors, clamped to `[0, 1]`.
/// Returns 0 when either vector is empty or has a non-positive soft norm.
pub fn soft_cosine<F: Scalar, S: TermSimilarity<F> + ?Sized>(q: &TermVector<F>, h: &TermVector<F>, sim: &S) -> F {
    if q.is_empty() || h.is_empty() {
        return F::zero();
    }
    let qq = soft_inner(q, q, sim);
    let hh = soft_inner(h, h, sim);
    if !(qq > F::zero() && hh > F::zero()) {
        return F::zero();
    }
    let value = soft_inner(q, h, sim) / (qq.sqrt() * hh.sqrt());
    if value.is_nan() {
        return F::zero();
    }
    value.max(F::zero()).min(F::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TurnScore<F: Scalar> {
    pub turn_index: usize,
    pub score: F,
}

/// Text that represents a history turn for scoring: its question followed by
/// its answer (gold, or predicted for live turns).
pub fn turn_text(turn: &Turn) -> String {
    let answer = turn.answer_text();
    if answer.is_empty() {
        turn.question.text.clone()
    } else {
        format!("{} {}", turn.question.text, answer)
    }
}

fn idf_table<F: Scalar>(documents: &[TermVector<F>]) -> HashMap<String, F> {
    let n = F::of(documents.len() as f64);
    let mut df: HashMap<&str, usize> = HashMap::new();
    for d in documents {
        for (t, _) in d.iter() {
            *df.entry(t).or_default() += 1;
        }
    }
    df.into_iter()
        .map(|(t, c)| (t.to_string(), ((n + F::one()) / (F::of(c as f64) + F::one())).ln() + F::one()))
        .collect()
}

/// Soft cosine of the question against every history turn, in order.
pub fn score_history<F: Scalar>(question: &Question, history: &[Turn], model: &SimilarityModel<F>) -> Vec<TurnScore<F>> {
    if history.is_empty() {
        return Vec::new();
    }
    let mut vectors: Vec<TermVector<F>> = std::iter::once(TermVector::from_text(&question.text))
        .chain(history.iter().map(|t| TermVector::from_text(&turn_text(t))))
        .collect();
    if model.idf_weighting {
        let idf = idf_table(&vectors);
        vectors = vectors.iter().map(|v| v.weighted_by(&idf)).collect();
    }
    let (q, hs) = vectors.split_first().expect("question vector present");
    history
        .iter()
        .zip(hs)
        .map(|(turn, h)| TurnScore { turn_index: turn.question.turn_index, score: soft_cosine(q, h, model) })
        .collect()
}

/// Hard selection: indices scoring at or above the threshold, chronological,
/// keeping only the most recent `max_turns` when a cap is set.
pub fn select_history<F: Scalar>(scores: &[TurnScore<F>], config: &SelectionConfig<F>) -> Vec<usize> {
    let mut qualifying: Vec<usize> = scores
        .iter()
        .filter(|s| s.score >= config.threshold)
        .map(|s| s.turn_index)
        .collect();
    if let Some(k) = config.max_turns {
        if qualifying.len() > k {
            qualifying.drain(..qualifying.len() - k);
        }
    }
    qualifying
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AnswerSpan, Question};

    fn tv(pairs: &[(&str, f64)]) -> TermVector<f64> {
        TermVector::from_weights(pairs.iter().map(|&(t, w)| (t, w)))
    }

    fn model(entries: &[(&str, Vec<f64>)]) -> SimilarityModel<f64> {
        let mut m = SimilarityModel::new(entries[0].1.len()).unwrap();
        for (t, v) in entries {
            m.insert(t, v.clone()).unwrap();
        }
        m
    }

    #[test]
    fn term_vector_counts() {
        let v = TermVector::<f64>::from_text("the cat saw the dog");
        assert_eq!(v.get("the"), 2.0);
        assert_eq!(v.get("cat"), 1.0);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn term_similarity_cases() {
        let m = model(&[("tv", vec![1.0, 2.0]), ("television", vec![1.0, 2.0]), ("cat", vec![2.0, -1.0])]);
        assert_eq!(m.term_similarity("cat", "cat"), 1.0);
        assert_eq!(m.term_similarity("oov", "oov"), 1.0);
        assert!((m.term_similarity("tv", "television") - 1.0).abs() < 1e-12);
        assert_eq!(m.term_similarity("tv", "cat"), 0.0);
        assert_eq!(m.term_similarity("tv", "oov"), 0.0);
    }

    #[test]
    fn negative_cosines_floor_or_keep_sign() {
        let mut m = model(&[("up", vec![1.0, 0.0]), ("down", vec![-1.0, 0.0])]);
        assert_eq!(m.term_similarity("up", "down"), 0.0);
        m.floor_at_zero = false;
        assert_eq!(m.term_similarity("up", "down"), -1.0);
    }

    #[test]
    fn soft_cosine_hand_cases() {
        let m = SimilarityModel::<f64>::identity();
        let q = tv(&[("a", 1.0), ("b", 2.0)]);
        assert!((soft_cosine(&q, &q, &m) - 1.0).abs() < 1e-12);
        assert_eq!(soft_cosine(&tv(&[("a", 1.0)]), &tv(&[("b", 1.0)]), &m), 0.0);
        assert_eq!(soft_cosine(&TermVector::default(), &q, &m), 0.0);

        // s_ab = cos(45°)^2 = 0.5
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let m = model(&[("a", vec![1.0, 0.0]), ("b", vec![half, half])]);
        assert!((m.term_similarity("a", "b") - 0.5).abs() < 1e-12);
        assert!((soft_cosine(&tv(&[("a", 1.0)]), &tv(&[("b", 1.0)]), &m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let m = SimilarityModel::<f32>::identity();
        let q = TermVector::<f32>::from_text("who played monica");
        assert!((soft_cosine(&q, &q, &m) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embedding_file_rules() {
        let text = "2 2\nTV 1 0\ntelevision 1 0\ntv 0 1\n\ncat 0 1\n";
        let m = SimilarityModel::<f64>::from_reader(text.as_bytes()).unwrap();
        assert_eq!(m.dimension(), 2);
        assert_eq!(m.vocabulary_size(), 3);
        // first entry for "tv" wins
        assert!((m.term_similarity("tv", "television") - 1.0).abs() < 1e-12);

        let bad = "a 1 2\nb 1\n";
        assert!(matches!(
            SimilarityModel::<f64>::from_reader(bad.as_bytes()),
            Err(EmbeddingError::Dimension { line: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(
            SimilarityModel::<f64>::from_reader("a 1 x\n".as_bytes()),
            Err(EmbeddingError::Number { line: 1, .. })
        ));
    }

    fn turn(i: usize, q: &str, a: &str) -> Turn {
        Turn::new(Question::new(format!("q{i}"), q, i), vec![AnswerSpan::new(a, 0, 0.0)])
    }

    #[test]
    fn score_history_cases() {
        let m = SimilarityModel::<f64>::identity();
        let q = Question::new("q2", "Which episode was it?", 2);
        assert!(score_history(&q, &[], &m).is_empty());

        let same = Turn::new(Question::new("q0", "Which episode was it?", 0), vec![]);
        let scores = score_history(&q, &[same], &m);
        assert_eq!(scores.len(), 1);
        assert!((scores[0].score - 1.0).abs() < 1e-12);

        let h = [turn(0, "Who played Monica?", "Courteney Cox"), turn(1, "Which season?", "The first")];
        let scores = score_history(&q, &h, &m);
        assert_eq!(scores.iter().map(|s| s.turn_index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn idf_weighting_changes_scores_but_not_self_similarity() {
        let mut m = SimilarityModel::<f64>::identity();
        m.idf_weighting = true;
        let q = Question::new("q1", "who was the lead actor", 1);
        let scores = score_history(&q, &[turn(0, "who was the lead actor", "")], &m);
        assert!((scores[0].score - 1.0).abs() < 1e-12);
    }

    fn ts(scores: &[f64]) -> Vec<TurnScore<f64>> {
        scores.iter().enumerate().map(|(turn_index, &score)| TurnScore { turn_index, score }).collect()
    }

    #[test]
    fn selection_cases() {
        let cfg = SelectionConfig::new(0.75, None).unwrap();
        assert_eq!(select_history(&ts(&[0.9, 0.2, 0.8]), &cfg), [0, 2]);
        assert_eq!(select_history(&ts(&[0.75]), &cfg), [0]);
        let capped = SelectionConfig::new(0.75, Some(2)).unwrap();
        assert_eq!(select_history(&ts(&[0.9, 0.8, 0.8]), &capped), [1, 2]);
        assert!(select_history(&ts(&[]), &cfg).is_empty());
    }
}
