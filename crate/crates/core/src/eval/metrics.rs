//! Answer-level metrics and question statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{is_pronoun, is_stopword, tokenize, words};
use crate::types::CANNOT_ANSWER;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no reference answers")]
    EmptyReferences,
    #[error("no question results")]
    EmptyResults,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, deletes punctuation, drops the articles and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

fn is_marker(text: &str) -> bool {
    text.trim() == CANNOT_ANSWER
}

/// Bag-of-tokens F1 between a prediction and one reference.
pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    match (is_marker(prediction), is_marker(reference)) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        (false, false) => {}
    }
    let pred = normalize(prediction);
    let gold = normalize(reference);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best F1 over the references.
pub fn question_f1<S: AsRef<str>>(prediction: &str, references: &[S]) -> Result<f64, MetricError> {
    references
        .iter()
        .map(|r| token_f1(prediction, r.as_ref()))
        .reduce(f64::max)
        .ok_or(MetricError::EmptyReferences)
}

/// Human performance on a question: 1 for a single reference, otherwise the
/// best leave-one-out F1 of a reference against the others.
pub fn human_f1<S: AsRef<str>>(references: &[S]) -> Result<f64, MetricError> {
    match references.len() {
        0 => Err(MetricError::EmptyReferences),
        1 => Ok(1.0),
        n => Ok((0..n)
            .map(|i| {
                let others: Vec<&str> = (0..n).filter(|&j| j != i).map(|j| references[j].as_ref()).collect();
                question_f1(references[i].as_ref(), &others).expect("at least one other reference")
            })
            .fold(0.0, f64::max)),
    }
}

/// HEQ-Q and HEQ-D, as percentages, from `(dialogue_id, heq)` pairs.
pub fn heq_percentages<'a, I>(flags: I) -> Result<(f64, f64), MetricError>
where
    I: IntoIterator<Item = (&'a str, bool)>,
{
    let mut questions = 0usize;
    let mut passing = 0usize;
    let mut dialogues: Vec<(&str, bool)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (dialogue, heq) in flags {
        questions += 1;
        passing += usize::from(heq);
        match index.get(dialogue) {
            Some(&i) => dialogues[i].1 &= heq,
            None => {
                index.insert(dialogue, dialogues.len());
                dialogues.push((dialogue, heq));
            }
        }
    }
    if questions == 0 {
        return Err(MetricError::EmptyResults);
    }
    let full = dialogues.iter().filter(|(_, ok)| *ok).count();
    Ok((100.0 * passing as f64 / questions as f64, 100.0 * full as f64 / dialogues.len() as f64))
}

/// Average length, pronoun count and proper-noun count per question.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionStats {
    pub avg_length: f64,
    pub avg_pronouns: f64,
    pub avg_proper_nouns: f64,
}

/// Counts for one question: tokens, pronouns and proper nouns (capitalized
/// tokens that neither start a sentence nor are stopwords or pronouns).
pub fn question_counts(question: &str) -> (usize, usize, usize) {
    let tokens = tokenize(question);
    let pronouns = tokens.iter().filter(|t| is_pronoun(t)).count();
    let proper = words(question)
        .iter()
        .filter(|w| w.is_capitalized() && !w.sentence_initial && !is_stopword(&w.lower) && !is_pronoun(&w.lower))
        .count();
    (tokens.len(), pronouns, proper)
}

pub fn question_stats<S: AsRef<str>>(questions: &[S]) -> QuestionStats {
    if questions.is_empty() {
        return QuestionStats::default();
    }
    let (mut len, mut pro, mut prop) = (0usize, 0usize, 0usize);
    for q in questions {
        let (l, p, n) = question_counts(q.as_ref());
        len += l;
        pro += p;
        prop += n;
    }
    let n = questions.len() as f64;
    QuestionStats { avg_length: len as f64 / n, avg_pronouns: pro as f64 / n, avg_proper_nouns: prop as f64 / n }
}
