use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{heq_percentages, question_stats, MetricError, QuestionStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub mode: String,
    pub policy: String,
    pub question: String,
    /// The question text the reader received.
    pub reader_question: String,
    pub prediction: String,
    pub model_f1: f64,
    pub human_f1: f64,
    pub heq: bool,
}

impl QuestionResult {
    /// Sets `heq` from the two F1 values.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dialogue_id: impl Into<String>,
        turn_index: usize,
        mode: impl Into<String>,
        policy: impl Into<String>,
        question: impl Into<String>,
        reader_question: impl Into<String>,
        prediction: impl Into<String>,
        model_f1: f64,
        human_f1: f64,
    ) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            turn_index,
            mode: mode.into(),
            policy: policy.into(),
            question: question.into(),
            reader_question: reader_question.into(),
            prediction: prediction.into(),
            model_f1,
            human_f1,
            heq: model_f1 >= human_f1,
        }
    }
}

/// HEQ-Q and HEQ-D percentages over question results.
pub fn heq_aggregate(results: &[QuestionResult]) -> Result<(f64, f64), MetricError> {
    heq_percentages(results.iter().map(|r| (r.dialogue_id.as_str(), r.heq)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub questions: usize,
    pub dialogues: usize,
    pub f1_avg: f64,
    pub heq_q: f64,
    pub heq_d: f64,
}

impl Aggregates {
    pub fn compute(results: &[QuestionResult]) -> Result<Self, MetricError> {
        let (heq_q, heq_d) = heq_aggregate(results)?;
        let f1_sum: f64 = results.iter().map(|r| r.model_f1).sum();
        let dialogues = results.iter().map(|r| r.dialogue_id.as_str()).collect::<BTreeSet<_>>().len();
        Ok(Self { questions: results.len(), dialogues, f1_avg: 100.0 * f1_sum / results.len() as f64, heq_q, heq_d })
    }
}

pub const HUMAN_F1_NOTE: &str =
    "human_f1 is 1.0 for single-reference questions, so HEQ on such questions requires a perfect match; \
     with several references it is the best leave-one-out F1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("aggregates {stored:?} differ from recomputation {recomputed:?}")]
    Inconsistent { stored: Aggregates, recomputed: Aggregates },
    #[error("heq flag of {dialogue_id}#{turn_index} disagrees with its F1 values")]
    HeqFlag { dialogue_id: String, turn_index: usize },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("cannot write report to {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Emission time; not part of the comparable body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub config: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub aggregates: Aggregates,
    pub question_stats: QuestionStats,
    pub diagnostics: Vec<String>,
    pub results: Vec<QuestionResult>,
}

impl EvaluationReport {
    /// Sorts rows by dialogue and turn and computes the aggregates and the
    /// statistics of the questions the reader received.
    pub fn new(
        config: BTreeMap<String, String>,
        mut results: Vec<QuestionResult>,
        diagnostics: Vec<String>,
    ) -> Result<Self, ReportError> {
        results.sort_by(|a, b| (&a.dialogue_id, a.turn_index).cmp(&(&b.dialogue_id, b.turn_index)));
        let aggregates = Aggregates::compute(&results)?;
        let reader_questions: Vec<&str> = results.iter().map(|r| r.reader_question.as_str()).collect();
        Ok(Self {
            generated_at: None,
            config,
            notes: vec![HUMAN_F1_NOTE.to_string()],
            aggregates,
            question_stats: question_stats(&reader_questions),
            diagnostics,
            results,
        })
    }

    pub fn with_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.generated_at = Some(timestamp.into());
        self
    }

    /// Checks per-row HEQ flags and that the aggregates match the rows.
    pub fn verify(&self) -> Result<(), ReportError> {
        if let Some(r) = self.results.iter().find(|r| r.heq != (r.model_f1 >= r.human_f1)) {
            return Err(ReportError::HeqFlag { dialogue_id: r.dialogue_id.clone(), turn_index: r.turn_index });
        }
        let recomputed = Aggregates::compute(&self.results)?;
        if recomputed != self.aggregates {
            return Err(ReportError::Inconsistent { stored: self.aggregates, recomputed });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.verify()?;
        serde_json::to_string_pretty(self).map_err(|e| ReportError::Serialize(e.to_string()))
    }

    /// JSON without the timestamp.
    pub fn body_json(&self) -> Result<String, ReportError> {
        Self { generated_at: None, ..self.clone() }.to_json()
    }

    /// Per-question rows.
    pub fn to_csv(&self) -> Result<String, ReportError> {
        self.verify()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| ReportError::Serialize(e.to_string());
        w.write_record(["dialogue_id", "turn_index", "mode", "policy", "model_f1", "human_f1", "heq"]).map_err(err)?;
        for r in &self.results {
            w.write_record([
                r.dialogue_id.clone(),
                r.turn_index.to_string(),
                r.mode.clone(),
                r.policy.clone(),
                r.model_f1.to_string(),
                r.human_f1.to_string(),
                r.heq.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ReportError::Serialize(e.to_string()))
    }

    pub fn render(&self, format: ReportFormat) -> Result<String, ReportError> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<(), ReportError> {
        let text = self.render(format)?;
        std::fs::write(path, text).map_err(|e| ReportError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    /// `F1 67.9  HEQ-Q 65.1  HEQ-D 9.2`
    pub fn summary(&self) -> String {
        let a = &self.aggregates;
        format!("F1 {:.1}  HEQ-Q {:.1}  HEQ-D {:.1}", a.f1_avg, a.heq_q, a.heq_d)
    }
}

/// One row of an approach comparison or ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub f1: f64,
    pub heq_q: f64,
    pub heq_d: f64,
}

impl ComparisonRow {
    pub fn from_report(label: impl Into<String>, report: &EvaluationReport) -> Self {
        let a = &report.aggregates;
        Self { label: label.into(), f1: a.f1_avg, heq_q: a.heq_q, heq_d: a.heq_d }
    }
}

fn label_width<'a>(labels: impl Iterator<Item = &'a str>, header: &str) -> usize {
    labels.map(str::len).chain([header.len()]).max().unwrap_or(0)
}

pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let w = label_width(rows.iter().map(|r| r.label.as_str()), "Setting");
    let mut out = format!("{:<w$}  {:>6}  {:>6}  {:>6}\n", "Setting", "F1", "HEQ-Q", "HEQ-D");
    for r in rows {
        let _ = writeln!(out, "{:<w$}  {:>6.1}  {:>6.1}  {:>6.1}", r.label, r.f1, r.heq_q, r.heq_d);
    }
    out
}

/// Question statistics next to the F1 they led to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub label: String,
    pub stats: QuestionStats,
    pub f1: f64,
}

pub const STATS_COLUMNS: [&str; 4] = ["Avg Length", "Pronoun", "Proper Noun", "F1"];

pub fn render_stats(rows: &[StatsRow]) -> String {
    let w = label_width(rows.iter().map(|r| r.label.as_str()), "Setting");
    let [len, pro, prop, f1] = STATS_COLUMNS;
    let mut out = format!("{:<w$}  {len:>10}  {pro:>7}  {prop:>11}  {f1:>6}\n", "Setting");
    for r in rows {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{:<w$}  {:>10.1}  {:>7.1}  {:>11.1}  {:>6.1}",
            r.label, s.avg_length, s.avg_pronouns, s.avg_proper_nouns, r.f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: &str, t: usize, f1: f64, human: f64) -> QuestionResult {
        QuestionResult::new(d, t, "convsr", "dynamic", "q", "q", "p", f1, human)
    }

    fn report() -> EvaluationReport {
        let results = vec![row("d2", 1, 0.5, 1.0), row("d1", 0, 1.0, 1.0), row("d2", 0, 1.0, 0.8)];
        EvaluationReport::new(BTreeMap::from([("mode".into(), "convsr".into())]), results, vec![]).unwrap()
    }

    #[test]
    fn rows_sorted_and_aggregated() {
        let r = report();
        let keys: Vec<_> = r.results.iter().map(|q| (q.dialogue_id.as_str(), q.turn_index)).collect();
        assert_eq!(keys, [("d1", 0), ("d2", 0), ("d2", 1)]);
        assert_eq!(r.aggregates.questions, 3);
        assert_eq!(r.aggregates.dialogues, 2);
        assert!((r.aggregates.f1_avg - 250.0 / 3.0).abs() < 1e-9);
        assert!((r.aggregates.heq_q - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.aggregates.heq_d, 50.0);
        assert_eq!(r.summary(), "F1 83.3  HEQ-Q 66.7  HEQ-D 50.0");
    }

    #[test]
    fn tampered_reports_are_rejected() {
        let mut r = report();
        r.aggregates.f1_avg += 1.0;
        assert!(matches!(r.to_json(), Err(ReportError::Inconsistent { .. })));
        let mut r = report();
        r.results[0].heq = false;
        assert!(matches!(r.verify(), Err(ReportError::HeqFlag { .. })));
    }

    #[test]
    fn json_round_trip_keeps_aggregates_consistent() {
        let r = report().with_timestamp("2024-01-01T00:00:00Z");
        let back: EvaluationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        back.verify().unwrap();
        assert!(!r.body_json().unwrap().contains("generated_at"));
    }

    #[test]
    fn csv_shape() {
        let csv = report().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("dialogue_id,turn_index,mode,policy,model_f1,human_f1,heq"));
        assert_eq!(lines.next(), Some("d1,0,convsr,dynamic,1,1,true"));
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn table_shapes() {
        let rows = vec![ComparisonRow { label: "full".into(), f1: 67.94, heq_q: 65.1, heq_d: 9.2 }];
        let table = render_comparison(&rows);
        assert!(table.lines().nth(1).unwrap().ends_with("67.9    65.1     9.2"));
        let stats = render_stats(&[StatsRow {
            label: "Original+SR".into(),
            stats: QuestionStats { avg_length: 5.5, avg_pronouns: 0.5, avg_proper_nouns: 1.0 },
            f1: 67.9,
        }]);
        let header = stats.lines().next().unwrap();
        for c in STATS_COLUMNS {
            assert!(header.contains(c));
        }
    }
}
