//! QuAC-style evaluation: metrics, batch runs over a corpus, reports and the
//! ablation and statistics tables.

pub mod metrics;
pub mod report;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

pub use metrics::{human_f1, normalize, question_f1, question_stats, token_f1, MetricError, QuestionStats};
pub use report::{
    heq_aggregate, render_comparison, render_stats, Aggregates, ComparisonRow, EvaluationReport, QuestionResult,
    ReportError, ReportFormat, StatsRow,
};

use crate::ingest::Corpus;
use crate::pipeline::{Pipeline, PipelineError, SlotAblation, ORACLE_MISS};
use crate::types::Dialogue;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dialogue {dialogue_id}, turn {turn_index}: {source}")]
    Pipeline { dialogue_id: String, turn_index: usize, source: PipelineError },
    #[error("dialogue {dialogue_id}, turn {turn_index}: {source}")]
    Metric { dialogue_id: String, turn_index: usize, source: MetricError },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Called with `(dialogues done, dialogues total)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Runs a pipeline over every dialogue of a corpus.
///
/// Dialogues run in parallel; turns within a dialogue run in order, each one
/// seeing gold answers and the SRs generated for the earlier turns.
#[derive(Clone)]
pub struct Evaluator<'a> {
    pub pipeline: &'a Pipeline,
    pub jobs: Option<usize>,
    pub progress: Option<Progress<'a>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(pipeline: &'a Pipeline) -> Self {
        Self { pipeline, jobs: None, progress: None }
    }

    pub fn jobs(mut self, jobs: Option<usize>) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn progress(mut self, progress: Progress<'a>) -> Self {
        self.progress = Some(progress);
        self
    }

    /// `config` is stored as the report's configuration snapshot.
    pub fn run(&self, corpus: &Corpus, config: BTreeMap<String, String>) -> Result<EvaluationReport, EvalError> {
        let total = corpus.dialogues.len();
        let done = AtomicUsize::new(0);
        let work = || {
            corpus
                .dialogues
                .par_iter()
                .map(|d| {
                    let out = self.dialogue(d);
                    let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                    if let Some(p) = self.progress {
                        p(n, total);
                    }
                    out
                })
                .collect::<Result<Vec<_>, EvalError>>()
        };
        let per_dialogue = match self.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EvalError::Pool(e.to_string()))?
                .install(work),
            None => work(),
        }?;

        let mut results = Vec::new();
        let mut diagnostics = Vec::new();
        for (rows, diags) in per_dialogue {
            results.extend(rows);
            diagnostics.extend(diags);
        }
        diagnostics.sort();
        let misses = diagnostics.iter().filter(|d| d.starts_with(ORACLE_MISS)).count();
        let mut config = config;
        config.insert("oracle_misses".into(), misses.to_string());
        Ok(EvaluationReport::new(config, results, diagnostics)?)
    }

    fn dialogue(&self, dialogue: &Dialogue) -> Result<(Vec<QuestionResult>, Vec<String>), EvalError> {
        let mut working = dialogue.clone();
        let mut rows = Vec::with_capacity(dialogue.turns.len());
        let mut diagnostics = Vec::new();
        let mode = self.pipeline.mode;
        for i in 0..working.turns.len() {
            let question = working.turns[i].question.clone();
            let at = |source| EvalError::Pipeline { dialogue_id: dialogue.id.clone(), turn_index: i, source };
            let trace = self.pipeline.answer(&question, &working).map_err(at)?;
            let golds = working.turns[i].gold_texts();
            let metric = |source| EvalError::Metric { dialogue_id: dialogue.id.clone(), turn_index: i, source };
            let model_f1 = question_f1(&trace.answer.text, &golds).map_err(metric)?;
            let human = human_f1(&golds).map_err(metric)?;
            rows.push(QuestionResult::new(
                &dialogue.id,
                question.turn_index,
                mode.tag(),
                mode.policy().tag(),
                &question.text,
                &trace.augmented_question,
                &trace.answer.text,
                model_f1,
                human,
            ));
            diagnostics.extend(trace.diagnostics.iter().cloned());
            let turn = &mut working.turns[i];
            turn.sr = Some(trace.sr);
            turn.predicted_answer = Some(trace.answer);
        }
        Ok((rows, diagnostics))
    }
}

/// Evaluation with one SR slot emptied before augmentation.
pub fn ablate_slots(
    pipeline: &Pipeline,
    corpus: &Corpus,
    config: BTreeMap<String, String>,
    which: SlotAblation,
    jobs: Option<usize>,
) -> Result<EvaluationReport, EvalError> {
    let ablated = pipeline.clone().with_slots(which);
    let mut config = config;
    config.insert("slots".into(), which.label().into());
    Evaluator::new(&ablated).jobs(jobs).run(corpus, config)
}

/// The three-row slot ablation: full, without context entities, without
/// question entities.
pub fn ablation_table(
    pipeline: &Pipeline,
    corpus: &Corpus,
    config: BTreeMap<String, String>,
    jobs: Option<usize>,
) -> Result<(Vec<ComparisonRow>, Vec<EvaluationReport>), EvalError> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for which in SlotAblation::ALL {
        let report = ablate_slots(pipeline, corpus, config.clone(), which, jobs)?;
        rows.push(ComparisonRow::from_report(which.label(), &report));
        reports.push(report);
    }
    Ok((rows, reports))
}
