//! Shared server state: loaded datasets, live sessions and evaluation jobs.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use convsr_core::eval::{Aggregates, EvaluationReport, Evaluator};
use convsr_core::ingest::{available_splits, read_rewrites, read_split, Corpus, RewriteIndex, Split};
use convsr_core::pipeline::Session;
use convsr_core::run::RunConfig;
use convsr_core::TermSimilarityModel;
use serde::Serialize;
use tokio::sync::Semaphore;

use crate::config::ServiceConfig;

#[derive(Debug)]
pub struct Dataset {
    pub name: String,
    pub dir: PathBuf,
    pub splits: BTreeMap<Split, Arc<Corpus>>,
    pub rewrites: RewriteIndex,
}

impl Dataset {
    pub fn load(name: &str, dir: PathBuf) -> Result<Self, String> {
        let mut splits = BTreeMap::new();
        for split in available_splits(&dir) {
            let corpus = read_split(&dir, split).map_err(|e| format!("dataset {name}: {e}"))?;
            splits.insert(split, Arc::new(corpus));
        }
        if splits.is_empty() {
            return Err(format!("dataset {name}: no split files in {}", dir.display()));
        }
        let records = read_rewrites(&dir).map_err(|e| format!("dataset {name}: {e}"))?;
        let rewrites = RewriteIndex::from_records(records).map_err(|e| format!("dataset {name}: {e}"))?;
        Ok(Self { name: name.to_string(), dir, splits, rewrites })
    }

    /// Wraps in-memory corpora.
    pub fn from_corpora(name: &str, corpora: Vec<Corpus>, rewrites: RewriteIndex) -> Self {
        let splits = corpora.into_iter().map(|c| (c.split, Arc::new(c))).collect();
        Self { name: name.to_string(), dir: PathBuf::new(), splits, rewrites }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done) | (JobState::Running, JobState::Failed)
        )
    }
}

/// Public view of an evaluation job.
#[derive(Debug, Clone, Serialize)]
pub struct EvalJob {
    pub id: String,
    pub config: BTreeMap<String, String>,
    pub state: JobState,
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    /// Where the finished report can be fetched.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug)]
pub struct JobEntry {
    pub job: EvalJob,
    pub report: Option<Arc<EvaluationReport>>,
}

impl JobEntry {
    fn advance(&mut self, next: JobState) {
        assert!(self.job.state.can_become(next), "job {} cannot go from {:?} to {:?}", self.job.id, self.job.state, next);
        self.job.state = next;
    }
}

pub struct AppState {
    pub datasets: Vec<Dataset>,
    pub model: Arc<TermSimilarityModel>,
    pub defaults: RunConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<JobEntry>>>>,
    next_id: AtomicU64,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(datasets: Vec<Dataset>, model: TermSimilarityModel, defaults: RunConfig, workers: usize) -> Self {
        Self {
            datasets,
            model: Arc::new(model),
            defaults,
            sessions: RwLock::default(),
            jobs: RwLock::default(),
            next_id: AtomicU64::new(1),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Loads every configured dataset and the embeddings.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, String> {
        let datasets = config
            .datasets
            .iter()
            .map(|(name, dir)| Dataset::load(name, dir.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let model = match &config.embeddings {
            Some(path) => TermSimilarityModel::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
            None => TermSimilarityModel::identity(),
        };
        Ok(Self::new(datasets, model, config.defaults.clone(), config.workers))
    }

    pub fn dataset(&self, name: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.name == name)
    }

    fn next(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::SeqCst))
    }

    pub fn add_session(&self, make: impl FnOnce(String) -> Session) -> String {
        let id = self.next("s");
        let session = make(id.clone());
        self.sessions.write().expect("sessions lock").insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    pub fn job(&self, id: &str) -> Option<Arc<Mutex<JobEntry>>> {
        self.jobs.read().expect("jobs lock").get(id).cloned()
    }

    /// Queues an evaluation and returns its id. The job waits for a worker
    /// slot, then runs on the blocking pool.
    pub fn submit_job(
        self: &Arc<Self>,
        pipeline: convsr_core::pipeline::Pipeline,
        corpus: Arc<Corpus>,
        config: BTreeMap<String, String>,
    ) -> String {
        let id = self.next("job");
        let entry = Arc::new(Mutex::new(JobEntry {
            job: EvalJob {
                id: id.clone(),
                config: config.clone(),
                state: JobState::Queued,
                progress: 0.0,
                error: None,
                aggregates: None,
                report: None,
            },
            report: None,
        }));
        self.jobs.write().expect("jobs lock").insert(id.clone(), entry.clone());
        let workers = self.workers.clone();
        let job_id = id.clone();
        tokio::spawn(async move {
            let _permit = workers.acquire_owned().await.expect("semaphore open");
            entry.lock().expect("job lock").advance(JobState::Running);
            let progress_entry = entry.clone();
            let outcome = tokio::task::spawn_blocking(move || {
                let progress = move |done: usize, total: usize| {
                    progress_entry.lock().expect("job lock").job.progress = done as f64 / total.max(1) as f64;
                };
                Evaluator::new(&pipeline).progress(&progress).run(&corpus, config)
            })
            .await;
            let mut e = entry.lock().expect("job lock");
            match outcome {
                Ok(Ok(report)) => {
                    e.job.progress = 1.0;
                    e.job.aggregates = Some(report.aggregates);
                    e.job.report = Some(format!("/api/eval/jobs/{job_id}/report"));
                    e.report = Some(Arc::new(report));
                    e.advance(JobState::Done);
                }
                Ok(Err(err)) => {
                    e.job.error = Some(err.to_string());
                    e.advance(JobState::Failed);
                }
                Err(join) => {
                    e.job.error = Some(format!("evaluation aborted: {join}"));
                    e.advance(JobState::Failed);
                }
            }
            tracing::info!(job = %job_id, state = ?e.job.state, "evaluation finished");
        });
        id
    }

    /// Every session transcript, ordered by id.
    pub fn snapshot(&self) -> serde_json::Value {
        let sessions = self.sessions.read().expect("sessions lock");
        let mut ids: Vec<&String> = sessions.keys().collect();
        ids.sort();
        let transcripts: Vec<_> = ids
            .into_iter()
            .map(|id| serde_json::to_value(sessions[id].lock().expect("session lock").transcript()).expect("transcript serializes"))
            .collect();
        serde_json::json!({ "sessions": transcripts })
    }
}
