use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use convsr_core::eval::{ablation_table, render_comparison, render_stats, EvaluationReport, Evaluator, ReportFormat, StatsRow};
use convsr_core::ingest::{
    align_rewrites, load_canard, load_quac, read_rewrites, read_split, split_validation, write_corpus_dir, Corpus,
    QuestionNumbering, RewriteIndex, RewriteRecord, Split,
};
use convsr_core::reader::{LexicalParams, ReaderBackend};
use convsr_core::run::{ModeName, RunConfig};
use convsr_core::sr::label_sr;
use convsr_core::TermSimilarityModel;
use serde_json::json;

use crate::failure::Failure;
use crate::{AblateArgs, ApproachArgs, CorpusArgs, EvalArgs, IngestArgs, LabelArgs, ServeArgs, StatsArgs};

fn numbering(one_based: bool) -> QuestionNumbering {
    if one_based {
        QuestionNumbering::OneBased
    } else {
        QuestionNumbering::ZeroBased
    }
}

pub fn ingest(a: &IngestArgs) -> Result<(), Failure> {
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        return Err(Failure::Usage(format!("--val-fraction {} must lie strictly between 0 and 1", a.val_fraction)));
    }
    let name = a.quac.file_stem().map_or_else(|| "quac".to_string(), |s| s.to_string_lossy().into_owned());
    let full = load_quac(&a.quac, &name, Split::Train)?;
    let (train, val) = split_validation(&full, a.val_fraction, a.seed)?;
    let test = a.test_quac.as_deref().map(|p| load_quac(p, &name, Split::Test)).transpose()?;

    let records = match &a.canard {
        Some(path) => load_canard(path, numbering(a.canard_one_based))?,
        None => Vec::new(),
    };
    let mut everything = full.dialogues.clone();
    everything.extend(test.iter().flat_map(|t| t.dialogues.iter().cloned()));
    let (index, diagnostics) = align_rewrites(&Corpus::new(&name, Split::Train, everything)?, &records)?;
    for d in &diagnostics {
        eprintln!("skipped rewrite {}#{}: {}", d.dialogue_id, d.turn_index, d.reason);
    }

    let mut corpora = vec![&train, &val];
    corpora.extend(test.as_ref());
    let aligned: Vec<RewriteRecord> = index.iter().cloned().collect();
    write_corpus_dir(&a.out, &corpora, &aligned)?;
    for c in corpora {
        println!("{:<5} {:>6} dialogues {:>7} questions", c.split.as_str(), c.dialogues.len(), c.question_count());
    }
    println!("rewrites {} aligned, {} skipped", aligned.len(), diagnostics.len());
    Ok(())
}

fn load_model(path: Option<&Path>, idf: bool) -> Result<TermSimilarityModel, Failure> {
    let mut model = match path {
        Some(p) => TermSimilarityModel::load(p)?,
        None => TermSimilarityModel::identity(),
    };
    model.idf_weighting = idf;
    Ok(model)
}

fn split_of(name: &str) -> Result<Split, Failure> {
    name.parse().map_err(Failure::Usage)
}

/// The split corpus and the rewrites that belong to it.
fn load_data(d: &CorpusArgs) -> Result<(Corpus, RewriteIndex), Failure> {
    let corpus = read_split(&d.corpus, split_of(&d.split)?)?;
    let (index, _) = align_rewrites(&corpus, &read_rewrites(&d.corpus)?)?;
    Ok((corpus, index))
}

fn run_config(a: &ApproachArgs) -> Result<RunConfig, Failure> {
    let config = RunConfig {
        mode: ModeName::parse(&a.mode)?,
        policy: a.policy.clone(),
        with_sr: a.with_sr,
        threshold: a.threshold,
        k: a.k,
        reader: a.reader.clone(),
        rewriter: a.rewriter.clone(),
        generator: a.generator.clone(),
        generator_fallback: a.generator_fallback,
        assessment: !a.no_assessment,
        ..RunConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn evaluate(
    config: &RunConfig,
    model: Arc<TermSimilarityModel>,
    data: &CorpusArgs,
    corpus: &Corpus,
    rewrites: &RewriteIndex,
    jobs: Option<usize>,
) -> Result<EvaluationReport, Failure> {
    let pipeline = config.build(model, Some(rewrites.clone()))?;
    let mut snapshot = config.snapshot();
    snapshot.insert("corpus".into(), data.corpus.display().to_string());
    snapshot.insert("split".into(), corpus.split.to_string());
    snapshot.insert("idf".into(), pipeline.model.idf_weighting.to_string());
    Ok(Evaluator::new(&pipeline).jobs(jobs).run(corpus, snapshot)?)
}

pub fn eval(a: &EvalArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let format: ReportFormat = a.format.parse().map_err(Failure::Usage)?;
    let config = run_config(&a.approach)?;
    let model = Arc::new(load_model(a.approach.embeddings.as_deref(), a.approach.idf)?);
    let (corpus, rewrites) = load_data(&a.data)?;
    let report = evaluate(&config, model, &a.data, &corpus, &rewrites, jobs)?
        .with_timestamp(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    report.write(&a.report, format)?;
    println!("{}  ({} questions, {} dialogues)", report.summary(), report.aggregates.questions, report.aggregates.dialogues);
    if let Some(misses) = report.config.get("oracle_misses").filter(|m| *m != "0") {
        eprintln!("{misses} questions had no oracle rewrite and were asked unchanged");
    }
    Ok(())
}

pub fn label(a: &LabelArgs) -> Result<(), Failure> {
    let backend: ReaderBackend = a.reader.parse().map_err(Failure::Usage)?;
    let reader = backend.build(LexicalParams::default()).map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = read_split(&a.corpus, split_of(&a.split)?)?;
    let records = match &a.canard {
        Some(path) => load_canard(path, numbering(a.canard_one_based))?,
        None => read_rewrites(&a.corpus)?,
    };
    let (index, _) = align_rewrites(&corpus, &records)?;

    let mut out = BufWriter::new(fs::File::create(&a.out)?);
    let (mut written, mut accepted, mut skipped) = (0usize, 0usize, 0usize);
    for d in &corpus.dialogues {
        for (i, turn) in d.turns.iter().enumerate() {
            let Some(record) = index.get(&d.id, i) else {
                skipped += 1;
                continue;
            };
            let outcome = label_sr(turn, &record.rewrite, d.history(i), &d.passage, reader.as_ref())?;
            let line = json!({
                "dialogue_id": d.id,
                "turn_index": i,
                "question": turn.question.text,
                "rewrite": record.rewrite,
                "sr": outcome.sr,
                "accepted": outcome.accepted,
            });
            writeln!(out, "{line}")?;
            written += 1;
            accepted += usize::from(outcome.accepted);
        }
    }
    out.flush()?;
    println!("labeled {written} turns ({accepted} accepted), {skipped} without a rewrite");
    Ok(())
}

pub fn stats(a: &StatsArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let model = Arc::new(load_model(a.embeddings.as_deref(), false)?);
    let (corpus, rewrites) = load_data(&a.data)?;
    let base = RunConfig { reader: a.reader.clone(), threshold: a.threshold, k: a.k, ..RunConfig::default() };
    let mut settings = vec![
        ("Original", RunConfig { mode: ModeName::Baseline, policy: "none".into(), ..base.clone() }),
        ("QR", RunConfig { mode: ModeName::Pipeline, ..base.clone() }),
    ];
    if a.augmented {
        settings.insert(1, ("Original+SR", RunConfig { mode: ModeName::Convsr, ..base }));
    }
    let mut rows = Vec::new();
    for (label, config) in settings {
        config.validate()?;
        let report = evaluate(&config, model.clone(), &a.data, &corpus, &rewrites, jobs)?;
        rows.push(StatsRow { label: label.into(), stats: report.question_stats, f1: report.aggregates.f1_avg });
    }
    print!("{}", render_stats(&rows));
    Ok(())
}

pub fn ablate(a: &AblateArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let config = run_config(&a.approach)?;
    if !config.mode()?.generates_sr() {
        return Err(Failure::Usage("slot ablation needs a mode that generates representations".into()));
    }
    let model = Arc::new(load_model(a.approach.embeddings.as_deref(), a.approach.idf)?);
    let (corpus, rewrites) = load_data(&a.data)?;
    let pipeline = config.build(model, Some(rewrites))?;
    let mut snapshot = config.snapshot();
    snapshot.insert("corpus".into(), a.data.corpus.display().to_string());
    snapshot.insert("split".into(), corpus.split.to_string());
    let (rows, _) = ablation_table(&pipeline, &corpus, snapshot, jobs)?;
    print!("{}", render_comparison(&rows));
    if let Some(path) = &a.out {
        fs::write(path, serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<(), Failure> {
    use convsr_service::{ServiceConfig, ServiceError};

    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let mut config = match &a.config {
        Some(path) => ServiceConfig::load(path),
        None => ServiceConfig::from_env(),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(port) = a.port {
        config.port = port;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(convsr_service::serve(config)).map_err(|e| match e {
        ServiceError::Config(e) => Failure::Usage(e.to_string()),
        other => Failure::Data(other.to_string()),
    })
}
