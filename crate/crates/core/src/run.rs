//! Declarative description of one configured approach, shared by the
//! command line and the HTTP service.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RewriteIndex;
use crate::pipeline::{AssessmentRules, Mode, Pipeline, RewriterBackend, SlotAblation};
use crate::reader::{HistoryPolicy, LexicalParams, ReaderBackend};
use crate::sr::GeneratorBackend;
use crate::types::DEFAULT_THRESHOLD;
use crate::{SelectionConfig, TermSimilarityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Convsr,
    Pipeline,
    Baseline,
}

impl ModeName {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "convsr" => Ok(ModeName::Convsr),
            "pipeline" => Ok(ModeName::Pipeline),
            "baseline" => Ok(ModeName::Baseline),
            other => Err(ConfigError(format!("unknown mode {other:?} (expected convsr, pipeline or baseline)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::Convsr => "convsr",
            ModeName::Pipeline => "pipeline",
            ModeName::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Mode, history policy and backends. Backends are written as on the
/// command line: `lexical`, `remote:URL`, `oracle`, `heuristic`, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeName,
    /// Used by the baselines; convsr always selects dynamically and the
    /// rewriting pipeline prepends every turn.
    pub policy: String,
    pub with_sr: bool,
    pub threshold: f64,
    pub k: Option<usize>,
    pub reader: String,
    pub rewriter: String,
    pub generator: String,
    pub generator_fallback: bool,
    pub slots: SlotAblation,
    pub assessment: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: ModeName::Convsr,
            policy: "dynamic".into(),
            with_sr: false,
            threshold: DEFAULT_THRESHOLD,
            k: None,
            reader: "lexical".into(),
            rewriter: "oracle".into(),
            generator: "heuristic".into(),
            generator_fallback: false,
            slots: SlotAblation::Full,
            assessment: true,
        }
    }
}

impl RunConfig {
    pub fn selection(&self) -> Result<SelectionConfig, ConfigError> {
        SelectionConfig::new(self.threshold, self.k).map_err(|e| ConfigError(e.to_string()))
    }

    /// The policy name is checked in every mode but only baselines use it.
    pub fn mode(&self) -> Result<Mode, ConfigError> {
        let selection = self.selection()?;
        let policy = HistoryPolicy::parse(&self.policy, selection).map_err(ConfigError)?;
        Ok(match self.mode {
            ModeName::Convsr => Mode::Convsr { selection },
            ModeName::Pipeline => Mode::Pipeline,
            ModeName::Baseline => Mode::Baseline { policy, with_sr: self.with_sr },
        })
    }

    /// Checks every field, including endpoint URLs, without contacting any backend.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build(Arc::new(TermSimilarityModel::identity()), None).map(|_| ())
    }

    pub fn build(&self, model: Arc<TermSimilarityModel>, rewrites: Option<RewriteIndex>) -> Result<Pipeline, ConfigError> {
        let mode = self.mode()?;
        let backend = |e: crate::remote::RemoteError| ConfigError(e.to_string());
        let reader = self.reader.parse::<ReaderBackend>().map_err(ConfigError)?.build(LexicalParams::default()).map_err(backend)?;
        let rewriter = self.rewriter.parse::<RewriterBackend>().map_err(ConfigError)?.build(rewrites).map_err(backend)?;
        let generator = self
            .generator
            .parse::<GeneratorBackend>()
            .map_err(ConfigError)?
            .build(self.generator_fallback)
            .map_err(backend)?;
        let assessment = if self.assessment { AssessmentRules::default() } else { AssessmentRules::disabled() };
        Ok(Pipeline::new(mode, reader, model)
            .with_rewriter(rewriter)
            .with_generator(generator)
            .with_slots(self.slots)
            .with_assessment(assessment))
    }

    /// Flat key/value view stored in reports.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("mode", self.mode.as_str().into());
        put("policy", self.mode().map(|m| m.policy().tag().to_string()).unwrap_or_else(|_| self.policy.clone()));
        put("with_sr", self.with_sr.to_string());
        put("threshold", self.threshold.to_string());
        put("k", self.k.map_or_else(|| "inf".to_string(), |k| k.to_string()));
        put("reader", self.reader.clone());
        put("rewriter", self.rewriter.clone());
        put("generator", self.generator.clone());
        put("generator_fallback", self.generator_fallback.to_string());
        put("slots", self.slots.label().into());
        put("assessment", self.assessment.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_convsr() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let p = c.build(Arc::new(TermSimilarityModel::identity()), None).unwrap();
        assert_eq!(p.mode.tag(), "convsr");
        assert_eq!(c.snapshot()["k"], "inf");
        assert_eq!(c.snapshot()["threshold"], "0.75");
        assert_eq!(c.snapshot()["policy"], "dynamic");
    }

    #[test]
    fn rejects_invalid_fields() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.threshold = 1.5));
        assert!(bad(|c| c.k = Some(0)));
        assert!(bad(|c| c.reader = "bert".into()));
        assert!(bad(|c| {
            c.mode = ModeName::Baseline;
            c.policy = "everything".into();
        }));
        assert!(!bad(|c| c.reader = "remote:http://localhost:9000".into()));
        assert!(bad(|c| c.reader = "remote:localhost".into()));
    }

    #[test]
    fn parses_partial_json() {
        let c: RunConfig = serde_json::from_str(r#"{"mode":"baseline","policy":"prev","with_sr":true}"#).unwrap();
        assert_eq!(c.mode().unwrap().to_string(), "baseline:prepend_prev+sr");
        assert!(serde_json::from_str::<RunConfig>(r#"{"mood":"x"}"#).is_err());
    }
}
