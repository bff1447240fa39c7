use std::fmt;

use convsr_core::eval::{EvalError, ReportError};
use convsr_core::ingest::IngestError;
use convsr_core::reader::ReaderError;
use convsr_core::run::ConfigError;
use convsr_core::similarity::EmbeddingError;

/// A failed command with its exit code class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Backend(String),
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const BACKEND: u8 = 3;

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => Self::USAGE,
            Failure::Data(_) => Self::DATA,
            Failure::Backend(_) => Self::BACKEND,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Backend(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<EmbeddingError> for Failure {
    fn from(e: EmbeddingError) -> Self {
        Failure::Data(format!("embeddings: {e}"))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ReaderError> for Failure {
    fn from(e: ReaderError) -> Self {
        Failure::Backend(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline { .. } => Failure::Backend(e.to_string()),
            EvalError::Pool(_) => Failure::Usage(e.to_string()),
            EvalError::Metric { .. } | EvalError::Report(_) => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use convsr_core::eval::MetricError;
    use convsr_core::pipeline::{PipelineError, Stage};

    #[test]
    fn exit_codes_follow_the_error_class() {
        let pipeline = EvalError::Pipeline {
            dialogue_id: "d".into(),
            turn_index: 0,
            source: PipelineError { stage: Stage::Reader, message: "down".into(), partial: Box::default() },
        };
        assert_eq!(Failure::from(pipeline).code(), 3);
        let metric = EvalError::Metric { dialogue_id: "d".into(), turn_index: 0, source: MetricError::EmptyReferences };
        assert_eq!(Failure::from(metric).code(), 2);
        assert_eq!(Failure::from(ConfigError("bad".into())).code(), 1);
        assert_eq!(Failure::from(std::io::Error::other("gone")).code(), 2);
    }
}
