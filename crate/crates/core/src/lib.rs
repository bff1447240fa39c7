//! Conversational question answering with structured representations.
//!
//! Follow-up questions are resolved by selecting relevant history turns with
//! soft cosine similarity, generating a `(context entities | question
//! entities)` representation from them and appending it to the question
//! before extractive answer prediction. A question-rewriting pipeline and
//! prepend baselines are provided for comparison, together with QuAC-style
//! ingestion and evaluation.
//!
//! The similarity math is generic over [`Scalar`] (`f32` or `f64`); the rest
//! of the crate works in `f64` through the aliases below.

pub mod eval;
pub mod fixtures;
pub mod ingest;
pub mod pipeline;
pub mod reader;
pub mod run;
pub mod remote;
pub mod scalar;
pub mod similarity;
pub mod sr;
pub mod text;
pub mod types;

pub use scalar::Scalar;
pub use types::{
    AnswerSpan, Dialogue, DialogueError, Passage, Question, SrParseError, StructuredRepresentation, Turn,
    CANNOT_ANSWER, DEFAULT_THRESHOLD,
};

pub type TermSimilarityModel = similarity::SimilarityModel<f64>;
pub type TermSimilarityModel32 = similarity::SimilarityModel<f32>;
pub type TermVector = similarity::TermVector<f64>;
pub type TermVector32 = similarity::TermVector<f32>;
pub type TurnScore = similarity::TurnScore<f64>;
pub type SelectionConfig = types::SelectionConfig<f64>;
