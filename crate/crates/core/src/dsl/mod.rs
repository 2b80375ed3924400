//! Perturbation programs of the form
//! `ChangeSign(box_model(SetTo(P,v),...),M_n)`, their question surface, an
//! interpreter over the four-box model, and translation metrics.
//!
//! Program values are SI: fluxes in m³/s, depths in m.

mod ast;
mod corpus;
mod interp;
mod metrics;
mod parser;
mod question;

pub use ast::{BoxModelCall, ParamName, ProgramAst, SetTo, Variable, BOS, EOS};
pub use corpus::{generate_corpus, read_corpus_jsonl, write_corpus_jsonl, CorpusEntry, CORPUS_HORIZONS};
pub use interp::{apply_program, ask, interpret, AskAnswer, Interpretation, TracePoint, Warning, DEFAULT_PROGRAM_HORIZON};
pub use metrics::{
    evaluate_translations, levenshtein, normalized_levenshtein, normalized_levenshtein_str, token_accuracy, CdfPoint,
    DeterministicTranslator, DirectionReport, LengthBucket, Normalization, RowScore, TranslationReport, Translator,
};
pub use parser::parse;
pub use question::{
    parse_question, program_to_question, question_to_program, question_tokens, Binding, Question, TemplateId, Unit,
    QUESTION_TEMPLATE,
};

use thiserror::Error;

use crate::fourbox::FourBoxError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("parse error at {position}: expected {}, found {found}", expected.join(" | "))]
    ParseError { position: usize, expected: Vec<String>, found: String },
    #[error("unknown parameter {name:?} at {position}{}", suggestion.as_ref().map(|s| format!(" (did you mean {s}?)")).unwrap_or_default())]
    UnknownParameter { name: String, position: usize, suggestion: Option<String> },
    #[error("parameter {name} set more than once (at {position})")]
    DuplicateParameter { name: String, position: usize },
    #[error("unrecognized question; nearest template: {nearest}")]
    UnrecognizedTemplate { nearest: String, detail: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Model(#[from] FourBoxError),
}

impl DslError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            DslError::ParseError { .. } => "parse_error",
            DslError::UnknownParameter { .. } => "unknown_parameter",
            DslError::DuplicateParameter { .. } => "duplicate_parameter",
            DslError::UnrecognizedTemplate { .. } => "unrecognized_template",
            DslError::InvalidValue(_) => "invalid_value",
            DslError::Model(_) => "model_error",
        }
    }
}
