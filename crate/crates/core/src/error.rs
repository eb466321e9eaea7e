use thiserror::Error;

use crate::lang::Location;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("in function `{function}`: {msg}")]
    Semantic { function: String, msg: String },
    #[error("location not found: {0}")]
    LocationNotFound(Location),
}

impl LangError {
    pub(crate) fn semantic(function: &str, msg: impl Into<String>) -> Self {
        LangError::Semantic { function: function.to_string(), msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unsupported construct in `{function}`: {msg}")]
    Unsupported { function: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("grammar derives no patch")]
    Empty,
    #[error("unknown rule id {0}")]
    UnknownRule(usize),
    #[error("derivation does not replay: {0}")]
    Replay(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
