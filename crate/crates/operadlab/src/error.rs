//! Error type shared across the crate.

use thiserror::Error;

use crate::operad::AxiomReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field mismatch: {0} vs {1}")]
    FieldMismatch(crate::field::FieldSpec, crate::field::FieldSpec),

    #[error("colorset mismatch")]
    ColorMismatch,

    #[error("insufficient support: window {window} exceeds available degrees {support}")]
    InsufficientSupport { window: String, support: String },

    #[error("axiom violations:\n{0}")]
    Axioms(AxiomReport),

    #[error("not a module: {0}")]
    NotAModule(AxiomReport),

    #[error("not stabilized: {0}")]
    NotStabilized(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error at {at}: {msg}")]
    Parse { at: String, msg: String },

    #[error("comparison failed: {0}")]
    Mismatch(String),

    #[error("configuration error: {0}")]
    Config(String),
}
