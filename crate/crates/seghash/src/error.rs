use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("fewer than 12 distinct chords in corpus (found {found})")]
    FewerThan12Chords { found: usize },

    #[error("inconsistent timestep state at step {step}: {detail}")]
    InconsistentState { step: usize, detail: String },

    #[error("negative sampling exhausted after {attempts} attempts ({accepted}/{requested} accepted)")]
    ExhaustedCandidates {
        attempts: u64,
        accepted: usize,
        requested: usize,
    },

    #[error("insufficient pairs: requested {requested} {label} pairs, have {available}")]
    InsufficientPairs {
        label: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("non-finite loss at {context}")]
    NonFiniteLoss { context: String },

    #[error("code shape mismatch: ({l_a},{k_a}) vs ({l_b},{k_b})")]
    ShapeMismatch {
        l_a: usize,
        k_a: usize,
        l_b: usize,
        k_b: usize,
    },

    #[error("index empty after song exclusions")]
    EmptyAfterExclusion,

    #[error("start-segment pool is empty")]
    EmptyPool,

    #[error("generation dead end after {placed} segments: all candidates saturated")]
    DeadEnd { placed: usize },

    #[error("metrics file missing or empty: {0}")]
    MissingMetrics(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad file format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("workspace is locked by another process ({0})")]
    WorkspaceLocked(PathBuf),

    #[error("empty result: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
