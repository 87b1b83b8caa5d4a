use thiserror::Error;

/// Errors raised by the construction and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,

    #[error("singular value decomposition did not converge")]
    NoConvergence,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot keep {requested} relay dimensions out of {available} active")]
    InvalidDeactivation { requested: usize, available: usize },

    #[error("pattern order {t} outside [2, {k}]")]
    InvalidPatternOrder { t: usize, k: usize },

    #[error("group {group:?} has {available} nullspace columns, block {block} needs {needed}")]
    SupplyExhausted {
        group: Vec<usize>,
        block: usize,
        needed: usize,
        available: usize,
    },

    #[error("alignment degenerate for group {group:?}: {reason}")]
    AlignmentDegenerate { group: Vec<usize>, reason: String },

    #[error("no symbol extension factor <= {limit} makes the plan integral (needs {needed})")]
    ExtensionOverflow { limit: u64, needed: u64 },

    #[error("planner inconsistency: {0}")]
    InternalPlanError(String),

    #[error("units are not mutually independent: {0}")]
    IndependenceViolation(String),

    #[error("projector for unit {unit} pair {pair:?} has rank zero")]
    ProjectorCollapse { unit: usize, pair: (usize, usize) },

    #[error("invalid SNR sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid lemma parameters: {0}")]
    InvalidLemmaParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
