use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Solver,
    Identification,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset: at least one observation is required")]
    Empty,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("overlapping role assignment: column `{0}` is assigned to more than one role")]
    OverlappingRoles(String),

    #[error("non-binary treatment: column `{column}` row {row} has value {value}")]
    NonBinaryTreatment { column: String, row: usize, value: f64 },

    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },

    #[error("unparseable cell in column `{column}` at row {row}: `{value}`")]
    Parse { column: String, row: usize, value: String },

    #[error("treatment group {group} is empty")]
    EmptyTreatmentGroup { group: u8 },

    #[error("insufficient control observations: {have} controls, need at least {need}")]
    InsufficientControls { have: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("column reference {term} out of range for block {block}")]
    ColumnOutOfRange { term: String, block: String },

    #[error("weak-proxy / rank-deficient moment system (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("treatment bridge did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        residual: f64,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("locally unidentified treatment bridge (Jacobian condition number {condition:.3e})")]
    LocallyUnidentified { condition: f64 },

    #[error("GLM fit failed: {0}")]
    GlmDivergence(String),

    #[error("singular bread matrix (condition number {condition:.3e})")]
    SingularBread { condition: f64 },

    #[error("estimating equations are not at a root: mean score norm {norm:.3e}")]
    NotAtRoot { norm: f64 },

    #[error("completeness failure (rank): P(Z|W,a,x) at x index {x} has condition number {condition:.3e}")]
    CompletenessFailure { x: usize, condition: f64 },

    #[error("model incompatibility: {0}")]
    ModelIncompatibility(String),

    #[error("zero probability cell: {0}")]
    ZeroCell(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("study aborted: {failed} of {reps} replications failed (first error: {first})")]
    StudyAborted {
        failed: usize,
        reps: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Empty
            | MissingColumn(_)
            | OverlappingRoles(_)
            | NonBinaryTreatment { .. }
            | NonFinite { .. }
            | Parse { .. }
            | EmptyTreatmentGroup { .. }
            | InsufficientControls { .. }
            | Csv(_) => ErrorClass::Validation,
            Dimension(_) | ColumnOutOfRange { .. } | InvalidConfig(_) | Json(_) => {
                ErrorClass::Usage
            }
            IllConditioned { .. }
            | NotConverged { .. }
            | LocallyUnidentified { .. }
            | GlmDivergence(_)
            | SingularBread { .. }
            | NotAtRoot { .. }
            | StudyAborted { .. } => ErrorClass::Solver,
            CompletenessFailure { .. }
            | ModelIncompatibility(_)
            | ZeroCell(_)
            | InvalidLaw(_) => ErrorClass::Identification,
            Io(_) => ErrorClass::Io,
        }
    }
}
