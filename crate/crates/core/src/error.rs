use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite grid function")]
    NonFinite,
    #[error("incompatible grids")]
    IncompatibleGrids,
    #[error("non-normalizable: mass {mass}")]
    NonNormalizable { mass: f64 },
    #[error("negative density value {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("degenerate reference density at y = {y}")]
    DegenerateReferenceDensity { y: f64 },
    #[error("degenerate effort density at y = {y}")]
    DegenerateEffortDensity { y: f64 },
    #[error("degenerate transition kernel: no process-noise mass reaches the state grid from x = {x}")]
    DegenerateKernel { x: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing effort")]
    MissingEffort,
    #[error("alpha budget exceeded: stage {stage} needs {needed} vectors, cap is {cap}")]
    AlphaBudgetExceeded { stage: usize, needed: usize, cap: usize },
    #[error("enumeration budget exceeded: {needed} needed, cap is {cap}")]
    EnumerationBudgetExceeded { needed: u128, cap: u128 },
    #[error("no stealthy candidates")]
    NoStealthyCandidates,
}

impl Error {
    /// True for the errors a caller should treat as a resource budget
    /// rather than malformed input.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::AlphaBudgetExceeded { .. } | Error::EnumerationBudgetExceeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
