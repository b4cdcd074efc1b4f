use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh generation failed: degenerate cell {cell} (signed volume {volume:.3e})")]
    DegenerateCell { cell: usize, volume: f64 },

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("evaluation at charge center (distance {distance:.3e} A from charge {charge})")]
    Singularity { charge: usize, distance: f64 },

    #[error("inadmissible deformation: cell {cell} has J = {jacobian:.6e} <= {floor}")]
    InadmissibleDeformation {
        cell: usize,
        jacobian: f64,
        floor: f64,
    },

    #[error("displacement rejected by admissibility gate: {0}")]
    GateRejection(String),

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e}); trace: {trace:?}")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("sinh/cosh argument overflow: |{argument:.3e}| > 700 (unphysical setup)")]
    OverflowGuard { argument: f64 },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("charge {charge} lies outside the flexible molecule after deformation")]
    ChargeOutsideRegion { charge: usize },

    #[error("force field layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("perturbation ledger needs five states, got {0}")]
    IncompleteLedger(usize),

    #[error("{context}: perturbation too strong for the small regime ({detail})")]
    Regime { context: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 4,
            Error::NonConvergence { .. } | Error::Regime { .. } => 3,
            _ => 2,
        }
    }
}
