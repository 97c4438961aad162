use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("basis dimension overflows: {0}")]
    Overflow(String),

    #[error("occupancy has {got} sites, basis has {expected}")]
    OccupancyLength { expected: usize, got: usize },

    #[error("occupancy holds {got} bosons, basis cap is {cap}")]
    TooManyBosons { cap: usize, got: usize },

    #[error("label {label} out of range 1..={max} for the {bosons}-boson sector")]
    LabelOutOfRange { label: u64, max: u64, bosons: usize },

    #[error("index {index} out of range (limit {limit}): {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("graph document error at {context}: {message}")]
    GraphDocument { context: String, message: String },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("eigenphase {phase:.9} lies on the logarithm branch cut; reduce the coupling per iteration")]
    BranchCut { phase: f64 },

    #[error("Krylov propagation failed: residual {residual:.3e} at substep {step:.3e}")]
    KrylovBreakdown { residual: f64, step: f64 },

    #[error("state is not normalized (norm {norm:.9})")]
    NotNormalized { norm: f64 },

    #[error("dimension {dim} exceeds limit {limit} for {what}")]
    TooLarge {
        what: &'static str,
        dim: usize,
        limit: usize,
    },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("estimated memory {bytes} bytes exceeds cap {cap} (basis dimension {dim})")]
    MemoryCap { bytes: u64, cap: u64, dim: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 for configuration problems, 3 for resource caps,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Overflow(_) | Error::TooLarge { .. } | Error::MemoryCap { .. } => 3,
            Error::NotHermitian { .. }
            | Error::NotUnitary { .. }
            | Error::BranchCut { .. }
            | Error::KrylovBreakdown { .. }
            | Error::Analysis(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
