use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgaError {
    #[error("adiabatic gap {gap:e} at x = {x} is below the degeneracy threshold")]
    DegenerateGap { x: f64, gap: f64 },

    #[error("quadrature mesh too coarse: dy = {dy} exceeds {limit} (max |p| = {max_p})")]
    MeshTooCoarse { dy: f64, limit: f64, max_p: f64 },

    #[error("amplitude field is identically zero")]
    EmptyField,

    #[error("Z matrix is ill-conditioned (|Z| = {modulus:e}) at t = {t}")]
    IllConditionedZ { t: f64, modulus: f64 },

    #[error("hop probability dt*rate = {probability} >= 1 at t = {t}; shrink the time step")]
    HopProbabilityOverflow { t: f64, probability: f64 },

    #[error("ensemble members disagree on final time ({expected} vs {found})")]
    MixedFinalTimes { expected: f64, found: f64 },

    #[error("wave fields live on different meshes")]
    MeshMismatch,

    #[error("wave field has zero norm")]
    ZeroField,

    #[error("series truncation bound {bound:e} exceeds 1e-3")]
    TailTooLarge { bound: f64 },

    #[error("reference solution reaches the domain edge (|v| = {edge:e}, norm = {norm:e})")]
    BoundaryContamination { edge: f64, norm: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<FgaError>,
    },

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<FgaError>,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl FgaError {
    /// True for failures caused by the configuration rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            FgaError::InvalidConfig(_) | FgaError::MeshTooCoarse { .. } => true,
            FgaError::Trajectory { source, .. } | FgaError::Replication { source, .. } => {
                source.is_config_error()
            }
            _ => false,
        }
    }

    pub(crate) fn in_trajectory(self, index: usize) -> Self {
        FgaError::Trajectory {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_replication(self, index: usize) -> Self {
        FgaError::Replication {
            index,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for FgaError {
    fn from(e: std::io::Error) -> Self {
        FgaError::Io(e.to_string())
    }
}

impl From<csv::Error> for FgaError {
    fn from(e: csv::Error) -> Self {
        FgaError::Io(e.to_string())
    }
}

pub type Result<T, E = FgaError> = std::result::Result<T, E>;
