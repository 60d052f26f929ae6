use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("joint angle {name} = {value} rad is outside [-pi/2, pi/2]")]
    JointAngleOutOfRange { name: &'static str, value: f64 },

    #[error("pitch {0} rad is outside the working range [-0.75, 0.75]")]
    PitchOutOfRange(f64),

    #[error("weights ({w_v}, {w_a}, {w_o}) must be non-negative and sum to 1")]
    InvalidWeights { w_v: f64, w_a: f64, w_o: f64 },

    #[error("scene generation failed for seed {seed} after {attempts} attempts: {reason}")]
    Generation {
        seed: u64,
        attempts: usize,
        reason: String,
    },

    #[error("degenerate registration: {0} correspondences (need at least 6)")]
    DegenerateRegistration(usize),

    #[error("mesh topology mismatch: {0} vs {1} vertices")]
    TopologyMismatch(usize, usize),

    #[error("robot base cell is not valid in the elevation map")]
    BaseCellInvalid,

    #[error("no traversable cells to sample from")]
    EmptyTraversableSet,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
