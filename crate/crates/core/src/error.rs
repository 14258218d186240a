use std::io;

use thiserror::Error;

use crate::demo::Violation;

pub type Result<T, E = SbcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SbcError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty demo set")]
    EmptyDemoSet,

    #[error("empty index")]
    EmptyIndex,

    #[error("demo set failed validation ({} violation(s)); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),

    #[error("bad magic: expected \"SBCD\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: needed {needed} more byte(s) at byte offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("malformed file at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },

    #[error("invalid action schema: {0}")]
    Schema(String),

    #[error("subset size {n} out of range 1..={available}")]
    SubsetRange { n: usize, available: usize },

    #[error("count exceeds demos: requested {count}, available {available}")]
    CountExceedsDemos { count: usize, available: usize },

    #[error("trajectory {traj_id} has {len} frame(s); at least 2 are required")]
    TrajectoryTooShort { traj_id: u64, len: usize },

    #[error("quantile {0} outside (0, 1]")]
    Quantile(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {observations} observation(s) but {actions} action(s)")]
    LengthMismatch { observations: usize, actions: usize },

    #[error("empty input sequence")]
    EmptyInput,

    #[error("no valid world found after {attempts} attempt(s)")]
    Unsatisfiable { attempts: u32 },

    #[error("no goal reachable from ({x}, {y})")]
    UnreachableGoal { x: usize, y: usize },

    #[error("episode already ended after {0} step(s)")]
    EpisodeOver(usize),

    #[error("expert failed in world seed {seed}: {reason}")]
    ExpertFailure { seed: u64, reason: String },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("sequence of length {len} is shorter than window {window}")]
    WindowTooLong { len: usize, window: usize },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
