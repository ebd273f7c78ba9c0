use crate::mdp::{Action, State};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown state or action name `{0}`")]
    UnknownName(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("transition row ({state},{action}) is not a distribution over legal successors")]
    NonStochasticKernel { state: State, action: Action },
    #[error("soft value iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("trajectory has no decision steps")]
    EmptyTrajectory,
    #[error("event log is empty")]
    EmptyLog,
    #[error("event {0} needs a stance")]
    StanceMissing(usize),
    #[error("event {0} carries a stance but its kind takes none")]
    StanceUnexpected(usize),
    #[error("encoder produced an illegal trajectory for user {user}: {detail}")]
    EncodeInternal { user: String, detail: String },
    #[error("truncation length must be positive")]
    ZeroTruncation,
    #[error("non-finite value during {0}")]
    NonFinite(String),
    #[error("no embeddings for user {user} under action {action}")]
    MissingPool { user: String, action: Action },
    #[error("empty input list")]
    EmptyList,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {class} has {count} members, fewer than k = {k}")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("state weights must be non-negative with positive sum")]
    ZeroWeights,
    #[error("no inter-event deltas")]
    EmptyDeltas,
    #[error("timestamps decrease at index {0}")]
    Unsorted(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
