use thiserror::Error;

use crate::combin::Subset;

#[derive(Debug, Error)]
pub enum Error {
    #[error("replication parameter L*M/N = {groups}*{cache_files}/{files} = {value} is not an integer in [0, {groups}]")]
    NonIntegerReplication {
        groups: usize,
        cache_files: f64,
        files: usize,
        value: f64,
    },

    #[error("invalid library parameters: {0}")]
    InvalidParams(String),

    #[error("cache configuration index {index} is outside [0, {groups})")]
    GroupOutOfRange { index: usize, groups: usize },

    #[error("file size {bits} bits is not divisible by the subpacketization order {order}")]
    IndivisibleFileSize { bits: usize, order: u64 },

    #[error("segment for user {user} belongs to group {group}, which is not in the multicast subset {subset}")]
    GroupNotInSubset {
        user: usize,
        group: usize,
        subset: Subset,
    },

    #[error("segment for user {user} does not address the subfile needed for subset {subset}")]
    WrongSubfile { user: usize, subset: Subset },

    #[error("user {user} is missing bits [{start}, {end}) of the subfile for multicast subset {subset}")]
    MissingSegment {
        user: usize,
        subset: Subset,
        start: usize,
        end: usize,
    },

    #[error("user {user} lacks cached subfile needed to cancel interference")]
    MissingCache { user: usize },

    #[error("users {users:?} are not within a_cell of any helper")]
    UncoveredUsers { users: Vec<usize> },

    #[error("user {user} has no connected helper")]
    DisconnectedUser { user: usize },

    #[error("problem size gate exceeded: {0}")]
    SizeGate(String),

    #[error("linear program is malformed: {0}")]
    MalformedProgram(String),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("family is infeasible at the upper bracket alpha = {alpha_high}; raise the upper bound")]
    UpperBoundInfeasible { alpha_high: f64 },

    #[error("invalid bisection configuration: {0}")]
    InvalidBisection(String),

    #[error("exact solve abandoned after {nodes} branch-and-bound nodes")]
    ExactSolveAbandoned { nodes: usize },

    #[error("no feasible assignment exists")]
    Infeasible,

    #[error("avalanche scheduler made no progress: {0}")]
    Livelock(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
