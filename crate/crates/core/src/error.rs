use std::path::PathBuf;

use crate::ballot::CandidateId;

/// Errors raised anywhere in the audit toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{0}")]
    Domain(String),

    #[error("tie for elimination in round {round} between {candidates:?}")]
    Tie { round: usize, candidates: Vec<CandidateId> },

    #[error("tabulated winner {computed} does not match reported winner {reported}")]
    WinnerMismatch {
        reported: CandidateId,
        computed: CandidateId,
    },

    #[error("no true assertion prunes elimination order {order:?}; a full hand count is required")]
    Uncertifiable { order: Vec<CandidateId> },

    #[error("assertions leave {} elimination orders unpruned: {unpruned:?}", unpruned.len())]
    NotCertified { unpruned: Vec<Vec<CandidateId>> },

    #[error("search exceeded the node budget of {0}")]
    NodeBudgetExceeded(usize),

    #[error("roster of {candidates} candidates exceeds the exhaustive limit of {limit}; raise the factorial limit explicitly")]
    RosterTooLarge { candidates: usize, limit: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ballot {0} was not drawn")]
    NotDrawn(String),

    #[error("ballot {0} already has an entry")]
    DuplicateEntry(String),

    #[error("audit log is corrupt: {0}")]
    Log(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
