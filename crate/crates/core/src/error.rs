use thiserror::Error;

use crate::types::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("sequence {id} needs {required} ranks but the cluster has {available}: exceeds cluster capacity")]
    ExceedsCluster {
        id: u64,
        required: usize,
        available: usize,
    },

    #[error("infeasible: minimum degrees sum to {required} but only {available} ranks exist")]
    Infeasible { required: usize, available: usize },

    #[error("micro-batch {index}: {source}")]
    MicroBatch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("static degree {degree} infeasible: sequence {id} needs at least {required} ranks")]
    StaticDegreeTooSmall {
        degree: usize,
        id: u64,
        required: usize,
    },

    #[error("design matrix is rank deficient: coefficient `{coefficient}` is not identifiable")]
    RankDeficient { coefficient: &'static str },

    #[error("instance too large for exhaustive search ({groups} groups, {ranks} ranks; limit {max_groups} x {max_ranks})")]
    SizeGuard {
        groups: usize,
        ranks: usize,
        max_groups: usize,
        max_ranks: usize,
    },

    #[error("plan failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("{context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid-input",
            Error::ExceedsCluster { .. }
            | Error::Infeasible { .. }
            | Error::StaticDegreeTooSmall { .. } => "infeasible",
            Error::MicroBatch { source, .. } => source.category(),
            Error::RankDeficient { .. } => "fit",
            Error::SizeGuard { .. } => "size-guard",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "invalid-input" => 3,
            "infeasible" => 4,
            "fit" => 5,
            "size-guard" => 6,
            "validation" => 7,
            "parse" => 8,
            "io" => 9,
            _ => 1,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
