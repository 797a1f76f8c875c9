use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a domain invariant. `field` names the offending input.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("length mismatch for `{what}`: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// `z3 + z4 == 0`: the stratum estimator is undefined.
    #[error("{}", zero_respondents_msg(*.stratum))]
    ZeroRespondents { stratum: Option<usize> },

    /// Response cells carry no mass, so the delta-method gradient is undefined.
    #[error("degenerate stratum: response cells have zero probability")]
    DegenerateStratum,

    #[error("all {replications} replicates were discarded (zero respondents)")]
    AllDiscarded { replications: u64 },

    #[error("empty grid: `{0}` has no values")]
    EmptyGrid(&'static str),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn zero_respondents_msg(stratum: Option<usize>) -> String {
    match stratum {
        Some(h) => format!("stratum {h} has zero respondents"),
        None => "stratum has zero respondents".to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, found })
    }
}
