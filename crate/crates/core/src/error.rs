use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single failed check found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Where the problem is, e.g. `node 2` or `edge 0->1`.
    pub location: String,
    pub check: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.check)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scenario has {} violation(s):\n{}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("assumption violated at node {node}, t = {t}: {reason}")]
    Assumption { node: usize, t: f64, reason: String },

    #[error(
        "unbounded/indefinite Riccati solution{} at t = {t}: eigenvalues in [{min_eig:e}, {max_eig:e}]",
        node.map(|n| format!(" at node {n}")).unwrap_or_default()
    )]
    Unbounded {
        node: Option<usize>,
        t: f64,
        min_eig: f64,
        max_eig: f64,
    },

    #[error("simulation diverged at t = {t}: state norm {norm:e}")]
    Divergence { t: f64, norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by the scenario description rather than by the
    /// numerical outcome of a design or simulation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Dimension(_)
                | Error::Validation(_)
                | Error::Syntax { .. }
                | Error::Schema { .. }
                | Error::Io { .. }
                | Error::Domain(_)
        )
    }
}
