use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("orthonormalisation degenerated at vector {0}")]
    Degenerate(usize),
    #[error("Fock space of {modes} modes exceeds the budget of {max} modes")]
    FockTooLarge { modes: usize, max: usize },
    #[error("subspaces are not nested")]
    NotNested,
    #[error("rank {rank} exceeds the degree cap {cap}")]
    RankCap { rank: usize, cap: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("grid incompatibility: {0}")]
    Grid(String),
    #[error("contraction failed: {0}")]
    NonContraction(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn param(msg: &str) -> Error {
    Error::Parameter(String::from(msg))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
