use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not symplectic (max deviation {0:.3e})")]
    NotSymplectic(f64),
    #[error("unphysical state: {0}")]
    Unphysical(String),
    #[error("state is not pure (largest symplectic eigenvalue {0})")]
    NotPure(f64),
    #[error("transmissivity {0} outside [0, 1]")]
    Transmissivity(f64),
    #[error("cutoff exhausted at {cutoff} photons with tail {tail:.3e}")]
    CutoffExhausted { cutoff: usize, tail: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("no sign change found: {0}")]
    NoBracket(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("optimizer did not converge within {0} evaluations")]
    BudgetExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
