use thiserror::Error;

use crate::linalg::LinalgError;
use crate::lp::LpError;
use crate::milp::MilpError;
use crate::qp::QpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("class {0} is empty")]
    EmptyClass(usize),
    #[error("no feasible labeling found within the solver limits")]
    NoIncumbent,
    #[error("continuity violated on hyperplane {hyperplane}: {gap:e}")]
    Discontinuous { hyperplane: usize, gap: f64 },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
