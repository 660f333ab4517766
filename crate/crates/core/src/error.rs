use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal residual {off_diagonal:e})")]
    NotConverged { sweeps: usize, off_diagonal: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("degenerate direction: effort {effort:e} is below the floor")]
    DegenerateDirection { effort: f64 },

    #[error("zero vector is not a valid direction")]
    ZeroVector,

    #[error("direction is not admissible (image residual {image_residual:e}, effort {effort:e})")]
    InadmissibleDirection { image_residual: f64, effort: f64 },

    #[error("truncation rank {k} out of range 0..={rank}")]
    RankOutOfRange { k: usize, rank: usize },

    #[error("infeasible start: cost {cost} exceeds budget {kappa}")]
    InfeasibleStart { cost: f64, kappa: f64 },

    #[error("cones share no direction even at full coupling (residual {residual:e} rad)")]
    InfeasibleAtMax { residual: f64 },

    #[error("gamma grid is empty")]
    EmptyGrid,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
