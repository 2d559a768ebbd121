use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate tetrahedron {0}")]
    DegenerateTet(usize),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("SVD did not converge for block {0}")]
    SvdFailure(String),

    #[error("matrix is ill-conditioned (estimate {condition:.3e}); try a different kappa or mesh size")]
    IllConditioned { condition: f64 },

    #[error("quadrature degree {0} not supported")]
    Quadrature(usize),

    #[error("input not curl-free or region not simply connected (relative residual {0:.3e})")]
    NotCurlFree(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
