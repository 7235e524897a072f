use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// ⟨a ξ, ξ⟩ ≤ 0 at a sampled point.
    #[error("ellipticity violated at (t={t}, x={x:?}, v={v:?}): <a xi, xi> = {quadratic_form}")]
    Ellipticity { t: f64, x: Vec<f64>, v: Vec<f64>, quadratic_form: f64 },

    #[error("chain construction failed: {0}")]
    Construction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
