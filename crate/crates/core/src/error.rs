use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Shapes, grids or dimensions do not match.
    #[error("structural error: {0}")]
    Structural(String),
    /// A computed quantity is NaN or infinite.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Two representations of the same value disagree (e.g. `φ(0) ≠ Φ(0)`).
    #[error("consistency error: {0}")]
    Consistency(String),
    /// An integrand tried to read a noise increment from its own future.
    #[error("adaptedness violation: step {step} read increment {index}")]
    Anticipating { step: usize, index: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A problem violates the standing hypotheses (exponents, history class, ...).
    #[error("inadmissible problem: {0}")]
    Inadmissible(String),
    #[error("picard iteration did not converge after {iterations} iterations (residuals: {residuals:?})")]
    Divergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("problem conditioning: no contraction below {threshold} after {halvings} halvings (last ratio {last_ratio})")]
    Conditioning {
        threshold: f64,
        halvings: usize,
        last_ratio: f64,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}

/// Fails with [`Error::Numeric`] if any value is not finite.
pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite values")))
    }
}
