use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Wavelength outside the validity window of a dispersion model.
    #[error("{species}: wavelength {lambda_nm:.3} nm outside valid range [{min_nm}, {max_nm}] nm")]
    Range {
        species: String,
        lambda_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    /// Evaluation point falls inside the exclusion zone around a strut resonance.
    #[error("wavelength {lambda_nm:.3} nm lies in the divergence zone of resonance lambda_{order} = {resonance_nm:.3} nm")]
    Divergence {
        lambda_nm: f64,
        resonance_nm: f64,
        order: usize,
    },

    /// A finite-difference stencil straddles a band edge even after step halving.
    #[error("differentiation stencil around {lambda_nm:.3} nm crosses a band edge (last relative step {rel_step:e})")]
    Stencil { lambda_nm: f64, rel_step: f64 },

    #[error("{what} did not converge after {iterations} iterations (last value {last:e}, last change {delta:e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last: f64,
        delta: f64,
    },

    /// Input grid is all zeros or otherwise cannot be decomposed.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid {key}: {reason}")]
    Validation { key: String, reason: String },

    #[error("unknown species '{0}' in gas data")]
    UnknownSpecies(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::Stencil { .. }
                | Error::NonConvergence { .. }
                | Error::Degenerate(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
