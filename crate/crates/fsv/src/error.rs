//! Error type shared by all sampler components.

use thiserror::Error;

/// Errors produced by model construction, sampling steps, and diagnostics.
#[derive(Debug, Error)]
pub enum FsvError {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// GIG parameters outside the validity region.
    #[error("invalid GIG parameters (p={p}, a={a}, b={b}){context}")]
    GigDomain {
        p: f64,
        a: f64,
        b: f64,
        /// Extra context such as the loadings column that produced them.
        context: String,
    },

    /// The rejection sampler exceeded its iteration cap.
    #[error("GIG rejection sampler did not terminate within {cap} iterations (p={p}, a={a}, b={b})")]
    GigLiveness { p: f64, a: f64, b: f64, cap: u64 },

    /// A latent-state precision matrix lost positive definiteness.
    #[error("non-positive-definite precision while sampling h (series state index {index}): {details}")]
    PrecisionNotPd { index: usize, details: String },

    /// A conjugate-update normal-equations matrix could not be factorized.
    #[error("singular posterior precision in {step}: {details}")]
    SingularPrecision { step: String, details: String },

    /// A Gibbs sub-step failed; wraps the underlying error with location.
    #[error("sampler step {step} (unit {unit}, iteration {iteration}): {source}")]
    Step {
        step: &'static str,
        unit: usize,
        iteration: u64,
        #[source]
        source: Box<FsvError>,
    },

    /// Unknown interweaving strategy name.
    #[error("unknown interweaving strategy {name:?}; available: {available}")]
    UnknownStrategy { name: String, available: String },

    /// A trace with zero variance was passed to a correlation diagnostic.
    #[error("constant trace: autocorrelation diagnostics are undefined")]
    ConstantTrace,

    /// A diagnostic was asked to operate on an empty chain.
    #[error("empty chain: {0}")]
    EmptyChain(String),

    /// Sign identification failed for a loadings column.
    #[error("cannot sign-identify loadings column {column}: {details}")]
    SignIdentification { column: usize, details: String },
}

impl FsvError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FsvError::InvalidInput(msg.into())
    }

    /// Wrap an error with Gibbs step context.
    pub(crate) fn in_step(self, step: &'static str, unit: usize, iteration: u64) -> Self {
        FsvError::Step {
            step,
            unit,
            iteration,
            source: Box::new(self),
        }
    }
}
