use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Smoothness outside the standing assumption beta > 1/2.
    #[error("smoothness beta must exceed 1/2, got {0}")]
    BadSmoothness(f64),

    #[error("invalid argument: {0}")]
    Invalid(String),

    /// The posterior support required by the prior exceeds the number of
    /// observed coordinates; the caller must observe more coordinates.
    #[error(
        "posterior support K_eff = {needed} exceeds observed coordinates J_obs = {have}; \
         simulate or import at least {needed} coordinates"
    )]
    Sizing { needed: usize, have: usize },

    #[error("truncation level J = {j} exceeds stored length J_store = {j_store}")]
    TruncationRange { j: usize, j_store: usize },

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// Fourier frequency above the Nyquist cap for the given design size.
    #[error("basis index {j} has frequency {m} above the cap floor((n-1)/2) = {cap} for n = {n}")]
    FrequencyCap { j: usize, m: usize, cap: usize, n: usize },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
