use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },

    #[error("exact mode refuses n = {n}: exceeds the configured cap of {cap} qubits")]
    ExactCap { n: usize, cap: usize },

    #[error("threshold unreachable: beta = {beta} must be below (p - alpha)/p = {limit}")]
    Infeasible { beta: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Param {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_probability(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(param(name, format!("{v} is not in [0, 1]")))
    }
}
