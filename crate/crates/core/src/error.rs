use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("Hilbert space of {n_particles} bosons on {n_modes} modes has {dim} configurations, above the cap of {cap}")]
    DimensionCap {
        n_particles: usize,
        n_modes: usize,
        dim: u128,
        cap: usize,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("eigensolver did not converge: {what} (residual {residual:.3e})")]
    NoConvergence { what: String, residual: f64 },

    #[error("gauge fixing failed for band {band}: {reason}")]
    Gauge { band: usize, reason: String },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("normalization drift {drift:.3e} at t = {t:.6e} exceeds {limit:.1e}")]
    NormDrift { t: f64, drift: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
