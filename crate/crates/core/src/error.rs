use thiserror::Error;

/// Errors raised by the simulation kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("eigendecomposition did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e}, target {target:e})")]
    NumericalFailure {
        sweeps: usize,
        off_norm: f64,
        target: f64,
    },

    #[error("non-finite state at t = {time} s")]
    NumericalOverflow { time: f64 },

    #[error("cannot normalize a zero state")]
    DivisionByZero,

    #[error("time {time} s outside [{start}, {end}] s")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("phase undefined at site {site}: amplitude {amplitude:e} below floor {floor:e}")]
    PhaseUndefined {
        site: usize,
        amplitude: f64,
        floor: f64,
    },

    #[error("time {time} s lies inside the demodulation transient (reliable from {until} s)")]
    TransientRegion { time: f64, until: f64 },

    #[error("degenerate calibration fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. } | Error::NumericalOverflow { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
