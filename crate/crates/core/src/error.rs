use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resonance violated: omega_L + omega_M = {sum} but omega_R = {omega_r}")]
    ResonanceViolation { sum: f64, omega_r: f64 },

    #[error("ordering violated: {0}")]
    OrderingViolation(String),

    #[error("degenerate qubits: {first} and {second} frequencies coincide ({value})")]
    DegenerateQubits {
        first: &'static str,
        second: &'static str,
        value: f64,
    },

    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),

    #[error("invalid bath {terminal}: {reason}")]
    InvalidBath { terminal: char, reason: String },

    #[error("channel {channel}: level spacing {spacing} does not match Bohr frequency {frequency}")]
    ChannelInconsistency {
        channel: String,
        spacing: f64,
        frequency: f64,
    },

    #[error("eigen-decomposition did not converge")]
    ConvergenceFailure,

    #[error("steady state is not unique ({closed_classes} closed classes in the transition graph)")]
    SingularSteadyState { closed_classes: usize },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("first law violated: sum of currents {sum:e} exceeds tolerance at scale {scale:e}")]
    FirstLawViolation { sum: f64, scale: f64 },

    #[error("second law violated: entropy production {entropy_production:e} < 0")]
    SecondLawViolation { entropy_production: f64 },

    #[error("control-current change {delta_q_m:e} is below the floor; amplification undefined")]
    DegenerateDenominator { delta_q_m: f64 },

    #[error("forward and backward currents both vanish; rectification undefined")]
    BothCurrentsZero,

    #[error("relaxation did not converge by t = {time:e} (residual {residual:e})")]
    NoConvergence { time: f64, residual: f64 },

    #[error("invalid sweep: {0}")]
    InvalidSpec(String),

    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} sweep points failed")]
    PointFailure { failed: usize, total: usize },
}

impl Error {
    /// True for errors caused by user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ResonanceViolation { .. }
                | Error::OrderingViolation(_)
                | Error::DegenerateQubits { .. }
                | Error::NonPositiveFrequency(_)
                | Error::InvalidBath { .. }
                | Error::InvalidSpec(_)
                | Error::Parse { .. }
                | Error::Io { .. }
        )
    }

    /// Short snake_case name used in sweep flags and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ResonanceViolation { .. } => "resonance_violation",
            Error::OrderingViolation(_) => "ordering_violation",
            Error::DegenerateQubits { .. } => "degenerate_qubits",
            Error::NonPositiveFrequency(_) => "non_positive_frequency",
            Error::InvalidBath { .. } => "invalid_bath",
            Error::ChannelInconsistency { .. } => "channel_inconsistency",
            Error::ConvergenceFailure => "convergence_failure",
            Error::SingularSteadyState { .. } => "singular_steady_state",
            Error::NumericalInstability(_) => "numerical_instability",
            Error::FirstLawViolation { .. } => "first_law_violation",
            Error::SecondLawViolation { .. } => "second_law_violation",
            Error::DegenerateDenominator { .. } => "degenerate_denominator",
            Error::BothCurrentsZero => "both_currents_zero",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Parse { .. } => "parse_error",
            Error::Io { .. } => "io_error",
            Error::PointFailure { .. } => "point_failure",
        }
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
