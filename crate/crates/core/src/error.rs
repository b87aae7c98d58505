use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Rotation axis that is not unit length.
    NonUnitAxis { norm: f64 },
    /// A vector that must be nonzero was zero (or not finite).
    ZeroVector,
    /// Field evaluated inside or on the edge of a conductor.
    OnConductor { x: f64, z: f64 },
    /// A channel field vanished where a direction was needed.
    ZeroField,
    AmplitudeOutOfBounds { value: f64, lo: f64, hi: f64 },
    EmptyEnsemble,
    InvalidWeights { sum: f64 },
    InvalidState(&'static str),
    EmptyPulse,
    UnknownGroup(String),
    ZeroMask,
    InvalidGeometry(&'static str),
    InvalidJob(String),
    NonFinite(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonUnitAxis { norm } => write!(f, "rotation axis must be unit length (norm {norm})"),
            Error::ZeroVector => write!(f, "zero or non-finite vector"),
            Error::OnConductor { x, z } => {
                write!(f, "point ({x}, {z}) µm lies on or inside a conductor")
            }
            Error::ZeroField => write!(f, "channel field is zero at this point"),
            Error::AmplitudeOutOfBounds { value, lo, hi } => {
                write!(f, "control value {value} outside [{lo}, {hi}]")
            }
            Error::EmptyEnsemble => write!(f, "ensemble has no members"),
            Error::InvalidWeights { sum } => write!(f, "ensemble weights must be positive (sum {sum})"),
            Error::InvalidState(why) => write!(f, "invalid initial state: {why}"),
            Error::EmptyPulse => write!(f, "pulse has no steps"),
            Error::UnknownGroup(g) => write!(f, "unknown group `{g}`"),
            Error::ZeroMask => write!(f, "fidelity mask has zero trace"),
            Error::InvalidGeometry(why) => write!(f, "invalid geometry: {why}"),
            Error::InvalidJob(why) => write!(f, "invalid optimization job: {why}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}
