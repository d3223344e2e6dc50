use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    NonFinite {
        name: &'static str,
    },
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A capture with no samples or no threshold sequences.
    EmptyCapture,
    /// Envelope checks need traces that carried a reference vector.
    MissingReference,
    /// Capture metadata disagrees with the decoding parameters.
    ParameterMismatch {
        name: &'static str,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::NonFinite { name } => write!(f, "{name} must be finite"),
            Error::TooShort { what, needed, got } => {
                write!(f, "{what} too short: need at least {needed}, got {got}")
            }
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what} dimension mismatch: expected {expected}, got {got}"),
            Error::EmptyCapture => f.write_str("capture has no constraints"),
            Error::MissingReference => {
                f.write_str("trace was recorded without a reference vector")
            }
            Error::ParameterMismatch { name } => {
                write!(f, "capture {name} does not match decoding parameters")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite { name });
    }
    if v <= 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be positive",
        });
    }
    Ok(v)
}
