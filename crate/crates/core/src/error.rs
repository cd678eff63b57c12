use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidGammaOrder(usize),
    DimensionMismatch { expected: usize, found: usize },
    NotPositiveSemidefinite(f64),
    NotARotation,
    AngleNearPi(f64),
    UnknownPoint(u32),
    DuplicatePoint(u32),
    IllConditioned(f64),
    GateRejected(f64),
    BadImuInterval(f64),
    WrongConvention,
    Unreachable { leg: usize, residual: f64 },
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGammaOrder(m) => write!(f, "gamma order {m} not in 0..=3"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveSemidefinite(e) => {
                write!(f, "covariance not positive semidefinite (min eigenvalue {e:e})")
            }
            Error::NotARotation => write!(f, "matrix is not a rotation"),
            Error::AngleNearPi(a) => write!(f, "rotation angle {a} too close to pi"),
            Error::UnknownPoint(id) => write!(f, "no tracked point with id {id}"),
            Error::DuplicatePoint(id) => write!(f, "point {id} is already tracked"),
            Error::IllConditioned(c) => write!(f, "innovation covariance ill-conditioned ({c:e})"),
            Error::GateRejected(d) => write!(f, "measurement gated out (mahalanobis^2 = {d})"),
            Error::BadImuInterval(dt) => write!(f, "imu interval {dt} s outside (0, 0.1]"),
            Error::WrongConvention => write!(f, "operation not valid for this frame convention"),
            Error::Unreachable { leg, residual } => {
                write!(f, "foot target out of reach for leg {leg} (residual {residual:e})")
            }
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl std::error::Error for Error {}
