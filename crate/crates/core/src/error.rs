use std::fmt;

use thiserror::Error;

/// A single failed check found while validating a system description.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Out-edge probabilities at a vertex do not sum identically to one.
    Normalization { vertex: usize, detail: String },
    /// An edge map sends a point of its source region outside the target region.
    RegionEscape { edge: String, point: Vec<f64>, image: Vec<f64> },
    EmptySupport,
    /// A probability function is not strictly positive on its source region.
    NonPositiveProbability { edge: String, point: Vec<f64>, value: f64 },
    /// Anything structural: dimensions, indices, duplicate ids, overlapping regions.
    Malformed(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Normalization { vertex, detail } => {
                write!(f, "normalization at vertex {vertex}: {detail}")
            }
            Violation::RegionEscape { edge, point, image } => {
                write!(f, "edge {edge} maps {point:?} to {image:?}, outside its target region")
            }
            Violation::EmptySupport => write!(f, "support set is empty"),
            Violation::NonPositiveProbability { edge, point, value } => {
                write!(f, "edge {edge} has probability {value} at {point:?}")
            }
            Violation::Malformed(msg) => f.write_str(msg),
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("contraction rate {rate} is not below 1")]
    NoContraction { rate: f64 },

    #[error("Dini sum did not reach tail tolerance {tail_tol} within {terms} terms")]
    DiniDivergence { tail_tol: f64, terms: usize },

    #[error("operation requires uniform contraction, system is in average-contraction mode")]
    NotUniformlyContractive,

    #[error("inadmissible word: {0}")]
    InadmissibleWord(String),

    #[error("unknown edge id {0:?}")]
    UnknownEdge(String),

    #[error("enumerating {count} words exceeds the cap of {cap}")]
    DepthOverflow { count: u128, cap: usize },

    #[error("exact mode needs constant probabilities on every edge")]
    ExactModeUnavailable,

    #[error("vertex chain has no unique stationary distribution")]
    NoUniqueStationary,

    #[error("cylinder {word} has M = {m} but zero reference measure; the support set is too small")]
    AbsoluteContinuityViolation { word: String, m: f64 },

    #[error("Cauchy check failed at depth {j}: distance {distance} exceeds {bound}")]
    CauchyViolation { j: i64, distance: f64, bound: f64 },

    #[error("invalid empirical measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid cylinder set: {0}")]
    InvalidCylinderSet(String),

    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
