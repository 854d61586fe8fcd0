use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("operator `{operator}` returned a non-finite value at {tuple}")]
    OperatorEvaluation { operator: String, tuple: String },

    #[error("matrix pair violates the 3α block inequality (left margin {left:.3e}, right margin {right:.3e})")]
    InvalidMatrixPair { left: f64, right: f64 },

    #[error("terminal envelope needs at least two time slices, got {0}")]
    SingleSlice(usize),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("point off lattice: {0}")]
    OffLattice(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("matrix pair sampling exhausted after {0} rejections")]
    SamplingExhausted(usize),

    #[error("not an argmax: neighbour {neighbour} exceeds the given point by {excess:.3e}")]
    NotAnArgmax { neighbour: String, excess: f64 },

    #[error("operator properness constant must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("CFL violated: dt = {dt:.3e} exceeds the stable bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("scheme update is not monotone: perturbing {neighbour} at cell {cell} lowers the update by {drop:.3e}")]
    MonotonicityViolation { cell: usize, neighbour: String, drop: f64 },

    #[error("unknown oracle `{0}`")]
    UnknownOracle(String),

    #[error("operator `{operator}` exceeds its declared bound: |F| = {value:.3e} > Φ({radius:.3e}) = {bound:.3e}")]
    UnboundedF {
        operator: String,
        value: f64,
        radius: f64,
        bound: f64,
    },

    #[error(
        "solutions are not Cauchy: step {step} solution gap {solution_gap:.3e} exceeds initial gap {initial_gap:.3e}"
    )]
    NonCauchy {
        step: usize,
        solution_gap: f64,
        initial_gap: f64,
    },

    #[error("modulus curve is empty")]
    EmptyModulus,

    #[error("barrier parameters violate their invariants: {0}")]
    InvariantViolation(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
