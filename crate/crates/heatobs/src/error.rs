use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite input sample at index {0}")]
    NonFiniteInput(usize),
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("derivative order {order} exceeds maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("window scale {l} is finer than two cells (h = {h})")]
    ScaleTooFine { l: f64, h: f64 },
    #[error("window scale {l} exceeds the torus side {side}")]
    ScaleTooCoarse { l: f64, side: f64 },
    #[error("invalid time {0}")]
    InvalidTime(f64),
    #[error("band limit {n} is not below the grid's maximum frequency {max}")]
    BandLimitTooLarge { n: f64, max: f64 },
    #[error("input function is identically zero")]
    ZeroInput,
    #[error("torus side {0} is not an integer, unit cubes do not tile")]
    CubesDontTile(f64),
    #[error("requested region exceeds the domain: {0}")]
    OutOfDomain(String),
    #[error("observation set is empty")]
    EmptyObservationSet,
    #[error("smallest eigenvalue {lambda_min:e} is below the resolvable floor")]
    ConstantEffectivelyInfinite { lambda_min: f64 },
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("quadrature needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("observation integral vanishes")]
    ObservationVanishes,
    #[error("lambda {0} outside (1/sqrt 2, 1)")]
    InvalidLambda(f64),
    #[error("thickness {0} outside (0, 1]")]
    InvalidThickness(f64),
    #[error("theta {0} outside (0, 1)")]
    InvalidTheta(f64),
    #[error("invalid radii: {0}")]
    InvalidRadii(String),
    #[error("bound does not apply: {0}")]
    BoundNotApplicable(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
