use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normal is not unit length (|m| = {norm})")]
    NonUnitNormal { norm: f64 },

    #[error("burgers pair is near-parallel (angle {angle:.3e} rad)")]
    NearParallelBurgers { angle: f64 },

    #[error("slip is not in the span of the burgers pair (residual {residual:.3e})")]
    NotInPairSpan { residual: f64 },

    #[error("beta not representable as a sum of in-plane slips (relative residual {residual:.3e})")]
    NotRepresentable { residual: f64 },

    #[error("decomposition requires at most 4 slip planes, got {planes}")]
    TooManyPlanes { planes: usize },

    #[error("slip-plane normals {indices:?} are linearly dependent")]
    DependentNormals { indices: Vec<usize> },

    #[error("slip field violates the single-plane condition (worst node {node}, product {product:.3e})")]
    Infeasible { node: usize, product: f64 },

    #[error("grid cannot resolve the requested structure: {0}")]
    Resolution(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("linear solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("lamination weight {value} outside [{min}, {max}]")]
    WeightOutOfRange { value: f64, min: f64, max: f64 },

    #[error("burgers pairs are required for laminated terms")]
    MissingPairs,

    #[error("degenerate normals: m1 and m2 are parallel")]
    DegenerateNormals,

    #[error("invalid box cover: {0}")]
    InvalidCover(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
