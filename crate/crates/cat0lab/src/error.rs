use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("edge ({0}, {1}) has non-positive or non-finite weight {2}")]
    BadWeight(usize, usize, f64),
    #[error("edge endpoint {0} out of range (vertex count {1})")]
    BadVertex(usize, usize),
    #[error("graph is disconnected ({0} of {1} vertices reachable from 0)")]
    Disconnected(usize, usize),
    #[error("boundary is not a simple cycle in the edge set: {0}")]
    BadBoundary(String),
    #[error("polyline vertices {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("missing coordinates: {0}")]
    MissingCoords(String),
    #[error("missing distance oracle: {0}")]
    MissingOracle(String),
    #[error("invalid model spec: {0}")]
    BadModelSpec(String),
    #[error("mesh exceeds vertex budget: {0} > {1}")]
    VertexBudget(usize, usize),
    #[error("field rule error: {0}")]
    BadField(String),
    #[error("conformal factor must be positive (vertex {0} has value {1})")]
    NonPositiveFactor(usize, f64),
    #[error("exponent out of range at vertex {0}: |{1}| > 700")]
    ExpOverflow(usize, f64),
    #[error("space is not a flat triangulated mesh: {0}")]
    NotFlatMesh(String),
    #[error("triangle inequality violated beyond tolerance: sides {0}, {1}, {2}")]
    CorruptMetric(f64, f64, f64),
    #[error("target space error: {0}")]
    BadTarget(String),
    #[error("solver did not converge within {0} sweeps (last displacement {1:.3e})")]
    NoConvergence(usize, f64),
    #[error("boundary curve error: {0}")]
    BadCurve(String),
    #[error("majorization boundary mismatch: {0}")]
    BoundaryMismatch(String),
    #[error("pipeline stage {0} failed hard: {1}")]
    PipelineStage(&'static str, String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
