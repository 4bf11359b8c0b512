use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("profile solver did not converge at z = {z} (last bracket [{lo}, {hi}])")]
    SolverFailure { z: f64, lo: f64, hi: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("profile table corrupted near z = {z}")]
    TableCorruption { z: f64 },

    #[error("eta1 overshoot {value} at z = {z}")]
    Eta1Overshoot { z: f64, value: f64 },

    #[error("blow-up at t = {t}: max |u| = {max_abs}")]
    BlowUp { t: f64, max_abs: f64 },

    #[error("degenerate director at node {node}: |w| = {norm}")]
    Degenerate { node: usize, norm: f64 },

    #[error("antipodal endpoints: geodesic is not unique")]
    AmbiguousGeodesic,

    #[error("point outside the evaluation domain: {0}")]
    OutOfRange(String),

    #[error("no interface found: |u| never crosses {level}")]
    NoInterface { level: f64 },

    #[error("incompatible right-hand side: integral against kernel = {value}")]
    Incompatible { value: f64 },

    #[error("iteration cap reached after {iterations} iterations (residual {residual})")]
    IterationCap { iterations: usize, residual: f64 },

    #[error("under-resolved at eps = {eps}: lambda_min {coarse} -> {fine} under refinement")]
    UnderResolved { eps: f64, coarse: f64, fine: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
