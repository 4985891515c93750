use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A document failed validation. `path` locates the offending element,
    /// e.g. `links[3].mass` or `keyframes[2].t`.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("target unreachable: {excess:.6} m beyond the reachable workspace")]
    Unreachable { excess: f64 },

    #[error("ray outside the rated field of view ({angle_deg:.2} deg from the optical axis)")]
    OutOfView { angle_deg: f64 },

    #[error("ray does not intersect the ground plane")]
    NoIntersection,

    #[error("undistortion failed at pixel ({u:.3}, {v:.3}): residual {residual:e}")]
    Numerical { u: f64, v: f64, residual: f64 },

    #[error("objective returned a non-finite value at {vertex:?}")]
    Optimization { vertex: Vec<f64> },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("controller failed at tick {tick}: {message}")]
    Controller { tick: usize, message: String },

    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
