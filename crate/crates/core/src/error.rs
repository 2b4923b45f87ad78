use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mass must be non-negative, got {0}")]
    NegativeMass(f64),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid hardware parameters: {0}")]
    InvalidHardware(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("unknown link or parameter group `{0}`")]
    UnknownLink(String),
    #[error("{name} = {value} is outside its bounds [{lo}, {hi}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("constraint matrix is rank deficient; offending contact rows: {rows:?}")]
    SingularConstraint { rows: Vec<String> },
    #[error("foot `{frame}` is unloaded (f_z = {fz:.6} N)")]
    UnloadedFoot { frame: String, fz: f64 },
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
