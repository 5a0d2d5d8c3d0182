use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("s = {s} is outside the evaluable range [0, {max}]")]
    Range { s: f64, max: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("condition checker: {0}")]
    Checker(String),
    #[error("negative set has more than {cap} intervals below s = {s_scan_max}")]
    IntervalCap { cap: usize, s_scan_max: f64 },
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("field: {0}")]
    Field(String),
    #[error("K(u) = 0, so the functional is undefined")]
    ZeroMass,
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("descent collapsed towards u = 0 (E_sigma -> infinity as K -> 0)")]
    Collapse,
    #[error("no ground state: {0}")]
    NoGroundState(String),
    #[error("L-infinity norm {linf} outside the window ({lo}, {hi})")]
    Window { linf: f64, lo: f64, hi: f64 },
    #[error("basin exit: {0}")]
    BasinExit(String),
    #[error("not stationary (relative residual {0:.3e}), certificate not applicable")]
    NotStationary(f64),
    #[error("time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite field value at step {step}")]
    NonFinite { step: usize },
    #[error("threshold estimate: {0}")]
    Threshold(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
