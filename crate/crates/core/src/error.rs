use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("partition breakpoint t={time} (level {level}) is not on the path grid")]
    GridMismatch { level: u32, time: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {time} exceeds horizon {horizon}")]
    HorizonExceeded { time: f64, horizon: f64 },

    #[error("{remaining} remaining fixings exceed the quadrature cap of {cap}")]
    DimensionCap { remaining: usize, cap: usize },

    #[error("invalid grid configuration: {0}")]
    Grid(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("argument {xi} lies outside the analyticity strip ({lo}, {hi}) of the characteristic exponent")]
    StripViolation { xi: String, lo: f64, hi: f64 },

    #[error("expansion order {order} unavailable: {reason}")]
    OrderUnavailable { order: usize, reason: String },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("quadratic variation has not converged; hedging error formula is inconclusive")]
    Inconclusive,

    #[error("simulation budget exceeded: {requested} path-steps requested, cap is {cap}")]
    ResourceCap { requested: u128, cap: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
