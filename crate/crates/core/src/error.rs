use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "returns panel needs at least 2 tickers and 2 observations, got {tickers} x {observations}"
    )]
    PanelTooSmall { tickers: usize, observations: usize },

    #[error("missing or non-finite return for ticker `{ticker}` at date `{date}`")]
    MissingValue { ticker: String, date: String },

    #[error("ticker `{0}` has zero sample variance")]
    ZeroVariance(String),

    #[error("tickers `{0}` and `{1}` are perfectly correlated")]
    DegenerateRow(String, String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("at least 3 observations are needed to fix the number of factors, got {0}")]
    TooFewObservations(usize),

    #[error("number of factors {k} outside the admissible range 1..={max}")]
    InvalidFactorCount { k: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("hierarchy does not match the panel: {0}")]
    HierarchyMismatch(String),

    #[error("invalid industry hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("cluster {cluster} at level {level} has no members")]
    EmptyCluster { level: usize, cluster: usize },

    #[error("top-level factor covariance is numerically singular (min eigenvalue {0:.3e}); enable the market factor")]
    SingularTopLevel(f64),

    #[error("specific risk of `{0}` is zero; apply the singleton fix before inverting")]
    ZeroSpecificRisk(String),

    #[error("factor covariance matrix is singular")]
    SingularFactorCovariance,

    #[error("constraint loadings are rank deficient")]
    RankDeficientLoadings,

    #[error("alpha has no component outside the constraint space")]
    ZeroAlpha,

    #[error("bounds are infeasible: {0}")]
    InfeasibleBounds(String),

    #[error("optimizer did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("missing price for ticker `{ticker}` on `{date}`")]
    MissingPrice { ticker: String, date: String },

    #[error("invalid price panel: {0}")]
    InvalidPrices(String),

    #[error("need {needed} days of history before day {day}, have {available}")]
    InsufficientHistory {
        day: usize,
        needed: usize,
        available: usize,
    },

    #[error("no shares were traded")]
    ZeroTradedShares,

    #[error("daily P&L has zero variance")]
    ZeroVariancePnl,

    #[error("series is empty")]
    EmptySeries,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("backtest failed on `{date}`: {source}")]
    DateFailure {
        date: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by malformed or unreadable inputs, as opposed
    /// to numerical failures on well-formed inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::InvalidHierarchy(_)
                | Error::InvalidPrices(_)
                | Error::MissingPrice { .. }
                | Error::MissingValue { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
        )
    }
}
