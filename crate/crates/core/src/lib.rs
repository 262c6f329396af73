//! Factor risk models built from equity return panels.
//!
//! Two builders are provided: a statistical principal-component model and a
//! heterotic model whose loadings are per-cluster first principal components
//! of a nested industry classification. Both reproduce the in-sample
//! variances exactly and come with a factor-form inverse. On top of the
//! models sit a Sharpe-ratio optimizer with homogeneous linear constraints and
//! position bounds, and an intraday backtest comparing regression and
//! optimization portfolios.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod heterotic;
pub mod hierarchy;
pub mod inverse;
pub mod model;
pub mod optimizer;
pub mod panel;
pub mod pc;
pub mod stats;
pub mod synth;

pub use backtest::{run_horserace, BacktestConfig, BacktestReport, PricePanel, Variant};
pub use error::{Error, Result};
pub use hierarchy::IndustryHierarchy;
pub use model::{FactorModel, ModelKind, ModelMeta};
pub use panel::ReturnsPanel;
