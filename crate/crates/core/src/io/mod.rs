//! File formats and run configuration for the `msl` command-line tool.
//!
//! Every tabular artifact is CSV; floats are written in shortest
//! round-trip form so that re-reading a file reproduces the values exactly.

mod artifacts;
mod config;
mod returns;

pub use artifacts::{
    parse_theta, read_chain, read_theta, theta_from_pairs, write_backtest, write_chain, write_theta, write_truth, ChainTable,
};
pub use config::{
    BacktestSection, DataSection, FilterSection, InitMode, ModelSection, PmmhSection, RunConfig, SimulateSection,
    SummarizeSection,
};
pub use returns::{ReturnsSeries, Units};
