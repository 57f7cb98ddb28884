//! High-dimensional one-sample location testing with L-statistics.
//!
//! The test statistic family is `T_k`, the sum of the `k` largest squared
//! per-variable t-statistics. Small `k` targets sparse alternatives, `k`
//! proportional to the dimension targets dense ones, and the adaptive test
//! `T_C` combines a grid of both through a Cauchy combination. Calibration is
//! by Rademacher wild bootstrap, with closed-form asymptotic laws available
//! for validation, plus a simulation engine and a returns-data pipeline.

pub mod adaptive;
pub mod bootstrap;
pub mod competitors;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod limits;
pub mod numstat;
pub mod panel;
pub mod realdata;
pub mod simgen;
pub mod suite;

pub use adaptive::{adaptive_l_test, cauchy_combine, TestReport};
pub use bootstrap::{wild_bootstrap, wild_bootstrap_with_power_sums, BootstrapDistribution};
pub use error::{Error, Result};
pub use limits::{GammaConstants, GumbelParams};
pub use numstat::{Probability, RngStream};
pub use panel::{ColumnMoments, KGrid, SampleMatrix, TStatPanel};
pub use suite::{run_tests, TestId};
