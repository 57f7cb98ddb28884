//! The adaptive Cauchy combination test over the default k-grid, and the
//! generic p-value combiner it is built from.
//!
//! The combiner maps each p-value through `tan((1/2 - p) π)`, averages with
//! the given weights, and reads the combined p-value off the standard Cauchy
//! CDF. The adaptive test combines the empirically calibrated `T_5` with the
//! normally calibrated `T_{ceil(p/2^i)}` members at equal weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{wild_bootstrap, BootstrapDistribution};
use crate::error::{Error, Result};
use crate::numstat::{cauchy_cdf, Probability, RngStream};
use crate::panel::{KGrid, SampleMatrix, TStatPanel};

/// Named outcome of one test on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Probability,
    pub alpha: f64,
    pub reject: bool,
    /// Calibration metadata: replicate count, stream, grid, method.
    pub meta: BTreeMap<String, String>,
}

impl TestReport {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        p_value: Probability,
        alpha: f64,
    ) -> Self {
        Self {
            name: name.into(),
            statistic,
            p_value,
            alpha,
            reject: p_value.get() <= alpha,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub(crate) fn with_calibration(self, dist: &BootstrapDistribution) -> Self {
        let stream = dist.stream();
        self.with_meta("B", dist.b())
            .with_meta("seed", stream.seed())
            .with_meta("stream_id", stream.stream_id())
    }
}

/// Cauchy combination of p-values: the statistic `Σ w_j tan((1/2 - p_j) π)`
/// and its p-value under the standard Cauchy reference.
///
/// Every p-value must lie strictly inside (0, 1); callers clamp empirical
/// p-values to `[1/(B+1), 1 - 1/(B+1)]` first.
pub fn cauchy_combine(pvals: &[f64], weights: &[f64]) -> Result<(f64, Probability)> {
    if pvals.len() != weights.len() {
        return Err(Error::WeightMismatch {
            pvals: pvals.len(),
            weights: weights.len(),
        });
    }
    if pvals.is_empty() {
        return Err(Error::Domain("nothing to combine".into()));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Domain("negative combination weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "combination weights sum to {total}, expected 1"
        )));
    }
    let mut statistic = 0.0;
    for (&p, &w) in pvals.iter().zip(weights) {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::BoundaryPValue(p));
        }
        statistic += w * ((0.5 - p) * std::f64::consts::PI).tan();
    }
    let p = Probability::from_clamped(1.0 - cauchy_cdf(statistic));
    Ok((statistic, p))
}

/// Clamp an empirical-scale p-value away from {0, 1} before `tan`.
pub(crate) fn clamp_for_combination(p: f64, b: usize) -> f64 {
    let eps = 1.0 / (b as f64 + 1.0);
    p.clamp(eps, 1.0 - eps)
}

/// The adaptive test: run one wild-bootstrap pass over the default grid and
/// Cauchy-combine the member p-values at equal weights.
pub fn adaptive_l_test(
    x: &SampleMatrix,
    b: usize,
    alpha: f64,
    stream: RngStream,
) -> Result<TestReport> {
    let grid = KGrid::default_for_dimension(x.p())?;
    let dist = wild_bootstrap(x, &grid, b, stream)?;
    let panel = x.t_statistics();
    adaptive_from_distribution(&panel, &dist, &grid, alpha)
}

/// Adaptive test on an existing bootstrap pass whose grid contains every
/// member; this is how a shared pass serves several tests at once. Members
/// below [`crate::suite::DIVERGING_MIN_K`] use the empirical calibration,
/// the rest the bootstrap-normal one; on the default grid that reproduces
/// the `T_5`-empirical / diverging-normal split exactly.
pub fn adaptive_from_distribution(
    panel: &TStatPanel,
    dist: &BootstrapDistribution,
    members: &KGrid,
    alpha: f64,
) -> Result<TestReport> {
    let b = dist.b();
    let mut pvals = Vec::with_capacity(members.len());
    for &k in members.ks() {
        let observed = panel.l_statistic(k)?;
        let p = if k < crate::suite::DIVERGING_MIN_K {
            dist.p_value_fixed_k(observed, k)?
        } else {
            dist.p_value_diverging_k(observed, k)?
        };
        pvals.push(clamp_for_combination(p.get(), b));
    }
    let weights = vec![1.0 / members.len() as f64; members.len()];
    let (statistic, p) = cauchy_combine(&pvals, &weights)?;
    Ok(TestReport::new("TC", statistic, p, alpha)
        .with_calibration(dist)
        .with_meta("grid", format!("{:?}", members.ks()))
        .with_meta("method", "cauchy(empirical@fixed, normal@diverging)"))
}
