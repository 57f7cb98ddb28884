//! Baseline tests used in the comparisons: MAX (`T_1`), SUM (`T_p`), COM
//! (Cauchy combination of the two), and adaQ (Cauchy combination of the
//! power sums `L(2), L(4), L(6)` with the max statistic for `r = ∞`).
//!
//! All of them are calibrated from the shared wild-bootstrap pass rather
//! than each source's original analytic calibration, so every test sees the
//! same resampled null.

use crate::adaptive::{cauchy_combine, clamp_for_combination, TestReport};
use crate::bootstrap::{wild_bootstrap_with_power_sums, BootstrapDistribution};
use crate::error::Result;
use crate::numstat::RngStream;
use crate::panel::{KGrid, SampleMatrix};

/// A power-sum statistic `L(r) = Σ_j mean_j^r` (finite even `r`) or the
/// max squared t-statistic for the `r = ∞` member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerStatistic {
    Finite { r: u32, value: f64 },
    Infinity { value: f64 },
}

impl PowerStatistic {
    pub fn value(&self) -> f64 {
        match *self {
            PowerStatistic::Finite { value, .. } | PowerStatistic::Infinity { value } => value,
        }
    }
}

/// Observed power sum `L(r)` of the raw column means.
pub fn power_sum(x: &SampleMatrix, r: u32) -> PowerStatistic {
    let value = x
        .column_moments()
        .means
        .iter()
        .map(|&m| m.powi(r as i32))
        .sum();
    PowerStatistic::Finite { r, value }
}

/// MAX test: `T_1` with the empirical bootstrap rule.
pub fn max_test(
    x: &SampleMatrix,
    dist: &BootstrapDistribution,
    alpha: f64,
) -> Result<TestReport> {
    let panel = x.t_statistics();
    let observed = panel.max_sq();
    let p = dist.p_value_fixed_k(observed, 1)?;
    Ok(TestReport::new("MAX", observed, p, alpha)
        .with_calibration(dist)
        .with_meta("k", 1)
        .with_meta("method", "empirical"))
}

/// SUM test: `T_p` with the bootstrap-normal rule.
pub fn sum_test(
    x: &SampleMatrix,
    dist: &BootstrapDistribution,
    alpha: f64,
) -> Result<TestReport> {
    let panel = x.t_statistics();
    let observed = panel.sum_sq();
    let p = dist.p_value_diverging_k(observed, x.p())?;
    Ok(TestReport::new("SUM", observed, p, alpha)
        .with_calibration(dist)
        .with_meta("k", x.p())
        .with_meta("method", "normal"))
}

/// COM: Cauchy combination of the MAX and SUM p-values at equal weights.
pub fn com_test(
    x: &SampleMatrix,
    dist: &BootstrapDistribution,
    alpha: f64,
) -> Result<TestReport> {
    let b = dist.b();
    let p_max = max_test(x, dist, alpha)?.p_value.get();
    let p_sum = sum_test(x, dist, alpha)?.p_value.get();
    let members = [
        clamp_for_combination(p_max, b),
        clamp_for_combination(p_sum, b),
    ];
    let (statistic, p) = cauchy_combine(&members, &[0.5, 0.5])?;
    Ok(TestReport::new("COM", statistic, p, alpha)
        .with_calibration(dist)
        .with_meta("members", "MAX,SUM")
        .with_meta("method", "cauchy"))
}

/// adaQ: Cauchy combination of `L(2), L(4), L(6)` and the max statistic,
/// all calibrated from one wild-bootstrap pass.
pub fn adaq_test(
    x: &SampleMatrix,
    b: usize,
    alpha: f64,
    stream: RngStream,
) -> Result<TestReport> {
    let grid = KGrid::new(vec![1], x.p())?;
    let dist = wild_bootstrap_with_power_sums(x, &grid, b, stream)?;
    adaq_from_distribution(x, &dist, alpha)
}

/// adaQ evaluated on an existing pass that recorded power sums and `k = 1`.
pub fn adaq_from_distribution(
    x: &SampleMatrix,
    dist: &BootstrapDistribution,
    alpha: f64,
) -> Result<TestReport> {
    let b = dist.b();
    let mut pvals = Vec::with_capacity(4);
    for r in crate::bootstrap::POWER_SUM_ORDERS {
        let observed = power_sum(x, r).value();
        let p = dist.power_sum_pvalue(r, observed)?;
        pvals.push(clamp_for_combination(p.get(), b));
    }
    let panel = x.t_statistics();
    let p_inf = dist.p_value_fixed_k(panel.max_sq(), 1)?;
    pvals.push(clamp_for_combination(p_inf.get(), b));
    let (statistic, p) = cauchy_combine(&pvals, &[0.25; 4])?;
    Ok(TestReport::new("adaQ", statistic, p, alpha)
        .with_calibration(dist)
        .with_meta("members", "L2,L4,L6,Linf")
        .with_meta("method", "cauchy"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::wild_bootstrap;
    use crate::limits::{sth_max_cdf, GumbelParams};
    use rand::Rng;

    fn normal_matrix(n: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut rng = RngStream::new(seed).rng();
        let data: Vec<f64> = (0..n * p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        SampleMatrix::from_flat(data, n, p).unwrap()
    }

    #[test]
    fn statistics_are_panel_entries() {
        let x = normal_matrix(30, 15, 1);
        let grid = KGrid::new(vec![1, 5, 15], 15).unwrap();
        let dist = wild_bootstrap(&x, &grid, 100, RngStream::new(2)).unwrap();
        let panel = x.t_statistics();
        let max = max_test(&x, &dist, 0.05).unwrap();
        let sum = sum_test(&x, &dist, 0.05).unwrap();
        assert_eq!(max.statistic, panel.max_sq());
        assert_eq!(sum.statistic, panel.sum_sq());
        // T_1 <= T_5 <= T_p by prefix monotonicity.
        let t5 = panel.l_statistic(5).unwrap();
        assert!(max.statistic <= t5 && t5 <= sum.statistic);
    }

    #[test]
    fn missing_grid_entries_error() {
        let x = normal_matrix(30, 15, 1);
        let grid = KGrid::new(vec![5], 15).unwrap();
        let dist = wild_bootstrap(&x, &grid, 100, RngStream::new(2)).unwrap();
        assert!(max_test(&x, &dist, 0.05).is_err());
        assert!(sum_test(&x, &dist, 0.05).is_err());
        assert!(com_test(&x, &dist, 0.05).is_err());
    }

    #[test]
    fn max_bootstrap_agrees_with_gumbel_law() {
        // Analytic cross-check of the empirical calibration against the
        // limiting law of the maximum, median over several datasets.
        let p = 400;
        let grid = KGrid::new(vec![1], p).unwrap();
        let b_p = GumbelParams::new(p).unwrap().b_p;
        let mut gaps: Vec<f64> = (0..11)
            .map(|seed| {
                let x = normal_matrix(200, p, 500 + seed);
                let dist = wild_bootstrap(&x, &grid, 600, RngStream::new(seed)).unwrap();
                let t1 = x.t_statistics().max_sq();
                let boot = dist.p_value_fixed_k(t1, 1).unwrap().get();
                let analytic = 1.0 - sth_max_cdf(t1 - b_p, 1).unwrap();
                (boot - analytic).abs()
            })
            .collect();
        gaps.sort_unstable_by(|a, b| a.total_cmp(b));
        let median = gaps[5];
        assert!(median < 0.05, "median gap {median}");
    }

    #[test]
    fn power_sums_even_and_l2_identity() {
        let x = normal_matrix(40, 12, 9);
        assert!(power_sum(&x, 4).value() >= 0.0);
        assert!(power_sum(&x, 6).value() >= 0.0);
        // On a fixture with unit sample variances, n * L(2) = T_p exactly.
        let raw = normal_matrix(24, 6, 10);
        let m = raw.column_moments();
        let standardized: Vec<Vec<f64>> = (0..24)
            .map(|i| {
                raw.row(i)
                    .iter()
                    .zip(&m.variances)
                    .map(|(&v, &s)| v / s.sqrt())
                    .collect()
            })
            .collect();
        let x = SampleMatrix::from_rows(&standardized).unwrap();
        let l2 = power_sum(&x, 2).value();
        let tp = x.t_statistics().sum_sq();
        assert!((24.0 * l2 - tp).abs() < 1e-9 * tp.abs());
    }

    #[test]
    fn com_neutral_members_combine_to_half() {
        // If both member p-values are 0.5, the COM p-value is 0.5.
        let (stat, p) = cauchy_combine(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(stat.abs() < 1e-12);
        assert!((p.get() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adaq_smoke_and_determinism() {
        let x = normal_matrix(30, 50, 4);
        let a = adaq_test(&x, 150, 0.05, RngStream::new(6)).unwrap();
        let b = adaq_test(&x, 150, 0.05, RngStream::new(6)).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.name, "adaQ");
        assert!(a.p_value.get() > 0.0 && a.p_value.get() < 1.0);
    }
}
