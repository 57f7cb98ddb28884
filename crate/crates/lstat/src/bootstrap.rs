//! Rademacher wild bootstrap of the full L-statistic panel.
//!
//! Each replicate multiplies the centered rows by independent ±1 signs,
//! recomputes every column's mean and variance, and reads the `T_k` values
//! for the whole grid off one sorted panel. The sign flip leaves the centered
//! squares unchanged, so the per-column sum of squares is computed once and
//! each replicate costs O(np + p log p) regardless of the grid size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numstat::{norm_cdf, rademacher, Probability, RngStream};
use crate::panel::{KGrid, SampleMatrix};

/// Smallest replicate count accepted; below this the per-k variances are too
/// unstable to define the normal-calibrated p-value.
pub const MIN_REPLICATES: usize = 20;

/// Even power indices recorded for the power-sum statistics `L(r)`.
pub const POWER_SUM_ORDERS: [u32; 3] = [2, 4, 6];

/// The joint bootstrap null distribution of the panel over a k-grid, plus
/// optionally the power-sum statistics `L(2), L(4), L(6)` from the same
/// replicates.
#[derive(Debug, Clone)]
pub struct BootstrapDistribution {
    b: usize,
    grid: KGrid,
    stream: RngStream,
    /// Column-major `B x |grid|`: column j holds the bootstrap sample of
    /// `T_{grid[j]}`.
    replicates: Vec<f64>,
    per_k_mean: Vec<f64>,
    per_k_var: Vec<f64>,
    power_sums: Option<[Vec<f64>; 3]>,
}

/// Runs the wild bootstrap for every `k` in `grid`.
pub fn wild_bootstrap(
    x: &SampleMatrix,
    grid: &KGrid,
    b: usize,
    stream: RngStream,
) -> Result<BootstrapDistribution> {
    run(x, grid, b, stream, false)
}

/// Same pass as [`wild_bootstrap`], additionally recording the power sums
/// `L(r) = Σ_j mean_j^r` for `r = 2, 4, 6` of every replicate.
pub fn wild_bootstrap_with_power_sums(
    x: &SampleMatrix,
    grid: &KGrid,
    b: usize,
    stream: RngStream,
) -> Result<BootstrapDistribution> {
    run(x, grid, b, stream, true)
}

fn run(
    x: &SampleMatrix,
    grid: &KGrid,
    b: usize,
    stream: RngStream,
    with_power_sums: bool,
) -> Result<BootstrapDistribution> {
    if b < MIN_REPLICATES {
        return Err(Error::Calibration(format!(
            "need at least {MIN_REPLICATES} bootstrap replicates, got {b}"
        )));
    }
    let (n, p) = (x.n(), x.p());
    if *grid.ks().last().unwrap() > p {
        return Err(Error::InvalidGrid(format!(
            "grid {:?} exceeds dimension {p}",
            grid.ks()
        )));
    }

    // Center once; the sign flip never changes the centered squares.
    let moments = x.column_moments();
    let mut centered = x.data().to_vec();
    for row in centered.chunks_exact_mut(p) {
        for (v, &m) in row.iter_mut().zip(&moments.means) {
            *v -= m;
        }
    }
    let mut sum_sq = vec![0.0f64; p];
    for row in centered.chunks_exact(p) {
        for (s, &v) in sum_sq.iter_mut().zip(row) {
            *s += v * v;
        }
    }

    let g = grid.len();
    let rows: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| replicate_row(&centered, &sum_sq, n, p, grid, stream.derive(rep as u64), with_power_sums))
        .collect::<Result<_>>()?;

    // Assemble column-major by replicate index; independent of scheduling.
    let mut replicates = vec![0.0f64; b * g];
    for (rep, row) in rows.iter().enumerate() {
        for j in 0..g {
            replicates[j * b + rep] = row[j];
        }
    }
    let power_sums = with_power_sums.then(|| {
        let mut cols: [Vec<f64>; 3] = [
            Vec::with_capacity(b),
            Vec::with_capacity(b),
            Vec::with_capacity(b),
        ];
        for row in &rows {
            for (c, col) in cols.iter_mut().enumerate() {
                col.push(row[g + c]);
            }
        }
        cols
    });

    let mut per_k_mean = Vec::with_capacity(g);
    let mut per_k_var = Vec::with_capacity(g);
    for j in 0..g {
        let col = &replicates[j * b..(j + 1) * b];
        let mean = col.iter().sum::<f64>() / b as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (b as f64 - 1.0);
        per_k_mean.push(mean);
        per_k_var.push(var);
    }

    Ok(BootstrapDistribution {
        b,
        grid: grid.clone(),
        stream,
        replicates,
        per_k_mean,
        per_k_var,
        power_sums,
    })
}

/// One bootstrap replicate: grid `T*_k` values followed by the power sums
/// when requested.
fn replicate_row(
    centered: &[f64],
    sum_sq: &[f64],
    n: usize,
    p: usize,
    grid: &KGrid,
    stream: RngStream,
    with_power_sums: bool,
) -> Result<Vec<f64>> {
    let signs = rademacher(&stream, n);
    let mut col_sum = vec![0.0f64; p];
    for (i, row) in centered.chunks_exact(p).enumerate() {
        let s = signs[i];
        for (acc, &v) in col_sum.iter_mut().zip(row) {
            *acc += s * v;
        }
    }
    let n_f = n as f64;
    let inv_nm1 = 1.0 / (n_f - 1.0);
    let mut power = [0.0f64; 3];
    let mut t_sq = Vec::with_capacity(p);
    for j in 0..p {
        let mean = col_sum[j] / n_f;
        let var = (sum_sq[j] - n_f * mean * mean) * inv_nm1;
        if var <= 0.0 {
            return Err(Error::Calibration(format!(
                "degenerate bootstrap replicate: column {j} variance {var}"
            )));
        }
        t_sq.push(n_f * mean * mean / var);
        if with_power_sums {
            let m2 = mean * mean;
            power[0] += m2;
            power[1] += m2 * m2;
            power[2] += m2 * m2 * m2;
        }
    }
    t_sq.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut out = Vec::with_capacity(grid.len() + if with_power_sums { 3 } else { 0 });
    let mut acc = 0.0;
    let mut next = 0usize;
    let ks = grid.ks();
    for (idx, &v) in t_sq.iter().enumerate() {
        acc += v;
        if next < ks.len() && idx + 1 == ks[next] {
            out.push(acc);
            next += 1;
        }
    }
    debug_assert_eq!(next, ks.len());
    if with_power_sums {
        out.extend_from_slice(&power);
    }
    Ok(out)
}

impl BootstrapDistribution {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    /// Stream the replicates were derived from.
    pub fn stream(&self) -> RngStream {
        self.stream
    }

    /// Bootstrap sample of `T_k` (the column for `k`).
    pub fn column(&self, k: usize) -> Result<&[f64]> {
        let j = self.position(k)?;
        Ok(&self.replicates[j * self.b..(j + 1) * self.b])
    }

    pub fn per_k_mean(&self, k: usize) -> Result<f64> {
        Ok(self.per_k_mean[self.position(k)?])
    }

    pub fn per_k_var(&self, k: usize) -> Result<f64> {
        Ok(self.per_k_var[self.position(k)?])
    }

    fn position(&self, k: usize) -> Result<usize> {
        self.grid.position(k).ok_or_else(|| Error::KNotInGrid {
            k,
            grid: self.grid.ks().to_vec(),
        })
    }

    /// Empirical right-tail p-value with plus-one correction:
    /// `(1 + #{b : T*_{k,b} >= observed}) / (B + 1)`.
    pub fn p_value_fixed_k(&self, observed: f64, k: usize) -> Result<Probability> {
        let col = self.column(k)?;
        Ok(right_tail_pvalue(observed, col))
    }

    /// Normal-calibrated p-value `1 - Φ((observed - mean*) / sd*)` using the
    /// bootstrap mean and variance of the `T_k` column.
    pub fn p_value_diverging_k(&self, observed: f64, k: usize) -> Result<Probability> {
        let j = self.position(k)?;
        let var = self.per_k_var[j];
        if var <= 0.0 {
            return Err(Error::Calibration(format!(
                "bootstrap variance for k = {k} is {var}; cannot standardize"
            )));
        }
        let z = (observed - self.per_k_mean[j]) / var.sqrt();
        Ok(Probability::from_clamped(1.0 - norm_cdf(z)))
    }

    /// Bootstrap sample of the power sum `L(r)`, when recorded.
    pub fn power_sum_column(&self, r: u32) -> Result<&[f64]> {
        let sums = self.power_sums.as_ref().ok_or_else(|| {
            Error::Calibration("power sums were not recorded in this bootstrap pass".into())
        })?;
        let idx = POWER_SUM_ORDERS
            .iter()
            .position(|&o| o == r)
            .ok_or_else(|| Error::Domain(format!("power sum L({r}) not tracked")))?;
        Ok(&sums[idx])
    }

    /// Empirical right-tail p-value of an observed `L(r)`.
    pub fn power_sum_pvalue(&self, r: u32, observed: f64) -> Result<Probability> {
        Ok(right_tail_pvalue(observed, self.power_sum_column(r)?))
    }
}

fn right_tail_pvalue(observed: f64, replicates: &[f64]) -> Probability {
    let count = replicates.iter().filter(|&&v| v >= observed).count();
    Probability::from_clamped((1.0 + count as f64) / (replicates.len() as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::two_sample_ks;
    use crate::limits::gamma_constants;
    use rand::Rng;

    fn normal_matrix(n: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut rng = RngStream::new(seed).rng();
        let data: Vec<f64> = (0..n * p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        SampleMatrix::from_flat(data, n, p).unwrap()
    }

    #[test]
    fn replicate_matches_naive_recomputation() {
        // The fused mean/variance update must agree with literally building
        // the sign-flipped matrix and recomputing its panel.
        let x = normal_matrix(12, 7, 3);
        let grid = KGrid::new(vec![1, 3, 7], 7).unwrap();
        let stream = RngStream::new(99);
        let dist = wild_bootstrap(&x, &grid, 25, stream).unwrap();

        let moments = x.column_moments();
        for rep in [0usize, 7, 24] {
            let signs = rademacher(&stream.derive(rep as u64), 12);
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|i| {
                    x.row(i)
                        .iter()
                        .zip(&moments.means)
                        .map(|(&v, &m)| (v - m) * signs[i])
                        .collect()
                })
                .collect();
            let star = SampleMatrix::from_rows(&rows).unwrap();
            let panel = star.t_statistics();
            for &k in grid.ks() {
                let direct = panel.l_statistic(k).unwrap();
                let engine = dist.column(k).unwrap()[rep];
                assert!(
                    (direct - engine).abs() < 1e-9 * direct.abs().max(1.0),
                    "rep {rep} k {k}: {direct} vs {engine}"
                );
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_stream_across_pool_sizes() {
        let x = normal_matrix(40, 30, 5);
        let grid = KGrid::new(vec![1, 5, 15, 30], 30).unwrap();
        let run_in = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| wild_bootstrap(&x, &grid, 64, RngStream::new(17)).unwrap())
        };
        let a = run_in(1);
        let b = run_in(4);
        assert_eq!(a.replicates, b.replicates);
        assert_eq!(a.per_k_mean, b.per_k_mean);
    }

    #[test]
    fn rejects_tiny_replicate_counts() {
        let x = normal_matrix(10, 4, 1);
        let grid = KGrid::new(vec![1], 4).unwrap();
        assert!(matches!(
            wild_bootstrap(&x, &grid, 5, RngStream::new(0)),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn bootstrap_mean_tracks_analytic_constants() {
        // iid N(0,1), diagonal covariance: the bootstrap mean of T_{p/2}
        // should sit near p * gamma * mu_gamma.
        let x = normal_matrix(100, 100, 8);
        let grid = KGrid::new(vec![5, 25, 50], 100).unwrap();
        let dist = wild_bootstrap(&x, &grid, 500, RngStream::new(21)).unwrap();
        let gc = gamma_constants(0.5).unwrap();
        let analytic = 100.0 * 0.5 * gc.mu_gamma;
        let got = dist.per_k_mean(50).unwrap();
        assert!(
            (got - analytic).abs() < 0.05 * analytic,
            "{got} vs {analytic}"
        );
    }

    #[test]
    fn fixed_k_pvalue_extremes_and_monotonicity() {
        let x = normal_matrix(20, 10, 2);
        let grid = KGrid::new(vec![1, 10], 10).unwrap();
        let dist = wild_bootstrap(&x, &grid, 99, RngStream::new(4)).unwrap();
        let col = dist.column(1).unwrap();
        let above = col.iter().cloned().fold(f64::MIN, f64::max) + 1.0;
        let below = -1.0;
        assert!((dist.p_value_fixed_k(above, 1).unwrap().get() - 0.01).abs() < 1e-12);
        assert!((dist.p_value_fixed_k(below, 1).unwrap().get() - 1.0).abs() < 1e-12);
        let mut prev = 2.0;
        for q in 0..40 {
            let obs = below + (above - below) * q as f64 / 39.0;
            let p = dist.p_value_fixed_k(obs, 1).unwrap().get();
            assert!(p <= prev);
            prev = p;
        }
        assert!(dist.p_value_fixed_k(0.0, 3).is_err());
    }

    #[test]
    fn diverging_pvalue_gaussian_anchors() {
        let x = normal_matrix(60, 40, 6);
        let grid = KGrid::new(vec![20], 40).unwrap();
        let dist = wild_bootstrap(&x, &grid, 400, RngStream::new(9)).unwrap();
        let mean = dist.per_k_mean(20).unwrap();
        let sd = dist.per_k_var(20).unwrap().sqrt();
        assert!((dist.p_value_diverging_k(mean, 20).unwrap().get() - 0.5).abs() < 1e-12);
        let at = mean + 1.6448536269514722 * sd;
        assert!((dist.p_value_diverging_k(at, 20).unwrap().get() - 0.05).abs() < 1e-6);
        // Strictly decreasing in the observed value.
        let lo = dist.p_value_diverging_k(mean + 0.1, 20).unwrap().get();
        let hi = dist.p_value_diverging_k(mean - 0.1, 20).unwrap().get();
        assert!(lo < 0.5 && 0.5 < hi);
    }

    #[test]
    fn sign_flip_of_rows_leaves_law_unchanged() {
        // Negating a subset of rows is absorbed by the Rademacher signs:
        // bootstrap distributions from fresh streams agree in law.
        let x = normal_matrix(30, 40, 12);
        let flipped_rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let row = x.row(i).to_vec();
                if i % 3 == 0 {
                    row.iter().map(|v| -v).collect()
                } else {
                    row
                }
            })
            .collect();
        let y = SampleMatrix::from_rows(&flipped_rows).unwrap();
        let grid = KGrid::new(vec![1, 5, 20, 40], 40).unwrap();
        let a = wild_bootstrap(&x, &grid, 4000, RngStream::new(100)).unwrap();
        let b = wild_bootstrap(&y, &grid, 4000, RngStream::new(200)).unwrap();
        for &k in grid.ks() {
            let d = two_sample_ks(a.column(k).unwrap(), b.column(k).unwrap());
            assert!(d < 0.05, "k = {k}: KS distance {d}");
        }
    }

    #[test]
    fn location_shift_leaves_replicates_invariant() {
        // Centering removes the mean exactly, so the same stream gives
        // bitwise-identical replicates; fresh streams agree within noise.
        let x = normal_matrix(50, 20, 31);
        let shifted_rows: Vec<Vec<f64>> = (0..50)
            .map(|i| x.row(i).iter().map(|v| v + 0.75).collect())
            .collect();
        let y = SampleMatrix::from_rows(&shifted_rows).unwrap();
        let grid = KGrid::new(vec![1, 10, 20], 20).unwrap();
        let a = wild_bootstrap(&x, &grid, 2000, RngStream::new(77)).unwrap();
        let b = wild_bootstrap(&y, &grid, 2000, RngStream::new(77)).unwrap();
        for (u, v) in a.replicates.iter().zip(&b.replicates) {
            assert!((u - v).abs() < 1e-9 * u.abs().max(1.0));
        }
        let c = wild_bootstrap(&y, &grid, 2000, RngStream::new(78)).unwrap();
        for &k in grid.ks() {
            let am = a.per_k_mean(k).unwrap();
            let cm = c.per_k_mean(k).unwrap();
            assert!((am - cm).abs() < 0.02 * am.abs(), "k = {k}: {am} vs {cm}");
        }
    }

    #[test]
    fn one_pass_per_replicate_regardless_of_grid_size() {
        // The sort dominates at this shape; a per-k recomputation would make
        // the five-point grid several times slower than the single point.
        let x = normal_matrix(8, 20_000, 44);
        let single = KGrid::new(vec![10_000], 20_000).unwrap();
        let five = KGrid::new(vec![1, 5, 100, 10_000, 20_000], 20_000).unwrap();
        let time = |grid: &KGrid| {
            let mut best = f64::INFINITY;
            for _ in 0..3 {
                let start = std::time::Instant::now();
                let d = wild_bootstrap(&x, grid, 40, RngStream::new(1)).unwrap();
                assert!(d.per_k_mean[0].is_finite());
                best = best.min(start.elapsed().as_secs_f64());
            }
            best
        };
        let t1 = time(&single);
        let t5 = time(&five);
        assert!(
            t5 < 2.0 * t1 + 0.005,
            "grid-size dependence detected: {t5:.4}s vs {t1:.4}s"
        );
    }

    #[test]
    fn power_sums_recorded_and_positive() {
        let x = normal_matrix(25, 12, 15);
        let grid = KGrid::new(vec![1], 12).unwrap();
        let dist = wild_bootstrap_with_power_sums(&x, &grid, 200, RngStream::new(2)).unwrap();
        for r in POWER_SUM_ORDERS {
            let col = dist.power_sum_column(r).unwrap();
            assert_eq!(col.len(), 200);
            assert!(col.iter().all(|&v| v >= 0.0));
        }
        assert!(dist.power_sum_column(3).is_err());
        let plain = wild_bootstrap(&x, &grid, 200, RngStream::new(2)).unwrap();
        assert!(plain.power_sum_column(2).is_err());
        // Same stream => identical T columns whether or not sums are kept.
        assert_eq!(plain.replicates, dist.replicates);
    }
}
