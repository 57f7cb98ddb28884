//! Closed-form asymptotic distributions: the Gumbel-type marginal and joint
//! laws of the top ordered squared t-statistics, and the constants of the
//! normal limit for `T_k` with `k` proportional to `p`.

use crate::error::{Error, Result};
use crate::numstat::{self, norm_pdf, norm_quantile};

const INV_SQRT_PI: f64 = 0.5641895835477562869480794515607726;

/// Centering sequence `b_p = 2 log p - log(log p)` for squared maxima.
#[derive(Debug, Clone, Copy)]
pub struct GumbelParams {
    pub b_p: f64,
    pub p: usize,
}

impl GumbelParams {
    pub fn new(p: usize) -> Result<Self> {
        if p < 3 {
            return Err(Error::Domain(format!(
                "centering needs p >= 3 so log(log p) is positive, got {p}"
            )));
        }
        let lp = (p as f64).ln();
        Ok(Self {
            b_p: 2.0 * lp - lp.ln(),
            p,
        })
    }
}

/// Limit CDF of the centered maximum: `Λ(x) = exp{-π^{-1/2} e^{-x/2}}`.
pub fn lambda_cdf(x: f64) -> f64 {
    (-lambda_rate(x)).exp()
}

/// `log Λ^{-1}(x) = π^{-1/2} e^{-x/2}`, the exceedance intensity at level x.
fn lambda_rate(x: f64) -> f64 {
    INV_SQRT_PI * (-0.5 * x).exp()
}

/// Limit CDF of the `s`-th largest centered squared statistic:
/// `Λ(x) Σ_{i<s} (log Λ^{-1}(x))^i / i!`, equivalently the probability that a
/// Poisson with rate `π^{-1/2} e^{-x/2}` is at most `s - 1`.
pub fn sth_max_cdf(x: f64, s: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::Domain("order s must be >= 1".into()));
    }
    let rate = lambda_rate(x);
    if !rate.is_finite() {
        return Ok(0.0);
    }
    if rate <= 30.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..s {
            term *= rate / i as f64;
            sum += term;
        }
        Ok(((-rate).exp() * sum).min(1.0))
    } else {
        // Far left tail: accumulate the Poisson terms in the log domain.
        let log_terms: Vec<f64> = (0..s)
            .map(|i| {
                let i_f = i as f64;
                -rate + i_f * rate.ln() - numstat::ln_gamma(i_f + 1.0)
            })
            .collect();
        let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max < -745.0 {
            return Ok(0.0);
        }
        let sum: f64 = log_terms.iter().map(|&lt| (lt - max).exp()).sum();
        Ok((max + sum.ln()).exp().min(1.0))
    }
}

/// Maximum joint order supported by [`joint_topk_cdf`]; the enumeration is
/// combinatorial in `k`.
pub const MAX_JOINT_K: usize = 12;

/// Joint limit CDF of the top `k` centered squared statistics at thresholds
/// `xs[0] >= xs[1] >= ... >= xs[k-1]`.
///
/// Evaluates `Λ(x_k) Σ Π_i {λ_i - λ_{i-1}}^{k_i} / k_i!` where `λ_i` is the
/// exceedance intensity at `x_i` and the sum runs over non-negative tuples
/// `(k_2, ..., k_k)` with `k_2 + ... + k_j <= j - 1` for every `j`.
pub fn joint_topk_cdf(xs: &[f64]) -> Result<f64> {
    let k = xs.len();
    if k < 2 {
        return Err(Error::Domain("joint law needs k >= 2 thresholds".into()));
    }
    if k > MAX_JOINT_K {
        return Err(Error::Domain(format!(
            "joint law limited to k <= {MAX_JOINT_K}, got {k}"
        )));
    }
    if !xs.windows(2).all(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "joint thresholds must be non-increasing".into(),
        ));
    }
    let rates: Vec<f64> = xs.iter().map(|&x| lambda_rate(x)).collect();
    // Depth-first over (k_2, ..., k_k) with the partial-sum bound as pruning.
    fn dfs(rates: &[f64], level: usize, used: usize, weight: f64) -> f64 {
        if level == rates.len() {
            return weight;
        }
        let delta = rates[level] - rates[level - 1];
        let budget = level - used; // k_2 + .. + k_level <= level - 1 (0-based: level)
        let mut total = 0.0;
        let mut term = weight;
        for count in 0..=budget {
            if count > 0 {
                term *= delta / count as f64;
            }
            total += dfs(rates, level + 1, used + count, term);
        }
        total
    }
    let sum = dfs(&rates, 1, 0, 1.0);
    Ok((lambda_cdf(xs[k - 1]) * sum).min(1.0))
}

/// Constants of the normal limit for `T_k` at `γ = k/p`:
/// the χ²₁ truncation point `v_γ`, the conditional truncated mean `μ_γ`
/// (so that `γ μ_γ = E[Z² 1{Z² >= v_γ}]`), and the limiting variance
/// `σ_γγ` in its diagonal-covariance form.
#[derive(Debug, Clone, Copy)]
pub struct GammaConstants {
    pub gamma: f64,
    pub v_gamma: f64,
    pub mu_gamma: f64,
    pub sigma_gg: f64,
}

/// Evaluates the closed forms for `γ` in (0, 1].
///
/// The `z⁴` coefficient of `σ_γγ` is `(γ - γ²)`, the value consistent with
/// the truncated-normal moment calculation and Monte Carlo; see the crate
/// tests that pin both constants against a simulation oracle.
pub fn gamma_constants(gamma: f64) -> Result<GammaConstants> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} outside (0, 1]")));
    }
    let z = if gamma >= 1.0 {
        0.0
    } else {
        norm_quantile(1.0 - gamma / 2.0)?
    };
    let phi = norm_pdf(z);
    let z2 = z * z;
    let v_gamma = z2;
    let truncated_moment = 2.0 * z * phi + gamma; // E[Z^2 1{Z^2 >= v}]
    let mu_gamma = truncated_moment / gamma;
    let sigma_gg = ((6.0 - 4.0 * gamma) * z + (4.0 * gamma - 2.0) * z2 * z) * phi
        + 3.0 * gamma
        - gamma * gamma
        + 2.0 * (gamma * gamma - gamma) * z2
        + (gamma - gamma * gamma) * z2 * z2
        - 4.0 * z2 * phi * phi;
    Ok(GammaConstants {
        gamma,
        v_gamma,
        mu_gamma,
        sigma_gg,
    })
}

/// Analytic standardization `(T_k - p γ μ_γ) / sqrt(p σ_γγ)`.
///
/// Valid as a null z-score only when the covariance is diagonal; under
/// dependence `σ_γγ` involves the unknown population covariance and the
/// bootstrap calibration should be used instead.
pub fn diverging_zscore(t_k: f64, k: usize, p: usize, gc: &GammaConstants) -> f64 {
    debug_assert!(
        (gc.gamma - k as f64 / p as f64).abs() < 1e-9,
        "constants computed at gamma {} but k/p = {}",
        gc.gamma,
        k as f64 / p as f64
    );
    let p = p as f64;
    (t_k - p * gc.gamma * gc.mu_gamma) / (p * gc.sigma_gg).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numstat::{gammq, RngStream};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn lambda_cdf_values() {
        assert!((lambda_cdf(0.0) - 0.56882094186402024).abs() < 1e-15);
        assert!((lambda_cdf(1.0) - 0.71020737060814123).abs() < 1e-15);
        assert!((lambda_cdf(-2.0) - 0.21575186759506868).abs() < 1e-15);
        assert!((lambda_cdf(200.0) - 1.0).abs() < 1e-15);
        assert!(lambda_cdf(-745.0 * 2.0) >= 0.0);
    }

    #[test]
    fn lambda_cdf_monotone_on_grid() {
        let mut prev = 0.0;
        for i in 0..=1000 {
            let x = -10.0 + 20.0 * i as f64 / 1000.0;
            let v = lambda_cdf(x);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn sth_max_reduces_to_lambda_at_s1() {
        for &x in &[-3.0, -1.0, 0.0, 2.0, 10.0] {
            assert_eq!(sth_max_cdf(x, 1).unwrap(), lambda_cdf(x));
        }
        assert!((sth_max_cdf(0.0, 2).unwrap() - 0.88974379216752431).abs() < 1e-15);
        assert!((sth_max_cdf(-2.0, 5).unwrap() - 0.97979674824779763).abs() < 1e-14);
    }

    #[test]
    fn sth_max_is_poisson_upper_tail() {
        // Independent route: regularized upper gamma Q(s, rate) equals the
        // Poisson CDF at s - 1.
        for &x in &[-8.0, -2.0, 0.0, 1.5, 6.0] {
            let rate = INV_SQRT_PI * (-0.5f64 * x).exp();
            for s in 1..=6usize {
                let direct = sth_max_cdf(x, s).unwrap();
                let via_gamma = gammq(s as f64, rate).unwrap();
                assert!(
                    (direct - via_gamma).abs() < 1e-12,
                    "x={x} s={s}: {direct} vs {via_gamma}"
                );
            }
        }
    }

    #[test]
    fn sth_max_log_domain_branch_is_continuous() {
        // rate = 30 at x = 2 ln(INV_SQRT_PI / 30); probe both sides.
        let x_switch = 2.0 * (INV_SQRT_PI / 30.0).ln();
        for s in [1usize, 3, 8] {
            let lo = sth_max_cdf(x_switch - 1e-9, s).unwrap();
            let hi = sth_max_cdf(x_switch + 1e-9, s).unwrap();
            assert!((lo - hi).abs() < 1e-9, "s={s}: {lo} vs {hi}");
        }
        assert_eq!(sth_max_cdf(-3000.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn sth_max_monotone_in_x_and_s() {
        for s in 1..6usize {
            for i in 0..40 {
                let x = -6.0 + 0.3 * i as f64;
                let here = sth_max_cdf(x, s).unwrap();
                assert!(sth_max_cdf(x + 0.3, s).unwrap() >= here);
                assert!(sth_max_cdf(x, s + 1).unwrap() >= here);
            }
        }
    }

    #[test]
    fn joint_top2_closed_forms() {
        // Unequal thresholds: Λ(x2)(1 + λ2 - λ1).
        let got = joint_topk_cdf(&[1.0, 0.0]).unwrap();
        assert!((got - 0.69509424405608129).abs() < 1e-15);
        // Degenerate thresholds: only the zero tuple survives, so the joint
        // law collapses to the marginal law of the maximum.
        let diag = joint_topk_cdf(&[0.5, 0.5]).unwrap();
        assert!((diag - lambda_cdf(0.5)).abs() < 1e-15);
    }

    #[test]
    fn joint_top3_value() {
        let got = joint_topk_cdf(&[1.0, 0.5, 0.0]).unwrap();
        assert!((got - 0.70642335339679317).abs() < 1e-14, "got {got}");
    }

    #[test]
    fn joint_topk_diagonal_equals_max_law() {
        for k in 2..=6 {
            let xs = vec![0.7; k];
            let got = joint_topk_cdf(&xs).unwrap();
            assert!((got - lambda_cdf(0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_topk_rejects_bad_input() {
        assert!(joint_topk_cdf(&[0.0]).is_err());
        assert!(joint_topk_cdf(&[0.0, 1.0]).is_err());
        assert!(joint_topk_cdf(&vec![0.0; 13]).is_err());
    }

    #[test]
    fn joint_topk_dominated_by_marginals() {
        // Joint CDF can never exceed the marginal law of any coordinate.
        let xs = [2.0, 1.0, 0.3, 0.0];
        let joint = joint_topk_cdf(&xs).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert!(joint <= sth_max_cdf(x, i + 1).unwrap() + 1e-15);
        }
    }

    #[test]
    fn gamma_constants_at_one() {
        let gc = gamma_constants(1.0).unwrap();
        assert_eq!(gc.v_gamma, 0.0);
        assert_eq!(gc.mu_gamma, 1.0);
        assert_eq!(gc.sigma_gg, 2.0);
    }

    #[test]
    fn gamma_constants_closed_forms() {
        let gc = gamma_constants(0.5).unwrap();
        assert!((gc.v_gamma - 0.45493642311957275).abs() < 1e-11);
        assert!((gc.mu_gamma - 1.8573481645114812).abs() < 1e-11);
        assert!((gc.sigma_gg - 1.7478602714241011).abs() < 1e-11);
        let gc = gamma_constants(0.25).unwrap();
        assert!((gc.mu_gamma - 2.894427847049313).abs() < 1e-11);
        assert!((gc.sigma_gg - 1.1659494185640842).abs() < 1e-11);
        let gc = gamma_constants(0.125).unwrap();
        assert!((gc.mu_gamma - 4.0187551617285148).abs() < 1e-10);
        assert!((gc.sigma_gg - 0.67961947758880177).abs() < 1e-11);
        assert!(gamma_constants(0.0).is_err());
        assert!(gamma_constants(1.5).is_err());
    }

    #[test]
    fn gamma_constants_continuity() {
        for &g in &[0.1, 0.25, 0.5, 0.9, 0.9999] {
            let a = gamma_constants(g).unwrap();
            let b = gamma_constants(g + 1e-4).unwrap();
            assert!((a.mu_gamma - b.mu_gamma).abs() < 1e-2 * a.mu_gamma.max(1.0));
            assert!((a.sigma_gg - b.sigma_gg).abs() < 1e-3 * 10.0);
        }
    }

    #[test]
    fn truncated_moment_increasing_to_one() {
        // γ μ_γ = E[Z² 1{Z² >= v_γ}] increases in γ and reaches 1 at γ = 1.
        let mut prev = 0.0;
        for i in 1..=100 {
            let g = i as f64 / 100.0;
            let gc = gamma_constants(g).unwrap();
            let m = gc.gamma * gc.mu_gamma;
            assert!(m >= prev);
            prev = m;
        }
        assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zscore_centers_and_scales() {
        let gc = gamma_constants(0.5).unwrap();
        let center = 100.0 * 0.5 * gc.mu_gamma;
        assert_eq!(diverging_zscore(center, 50, 100, &gc), 0.0);
        // γ = 1 reduces to (sum t² - p) / sqrt(2p).
        let gc1 = gamma_constants(1.0).unwrap();
        let z = diverging_zscore(230.0, 200, 200, &gc1);
        assert!((z - (230.0 - 200.0) / (400.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_constants_match_simulation_oracle() {
        // Moderate-size seeded Monte Carlo; the acceptance suite runs the
        // full 1e7-draw version.
        let mut rng = RngStream::new(2024).rng();
        let n = 2_000_000usize;
        for &g in &[0.25, 0.5] {
            let gc = gamma_constants(g).unwrap();
            let (mut sum, mut sum_w, mut sum_w2, mut count) = (0.0, 0.0, 0.0, 0usize);
            for _ in 0..n {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let z2 = z * z;
                if z2 >= gc.v_gamma {
                    let w = z2 - gc.v_gamma;
                    sum += z2;
                    sum_w += w;
                    sum_w2 += w * w;
                    count += 1;
                }
            }
            let mc_truncated = sum / n as f64;
            let mc_var = sum_w2 / n as f64 - (sum_w / n as f64).powi(2);
            assert!(
                (mc_truncated - g * gc.mu_gamma).abs() < 4e-3,
                "gamma {g}: truncated moment {mc_truncated} vs {}",
                g * gc.mu_gamma
            );
            assert!(
                (mc_var - gc.sigma_gg).abs() < 8e-3,
                "gamma {g}: variance {mc_var} vs {}",
                gc.sigma_gg
            );
            assert!((count as f64 / n as f64 - g).abs() < 2e-3);
        }
    }

    proptest! {
        #[test]
        fn sth_max_difference_is_poisson_pmf(x in -8.0..8.0f64, s in 2usize..8) {
            let hi = sth_max_cdf(x, s).unwrap();
            let lo = sth_max_cdf(x, s - 1).unwrap();
            prop_assert!(hi >= lo);
        }

        /// Non-decreasing in each coordinate on random ordered grids.
        #[test]
        fn joint_topk_coordinatewise_monotone(seed in 0u64..200) {
            let mut rng = RngStream::new(seed).rng();
            let k = 2 + (seed as usize % 4);
            let mut xs: Vec<f64> = (0..k).map(|_| -3.0 + 6.0 * rng.random::<f64>()).collect();
            xs.sort_unstable_by(|a, b| b.total_cmp(a));
            let base = joint_topk_cdf(&xs).unwrap();
            for i in 0..k {
                let mut bumped = xs.clone();
                bumped[i] += 0.25;
                // Restore ordering after the bump.
                bumped.sort_unstable_by(|a, b| b.total_cmp(a));
                prop_assert!(joint_topk_cdf(&bumped).unwrap() + 1e-12 >= base);
            }
        }
    }
}
