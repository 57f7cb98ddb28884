//! Small calibration diagnostics: Kolmogorov-Smirnov distances and sample
//! correlation. Used by the validation suites to check p-value uniformity,
//! limit laws and asymptotic independence.

/// One-sample KS distance between `samples` and a reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// KS distance from the uniform distribution on [0, 1].
pub fn ks_uniform(samples: &[f64]) -> f64 {
    ks_distance(samples, |x| x.clamp(0.0, 1.0))
}

/// Two-sample KS distance.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|u, v| u.total_cmp(v));
    ys.sort_unstable_by(|u, v| u.total_cmp(v));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Pearson sample correlation.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_detects_shift() {
        let flat: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&flat) < 0.001);
        let shifted: Vec<f64> = flat.iter().map(|x| x * 0.5).collect();
        assert!(ks_uniform(&shifted) > 0.4);
    }

    #[test]
    fn two_sample_ks_zero_on_identical() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(two_sample_ks(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        assert_eq!(two_sample_ks(&a, &b), 1.0);
    }

    #[test]
    fn correlation_signs() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x + 3.0).collect();
        assert!((pearson_correlation(&a, &a) - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&a, &b) + 1.0).abs() < 1e-12);
    }
}
