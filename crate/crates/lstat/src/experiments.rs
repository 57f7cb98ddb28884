//! Monte-Carlo drivers: empirical size studies, size-corrected power sweeps
//! over sparsity levels, and machine-readable CSV/JSON output.
//!
//! Every replicate derives its own stream from the master stream by index,
//! so results are identical for any worker count, and rows are assembled in
//! index order so the emitted CSV is bitwise reproducible.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat::RngStream;
use crate::simgen::{ar1_sqrt, generate_with_factor, CovFactor, SimConfig};
use crate::suite::{run_tests, TestId};

/// One output row of a size or power study.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub n: usize,
    pub p: usize,
    pub innovation: String,
    pub rho: f64,
    pub test: String,
    pub s: usize,
    pub kappa: f64,
    pub rejections: usize,
    pub reps: usize,
    pub rate: f64,
    pub se: f64,
    pub corrected: bool,
}

/// Null p-values of each test over `m` Monte-Carlo replicates.
#[derive(Debug, Clone)]
pub struct PValueStudy {
    pub tests: Vec<TestId>,
    /// `pvals[t][rep]` for test `t`.
    pub pvals: Vec<Vec<f64>>,
}

/// Per-test p-value rejection thresholds from a null calibration run.
#[derive(Debug, Clone)]
pub struct Thresholds {
    map: BTreeMap<String, f64>,
}

impl Thresholds {
    /// The nominal rule: reject when p <= alpha for every test.
    pub fn nominal(tests: &[TestId], alpha: f64) -> Self {
        Self {
            map: tests.iter().map(|t| (t.to_string(), alpha)).collect(),
        }
    }

    pub fn get(&self, test: TestId) -> Result<f64> {
        self.map
            .get(&test.to_string())
            .copied()
            .ok_or_else(|| Error::UnknownTest(test.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.map.iter()
    }
}

/// A simulation scenario's Monte-Carlo power estimates across sparsity
/// levels.
#[derive(Debug, Clone)]
pub struct PowerCurve {
    pub scenario: SimConfig,
    pub tests: Vec<TestId>,
    pub sparsity_grid: Vec<usize>,
    /// `estimates[t][si]`: rejection rate of test `t` at sparsity level
    /// `sparsity_grid[si]`.
    pub estimates: Vec<Vec<f64>>,
    pub rejections: Vec<Vec<usize>>,
    pub kappas: Vec<f64>,
    pub mc_reps: usize,
    pub corrected: bool,
}

impl PowerCurve {
    pub fn rate(&self, test: TestId, s: usize) -> Result<f64> {
        let ti = self
            .tests
            .iter()
            .position(|t| *t == test)
            .ok_or_else(|| Error::UnknownTest(test.to_string()))?;
        let si = self
            .sparsity_grid
            .iter()
            .position(|&v| v == s)
            .ok_or_else(|| Error::Domain(format!("sparsity {s} not in sweep")))?;
        Ok(self.estimates[ti][si])
    }

    /// Mean power over the sparsity grid.
    pub fn mean_power(&self, test: TestId) -> Result<f64> {
        let ti = self
            .tests
            .iter()
            .position(|t| *t == test)
            .ok_or_else(|| Error::UnknownTest(test.to_string()))?;
        Ok(self.estimates[ti].iter().sum::<f64>() / self.sparsity_grid.len() as f64)
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for (si, &s) in self.sparsity_grid.iter().enumerate() {
            for (ti, test) in self.tests.iter().enumerate() {
                let rate = self.estimates[ti][si];
                rows.push(ResultRow {
                    n: self.scenario.n,
                    p: self.scenario.p,
                    innovation: self.scenario.innovation.to_string(),
                    rho: self.scenario.rho,
                    test: test.to_string(),
                    s,
                    kappa: self.kappas[si],
                    rejections: self.rejections[ti][si],
                    reps: self.mc_reps,
                    rate,
                    se: (rate * (1.0 - rate) / self.mc_reps as f64).sqrt(),
                    corrected: self.corrected,
                });
            }
        }
        rows
    }
}

/// Collects each test's p-values over `m` independent datasets drawn from
/// `cfg` (whatever its sparsity; under `s = 0` these are null p-values).
pub fn pvalue_study(
    cfg: &SimConfig,
    tests: &[TestId],
    m: usize,
    b: usize,
    stream: &RngStream,
) -> Result<PValueStudy> {
    let factor = ar1_sqrt(cfg.p, cfg.rho)?;
    let pvals = pvalue_matrix(cfg, &factor, tests, m, b, stream)?;
    Ok(PValueStudy {
        tests: tests.to_vec(),
        pvals,
    })
}

fn pvalue_matrix(
    cfg: &SimConfig,
    factor: &CovFactor,
    tests: &[TestId],
    m: usize,
    b: usize,
    stream: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    let per_rep: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|rep| {
            let rs = stream.derive(rep as u64);
            let data = generate_with_factor(cfg, factor, &rs.derive(0))?;
            let reports = run_tests(&data, tests, b, 0.05, rs.derive(1), None)?;
            Ok(reports.iter().map(|r| r.p_value.get()).collect::<Vec<f64>>())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(m); tests.len()];
    for row in per_rep {
        for (t, &p) in row.iter().enumerate() {
            out[t].push(p);
        }
    }
    Ok(out)
}

/// Empirical sizes at nominal level `alpha` under the null (`s = 0`).
pub fn run_size_study(
    template: &SimConfig,
    tests: &[TestId],
    m: usize,
    b: usize,
    alpha: f64,
    stream: &RngStream,
) -> Result<Vec<ResultRow>> {
    if template.s != 0 {
        return Err(Error::Domain(
            "size study needs a null template (s = 0)".into(),
        ));
    }
    let study = pvalue_study(template, tests, m, b, stream)?;
    let rows = tests
        .iter()
        .zip(&study.pvals)
        .map(|(test, ps)| {
            let rejections = ps.iter().filter(|&&p| p <= alpha).count();
            ResultRow {
                n: template.n,
                p: template.p,
                innovation: template.innovation.to_string(),
                rho: template.rho,
                test: test.to_string(),
                s: 0,
                kappa: 0.0,
                rejections,
                reps: m,
                rate: rejections as f64 / m as f64,
                se: (alpha * (1.0 - alpha) / m as f64).sqrt(),
                corrected: false,
            }
        })
        .collect();
    Ok(rows)
}

/// The `alpha`-quantile of a null p-value sample: the `ceil(alpha * m)`-th
/// smallest value. Rejecting at `p <= threshold` restores size `alpha` up to
/// Monte-Carlo error.
pub(crate) fn pvalue_quantile_threshold(pvals: &[f64], alpha: f64) -> f64 {
    let mut sorted = pvals.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let rank = ((alpha * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Size-corrected per-test rejection thresholds: the empirical
/// `alpha`-quantile of each test's null p-value distribution over `m0` runs.
pub fn empirical_critical_values(
    template: &SimConfig,
    tests: &[TestId],
    m0: usize,
    b: usize,
    alpha: f64,
    stream: &RngStream,
) -> Result<Thresholds> {
    if template.s != 0 {
        return Err(Error::Domain(
            "critical-value calibration needs a null template (s = 0)".into(),
        ));
    }
    let study = pvalue_study(template, tests, m0, b, stream)?;
    let map = tests
        .iter()
        .zip(&study.pvals)
        .map(|(t, ps)| (t.to_string(), pvalue_quantile_threshold(ps, alpha)))
        .collect();
    Ok(Thresholds { map })
}

/// Rejection rates across a sparsity grid using per-test thresholds.
pub fn run_power_sweep(
    template: &SimConfig,
    tests: &[TestId],
    sparsity_grid: &[usize],
    m: usize,
    b: usize,
    thresholds: &Thresholds,
    stream: &RngStream,
) -> Result<PowerCurve> {
    let factor = ar1_sqrt(template.p, template.rho)?;
    let mut rejections = vec![vec![0usize; sparsity_grid.len()]; tests.len()];
    let mut kappas = Vec::with_capacity(sparsity_grid.len());
    for (si, &s) in sparsity_grid.iter().enumerate() {
        let cfg = template.clone().with_sparsity(s, template.kappa)?;
        kappas.push(cfg.kappa());
        let level_stream = stream.derive(si as u64);
        let pvals = pvalue_matrix(&cfg, &factor, tests, m, b, &level_stream)?;
        for (ti, test) in tests.iter().enumerate() {
            let thr = thresholds.get(*test)?;
            rejections[ti][si] = pvals[ti].iter().filter(|&&p| p <= thr).count();
        }
    }
    let estimates = rejections
        .iter()
        .map(|per_s| per_s.iter().map(|&r| r as f64 / m as f64).collect())
        .collect();
    Ok(PowerCurve {
        scenario: template.clone(),
        tests: tests.to_vec(),
        sparsity_grid: sparsity_grid.to_vec(),
        estimates,
        rejections,
        kappas,
        mc_reps: m,
        corrected: true,
    })
}

/// Renders rows as the study CSV.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out =
        String::from("n,p,innovation,rho,test,s,kappa,rejections,reps,rate,se,corrected\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.p,
            r.innovation,
            r.rho,
            r.test,
            r.s,
            r.kappa,
            r.rejections,
            r.reps,
            r.rate,
            r.se,
            r.corrected
        ));
    }
    out
}

/// Provenance record emitted next to every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub master_seed: u64,
    pub b: usize,
    pub m: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    /// Echo of the effective configuration, flag by flag.
    pub config: BTreeMap<String, String>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u128>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, b: usize, m: usize, alpha: f64) -> Self {
        Self {
            command: command.to_string(),
            master_seed,
            b,
            m,
            alpha,
            grid: None,
            config: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: None,
        }
    }

    pub fn with_config(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Innovation;

    fn small_template() -> SimConfig {
        SimConfig::new(24, 40, 0.5, Innovation::Normal, 0).unwrap()
    }

    #[test]
    fn degenerate_level_rejects_everything() {
        let rows = run_size_study(
            &small_template(),
            &[TestId::LStat(5), TestId::Sum],
            30,
            60,
            1.0,
            &RngStream::new(1),
        )
        .unwrap();
        for r in &rows {
            assert_eq!(r.rate, 1.0, "{}", r.test);
        }
    }

    #[test]
    fn size_study_rejects_alternative_template() {
        let bad = small_template().with_sparsity(3, None).unwrap();
        assert!(run_size_study(&bad, &[TestId::Sum], 10, 60, 0.05, &RngStream::new(1)).is_err());
    }

    #[test]
    fn quantile_threshold_direction() {
        // Uniform p-values: threshold sits at alpha.
        let uniform: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let t = pvalue_quantile_threshold(&uniform, 0.05);
        assert!((t - 0.05).abs() < 0.002);
        // Anti-conservative test (p-values compressed toward 0): threshold
        // falls below alpha to compensate.
        let compressed: Vec<f64> = uniform.iter().map(|p| p * p).collect();
        assert!(pvalue_quantile_threshold(&compressed, 0.05) < 0.05);
        // Conservative test: threshold rises above alpha.
        let stretched: Vec<f64> = uniform.iter().map(|p| p.sqrt()).collect();
        assert!(pvalue_quantile_threshold(&stretched, 0.05) > 0.05);
    }

    #[test]
    fn corrected_thresholds_restore_size() {
        // Closed loop: calibrate on one null sample, verify size on a fresh
        // one; both estimates carry Monte-Carlo error.
        let template = small_template();
        let tests = [TestId::LStat(5), TestId::LStat(20)];
        let thresholds = empirical_critical_values(
            &template,
            &tests,
            2000,
            100,
            0.05,
            &RngStream::new(101),
        )
        .unwrap();
        let fresh = pvalue_study(&template, &tests, 2000, 100, &RngStream::new(202)).unwrap();
        for (t, ps) in tests.iter().zip(&fresh.pvals) {
            let thr = thresholds.get(*t).unwrap();
            let rate = ps.iter().filter(|&&p| p <= thr).count() as f64 / 2000.0;
            assert!((rate - 0.05).abs() < 0.015, "{t}: corrected size {rate}");
        }
    }

    #[test]
    fn zero_signal_power_is_size() {
        let template = small_template();
        let tests = [TestId::LStat(5), TestId::Sum];
        let thresholds = Thresholds::nominal(&tests, 0.05);
        let mut with_zero_kappa = template.clone();
        with_zero_kappa.kappa = Some(0.0);
        let curve = run_power_sweep(
            &with_zero_kappa,
            &tests,
            &[3, 10],
            400,
            80,
            &thresholds,
            &RngStream::new(7),
        )
        .unwrap();
        for t in tests {
            for &s in &[3usize, 10] {
                let rate = curve.rate(t, s).unwrap();
                assert!((rate - 0.05).abs() < 0.045, "{t} at s = {s}: {rate}");
            }
        }
        assert_eq!(curve.kappas, vec![0.0, 0.0]);
    }

    #[test]
    fn csv_shape_and_determinism_across_pools() {
        let template = small_template();
        let tests = [TestId::LStat(5), TestId::Adaptive];
        let run_in = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let rows = run_size_study(&template, &tests, 40, 60, 0.05, &RngStream::new(5))
                    .unwrap();
                rows_to_csv(&rows)
            })
        };
        let a = run_in(1);
        let b = run_in(4);
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("n,p,innovation"));
        assert!(lines[1].starts_with("24,40,normal,0.5,T5,0,0,"));
    }

    #[test]
    fn manifest_round_trips() {
        let m = RunManifest::new("simulate", 9, 500, 1000, 0.05)
            .with_config("innovation", "t3")
            .with_config("out", "results/");
        let json = m.to_json();
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.master_seed, 9);
        assert_eq!(back.config.get("innovation").unwrap(), "t3");
        assert!(back.wall_time_ms.is_none());
    }
}
