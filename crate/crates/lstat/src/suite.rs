//! Runs a set of named tests on one dataset from a single shared
//! wild-bootstrap pass.

use std::fmt;
use std::str::FromStr;

use crate::adaptive::{adaptive_from_distribution, TestReport};
use crate::bootstrap::{
    wild_bootstrap, wild_bootstrap_with_power_sums, BootstrapDistribution,
};
use crate::competitors::{adaq_from_distribution, com_test, max_test, sum_test};
use crate::error::{Error, Result};
use crate::numstat::RngStream;
use crate::panel::{KGrid, SampleMatrix};

/// Panel sizes at and above this use the bootstrap-normal calibration; the
/// `T_k` distribution is close enough to normal from roughly k = 20 up.
pub const DIVERGING_MIN_K: usize = 20;

/// A test selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestId {
    /// `T_k`: empirical calibration below [`DIVERGING_MIN_K`], normal above.
    LStat(usize),
    /// The adaptive Cauchy combination over the default grid.
    Adaptive,
    Max,
    Sum,
    Com,
    AdaQ,
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestId::LStat(k) => write!(f, "T{k}"),
            TestId::Adaptive => write!(f, "TC"),
            TestId::Max => write!(f, "MAX"),
            TestId::Sum => write!(f, "SUM"),
            TestId::Com => write!(f, "COM"),
            TestId::AdaQ => write!(f, "adaQ"),
        }
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        match trimmed.to_ascii_uppercase().as_str() {
            "TC" | "T_C" => return Ok(TestId::Adaptive),
            "MAX" => return Ok(TestId::Max),
            "SUM" => return Ok(TestId::Sum),
            "COM" => return Ok(TestId::Com),
            "ADAQ" => return Ok(TestId::AdaQ),
            _ => {}
        }
        if let Some(num) = trimmed.strip_prefix('T').or_else(|| trimmed.strip_prefix('t')) {
            if let Ok(k) = num.parse::<usize>() {
                if k >= 1 {
                    return Ok(TestId::LStat(k));
                }
            }
        }
        Err(Error::UnknownTest(trimmed.to_string()))
    }
}

/// Parses a comma-separated test list.
pub fn parse_test_list(s: &str) -> Result<Vec<TestId>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(TestId::from_str)
        .collect()
}

/// The smallest k-grid a shared pass must cover for `tests`; the adaptive
/// test enumerates `adaptive_members` when given, or the default grid.
pub fn required_grid(
    tests: &[TestId],
    p: usize,
    adaptive_members: Option<&KGrid>,
) -> Result<KGrid> {
    let mut ks: Vec<usize> = Vec::new();
    for t in tests {
        match t {
            TestId::LStat(k) => {
                if *k > p {
                    return Err(Error::KOutOfRange { k: *k, p });
                }
                ks.push(*k);
            }
            TestId::Adaptive => match adaptive_members {
                Some(g) => ks.extend(g.ks()),
                None => ks.extend(KGrid::default_for_dimension(p)?.ks()),
            },
            TestId::Max | TestId::AdaQ => ks.push(1),
            TestId::Sum => ks.push(p),
            TestId::Com => {
                ks.push(1);
                ks.push(p);
            }
        }
    }
    if let Some(g) = adaptive_members {
        ks.extend(g.ks());
    }
    ks.sort_unstable();
    ks.dedup();
    KGrid::new(ks, p)
}

/// Runs every requested test off one wild-bootstrap pass.
///
/// Power sums are recorded only when adaQ is requested. The same stream fed
/// to a standalone test function reproduces the identical replicates, so
/// sharing the pass changes nothing but the cost. `adaptive_members`
/// overrides the adaptive test's default grid (mandatory for p < 40).
pub fn run_tests(
    x: &SampleMatrix,
    tests: &[TestId],
    b: usize,
    alpha: f64,
    stream: RngStream,
    adaptive_members: Option<&KGrid>,
) -> Result<Vec<TestReport>> {
    let grid = required_grid(tests, x.p(), adaptive_members)?;
    let needs_power = tests.contains(&TestId::AdaQ);
    let dist = if needs_power {
        wild_bootstrap_with_power_sums(x, &grid, b, stream)?
    } else {
        wild_bootstrap(x, &grid, b, stream)?
    };
    run_tests_from_distribution(x, tests, &dist, alpha, adaptive_members)
}

/// Same as [`run_tests`] but reusing an existing pass.
pub fn run_tests_from_distribution(
    x: &SampleMatrix,
    tests: &[TestId],
    dist: &BootstrapDistribution,
    alpha: f64,
    adaptive_members: Option<&KGrid>,
) -> Result<Vec<TestReport>> {
    let panel = x.t_statistics();
    tests
        .iter()
        .map(|t| match t {
            TestId::LStat(k) => {
                let observed = panel.l_statistic(*k)?;
                let (p, method) = if *k < DIVERGING_MIN_K {
                    (dist.p_value_fixed_k(observed, *k)?, "empirical")
                } else {
                    (dist.p_value_diverging_k(observed, *k)?, "normal")
                };
                Ok(TestReport::new(t.to_string(), observed, p, alpha)
                    .with_calibration(dist)
                    .with_meta("k", *k)
                    .with_meta("method", method))
            }
            TestId::Adaptive => {
                let members = match adaptive_members {
                    Some(g) => g.clone(),
                    None => KGrid::default_for_dimension(x.p())?,
                };
                adaptive_from_distribution(&panel, dist, &members, alpha)
            }
            TestId::Max => max_test(x, dist, alpha),
            TestId::Sum => sum_test(x, dist, alpha),
            TestId::Com => com_test(x, dist, alpha),
            TestId::AdaQ => adaq_from_distribution(x, dist, alpha),
        })
        .collect()
}
