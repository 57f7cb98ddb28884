//! Data model: the observation matrix, per-variable t-statistics, and the
//! L-statistic panel answering `T_k` for every `k` at once.
//!
//! `T_k` sums the `k` largest squared t-statistics. One descending sort of
//! the squares plus a prefix-sum pass costs O(p log p) and then every `k`
//! is an O(1) lookup, which is what both the adaptive test (several `k` per
//! dataset) and the bootstrap (several hundred panels per test) need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n×p observation matrix (rows = observations) with its column moments
/// cached. Construction rejects degenerate input: fewer than 4 rows,
/// non-finite entries, or any column with non-positive sample variance.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    data: Vec<f64>, // row-major, n*p
    n: usize,
    p: usize,
    moments: ColumnMoments,
}

/// Column sample means and unbiased (n-1 divisor) variances.
#[derive(Debug, Clone)]
pub struct ColumnMoments {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Domain("ragged rows in sample matrix".into()));
        }
        let mut data = Vec::with_capacity(n * p);
        for row in rows {
            data.extend_from_slice(row);
        }
        Self::from_flat(data, n, p)
    }

    pub fn from_flat(data: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("sample matrix needs p >= 1".into()));
        }
        if n < 4 {
            return Err(Error::SampleTooSmall { needed: 4, have: n });
        }
        if data.len() != n * p {
            return Err(Error::Domain(format!(
                "flat data length {} does not match {n}x{p}",
                data.len()
            )));
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / p,
                    col: idx % p,
                });
            }
        }
        let moments = compute_moments(&data, n, p)?;
        Ok(Self { data, n, p, moments })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Cached column means and variances.
    pub fn column_moments(&self) -> &ColumnMoments {
        &self.moments
    }

    /// Per-variable t-statistics `sqrt(n) * mean / sd` with the ordered
    /// squares and their prefix sums.
    pub fn t_statistics(&self) -> TStatPanel {
        let root_n = (self.n as f64).sqrt();
        let t: Vec<f64> = self
            .moments
            .means
            .iter()
            .zip(&self.moments.variances)
            .map(|(&m, &v)| root_n * m / v.sqrt())
            .collect();
        TStatPanel::from_t_values(t)
    }
}

fn compute_moments(data: &[f64], n: usize, p: usize) -> Result<ColumnMoments> {
    let mut means = vec![0.0; p];
    for i in 0..n {
        let row = &data[i * p..(i + 1) * p];
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    for m in &mut means {
        *m *= inv_n;
    }
    let mut variances = vec![0.0; p];
    for i in 0..n {
        let row = &data[i * p..(i + 1) * p];
        for ((s, &v), &m) in variances.iter_mut().zip(row).zip(&means) {
            let d = v - m;
            *s += d * d;
        }
    }
    let inv_nm1 = 1.0 / (n as f64 - 1.0);
    for (j, s) in variances.iter_mut().enumerate() {
        *s *= inv_nm1;
        if *s <= 0.0 {
            return Err(Error::DegenerateColumn {
                index: j,
                variance: *s,
            });
        }
    }
    Ok(ColumnMoments { means, variances })
}

/// t-statistics together with their descending-sorted squares and prefix
/// sums, so `T_k = prefix[k-1]` for every `k`.
#[derive(Debug, Clone)]
pub struct TStatPanel {
    t: Vec<f64>,
    sorted_sq: Vec<f64>,
    prefix: Vec<f64>,
}

impl TStatPanel {
    /// Builds the panel from raw t-statistics.
    pub fn from_t_values(t: Vec<f64>) -> Self {
        let mut sorted_sq: Vec<f64> = t.iter().map(|&v| v * v).collect();
        sorted_sq.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(sorted_sq.len());
        let mut acc = 0.0;
        for &v in &sorted_sq {
            acc += v;
            prefix.push(acc);
        }
        Self { t, sorted_sq, prefix }
    }

    pub fn p(&self) -> usize {
        self.t.len()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Squared t-statistics in non-increasing order.
    pub fn sorted_sq(&self) -> &[f64] {
        &self.sorted_sq
    }

    /// `T_k`, the sum of the `k` largest squared t-statistics.
    pub fn l_statistic(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.prefix.len() {
            return Err(Error::KOutOfRange {
                k,
                p: self.prefix.len(),
            });
        }
        Ok(self.prefix[k - 1])
    }

    /// `T_1 = max_i t_i^2`.
    pub fn max_sq(&self) -> f64 {
        self.prefix[0]
    }

    /// `T_p = sum_i t_i^2`.
    pub fn sum_sq(&self) -> f64 {
        self.prefix[self.prefix.len() - 1]
    }
}

/// A strictly increasing set of panel indices `k` in `[1, p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGrid {
    ks: Vec<usize>,
}

impl KGrid {
    pub fn new(ks: Vec<usize>, p: usize) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if !ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidGrid(format!(
                "grid {ks:?} is not strictly increasing"
            )));
        }
        if ks[0] < 1 || *ks.last().unwrap() > p {
            return Err(Error::InvalidGrid(format!(
                "grid {ks:?} outside 1..={p}"
            )));
        }
        Ok(Self { ks })
    }

    /// The default grid `{5} ∪ {ceil(p / 2^i) : i = 1..K}` with
    /// `K = floor(log2(p / 20))`, defined for p >= 40.
    pub fn default_for_dimension(p: usize) -> Result<Self> {
        if p < 40 {
            return Err(Error::DimensionTooSmall { p });
        }
        let mut ks = vec![5usize];
        let mut i = 1u32;
        // K = largest i with 20 * 2^i <= p, i.e. ceil(p / 2^K) is still >= 20.
        while 20usize << i <= p {
            ks.push(p.div_ceil(1 << i));
            i += 1;
        }
        ks.sort_unstable();
        ks.dedup();
        Self::new(ks, p)
    }

    /// Number of diverging members `K` when this grid came from
    /// [`KGrid::default_for_dimension`]; equal weights are `1/(K+1)`.
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn contains(&self, k: usize) -> bool {
        self.ks.binary_search(&k).is_ok()
    }

    pub fn position(&self, k: usize) -> Option<usize> {
        self.ks.binary_search(&k).ok()
    }

    /// Smallest grid covering both operands.
    pub fn union(&self, other: &KGrid, p: usize) -> Result<KGrid> {
        let mut ks: Vec<usize> = self.ks.iter().chain(&other.ks).copied().collect();
        ks.sort_unstable();
        ks.dedup();
        KGrid::new(ks, p)
    }
}
