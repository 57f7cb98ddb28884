//! Returns-data pipeline: ingest weekly returns and a risk-free series, form
//! excess returns, screen out autocorrelated stocks with a Ljung-Box test,
//! run the location tests, mark per-stock discoveries by Benjamini-Hochberg,
//! and estimate subsample rejection rates.
//!
//! No market dataset ships with the crate; [`synthetic_panel`] generates a
//! look-alike fixture (weekly panel with a configurable share of
//! autocorrelated series and planted nonzero excess means) so the whole
//! pipeline can run end to end.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numstat::{gammq, student_t_cdf, Probability, RngStream};
use crate::panel::SampleMatrix;
use crate::suite::{run_tests, TestId};

/// Aligned dates, tickers, returns and risk-free rates.
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    dates: Vec<String>,
    tickers: Vec<String>,
    /// Row-major T×p.
    returns: Vec<f64>,
    riskfree: Vec<f64>,
}

impl ReturnsPanel {
    pub fn new(
        dates: Vec<String>,
        tickers: Vec<String>,
        returns: Vec<f64>,
        riskfree: Vec<f64>,
    ) -> Result<Self> {
        let t = dates.len();
        let p = tickers.len();
        if t < 30 {
            return Err(Error::SampleTooSmall { needed: 30, have: t });
        }
        if returns.len() != t * p || riskfree.len() != t {
            return Err(Error::Domain("panel shape mismatch".into()));
        }
        Ok(Self {
            dates,
            tickers,
            returns,
            riskfree,
        })
    }

    pub fn t_len(&self) -> usize {
        self.dates.len()
    }

    pub fn p(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Excess-return series of stock `j`.
    pub fn excess_series(&self, j: usize) -> Vec<f64> {
        let p = self.p();
        (0..self.t_len())
            .map(|i| self.returns[i * p + j] - self.riskfree[i])
            .collect()
    }

    /// Excess returns of the selected stocks as a testable matrix.
    pub fn excess_matrix(&self, cols: &[usize]) -> Result<SampleMatrix> {
        let p = self.p();
        let mut data = Vec::with_capacity(self.t_len() * cols.len());
        for i in 0..self.t_len() {
            for &j in cols {
                data.push(self.returns[i * p + j] - self.riskfree[i]);
            }
        }
        SampleMatrix::from_flat(data, self.t_len(), cols.len())
    }
}

/// A loaded panel plus ingestion notes.
#[derive(Debug)]
pub struct LoadOutcome {
    pub panel: ReturnsPanel,
    /// Rows dropped for missing cells or missing risk-free dates.
    pub dropped_rows: usize,
}

/// Loads a wide returns CSV (`date,TICKER,...`) and a risk-free CSV
/// (`date,rate`), inner-joining on the exact date string and sorting by
/// date. Rows with any empty cell are dropped and counted.
pub fn load_returns(returns_path: &Path, riskfree_path: &Path) -> Result<LoadOutcome> {
    let mut rf_reader = csv::Reader::from_path(riskfree_path)?;
    let rf_header = rf_reader.headers()?.clone();
    if rf_header.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "risk-free file needs a `date,rate` header, found {} columns",
                rf_header.len()
            ),
        });
    }
    let mut riskfree: std::collections::HashMap<String, f64> = std::collections::HashMap::new();
    for record in rf_reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date = record.get(0).unwrap_or("").trim();
        let rate = record.get(1).unwrap_or("").trim();
        if date.is_empty() || rate.is_empty() {
            continue;
        }
        let rate: f64 = rate.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad risk-free rate {rate:?}"),
        })?;
        riskfree.insert(date.to_string(), rate);
    }

    let mut reader = csv::Reader::from_path(returns_path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "returns file needs a `date,<ticker>,...` header".into(),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let p = tickers.len();

    let mut rows: Vec<(String, Vec<f64>, f64)> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != p + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        let date = record.get(0).unwrap_or("").trim().to_string();
        if date.is_empty() {
            dropped += 1;
            continue;
        }
        let mut values = Vec::with_capacity(p);
        let mut gap = false;
        for field in record.iter().skip(1) {
            let field = field.trim();
            if field.is_empty() {
                gap = true;
                break;
            }
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad return value {field:?}"),
            })?);
        }
        if gap {
            dropped += 1;
            continue;
        }
        match riskfree.get(&date) {
            Some(&rate) => rows.push((date, values, rate)),
            None => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::MisalignedDates("duplicate dates in returns".into()));
    }

    let dates: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    let riskfree: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mut returns = Vec::with_capacity(rows.len() * p);
    for (_, values, _) in &rows {
        returns.extend_from_slice(values);
    }
    Ok(LoadOutcome {
        panel: ReturnsPanel::new(dates, tickers, returns, riskfree)?,
        dropped_rows: dropped,
    })
}

/// Ljung-Box portmanteau statistic and its chi-square p-value.
#[derive(Debug, Clone, Copy)]
pub struct LjungBox {
    pub q: f64,
    pub p_value: Probability,
}

/// `Q = T(T+2) Σ_{k=1..lag} ρ̂_k² / (T-k)` against a χ²(lag) reference.
pub fn ljung_box(series: &[f64], lag: usize) -> Result<LjungBox> {
    let t = series.len();
    if lag == 0 || 2 * lag >= t {
        return Err(Error::Domain(format!(
            "ljung-box lag {lag} out of range for series length {t}"
        )));
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let centered: Vec<f64> = series.iter().map(|&x| x - mean).collect();
    let denom: f64 = centered.iter().map(|&x| x * x).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let mut q = 0.0;
    for k in 1..=lag {
        let num: f64 = centered[k..]
            .iter()
            .zip(&centered[..t - k])
            .map(|(&a, &b)| a * b)
            .sum();
        let rho = num / denom;
        q += rho * rho / (t - k) as f64;
    }
    q *= t as f64 * (t as f64 + 2.0);
    let p_value = Probability::from_clamped(gammq(lag as f64 / 2.0, q / 2.0)?);
    Ok(LjungBox { q, p_value })
}

/// A ticker removed by the autocorrelation screen.
#[derive(Debug, Clone, Serialize)]
pub struct DroppedTicker {
    pub ticker: String,
    pub q: f64,
    pub p_value: f64,
}

/// Outcome of the per-stock Ljung-Box screen.
#[derive(Debug, Clone)]
pub struct ScreeningResult {
    pub kept: Vec<String>,
    pub kept_idx: Vec<usize>,
    pub dropped: Vec<DroppedTicker>,
    pub lag: usize,
    pub level: f64,
}

/// Keeps the stocks whose excess-return series show no autocorrelation at
/// the given level (`p > level`).
pub fn screen_autocorrelation(
    panel: &ReturnsPanel,
    lag: usize,
    level: f64,
) -> Result<ScreeningResult> {
    let results: Vec<(usize, LjungBox)> = (0..panel.p())
        .into_par_iter()
        .map(|j| Ok((j, ljung_box(&panel.excess_series(j), lag)?)))
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut kept_idx = Vec::new();
    let mut dropped = Vec::new();
    for (j, lb) in results {
        if lb.p_value.get() > level {
            kept.push(panel.tickers()[j].clone());
            kept_idx.push(j);
        } else {
            dropped.push(DroppedTicker {
                ticker: panel.tickers()[j].clone(),
                q: lb.q,
                p_value: lb.p_value.get(),
            });
        }
    }
    Ok(ScreeningResult {
        kept,
        kept_idx,
        dropped,
        lag,
        level,
    })
}

/// Benjamini-Hochberg step-up at FDR level `q`: the indices of the
/// discoveries (empty when nothing clears the staircase).
pub fn bh_discoveries(pvals: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("FDR level {q} outside (0, 1)")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut cutoff = 0usize;
    for (rank, &idx) in order.iter().enumerate() {
        if pvals[idx] <= (rank + 1) as f64 * q / m as f64 {
            cutoff = rank + 1;
        }
    }
    let mut hits: Vec<usize> = order[..cutoff].to_vec();
    hits.sort_unstable();
    Ok(hits)
}

/// Per-stock t-statistic and two-sided Student-t p-value, with its BH flag.
#[derive(Debug, Clone, Serialize)]
pub struct StockStat {
    pub ticker: String,
    pub t_stat: f64,
    pub p_value: f64,
    pub bh_reject: bool,
}

/// Classic per-stock t-tests of zero mean excess return, flagged by
/// Benjamini-Hochberg at FDR `q`.
pub fn per_stock_stats(x: &SampleMatrix, tickers: &[String], q: f64) -> Result<Vec<StockStat>> {
    if tickers.len() != x.p() {
        return Err(Error::Domain(format!(
            "{} tickers for {} columns",
            tickers.len(),
            x.p()
        )));
    }
    let panel = x.t_statistics();
    let df = x.n() - 1;
    let pvals: Vec<f64> = panel
        .t()
        .iter()
        .map(|&t| Ok(2.0 * (1.0 - student_t_cdf(t.abs(), df)?.get())))
        .collect::<Result<_>>()?;
    let hits = bh_discoveries(&pvals, q)?;
    let mut flags = vec![false; x.p()];
    for &j in &hits {
        flags[j] = true;
    }
    Ok(tickers
        .iter()
        .zip(panel.t())
        .zip(pvals.iter().zip(flags))
        .map(|((ticker, &t), (&p, bh))| StockStat {
            ticker: ticker.clone(),
            t_stat: t,
            p_value: p,
            bh_reject: bh,
        })
        .collect())
}

/// One row of the subsample rejection-rate study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub test: String,
    pub rate: f64,
    pub se: f64,
}

/// For each subsample size, draws `m` without-replacement row subsamples and
/// records each test's rejection rate at level `alpha`.
pub fn subsample_study(
    x: &SampleMatrix,
    n_list: &[usize],
    tests: &[TestId],
    m: usize,
    b: usize,
    alpha: f64,
    stream: &RngStream,
) -> Result<Vec<StudyRow>> {
    let t_rows = x.n();
    if n_list.iter().any(|&n| n > t_rows || n < 4) {
        return Err(Error::Domain(format!(
            "subsample sizes {n_list:?} outside 4..={t_rows}"
        )));
    }
    let mut rows = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        let level_stream = stream.derive(ni as u64);
        let rejects: Vec<Vec<bool>> = (0..m)
            .into_par_iter()
            .map(|rep| {
                let rs = level_stream.derive(rep as u64);
                let idx = sample_without_replacement(t_rows, n, &rs.derive(0));
                let sub_rows: Vec<Vec<f64>> = idx.iter().map(|&i| x.row(i).to_vec()).collect();
                let sub = SampleMatrix::from_rows(&sub_rows)?;
                let reports = run_tests(&sub, tests, b, alpha, rs.derive(1), None)?;
                Ok(reports.iter().map(|r| r.reject).collect::<Vec<bool>>())
            })
            .collect::<Result<_>>()?;
        for (ti, test) in tests.iter().enumerate() {
            let count = rejects.iter().filter(|r| r[ti]).count();
            let rate = count as f64 / m as f64;
            rows.push(StudyRow {
                n,
                test: test.to_string(),
                rate,
                se: (rate * (1.0 - rate) / m as f64).sqrt(),
            });
        }
    }
    Ok(rows)
}

fn sample_without_replacement(total: usize, take: usize, stream: &RngStream) -> Vec<usize> {
    use rand::Rng;
    let mut rng = stream.rng();
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..take {
        let j = i + rng.random_range(0..total - i);
        idx.swap(i, j);
    }
    idx.truncate(take);
    idx
}

// ---------------------------------------------------------------------------
// Synthetic look-alike panel
// ---------------------------------------------------------------------------

/// Shape of the bundled synthetic weekly panel.
#[derive(Debug, Clone)]
pub struct SyntheticPanelSpec {
    /// Number of weeks.
    pub t: usize,
    /// Number of stocks.
    pub p: usize,
    /// Stocks given an AR(1) excess-return series (screened out later).
    pub autocorrelated: usize,
    /// AR(1) coefficient of those series.
    pub phi: f64,
    /// Stocks with a genuine nonzero mean excess return.
    pub planted: usize,
    /// Planted per-stock t-scale: mean = signal_t * vol / sqrt(T).
    pub signal_t: f64,
    /// Weekly return volatility.
    pub weekly_vol: f64,
    /// Constant weekly risk-free rate.
    pub riskfree_rate: f64,
}

impl Default for SyntheticPanelSpec {
    fn default() -> Self {
        // 424 stocks over 501 weeks; about 95% of the 295 clean series
        // survive a level-0.05 screen, leaving roughly 280 stocks.
        Self {
            t: 501,
            p: 424,
            autocorrelated: 129,
            phi: 0.3,
            planted: 17,
            signal_t: 5.0,
            weekly_vol: 0.03,
            riskfree_rate: 0.0005,
        }
    }
}

/// Generates the synthetic weekly panel: planted-signal stocks first, then
/// autocorrelated stocks, then clean nulls.
pub fn synthetic_panel(spec: &SyntheticPanelSpec, stream: &RngStream) -> Result<ReturnsPanel> {
    use rand::Rng;
    if spec.planted + spec.autocorrelated > spec.p {
        return Err(Error::Domain(
            "planted + autocorrelated exceeds the stock count".into(),
        ));
    }
    let dates: Vec<String> = (0..spec.t).map(|w| weekly_date(w)).collect();
    let tickers: Vec<String> = (0..spec.p).map(|j| format!("S{:03}", j + 1)).collect();
    let signal_mu = spec.signal_t * spec.weekly_vol / (spec.t as f64).sqrt();

    let mut returns = vec![0.0f64; spec.t * spec.p];
    for j in 0..spec.p {
        let mut rng = stream.derive(j as u64).rng();
        let mu = if j < spec.planted { signal_mu } else { 0.0 };
        let ar = j >= spec.planted && j < spec.planted + spec.autocorrelated;
        let innovation_scale = (1.0 - spec.phi * spec.phi).sqrt();
        let mut prev = 0.0f64;
        for i in 0..spec.t {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let e = if ar {
                let e = spec.phi * prev + innovation_scale * z;
                prev = e;
                e
            } else {
                z
            };
            returns[i * spec.p + j] = spec.riskfree_rate + mu + spec.weekly_vol * e;
        }
    }
    let riskfree = vec![spec.riskfree_rate; spec.t];
    ReturnsPanel::new(dates, tickers, returns, riskfree)
}

/// ISO date of week `w` of the synthetic panel (weekly from 2009-02-06).
fn weekly_date(week: usize) -> String {
    // 2009-02-06 is 14281 days after 1970-01-01.
    let days = 14281i64 + 7 * week as i64;
    let (y, m, d) = civil_from_days(days);
    format!("{y:04}-{m:02}-{d:02}")
}

/// Gregorian date from days since 1970-01-01 (Howard Hinnant's algorithm).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (y + (m <= 2) as i64, m, d)
}

/// Writes the panel out as the `returns.csv` / `riskfree.csv` pair consumed
/// by [`load_returns`].
pub fn write_panel_csvs(panel: &ReturnsPanel, dir: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut returns = String::from("date");
    for t in panel.tickers() {
        write!(returns, ",{t}").unwrap();
    }
    returns.push('\n');
    let p = panel.p();
    for (i, date) in panel.dates().iter().enumerate() {
        write!(returns, "{date}").unwrap();
        for j in 0..p {
            write!(returns, ",{}", panel.returns[i * p + j]).unwrap();
        }
        returns.push('\n');
    }
    std::fs::write(dir.join("returns.csv"), returns)?;

    let mut rf = String::from("date,rate\n");
    for (date, rate) in panel.dates().iter().zip(&panel.riskfree) {
        writeln!(rf, "{date},{rate}").unwrap();
    }
    std::fs::write(dir.join("riskfree.csv"), rf)?;
    Ok(())
}

/// Renders the per-stock table CSV (`ticker,t_stat,p_value,bh_reject`).
pub fn stocks_to_csv(stats: &[StockStat]) -> String {
    let mut out = String::from("ticker,t_stat,p_value,bh_reject\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.ticker, s.t_stat, s.p_value, s.bh_reject
        ));
    }
    out
}

/// Renders the subsample-study CSV (`n,test,rate,se`).
pub fn study_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("n,test,rate,se\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.n, r.test, r.rate, r.se));
    }
    out
}

/// Renders the screening CSV (`ticker,q,p_value,kept`).
pub fn screening_to_csv(panel: &ReturnsPanel, screening: &ScreeningResult) -> Result<String> {
    let mut out = String::from("ticker,q,p_value,kept\n");
    let dropped: std::collections::HashMap<&str, &DroppedTicker> = screening
        .dropped
        .iter()
        .map(|d| (d.ticker.as_str(), d))
        .collect();
    for (j, ticker) in panel.tickers().iter().enumerate() {
        if let Some(d) = dropped.get(ticker.as_str()) {
            out.push_str(&format!("{},{},{},false\n", d.ticker, d.q, d.p_value));
        } else {
            let lb = ljung_box(&panel.excess_series(j), screening.lag)?;
            out.push_str(&format!(
                "{},{},{},true\n",
                ticker,
                lb.q,
                lb.p_value.get()
            ));
        }
    }
    Ok(out)
}
