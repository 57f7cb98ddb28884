//! `lstat` command line: test a dataset, run simulation studies, run the
//! returns pipeline.
//!
//! Exit codes: 0 the run completed (whatever the test decisions), 2 usage or
//! data errors, 3 internal numerical failures.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lstat::experiments::{
    empirical_critical_values, rows_to_csv, run_power_sweep, run_size_study, RunManifest,
};
use lstat::realdata::{
    load_returns, per_stock_stats, screen_autocorrelation, screening_to_csv, stocks_to_csv,
    study_to_csv, subsample_study, synthetic_panel, write_panel_csvs, ReturnsPanel,
    SyntheticPanelSpec,
};
use lstat::simgen::{Innovation, SimConfig};
use lstat::suite::parse_test_list;
use lstat::{Error, KGrid, Result, RngStream, SampleMatrix, TestId, TestReport};

use config::{resolve, resolve_opt, ConfigFile};

#[derive(Parser)]
#[command(
    name = "lstat",
    version,
    about = "High-dimensional one-sample location tests: L-statistics with wild-bootstrap calibration and an adaptive Cauchy combination"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tests on an n x p numeric CSV (header row, rows = observations).
    Test(TestArgs),
    /// Monte-Carlo size and power studies on synthetic data.
    Simulate(SimulateArgs),
    /// Returns pipeline: screening, per-stock table, discoveries, subsample study.
    Portfolio(PortfolioArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV with a header row; every non-date column must be numeric.
    input: PathBuf,
    /// Comma-separated tests: T<k>, TC, MAX, SUM, COM, adaQ [default: TC].
    #[arg(long)]
    tests: Option<String>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap replicates [default: 500].
    #[arg(long = "B")]
    b: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Adaptive member grid, e.g. 5,25,50 (required for TC when p < 40).
    #[arg(long = "k-grid")]
    k_grid: Option<String>,
    /// Also write machine-readable reports to this JSON file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// key = value defaults file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sample size [default: 100].
    #[arg(long)]
    n: Option<usize>,
    /// Dimension [default: 100].
    #[arg(long)]
    p: Option<usize>,
    /// Innovation law: normal | t3 | mixnormal [default: normal].
    #[arg(long)]
    innovation: Option<String>,
    /// AR(1) covariance parameter [default: 0.5].
    #[arg(long)]
    rho: Option<f64>,
    /// Sparsity levels: 0 for a size study, else a comma list (1,2,5) or a
    /// range start:end:step (1:100:5) for a size-corrected power sweep
    /// [default: 0].
    #[arg(long = "sparsity-grid")]
    sparsity_grid: Option<String>,
    /// Signal size; defaults to 3 sqrt(log(p)/(n s)).
    #[arg(long)]
    kappa: Option<f64>,
    /// Monte-Carlo replications [default: 1000].
    #[arg(long = "M")]
    m: Option<usize>,
    /// Bootstrap replicates [default: 500].
    #[arg(long = "B")]
    b: Option<usize>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Tests to run [default: the default-grid L-statistics plus TC].
    #[arg(long)]
    tests: Option<String>,
    /// Output directory [default: .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// key = value defaults file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PortfolioArgs {
    /// Wide returns CSV: header `date,<ticker>,...`.
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Risk-free CSV: header `date,rate`.
    #[arg(long)]
    riskfree: Option<PathBuf>,
    /// Generate the bundled synthetic look-alike panel instead of loading
    /// files (written to the output directory for provenance).
    #[arg(long)]
    synthetic: bool,
    /// Ljung-Box screening lag [default: 10].
    #[arg(long)]
    lag: Option<usize>,
    /// FDR level for Benjamini-Hochberg discoveries [default: 0.01].
    #[arg(long)]
    fdr: Option<f64>,
    /// Subsample sizes, comma separated [default: 100,150,200,250,300].
    #[arg(long = "n-list")]
    n_list: Option<String>,
    /// Subsample replications per size [default: 1000].
    #[arg(long = "M")]
    m: Option<usize>,
    /// Bootstrap replicates [default: 500].
    #[arg(long = "B")]
    b: Option<usize>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Tests to run [default: MAX,T5,T<p/8>,T<p/4>,T<p/2>,SUM,TC,COM,adaQ].
    #[arg(long)]
    tests: Option<String>,
    /// Output directory [default: .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// key = value defaults file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Test(args) => run_test(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Portfolio(args) => run_portfolio(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 2 for usage/data errors, 3 for internal numerical failures.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Calibration(_)
        | Error::NotPositiveDefinite { .. }
        | Error::WeightMismatch { .. }
        | Error::BoundaryPValue(_) => 3,
        _ => 2,
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error if a pool already exists (tests, repeated init).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Domain(format!("bad integer {t:?} in list")))
        })
        .collect()
}

/// `0`, a comma list, or an inclusive `start:end:step` range.
fn parse_sparsity_grid(s: &str) -> Result<Vec<usize>> {
    if let Some((start, rest)) = s.split_once(':') {
        let (end, step) = rest.split_once(':').ok_or_else(|| {
            Error::Domain(format!("range syntax is start:end:step, got {s:?}"))
        })?;
        let (start, end, step): (usize, usize, usize) = (
            start.trim().parse().map_err(|_| Error::Domain(format!("bad range start in {s:?}")))?,
            end.trim().parse().map_err(|_| Error::Domain(format!("bad range end in {s:?}")))?,
            step.trim().parse().map_err(|_| Error::Domain(format!("bad range step in {s:?}")))?,
        );
        if step == 0 || end < start {
            return Err(Error::Domain(format!("empty range {s:?}")));
        }
        return Ok((start..=end).step_by(step).collect());
    }
    parse_usize_list(s)
}

// ---------------------------------------------------------------------------
// lstat test
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TestRunOutput {
    reports: Vec<TestReport>,
    manifest: RunManifest,
}

fn run_test(args: TestArgs) -> Result<()> {
    init_threads(args.threads);
    let cfg = load_config(&args.config)?;
    let alpha: f64 = resolve(args.alpha, &cfg, "alpha", 0.05)?;
    let b: usize = resolve(args.b, &cfg, "B", 500)?;
    let seed: u64 = resolve(args.seed, &cfg, "seed", 0)?;
    let tests_spec = resolve_opt(args.tests, &cfg, "tests").unwrap_or_else(|| "TC".to_string());
    let tests = parse_test_list(&tests_spec)?;
    if tests.is_empty() {
        return Err(Error::Domain("no tests requested".into()));
    }
    let x = read_sample_csv(&args.input)?;
    let members = match resolve_opt(args.k_grid, &cfg, "k-grid") {
        Some(spec) => Some(KGrid::new(parse_usize_list(&spec)?, x.p())?),
        None => None,
    };

    let stream = RngStream::new(seed);
    let reports = lstat::suite::run_tests(&x, &tests, b, alpha, stream, members.as_ref())?;

    println!(
        "{:<6} {:>14} {:>12} {:>10}   (n = {}, p = {}, B = {}, seed = {})",
        "test",
        "statistic",
        "p-value",
        "decision",
        x.n(),
        x.p(),
        b,
        seed
    );
    for r in &reports {
        println!(
            "{:<6} {:>14.6} {:>12.6} {:>10}",
            r.name,
            r.statistic,
            r.p_value.get(),
            if r.reject { "reject" } else { "retain" }
        );
    }

    let manifest = RunManifest::new("test", seed, b, 1, alpha)
        .with_config("input", args.input.display())
        .with_config("tests", &tests_spec)
        .with_config(
            "k-grid",
            members
                .as_ref()
                .map_or("default".to_string(), |g| format!("{:?}", g.ks())),
        );
    if let Some(path) = &args.json {
        let out = TestRunOutput { reports, manifest };
        std::fs::write(path, serde_json::to_string_pretty(&out).expect("report json"))?;
    } else {
        println!("manifest: {}", serde_json::to_string(&manifest).expect("manifest json"));
    }
    Ok(())
}

fn read_sample_csv(path: &Path) -> Result<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let header_len = reader.headers()?.len();
    if header_len == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "empty header".into(),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header_len {
            return Err(Error::Parse {
                line,
                message: format!("expected {header_len} fields, found {}", record.len()),
            });
        }
        let row: Vec<f64> = record
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric field {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    SampleMatrix::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// lstat simulate
// ---------------------------------------------------------------------------

fn run_simulate(args: SimulateArgs) -> Result<()> {
    init_threads(args.threads);
    let started = Instant::now();
    let cfg = load_config(&args.config)?;
    let n: usize = resolve(args.n, &cfg, "n", 100)?;
    let p: usize = resolve(args.p, &cfg, "p", 100)?;
    let innovation =
        Innovation::from_str(&resolve_opt(args.innovation, &cfg, "innovation")
            .unwrap_or_else(|| "normal".to_string()))?;
    let rho: f64 = resolve(args.rho, &cfg, "rho", 0.5)?;
    let m: usize = resolve(args.m, &cfg, "M", 1000)?;
    let b: usize = resolve(args.b, &cfg, "B", 500)?;
    let alpha: f64 = resolve(args.alpha, &cfg, "alpha", 0.05)?;
    let seed: u64 = resolve(args.seed, &cfg, "seed", 0)?;
    let out: PathBuf = resolve(args.out, &cfg, "out", PathBuf::from("."))?;
    let sparsity_spec =
        resolve_opt(args.sparsity_grid, &cfg, "sparsity-grid").unwrap_or_else(|| "0".to_string());
    let sparsity = parse_sparsity_grid(&sparsity_spec)?;
    if sparsity.is_empty() {
        return Err(Error::Domain("empty sparsity grid".into()));
    }

    let mut template = SimConfig::new(n, p, rho, innovation, seed)?;
    template.kappa = match args.kappa {
        Some(k) => Some(k),
        None => cfg.get::<f64>("kappa")?,
    };

    let tests = match resolve_opt(args.tests, &cfg, "tests") {
        Some(spec) => parse_test_list(&spec)?,
        None => {
            let mut ts: Vec<TestId> = KGrid::default_for_dimension(p)?
                .ks()
                .iter()
                .map(|&k| TestId::LStat(k))
                .collect();
            ts.push(TestId::Adaptive);
            ts
        }
    };

    std::fs::create_dir_all(&out)?;
    let stream = RngStream::new(seed);
    let size_only = sparsity.iter().all(|&s| s == 0);
    let (csv_name, csv_text) = if size_only {
        eprintln!(
            "size study: n = {n}, p = {p}, {innovation}, rho = {rho}, M = {m}, B = {b}"
        );
        let rows = run_size_study(&template, &tests, m, b, alpha, &stream.derive(0))?;
        ("size.csv", rows_to_csv(&rows))
    } else {
        eprintln!(
            "power sweep: n = {n}, p = {p}, {innovation}, rho = {rho}, s in {sparsity:?}, M = {m}, B = {b}"
        );
        eprintln!("calibrating size-corrected thresholds over {m} null runs");
        let thresholds =
            empirical_critical_values(&template, &tests, m, b, alpha, &stream.derive(0))?;
        for (test, thr) in thresholds.iter() {
            eprintln!("  threshold[{test}] = {thr:.6}");
        }
        let curve = run_power_sweep(
            &template,
            &tests,
            &sparsity,
            m,
            b,
            &thresholds,
            &stream.derive(1),
        )?;
        ("power.csv", rows_to_csv(&curve.rows()))
    };
    let csv_path = out.join(csv_name);
    std::fs::write(&csv_path, csv_text)?;

    let mut manifest = RunManifest::new("simulate", seed, b, m, alpha)
        .with_config("n", n)
        .with_config("p", p)
        .with_config("innovation", innovation)
        .with_config("rho", rho)
        .with_config("sparsity-grid", &sparsity_spec)
        .with_config("tests", tests.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","))
        .with_config("out", out.display());
    manifest.wall_time_ms = Some(started.elapsed().as_millis());
    std::fs::write(out.join("manifest.json"), manifest.to_json())?;
    eprintln!(
        "wrote {} and manifest.json in {:.1}s",
        csv_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// lstat portfolio
// ---------------------------------------------------------------------------

fn run_portfolio(args: PortfolioArgs) -> Result<()> {
    init_threads(args.threads);
    let started = Instant::now();
    let cfg = load_config(&args.config)?;
    let lag: usize = resolve(args.lag, &cfg, "lag", 10)?;
    let fdr: f64 = resolve(args.fdr, &cfg, "fdr", 0.01)?;
    let m: usize = resolve(args.m, &cfg, "M", 1000)?;
    let b: usize = resolve(args.b, &cfg, "B", 500)?;
    let alpha: f64 = resolve(args.alpha, &cfg, "alpha", 0.05)?;
    let seed: u64 = resolve(args.seed, &cfg, "seed", 0)?;
    let out: PathBuf = resolve(args.out, &cfg, "out", PathBuf::from("."))?;
    let n_list = parse_usize_list(
        &resolve_opt(args.n_list, &cfg, "n-list").unwrap_or_else(|| "100,150,200,250,300".into()),
    )?;

    std::fs::create_dir_all(&out)?;
    let stream = RngStream::new(seed);

    let panel: ReturnsPanel = if args.synthetic {
        eprintln!("generating the synthetic look-alike panel (501 weeks x 424 stocks)");
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), &stream.derive(1000))?;
        write_panel_csvs(&panel, &out)?;
        panel
    } else {
        let returns = resolve(args.returns, &cfg, "returns", PathBuf::new())?;
        let riskfree = resolve(args.riskfree, &cfg, "riskfree", PathBuf::new())?;
        if returns.as_os_str().is_empty() || riskfree.as_os_str().is_empty() {
            return Err(Error::Domain(
                "--returns and --riskfree are required (or pass --synthetic)".into(),
            ));
        }
        let loaded = load_returns(&returns, &riskfree)?;
        if loaded.dropped_rows > 0 {
            eprintln!(
                "warning: dropped {} rows with gaps or unmatched dates",
                loaded.dropped_rows
            );
        }
        loaded.panel
    };
    eprintln!("panel: T = {}, p = {}", panel.t_len(), panel.p());

    let screening = screen_autocorrelation(&panel, lag, 0.05)?;
    eprintln!(
        "screening kept {} of {} stocks (Ljung-Box lag {lag}, level 0.05)",
        screening.kept.len(),
        panel.p()
    );
    std::fs::write(out.join("screening.csv"), screening_to_csv(&panel, &screening)?)?;

    let x = panel.excess_matrix(&screening.kept_idx)?;
    let stats = per_stock_stats(&x, &screening.kept, fdr)?;
    let discoveries = stats.iter().filter(|s| s.bh_reject).count();
    eprintln!("BH discoveries at FDR {fdr}: {discoveries}");
    std::fs::write(out.join("stocks.csv"), stocks_to_csv(&stats))?;

    let tests = match resolve_opt(args.tests, &cfg, "tests") {
        Some(spec) => parse_test_list(&spec)?,
        None => {
            let p = x.p();
            vec![
                TestId::Max,
                TestId::LStat(5),
                TestId::LStat(p.div_ceil(8)),
                TestId::LStat(p.div_ceil(4)),
                TestId::LStat(p.div_ceil(2)),
                TestId::Sum,
                TestId::Adaptive,
                TestId::Com,
                TestId::AdaQ,
            ]
        }
    };

    println!("full-sample tests (n = {}, p = {}):", x.n(), x.p());
    let reports = lstat::suite::run_tests(&x, &tests, b, alpha, stream.derive(2000), None)?;
    for r in &reports {
        println!(
            "  {:<6} statistic = {:>14.6}  p = {:>10.6}  {}",
            r.name,
            r.statistic,
            r.p_value.get(),
            if r.reject { "reject" } else { "retain" }
        );
    }

    eprintln!(
        "subsample study: n in {n_list:?}, M = {m}, B = {b} (this is the slow part)"
    );
    let rows = subsample_study(&x, &n_list, &tests, m, b, alpha, &stream.derive(3000))?;
    std::fs::write(out.join("study.csv"), study_to_csv(&rows))?;

    let mut manifest = RunManifest::new("portfolio", seed, b, m, alpha)
        .with_config("lag", lag)
        .with_config("fdr", fdr)
        .with_config("n-list", n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","))
        .with_config("synthetic", args.synthetic)
        .with_config("kept", screening.kept.len())
        .with_config("discoveries", discoveries)
        .with_config("tests", tests.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","))
        .with_config("out", out.display());
    manifest.wall_time_ms = Some(started.elapsed().as_millis());
    std::fs::write(out.join("manifest.json"), manifest.to_json())?;
    eprintln!(
        "wrote screening.csv, stocks.csv, study.csv, manifest.json in {:.1}s",
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
