//! Synthetic data generation for the simulation studies: rows
//! `X_i = μ + Σ^{1/2} ε_i` with AR(1) covariance `Σ_{ij} = ρ^{|i-j|}`, three
//! standardized innovation laws, and sparsity-indexed mean vectors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat::RngStream;
use crate::panel::SampleMatrix;

/// Innovation law for ε entries; all three are standardized to mean 0,
/// variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    Normal,
    /// t(3) / sqrt(3).
    T3,
    /// [0.9 N(0,1) + 0.1 N(0,9)] / sqrt(1.8).
    MixNormal,
}

impl std::str::FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Innovation::Normal),
            "t3" => Ok(Innovation::T3),
            "mixnormal" | "mixture" => Ok(Innovation::MixNormal),
            other => Err(Error::Domain(format!("unknown innovation law: {other}"))),
        }
    }
}

impl std::fmt::Display for Innovation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Innovation::Normal => write!(f, "normal"),
            Innovation::T3 => write!(f, "t3"),
            Innovation::MixNormal => write!(f, "mixnormal"),
        }
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// AR(1) parameter of the covariance.
    pub rho: f64,
    pub innovation: Innovation,
    /// Number of nonzero means under the alternative; 0 is the null.
    pub s: usize,
    /// Signal size; `None` uses `3 sqrt(log(p) / (n s))`.
    pub kappa: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, p: usize, rho: f64, innovation: Innovation, seed: u64) -> Result<Self> {
        let cfg = Self {
            n,
            p,
            rho,
            innovation,
            s: 0,
            kappa: None,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sparsity(mut self, s: usize, kappa: Option<f64>) -> Result<Self> {
        self.s = s;
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho {} outside [0, 1)", self.rho)));
        }
        if self.s > self.p {
            return Err(Error::Domain(format!(
                "sparsity {} exceeds dimension {}",
                self.s, self.p
            )));
        }
        if let Some(k) = self.kappa {
            if k < 0.0 {
                return Err(Error::Domain(format!("kappa {k} negative")));
            }
        }
        if self.n < 4 || self.p == 0 {
            return Err(Error::Domain(format!(
                "need n >= 4 and p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        Ok(())
    }

    /// Effective signal size: the explicit value, or `3 sqrt(log p / (n s))`.
    pub fn kappa(&self) -> f64 {
        if self.s == 0 {
            return 0.0;
        }
        self.kappa.unwrap_or_else(|| {
            3.0 * ((self.p as f64).ln() / (self.n as f64 * self.s as f64)).sqrt()
        })
    }
}

/// A symmetric square root of the AR(1) covariance.
#[derive(Debug, Clone)]
pub struct CovFactor {
    p: usize,
    rho: f64,
    /// Row-major p×p; identity is stored implicitly when rho = 0.
    factor: Option<Vec<f64>>,
}

/// Symmetric positive-definite square root of `Σ_{ij} = ρ^{|i-j|}` by
/// eigendecomposition.
pub fn ar1_sqrt(p: usize, rho: f64) -> Result<CovFactor> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho {rho} outside [0, 1)")));
    }
    if rho == 0.0 {
        return Ok(CovFactor {
            p,
            rho,
            factor: None,
        });
    }
    let sigma = nalgebra::DMatrix::from_fn(p, p, |i, j| {
        rho.powi((i as i32 - j as i32).abs())
    });
    let eig = nalgebra::SymmetricEigen::new(sigma);
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.sqrt());
    let scaled = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&sqrt_vals);
    let root = &scaled * eig.eigenvectors.transpose();
    // Symmetrize away the eigensolver's roundoff.
    let mut factor = vec![0.0f64; p * p];
    for i in 0..p {
        for j in 0..p {
            factor[i * p + j] = 0.5 * (root[(i, j)] + root[(j, i)]);
        }
    }
    Ok(CovFactor {
        p,
        rho,
        factor: Some(factor),
    })
}

impl CovFactor {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Entry (i, j) of the root.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.factor {
            Some(f) => f[i * self.p + j],
            None => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `out = factor * eps` for one row.
    fn apply(&self, eps: &[f64], out: &mut [f64]) {
        match &self.factor {
            None => out.copy_from_slice(eps),
            Some(f) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &f[i * self.p..(i + 1) * self.p];
                    *o = row.iter().zip(eps).map(|(&a, &b)| a * b).sum();
                }
            }
        }
    }
}

/// Draws the n×p innovation matrix for the configured law.
pub fn draw_innovations(cfg: &SimConfig, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let total = cfg.n * cfg.p;
    let mut out = Vec::with_capacity(total);
    match cfg.innovation {
        Innovation::Normal => {
            for _ in 0..total {
                out.push(rng.sample::<f64, _>(StandardNormal));
            }
        }
        Innovation::T3 => {
            // t(3)/sqrt(3) = Z / sqrt(W) with W ~ chi-square(3) drawn as a
            // sum of three squared normals.
            for _ in 0..total {
                let z: f64 = rng.sample(StandardNormal);
                let mut w = 0.0;
                for _ in 0..3 {
                    let g: f64 = rng.sample(StandardNormal);
                    w += g * g;
                }
                out.push(z / w.sqrt());
            }
        }
        Innovation::MixNormal => {
            let scale = 1.0 / 1.8f64.sqrt();
            for _ in 0..total {
                let z: f64 = rng.sample(StandardNormal);
                let sd = if rng.random::<f64>() < 0.1 { 3.0 } else { 1.0 };
                out.push(z * sd * scale);
            }
        }
    }
    out
}

/// The mean vector: first `s` entries at `kappa`, the rest zero.
pub fn make_mu(cfg: &SimConfig) -> Vec<f64> {
    let mut mu = vec![0.0; cfg.p];
    let kappa = cfg.kappa();
    for v in mu.iter_mut().take(cfg.s) {
        *v = kappa;
    }
    mu
}

/// Generates a dataset, computing the covariance root on the fly. Drivers
/// that generate many datasets should build the root once with [`ar1_sqrt`]
/// and call [`generate_with_factor`].
pub fn generate(cfg: &SimConfig, stream: &RngStream) -> Result<SampleMatrix> {
    let factor = ar1_sqrt(cfg.p, cfg.rho)?;
    generate_with_factor(cfg, &factor, stream)
}

/// Generates rows `X_i = μ + factor · ε_i` deterministically from `stream`.
pub fn generate_with_factor(
    cfg: &SimConfig,
    factor: &CovFactor,
    stream: &RngStream,
) -> Result<SampleMatrix> {
    cfg.validate()?;
    if factor.p() != cfg.p {
        return Err(Error::Domain(format!(
            "factor dimension {} does not match p = {}",
            factor.p(),
            cfg.p
        )));
    }
    let eps = draw_innovations(cfg, stream);
    let mu = make_mu(cfg);
    let mut data = vec![0.0f64; cfg.n * cfg.p];
    for i in 0..cfg.n {
        let row_eps = &eps[i * cfg.p..(i + 1) * cfg.p];
        let row_out = &mut data[i * cfg.p..(i + 1) * cfg.p];
        factor.apply(row_eps, row_out);
        for (o, &m) in row_out.iter_mut().zip(&mu) {
            *o += m;
        }
    }
    SampleMatrix::from_flat(data, cfg.n, cfg.p)
}
