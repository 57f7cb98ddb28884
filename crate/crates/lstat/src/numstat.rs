//! Special functions and the deterministic random-number contract shared by
//! every other module.
//!
//! The normal CDF goes through a rational erfc approximation while the
//! chi-square CDF goes through the regularized incomplete gamma function, so
//! the `chisq_cdf(x, 1) = 2 norm_cdf(sqrt(x)) - 1` identity is a genuine
//! cross-check between two independent evaluation routes.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("probability {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    /// Clamps tiny negative / above-one values coming from floating-point
    /// roundoff; anything further out is a bug and panics in debug builds.
    pub fn from_clamped(value: f64) -> Self {
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&value), "p = {value}");
        Self(value.clamp(0.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Deterministic random-number streams
// ---------------------------------------------------------------------------

/// A value-type handle on a reproducible random stream.
///
/// A stream is identified by `(seed, stream_id)`. Sub-streams are derived by
/// hashing a task index into the stream id, so a parallel driver can hand
/// every task its own stream and produce output that does not depend on the
/// worker count. Identical `(seed, stream_id)` always replays the identical
/// draw sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

/// SplitMix64 finalizer; bijective on u64.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    /// Root stream for a master seed.
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    /// Derives the sub-stream for task `index`. Derivation is pure, so any
    /// worker may re-derive the same stream and draw the same sequence.
    pub fn derive(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index ^ 0xA076_1D64_78BD_642F)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        let mut state = splitmix64(self.seed ^ 0x6A09_E667_F3BC_C908) ^ self.stream_id;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}

/// Draws `n` Rademacher signs (each ±1 with probability 1/2) from the stream.
pub fn rademacher(stream: &RngStream, n: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut bits = rng.next_u64();
        for _ in 0..64.min(n - out.len()) {
            out.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
            bits >>= 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779399460599343818684;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal density φ(x).
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x), absolute error below 1e-14.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Complementary error function, Cody's rational Chebyshev approximation.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    // erfc(y) for y > 0.46875, then reflect.
    let r = if y <= 4.0 {
        const C: [f64; 9] = [
            5.64188496988670089e-1,
            8.88314979438837594e0,
            6.61191906371416295e1,
            2.98635138197400131e2,
            8.81952221241769090e2,
            1.71204761263407058e3,
            2.05107837782607147e3,
            1.23033935479799725e3,
            2.15311535474403846e-8,
        ];
        const D: [f64; 8] = [
            1.57449261107098347e1,
            1.17693950891312499e2,
            5.37181101862009858e2,
            1.62138957456669019e3,
            3.29079923573345963e3,
            4.36261909014324716e3,
            3.43936767414372164e3,
            1.23033935480374942e3,
        ];
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        exp_mxx(y) * (num + C[7]) / (den + D[7])
    } else {
        const P: [f64; 6] = [
            3.05326634961232344e-1,
            3.60344899949804439e-1,
            1.25781726111229246e-1,
            1.60837851487422766e-2,
            6.58749161529837803e-4,
            1.63153871373020978e-2,
        ];
        const Q: [f64; 5] = [
            2.56852019228982242e0,
            1.87295284992346047e0,
            5.27905102951428412e-1,
            6.05183413124413191e-2,
            2.33520497626869185e-3,
        ];
        const SQRPI: f64 = 5.6418958354775628695e-1;
        if y >= 26.6 {
            // exp(-y^2) underflows well before this; the reflected branch
            // below still returns 2 for large negative x.
            if x > 0.0 {
                return 0.0;
            }
            return 2.0;
        }
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        exp_mxx(y) * (SQRPI - r) / y
    };
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// erf(x) for |x| <= 0.46875.
fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

/// exp(-y^2) split so the large quadratic is exponentiated in two pieces,
/// as in Cody's original program, for a little extra accuracy.
fn exp_mxx(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Lower-tail standard normal quantile: the x with Φ(x) = q.
///
/// Acklam's rational approximation polished by one Newton step on
/// [`norm_cdf`]; the result satisfies |Φ(x) - q| < 1e-14 away from the
/// extreme tails.
pub fn norm_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile argument {q} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if q < P_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else if q <= 1.0 - P_LOW {
        let r = q - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    } else {
        let r = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };

    // One Newton refinement against the high-accuracy CDF.
    let err = norm_cdf(x) - q;
    let pdf = norm_pdf(x);
    let x = if pdf > 0.0 { x - err / pdf } else { x };
    Ok(x)
}

// ---------------------------------------------------------------------------
// Gamma family: ln Γ, regularized incomplete gamma, chi-square CDF
// ---------------------------------------------------------------------------

/// Natural log of the gamma function (Lanczos, g = 5).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for (j, &c) in COEFFS.iter().enumerate() {
        ser += c / (x + 1.0 + j as f64);
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 500;

/// Regularized lower incomplete gamma P(a, x); series for x < a + 1,
/// continued fraction otherwise.
pub(crate) fn gammp(a: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || x < 0.0 {
        return Err(Error::Domain(format!("gammp(a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(gamma_series(a, x))
    } else {
        Ok(1.0 - gamma_cf(a, x))
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub(crate) fn gammq(a: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || x < 0.0 {
        return Err(Error::Domain(format!("gammq(a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x))
    } else {
        Ok(gamma_cf(a, x))
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Q(a, x) by Lentz's continued fraction, valid for x >= a + 1.
fn gamma_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chisq_cdf(x: f64, df: usize) -> Result<Probability> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs df >= 1".into()));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!("chi-square argument {x} < 0")));
    }
    Ok(Probability::from_clamped(gammp(df as f64 / 2.0, x / 2.0)?))
}

// ---------------------------------------------------------------------------
// Beta family: Student-t CDF support
// ---------------------------------------------------------------------------

/// Regularized incomplete beta I_x(a, b) by continued fraction.
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln())
        .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..GAMMA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(x: f64, df: usize) -> Result<Probability> {
    if df == 0 {
        return Err(Error::Domain("student t needs df >= 1".into()));
    }
    let v = df as f64;
    let half_tail = 0.5 * betai(v / 2.0, 0.5, v / (v + x * x));
    let p = if x >= 0.0 { 1.0 - half_tail } else { half_tail };
    Ok(Probability::from_clamped(p))
}

// ---------------------------------------------------------------------------
// Cauchy distribution
// ---------------------------------------------------------------------------

/// Standard Cauchy CDF G(x) = 1/2 + arctan(x)/π.
pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / std::f64::consts::PI
}
