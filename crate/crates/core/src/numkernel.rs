//! Special functions and the handful of univariate distributions used by
//! the test statistics, priors and likelihoods.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FPMIN: f64 = 1e-300;
const EPS: f64 = 1e-16;

/// Lentz iteration cap for the incomplete beta continued fraction.
const BETA_CF_MAX_ITER: usize = 200;
/// Iteration cap for the incomplete gamma series / continued fraction.
const GAMMA_MAX_ITER: usize = 100_000;
const QUANTILE_BISECTIONS: usize = 64;

// ---------------------------------------------------------------------------
// Gamma family
// ---------------------------------------------------------------------------

/// zeta(k) for k = 2..=10; higher orders are summed directly.
const ZETA_2_TO_10: [f64; 9] = [
    PI * PI / 6.0,
    1.202_056_903_159_594_3,
    PI * PI * PI * PI / 90.0,
    1.036_927_755_143_37,
    1.017_343_061_984_449,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
];

fn zeta(k: usize) -> f64 {
    if (2..=10).contains(&k) {
        return ZETA_2_TO_10[k - 2];
    }
    // 1 + 2^-k + ... ; the tail beyond 40 is below 1e-17 for k > 10
    (1..=40).map(|n| (n as f64).powi(-(k as i32))).sum()
}

/// ln Γ(1 + z) for |z| <= 0.25 by its Taylor series around 1.
fn ln_gamma_1p_small(z: f64) -> f64 {
    let mut sum = -EULER_GAMMA * z;
    let mut power = -z;
    for k in 2..80 {
        power *= -z;
        let term = zeta(k) * power / k as f64;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Stirling remainder lnΓ(x) - [(x-½)ln x - x + ½ln 2π], valid for x >= 10.
fn stirling_correction(x: f64) -> f64 {
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.25 {
        return ln_gamma_1p_small(x) - x.ln();
    }
    if (x - 1.0).abs() <= 0.25 {
        return ln_gamma_1p_small(x - 1.0);
    }
    if (x - 2.0).abs() <= 0.25 {
        let z = x - 2.0;
        return z.ln_1p() + ln_gamma_1p_small(z);
    }
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x);
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < 10.0 {
        product *= shifted;
        shifted += 1.0;
    }
    ln_gamma_unchecked(shifted) - product.ln()
}

/// Natural logarithm of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

/// ln B(a, b), avoiding the cancellation of three large ln Γ terms when one
/// argument is large.
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!("ln_beta needs a, b > 0, got ({a}, {b})")));
    }
    Ok(ln_beta_unchecked(a, b))
}

fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    if large < 10.0 {
        return ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b);
    }
    // ln Γ(large + small) - ln Γ(large) via Stirling on both terms
    let sum = large + small;
    let diff = (large - 0.5) * (small / large).ln_1p() + small * sum.ln() - small
        + stirling_correction(sum)
        - stirling_correction(large);
    ln_gamma_unchecked(small) - diff
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma_unchecked(a)).exp()
}

/// P(a, x) by its power series; accurate for x < a + 1.
fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

/// Q(a, x) by its continued fraction; accurate for x >= a + 1.
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h * gamma_prefactor(a, x)
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !(x >= 0.0) || a.is_infinite() || x.is_nan() {
        return Err(Error::domain(format!(
            "incomplete gamma needs a > 0 and x >= 0, got ({a}, {x})"
        )));
    }
    Ok(())
}

/// Regularized lower incomplete gamma P(a, x).
pub fn reg_inc_gamma_lower(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(gamma_p(a, x))
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn reg_inc_gamma_upper(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(gamma_q(a, x))
}

fn gamma_p(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

fn gamma_q(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z2 = x * x;
    // erf(|x|) = P(1/2, x^2)
    let upper = if z2 < 1.5 {
        1.0 - gamma_series(0.5, z2).min(1.0)
    } else if z2.is_infinite() {
        0.0
    } else {
        gamma_cont_frac(0.5, z2)
    };
    if x >= 0.0 {
        upper
    } else {
        2.0 - upper
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Incomplete beta
// ---------------------------------------------------------------------------

/// Continued fraction for I_x(a, b) (modified Lentz). Returns `None` when
/// the iteration cap is reached before convergence.
fn beta_cont_frac(a: f64, b: f64, x: f64) -> Option<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Some(h);
        }
    }
    None
}

/// Regularized incomplete beta I_x(a, b) and its complement 1 - I_x(a, b),
/// both computed without subtraction from one where possible.
fn inc_beta_pair(a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    inc_beta_pair_xy(a, b, x, 1.0 - x)
}

/// Same as `inc_beta_pair` with the complement `y = 1 - x` supplied by the
/// caller, who can often form it without cancellation.
fn inc_beta_pair_xy(a: f64, b: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if y <= 0.0 {
        return Ok((1.0, 0.0));
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta_unchecked(a, b);
    let not_converged =
        || Error::domain(format!("incomplete beta did not converge at ({a}, {b}, {x})"));
    if x < (a + 1.0) / (a + b + 2.0) {
        let cf = beta_cont_frac(a, b, x).ok_or_else(not_converged)?;
        let lower = (ln_front.exp() * cf / a).clamp(0.0, 1.0);
        Ok((lower, 1.0 - lower))
    } else {
        let cf = beta_cont_frac(b, a, y).ok_or_else(not_converged)?;
        let upper = (ln_front.exp() * cf / b).clamp(0.0, 1.0);
        Ok((1.0 - upper, upper))
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || a.is_infinite() || b.is_infinite() {
        return Err(Error::domain(format!("incomplete beta needs a, b > 0, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("incomplete beta needs x in [0, 1], got {x}")));
    }
    inc_beta_pair(a, b, x).map(|(lower, _)| lower)
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// Degrees of freedom above which the Student-t tails switch to a
/// second-order expansion around the normal; the continued fraction would
/// otherwise need O(sqrt(df)) iterations.
const T_ASYMPTOTIC_DF: f64 = 4.0e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Normal,
    StudentT,
    ChiSquare,
    Poisson,
    Uniform,
    TruncatedNormal,
    HalfNormal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::StudentT => "student_t",
            Family::ChiSquare => "chi_square",
            Family::Poisson => "poisson",
            Family::Uniform => "uniform",
            Family::TruncatedNormal => "truncated_normal",
            Family::HalfNormal => "half_normal",
        }
    }

    pub fn is_discrete(self) -> bool {
        self == Family::Poisson
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "normal" => Family::Normal,
            "student_t" | "t" => Family::StudentT,
            "chi_square" | "chisq" => Family::ChiSquare,
            "poisson" => Family::Poisson,
            "uniform" => Family::Uniform,
            "truncated_normal" => Family::TruncatedNormal,
            "half_normal" => Family::HalfNormal,
            other => return Err(Error::Unsupported(format!("distribution family `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64 },
    ChiSquare { df: f64 },
    Poisson { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64, ln_mass: f64 },
    HalfNormal { sd: f64 },
}

/// A validated univariate distribution. Constructors enforce the parameter
/// invariants, so evaluation never fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dist(Shape);

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

/// Probability mass of N(0,1) on [a, b], taken from whichever tail keeps
/// the subtraction well conditioned.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

impl Dist {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Ok(Dist(Shape::Normal { mean: finite("mean", mean)?, sd: positive("sd", sd)? }))
    }

    pub fn standard_normal() -> Self {
        Dist(Shape::Normal { mean: 0.0, sd: 1.0 })
    }

    /// Standard (location 0, scale 1) Student-t.
    pub fn student_t(df: f64) -> Result<Self> {
        Ok(Dist(Shape::StudentT { df: positive("df", df)? }))
    }

    pub fn chi_square(df: f64) -> Result<Self> {
        Ok(Dist(Shape::ChiSquare { df: positive("df", df)? }))
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        if rate >= 0.0 && rate.is_finite() {
            Ok(Dist(Shape::Poisson { rate }))
        } else {
            Err(Error::domain(format!("rate must be >= 0, got {rate}")))
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let (lo, hi) = (finite("lower bound", lo)?, finite("upper bound", hi)?);
        if lo >= hi {
            return Err(Error::domain(format!("uniform bounds need lo < hi, got ({lo}, {hi})")));
        }
        Ok(Dist(Shape::Uniform { lo, hi }))
    }

    /// Normal(mean, sd) restricted to [lo, hi] and renormalized.
    pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        let mean = finite("mean", mean)?;
        let sd = positive("sd", sd)?;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::domain(format!(
                "truncation bounds need lo < hi, got ({lo}, {hi})"
            )));
        }
        let mass = std_normal_mass((lo - mean) / sd, (hi - mean) / sd);
        if !(mass > 0.0) {
            return Err(Error::domain(format!(
                "N({mean}, {sd}) has no representable mass on [{lo}, {hi}]"
            )));
        }
        Ok(Dist(Shape::TruncatedNormal { mean, sd, lo, hi, ln_mass: mass.ln() }))
    }

    pub fn half_normal(sd: f64) -> Result<Self> {
        Ok(Dist(Shape::HalfNormal { sd: positive("sd", sd)? }))
    }

    /// Builds a distribution from a family tag and its positional parameters:
    /// normal (mean, sd), student_t (df), chi_square (df), poisson (rate),
    /// uniform (lo, hi), truncated_normal (mean, sd, lo, hi), half_normal (sd).
    pub fn from_parts(family: Family, params: &[f64]) -> Result<Self> {
        let want = match family {
            Family::Normal | Family::Uniform => 2,
            Family::TruncatedNormal => 4,
            _ => 1,
        };
        if params.len() != want {
            return Err(Error::domain(format!(
                "{family} takes {want} parameter(s), got {}",
                params.len()
            )));
        }
        let p = params;
        match family {
            Family::Normal => Dist::normal(p[0], p[1]),
            Family::StudentT => Dist::student_t(p[0]),
            Family::ChiSquare => Dist::chi_square(p[0]),
            Family::Poisson => Dist::poisson(p[0]),
            Family::Uniform => Dist::uniform(p[0], p[1]),
            Family::TruncatedNormal => Dist::truncated_normal(p[0], p[1], p[2], p[3]),
            Family::HalfNormal => Dist::half_normal(p[0]),
        }
    }

    pub fn family(&self) -> Family {
        match self.0 {
            Shape::Normal { .. } => Family::Normal,
            Shape::StudentT { .. } => Family::StudentT,
            Shape::ChiSquare { .. } => Family::ChiSquare,
            Shape::Poisson { .. } => Family::Poisson,
            Shape::Uniform { .. } => Family::Uniform,
            Shape::TruncatedNormal { .. } => Family::TruncatedNormal,
            Shape::HalfNormal { .. } => Family::HalfNormal,
        }
    }

    /// Positional parameters in the order accepted by [`Dist::from_parts`].
    pub fn params(&self) -> Vec<f64> {
        match self.0 {
            Shape::Normal { mean, sd } => vec![mean, sd],
            Shape::StudentT { df } | Shape::ChiSquare { df } => vec![df],
            Shape::Poisson { rate } => vec![rate],
            Shape::Uniform { lo, hi } => vec![lo, hi],
            Shape::TruncatedNormal { mean, sd, lo, hi, .. } => vec![mean, sd, lo, hi],
            Shape::HalfNormal { sd } => vec![sd],
        }
    }

    /// Derivative of [`Dist::log_density`] in `x`, for gradient checks and
    /// mode finding. Zero outside the support; unsupported for the discrete
    /// family.
    pub fn log_density_derivative(&self, x: f64) -> Result<f64> {
        let inside = |lo: f64, hi: f64| x >= lo && x <= hi;
        Ok(match self.0 {
            Shape::Normal { mean, sd } => -(x - mean) / (sd * sd),
            Shape::StudentT { df } => -(df + 1.0) * x / (df + x * x),
            Shape::ChiSquare { df } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (0.5 * df - 1.0) / x - 0.5
                }
            }
            Shape::Poisson { .. } => {
                return Err(Error::Unsupported("derivative of a discrete log mass".into()))
            }
            Shape::Uniform { .. } => 0.0,
            Shape::TruncatedNormal { mean, sd, lo, hi, .. } => {
                if inside(lo, hi) {
                    -(x - mean) / (sd * sd)
                } else {
                    0.0
                }
            }
            Shape::HalfNormal { sd } => {
                if x >= 0.0 {
                    -x / (sd * sd)
                } else {
                    0.0
                }
            }
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x.is_infinite() {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        match self.0 {
            Shape::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            Shape::StudentT { df } => {
                if x <= 0.0 {
                    student_t_lower_tail(x, df)
                } else {
                    1.0 - student_t_lower_tail(-x, df)
                }
            }
            Shape::ChiSquare { df } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_p(df / 2.0, x / 2.0)
                }
            }
            Shape::Poisson { rate } => {
                if x < 0.0 {
                    0.0
                } else if rate == 0.0 {
                    1.0
                } else {
                    gamma_q(x.floor() + 1.0, rate)
                }
            }
            Shape::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Shape::TruncatedNormal { mean, sd, lo, hi, ln_mass } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    let m = std_normal_mass((lo - mean) / sd, (x - mean) / sd);
                    (m / ln_mass.exp()).clamp(0.0, 1.0)
                }
            }
            Shape::HalfNormal { sd } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - erfc(x / (sd * std::f64::consts::SQRT_2))
                }
            }
        }
    }

    /// Survival function 1 - cdf(x), computed directly in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return if x > 0.0 { 0.0 } else { 1.0 };
        }
        match self.0 {
            Shape::Normal { mean, sd } => std_normal_sf((x - mean) / sd),
            Shape::StudentT { df } => {
                if x >= 0.0 {
                    student_t_lower_tail(-x, df)
                } else {
                    1.0 - student_t_lower_tail(x, df)
                }
            }
            Shape::ChiSquare { df } => {
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_q(df / 2.0, x / 2.0)
                }
            }
            Shape::Poisson { rate } => {
                if x < 0.0 {
                    1.0
                } else if rate == 0.0 {
                    0.0
                } else {
                    gamma_p(x.floor() + 1.0, rate)
                }
            }
            Shape::HalfNormal { sd } => {
                if x <= 0.0 {
                    1.0
                } else {
                    erfc(x / (sd * std::f64::consts::SQRT_2))
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Inverse CDF by bracketed bisection; for the Poisson family, the
    /// smallest integer k with cdf(k) >= p.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile needs p in (0, 1), got {p}")));
        }
        if let Shape::Poisson { .. } = self.0 {
            return Ok(self.poisson_quantile(p));
        }
        let (mut lo, mut hi) = match self.0 {
            Shape::Uniform { lo, hi } => (lo, hi),
            Shape::TruncatedNormal { lo, hi, mean, sd, .. } => {
                (lo.max(mean - 40.0 * sd), hi.min(mean + 40.0 * sd))
            }
            Shape::ChiSquare { .. } | Shape::HalfNormal { .. } => (0.0, self.expand_upper(p, 1.0)),
            Shape::Normal { mean, sd } => {
                let lo = self.expand_lower(p, mean - sd);
                (lo, self.expand_upper(p, mean + sd))
            }
            _ => (self.expand_lower(p, -1.0), self.expand_upper(p, 1.0)),
        };
        for _ in 0..QUANTILE_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn expand_upper(&self, p: f64, start: f64) -> f64 {
        let mut hi = start;
        let mut step = start.abs().max(1.0);
        while self.cdf(hi) < p && hi.is_finite() {
            hi += step;
            step *= 2.0;
        }
        hi
    }

    fn expand_lower(&self, p: f64, start: f64) -> f64 {
        let mut lo = start;
        let mut step = start.abs().max(1.0);
        while self.cdf(lo) > p && lo.is_finite() {
            lo -= step;
            step *= 2.0;
        }
        lo
    }

    fn poisson_quantile(&self, p: f64) -> f64 {
        let mut hi = 1.0;
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        let mut lo = -1.0;
        // invariant: cdf(lo) < p <= cdf(hi)
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Natural log of the density (or mass function); -inf outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self.0 {
            Shape::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            Shape::StudentT { df } => {
                ln_gamma_unchecked(0.5 * (df + 1.0))
                    - ln_gamma_unchecked(0.5 * df)
                    - 0.5 * (df * PI).ln()
                    - 0.5 * (df + 1.0) * (x * x / df).ln_1p()
            }
            Shape::ChiSquare { df } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let k = 0.5 * df;
                if x == 0.0 {
                    return if df == 2.0 {
                        -LN_2
                    } else if df < 2.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                (k - 1.0) * x.ln() - 0.5 * x - k * LN_2 - ln_gamma_unchecked(k)
            }
            Shape::Poisson { rate } => {
                if x < 0.0 || x.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                if rate == 0.0 {
                    return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
                }
                x * rate.ln() - rate - ln_gamma_unchecked(x + 1.0)
            }
            Shape::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Shape::TruncatedNormal { mean, sd, lo, hi, ln_mass } => {
                if x < lo || x > hi {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z - ln_mass
            }
            Shape::HalfNormal { sd } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / sd;
                LN_2 - LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
        }
    }
}

/// P(T <= t) for t <= 0.
fn student_t_lower_tail(t: f64, df: f64) -> f64 {
    debug_assert!(t <= 0.0);
    if df >= T_ASYMPTOTIC_DF {
        return student_t_lower_tail_asymptotic(t, df);
    }
    let x = df / (df + t * t);
    let y = t * t / (df + t * t);
    match inc_beta_pair_xy(0.5 * df, 0.5, x, y) {
        Ok((lower, _)) => 0.5 * lower,
        Err(_) => student_t_lower_tail_asymptotic(t, df),
    }
}

/// Two-term expansion of the t CDF in powers of 1/df around Φ.
fn student_t_lower_tail_asymptotic(t: f64, df: f64) -> f64 {
    let phi = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let t2 = t * t;
    let g1 = t * (t2 + 1.0) / 4.0;
    let g2 = t * (3.0 * t2 * t2 * t2 - 7.0 * t2 * t2 - 5.0 * t2 - 3.0) / 96.0;
    std_normal_cdf(t) - phi * (g1 / df + g2 / (df * df))
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    let dist = Dist::student_t(df)?;
    if t.is_nan() {
        return Err(Error::domain("t statistic is NaN"));
    }
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

pub fn cdf(d: &Dist, x: f64) -> f64 {
    d.cdf(x)
}

pub fn quantile(d: &Dist, p: f64) -> Result<f64> {
    d.quantile(p)
}

pub fn log_density(d: &Dist, x: f64) -> f64 {
    d.log_density(x)
}
