//! Special functions used by the closed-form secrecy engine.
//!
//! Everything here is double precision, stateless and allocation free.
//! Iterative evaluations report how many terms they consumed through
//! [`SpecialValue`], so callers (and the validation harness) can see how
//! close to the iteration budget a given argument pushes them.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative size of the last series term (or continued-fraction update)
/// below which an evaluation counts as converged.
const REL_EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

const GAMMA_MAX_TERMS: usize = 10_000;
const HYP_MAX_TERMS: usize = 2_000_000;
const BESSEL_MAX_TERMS: usize = 200_000;

/// Result of an iterative special-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialValue {
    pub value: f64,
    pub converged: bool,
    pub terms_used: usize,
}

impl SpecialValue {
    fn exact(value: f64) -> Self {
        SpecialValue {
            value,
            converged: true,
            terms_used: 0,
        }
    }

    fn into_result(self, what: &'static str) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergence {
                what,
                terms_used: self.terms_used,
                estimate: self.value,
            })
        }
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_pos(x))
}

fn ln_gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma_pos(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Beta function `B(a, b) = Γ(a)Γ(b)/Γ(a+b)`.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "beta requires a, b > 0, got a={a}, b={b}"
        )));
    }
    Ok((ln_gamma_pos(a) + ln_gamma_pos(b) - ln_gamma_pos(a + b)).exp())
}

fn check_incgamma_args(k: f64, x: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!(
            "incomplete gamma requires shape k > 0, got {k}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!(
            "incomplete gamma requires x >= 0, got {x}"
        )));
    }
    Ok(())
}

/// Regularized lower incomplete gamma `P(k, x)`.
///
/// Power series below `x = k + 1`, continued fraction for the upper tail
/// above it (complemented).
pub fn reg_lower_incomplete_gamma(k: f64, x: f64) -> Result<f64> {
    gamma_p_detail(k, x)?.into_result("lower incomplete gamma")
}

/// Regularized upper incomplete gamma `Q(k, x) = 1 - P(k, x)`.
pub fn reg_upper_incomplete_gamma(k: f64, x: f64) -> Result<f64> {
    check_incgamma_args(k, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let sv = if x < k + 1.0 {
        let p = gamma_p_series(k, x);
        SpecialValue {
            value: 1.0 - p.value,
            ..p
        }
    } else {
        gamma_q_continued_fraction(k, x)
    };
    sv.into_result("upper incomplete gamma")
}

/// [`reg_lower_incomplete_gamma`] with convergence metadata.
pub fn gamma_p_detail(k: f64, x: f64) -> Result<SpecialValue> {
    check_incgamma_args(k, x)?;
    if x == 0.0 {
        return Ok(SpecialValue::exact(0.0));
    }
    if x.is_infinite() {
        return Ok(SpecialValue::exact(1.0));
    }
    if x < k + 1.0 {
        Ok(gamma_p_series(k, x))
    } else {
        let q = gamma_q_continued_fraction(k, x);
        Ok(SpecialValue {
            value: 1.0 - q.value,
            ..q
        })
    }
}

fn incgamma_prefactor(k: f64, x: f64) -> f64 {
    (-x + k * x.ln() - ln_gamma_pos(k)).exp()
}

/// Series branch of `P(k, x)`; valid for every `x > 0` but slow above `k + 1`.
pub(crate) fn gamma_p_series(k: f64, x: f64) -> SpecialValue {
    let mut ap = k;
    let mut term = 1.0 / k;
    let mut sum = term;
    for n in 1..=GAMMA_MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * REL_EPS {
            return SpecialValue {
                value: (sum * incgamma_prefactor(k, x)).min(1.0),
                converged: true,
                terms_used: n,
            };
        }
    }
    SpecialValue {
        value: (sum * incgamma_prefactor(k, x)).min(1.0),
        converged: false,
        terms_used: GAMMA_MAX_TERMS,
    }
}

/// Continued-fraction branch of `Q(k, x)` (modified Lentz).
pub(crate) fn gamma_q_continued_fraction(k: f64, x: f64) -> SpecialValue {
    let mut b = x + 1.0 - k;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_TERMS {
        let an = -(i as f64) * (i as f64 - k);
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
        if (del - 1.0).abs() < REL_EPS {
            return SpecialValue {
                value: (incgamma_prefactor(k, x) * h).clamp(0.0, 1.0),
                converged: true,
                terms_used: i,
            };
        }
    }
    SpecialValue {
        value: (incgamma_prefactor(k, x) * h).clamp(0.0, 1.0),
        converged: false,
        terms_used: GAMMA_MAX_TERMS,
    }
}

/// Which linear transformation maps `z <= 0` into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyp2f1Path {
    /// `(1-z)^{-a} 2F1(a, c-b; c; z/(z-1))`
    Pfaff,
    /// `(1-z)^{-b} 2F1(c-a, b; c; z/(z-1))`, i.e. Euler's transformation
    /// followed by Pfaff's.
    Euler,
}

/// Gauss hypergeometric function `2F1(a, b; c; z)` for `c > 0`, `z <= 0`.
///
/// Picks whichever of the two transformed series terminates or decays faster.
pub fn gauss_2f1_nonpositive_z(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    hyp2f1_detail(a, b, c, z, None)?.into_result("hypergeometric series")
}

/// `2F1` along an explicitly chosen transformation path.
pub fn gauss_2f1_via(a: f64, b: f64, c: f64, z: f64, path: Hyp2f1Path) -> Result<f64> {
    hyp2f1_detail(a, b, c, z, Some(path))?.into_result("hypergeometric series")
}

/// `2F1` with convergence metadata; `path = None` selects automatically.
pub fn hyp2f1_detail(
    a: f64,
    b: f64,
    c: f64,
    z: f64,
    path: Option<Hyp2f1Path>,
) -> Result<SpecialValue> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("2F1 requires c > 0, got {c}")));
    }
    if !(z <= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!(
            "2F1 is only implemented for finite z <= 0, got {z}"
        )));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("2F1 parameters must be finite"));
    }
    if z == 0.0 {
        return Ok(SpecialValue::exact(1.0));
    }
    let path = path.unwrap_or_else(|| choose_path(a, b, c));
    let w = z / (z - 1.0);
    let one_minus_z = 1.0 - z;
    let (p, q, prefactor) = match path {
        Hyp2f1Path::Pfaff => (a, c - b, one_minus_z.powf(-a)),
        Hyp2f1Path::Euler => (c - a, b, one_minus_z.powf(-b)),
    };
    let series = hyp2f1_series(p, q, c, w);
    Ok(SpecialValue {
        value: prefactor * series.value,
        ..series
    })
}

fn is_nonpositive_integer(v: f64) -> bool {
    v <= 0.0 && v == v.round()
}

fn choose_path(a: f64, b: f64, c: f64) -> Hyp2f1Path {
    // A numerator parameter equal to a non-positive integer truncates the series.
    if is_nonpositive_integer(a) || is_nonpositive_integer(c - b) {
        return Hyp2f1Path::Pfaff;
    }
    if is_nonpositive_integer(c - a) || is_nonpositive_integer(b) {
        return Hyp2f1Path::Euler;
    }
    // Terms decay like n^(p + q - c - 1) w^n; smaller exponent wins.
    if a <= b {
        Hyp2f1Path::Pfaff
    } else {
        Hyp2f1Path::Euler
    }
}

/// Plain hypergeometric series for `0 <= w < 1`.
fn hyp2f1_series(a: f64, b: f64, c: f64, w: f64) -> SpecialValue {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..HYP_MAX_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * w;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return SpecialValue {
                value: sum,
                converged: true,
                terms_used: n + 1,
            };
        }
        // Only stop once terms are shrinking for good.
        if term.abs() <= sum.abs() * REL_EPS && ratio.abs() < 1.0 {
            return SpecialValue {
                value: sum,
                converged: true,
                terms_used: n + 1,
            };
        }
    }
    SpecialValue {
        value: sum,
        converged: false,
        terms_used: HYP_MAX_TERMS,
    }
}

/// Ratio `I1(κ)/I0(κ)` of modified Bessel functions (mean resultant length of
/// a von Mises law with concentration κ).
pub fn bessel_i_ratio(kappa: f64) -> Result<f64> {
    bessel_i_ratio_detail(kappa)?.into_result("Bessel ratio continued fraction")
}

/// [`bessel_i_ratio`] with convergence metadata.
pub fn bessel_i_ratio_detail(kappa: f64) -> Result<SpecialValue> {
    if !(kappa >= 0.0) {
        return Err(Error::domain(format!(
            "Bessel ratio requires kappa >= 0, got {kappa}"
        )));
    }
    if kappa == 0.0 {
        return Ok(SpecialValue::exact(0.0));
    }
    if kappa.is_infinite() {
        return Ok(SpecialValue::exact(1.0));
    }
    // I1/I0 = x / (2 + x^2 / (4 + x^2 / (6 + ...))), modified Lentz.
    let x2 = kappa * kappa;
    let mut f = FPMIN;
    let mut c = f;
    let mut d = 0.0;
    for i in 1..=BESSEL_MAX_TERMS {
        let a_i = if i == 1 { kappa } else { x2 };
        let b_i = 2.0 * i as f64;
        d = b_i + a_i * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b_i + a_i / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = c * d;
        f *= del;
        if (del - 1.0).abs() < REL_EPS {
            return Ok(SpecialValue {
                value: f,
                converged: true,
                terms_used: i,
            });
        }
    }
    Ok(SpecialValue {
        value: f,
        converged: false,
        terms_used: BESSEL_MAX_TERMS,
    })
}
