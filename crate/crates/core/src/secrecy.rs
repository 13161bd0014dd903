//! SNR distributions, secrecy capacity and the secrecy outage probability.
//!
//! Three SOP evaluators are provided: the closed form (through the generic
//! hypergeometric expression and its power-form simplification), an adaptive
//! quadrature of the defining integral that serves as its oracle, and the
//! empirical outage fraction of Monte Carlo samples.

use crate::channel::SnrSample;
use crate::error::{Error, Result};
use crate::moments::{EveTerms, ExpFit, GammaFit};
use crate::quad::integrate_vec;
use crate::specfun::{beta, gauss_2f1_nonpositive_z, ln_gamma, reg_lower_incomplete_gamma};

pub const DEFAULT_QUAD_TOL: f64 = 1e-9;
pub const MIN_EMPIRICAL_SAMPLES: usize = 1000;

/// Everything the analytic SOP depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecySnapshot {
    pub gamma_bar_b: f64,
    pub gamma_bar_e: f64,
    pub fit_b: GammaFit,
    pub fit_e: ExpFit,
    pub secrecy_rate: f64,
}

impl SecrecySnapshot {
    pub fn new(
        gamma_bar_b: f64,
        gamma_bar_e: f64,
        fit_b: GammaFit,
        fit_e: ExpFit,
        secrecy_rate: f64,
    ) -> Result<Self> {
        let s = SecrecySnapshot {
            gamma_bar_b,
            gamma_bar_e,
            fit_b,
            fit_e,
            secrecy_rate,
        };
        s.validate()?;
        Ok(s)
    }

    /// Snapshot from bare shape/scale values (synthetic fits).
    pub fn from_parameters(
        gamma_bar_b: f64,
        gamma_bar_e: f64,
        k_b: f64,
        theta_b: f64,
        theta_e: f64,
        secrecy_rate: f64,
    ) -> Result<Self> {
        let fit_b = GammaFit {
            k: k_b,
            theta: theta_b,
            mean_used: k_b * theta_b,
            second_moment_used: k_b * (k_b + 1.0) * theta_b * theta_b,
        };
        let fit_e = ExpFit {
            theta: theta_e,
            mean_y: theta_e,
            denominator_z: 1.0,
            terms: EveTerms::Corrected {
                ris_term: theta_e,
                beamforming_term: 0.0,
                direct_term: 0.0,
            },
        };
        Self::new(gamma_bar_b, gamma_bar_e, fit_b, fit_e, secrecy_rate)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_bar_b", self.gamma_bar_b),
            ("gamma_bar_e", self.gamma_bar_e),
            ("k_b", self.fit_b.k),
            ("theta_b", self.fit_b.theta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.fit_e.theta >= 0.0) || !self.fit_e.theta.is_finite() {
            return Err(Error::domain(format!(
                "theta_e must be finite and >= 0, got {}",
                self.fit_e.theta
            )));
        }
        if !(self.secrecy_rate >= 0.0) || !self.secrecy_rate.is_finite() {
            return Err(Error::domain(format!(
                "secrecy rate must be >= 0, got {}",
                self.secrecy_rate
            )));
        }
        Ok(())
    }

    /// Mean received SNR at Eve, `γ̄_E θ_E`.
    pub fn eve_scale(&self) -> f64 {
        self.gamma_bar_e * self.fit_e.theta
    }

    /// Scale of Bob's received SNR, `γ̄_B θ_B`.
    pub fn bob_scale(&self) -> f64 {
        self.gamma_bar_b * self.fit_b.theta
    }

    /// `x = γ̄_E θ_E / (γ̄_B θ_B)`.
    pub fn ratio(&self) -> f64 {
        self.eve_scale() / self.bob_scale()
    }
}

/// Density of Eve's received SNR.
pub fn pdf_gamma_e(s: &SecrecySnapshot, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("SNR must be >= 0, got {gamma}")));
    }
    let c = s.eve_scale();
    if !(c > 0.0) {
        return Err(Error::domain(
            "Eve's SNR distribution is degenerate (θ_E = 0)",
        ));
    }
    Ok((-gamma / c).exp() / c)
}

/// Distribution function of Bob's received SNR.
pub fn cdf_gamma_b(s: &SecrecySnapshot, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("SNR must be >= 0, got {gamma}")));
    }
    reg_lower_incomplete_gamma(s.fit_b.k, gamma / s.bob_scale())
}

/// `max(log₂(1+γ_B) − log₂(1+γ_E), 0)`.
pub fn secrecy_capacity(gamma_b: f64, gamma_e: f64) -> f64 {
    (gamma_b.ln_1p() - gamma_e.ln_1p()).max(0.0) / std::f64::consts::LN_2
}

/// Both evaluations of the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormSop {
    /// Through `x^k 2^{kR} / (k B(k,1)) · ₂F₁(k+1, k; 1+k; −2^R x)`.
    pub generic: f64,
    /// `(y / (1 + y))^k` with `y = 2^R x`.
    pub simplified: f64,
}

/// Evaluate the closed-form lower bound both ways.
pub fn sop_closed_form_detail(s: &SecrecySnapshot) -> Result<ClosedFormSop> {
    s.validate()?;
    let k = s.fit_b.k;
    let x = s.ratio();
    if x == 0.0 {
        return Ok(ClosedFormSop {
            generic: 0.0,
            simplified: 0.0,
        });
    }
    let y = x * s.secrecy_rate.exp2();
    let simplified = (-k * (1.0 / y).ln_1p()).exp();
    let hyp = gauss_2f1_nonpositive_z(k + 1.0, k, 1.0 + k, -y)?;
    // Assemble in logs so that x^k and the hypergeometric factor cannot
    // overflow separately.
    let ln_generic = k * x.ln() + k * s.secrecy_rate * std::f64::consts::LN_2
        - (k * beta(k, 1.0)?).ln()
        + hyp.ln();
    Ok(ClosedFormSop {
        generic: ln_generic.exp(),
        simplified,
    })
}

/// Closed-form SOP lower bound. In debug builds the generic and simplified
/// evaluations are checked against each other.
pub fn sop_closed_form(s: &SecrecySnapshot) -> Result<f64> {
    let d = sop_closed_form_detail(s)?;
    debug_assert!(
        closed_forms_agree(&d, 1e-10),
        "closed-form paths disagree: generic {} vs simplified {}",
        d.generic,
        d.simplified
    );
    Ok(d.simplified)
}

/// Relative agreement of the two closed-form paths (absolute near zero).
pub fn closed_forms_agree(d: &ClosedFormSop, rel_tol: f64) -> bool {
    let scale = d.simplified.abs().max(d.generic.abs());
    if scale < 1e-290 {
        return true;
    }
    (d.generic - d.simplified).abs() <= rel_tol * scale
}

/// Adaptive Gauss–Kronrod quadrature of the lower-bound integral.
pub fn sop_quadrature(s: &SecrecySnapshot, abs_tol: f64) -> Result<f64> {
    s.validate()?;
    if !(abs_tol > 0.0) {
        return Err(Error::domain(format!(
            "abs_tol must be positive, got {abs_tol}"
        )));
    }
    let x = s.ratio();
    if x == 0.0 {
        return Ok(0.0);
    }
    let k = s.fit_b.k;
    let a = x * s.secrecy_rate.exp2();
    // With t = γ / (γ̄_E θ_E) the integral becomes ∫ P(k, a t) e^{-t} dt.
    let upper = (10.0 / abs_tol).ln();
    let lnk = ln_gamma(k)?;
    let f = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let p = reg_lower_incomplete_gamma(k, a * t).unwrap_or_else(|_| {
            // Series fallback for the (unreachable in practice) non-converged case.
            (k * (a * t).ln() - lnk - k.ln()).exp().min(1.0)
        });
        p * (-t).exp()
    };
    // Initial panels on a decade grid around t = 1/a, where P(k, a t) rises.
    let mut breaks = vec![0.0];
    breaks.extend(
        (-4..=4)
            .map(|j| 10f64.powi(j) / a)
            .filter(|t| *t > 0.0 && *t < upper),
    );
    breaks.push(upper);
    integrate_vec(
        |t, out| out[0] = f(t),
        &breaks,
        1,
        0.0,
        abs_tol / 2.0,
        "SOP quadrature",
    )
    .map(|v| v[0].clamp(0.0, 1.0))
}

/// Empirical SOP `Pr{C_S < R_S}` with its binomial standard error.
pub fn sop_empirical(samples: &[SnrSample], secrecy_rate: f64) -> Result<(f64, f64)> {
    if samples.len() < MIN_EMPIRICAL_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_EMPIRICAL_SAMPLES,
            got: samples.len(),
        });
    }
    if !(secrecy_rate >= 0.0) {
        return Err(Error::domain(format!(
            "secrecy rate must be >= 0, got {secrecy_rate}"
        )));
    }
    let outages = samples
        .iter()
        .filter(|s| secrecy_capacity(s.gamma_b, s.gamma_e) < secrecy_rate)
        .count();
    let n = samples.len() as f64;
    let p = outages as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}
