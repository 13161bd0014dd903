//! Moment-matched fits: Gamma for Bob's normalized SNR `X_B`, Exponential for
//! Eve's `X_E`.
//!
//! Three variants are provided. [`MomentVariant::AsPrinted`] evaluates the
//! original Θ/Υ trace expressions term by term. [`MomentVariant::Corrected`]
//! evaluates the exact first and second moments of `Y = |h w|²` and `Z` for
//! channels with covariance `A β R` and a phase matrix Φ that is independent
//! of the channels, which is what the Monte Carlo engine samples in its
//! matched modes, and fits the ratio through `E[Y]/E[Z]`.
//! [`MomentVariant::Exact`] integrates the ratio itself over the spectrum of
//! the coupling matrix; see [`spectral_moments`].
//!
//! With `T₁ = tr(ΦRΦᴴR)`, `T₂ = tr((ΦRΦᴴR)²)` and `ω = A²β₁β₂,B M`, the
//! corrected moments are
//!
//! ```text
//! E[Y_B]  = β_d,B M + ω T₁
//! E[Y_B²] = β_d,B² M(M+1) + 2(M+1) β_d,B ω T₁ + (1 + 1/M) ω² (T₁² + T₂)
//! E[Z_B]  = μ_B A β₂,B T₁ + 1
//! E[Z_B²] = μ_B² (A β₂,B)² (T₁² + T₂) + 2 μ_B A β₂,B T₁ + 1
//! E[Y_E]  = A²β₁β₂,E [T₁ + (M−1) (T₂/T₁) s/(s + β_d,B)] + β_d,E,   s = A²β₁β₂,B T₁
//! ```
//!
//! where `μ_i = δ_i A σ²_EMI / σ_i²`. The `E[Y_B²]` line follows from
//! `Y_B | h₂ ~ Gamma(M, β_d,B + Aβ₁ q)` with `q = h₂ᴴΦRΦᴴh₂`, and `E[Y_E]`
//! from projecting Eve's channel on the MRT direction, whose RIS component
//! carries a fraction `s/(s + β_d,B)` of the power.
//!
//! [`MomentVariant::Exact`] drops the ratio-of-means step altogether. For a
//! fixed Φ both `X_B` and `X_E` depend on the RIS channels only through the
//! spectrum `κ₁ … κ_r` of `KᴴK`, `K = LᵀΦᴴL`, so `E[X_B]`, `E[X_B²]` and
//! `E[X_E]` reduce to one-dimensional Laplace-type integrals of
//! `Π_j (1 + tκ_j)⁻¹` (see [`spectral_moments`]).

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{phase_pool, PhaseSource, ScenarioParams};
use crate::error::{Error, Result};
use crate::geometry::{trace_bundle, CorrelationMatrix, TraceBundle, C64};
use crate::quad::integrate_log_vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentVariant {
    AsPrinted,
    Corrected,
    #[default]
    Exact,
}

impl MomentVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentVariant::AsPrinted => "as_printed",
            MomentVariant::Corrected => "corrected",
            MomentVariant::Exact => "exact",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "as_printed" => Some(MomentVariant::AsPrinted),
            "corrected" => Some(MomentVariant::Corrected),
            "exact" => Some(MomentVariant::Exact),
            _ => None,
        }
    }

    /// Whether the variant works from the trace bundle alone.
    pub fn is_trace_based(&self) -> bool {
        !matches!(self, MomentVariant::Exact)
    }
}

/// First and second moments of Bob's numerator `Y_B` and denominator `Z_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BobMoments {
    pub mean_y: f64,
    pub mean_z: f64,
    pub second_y: f64,
    pub second_z: f64,
}

impl BobMoments {
    /// `ς_B = E[Y]/E[Z]`.
    pub fn varsigma(&self) -> f64 {
        self.mean_y / self.mean_z
    }

    /// `ι_B = E[Y²]/E[Z²]`.
    pub fn iota(&self) -> f64 {
        self.second_y / self.second_z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub k: f64,
    pub theta: f64,
    /// ς_B
    pub mean_used: f64,
    /// ι_B
    pub second_moment_used: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.k * self.theta
    }

    pub fn variance(&self) -> f64 {
        self.k * self.theta * self.theta
    }
}

/// Named intermediate terms of Eve's fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EveTerms {
    AsPrinted {
        q_term: f64,
        epsilon: f64,
        xi: f64,
        varrho: f64,
        /// Bob's mean `E[Y_B]` dividing the numerator.
        bob_mean: f64,
    },
    Corrected {
        ris_term: f64,
        beamforming_term: f64,
        direct_term: f64,
    },
    /// Components of `E[Y_E]` from the spectral computation.
    Exact {
        ris_term: f64,
        beamforming_term: f64,
        direct_term: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub theta: f64,
    /// Estimate of `E[Y_E]`.
    pub mean_y: f64,
    /// `E[Z_E] = δ_E α_E + 1` (or its corrected counterpart).
    pub denominator_z: f64,
    pub terms: EveTerms,
}

fn omega(p: &ScenarioParams) -> f64 {
    let a = p.element_area();
    a * a * p.pathloss_ris * p.pathloss_ris_rx_b * p.m_antennas as f64
}

fn mu(p: &ScenarioParams, delta: f64, sigma2: f64) -> f64 {
    delta * p.element_area() * p.emi_power / sigma2
}

/// `α_i = (A² σ²_EMI / σ_i²) β₂,i tr(RΦRΦᴴR)`.
fn alpha(p: &ScenarioParams, beta2: f64, sigma2: f64, t: &TraceBundle) -> f64 {
    let a = p.element_area();
    a * a * p.emi_power / sigma2 * beta2 * t.tr_alpha_core
}

/// `E[Y_B] = β_d,B M + A²β₁β₂,B M tr Θ` in the Θ-trace form.
pub fn mean_yb(p: &ScenarioParams, t: &TraceBundle) -> f64 {
    p.pathloss_direct_b * p.m_antennas as f64 + omega(p) * t.tr_theta
}

/// `E[Z_B] = δ_B (A²σ²_EMI/σ_B²) β₂,B tr(RΦRΦᴴR) + 1` in the Θ-trace form.
pub fn mean_zb(p: &ScenarioParams, t: &TraceBundle) -> f64 {
    p.delta_b() * alpha(p, p.pathloss_ris_rx_b, p.noise_power_b, t) + 1.0
}

/// `(E[Y_B²], E[Z_B²])` under the chosen variant.
pub fn second_moments(p: &ScenarioParams, t: &TraceBundle, variant: MomentVariant) -> (f64, f64) {
    let m = bob_moments(p, t, variant);
    (m.second_y, m.second_z)
}

/// All four moments of Bob's SNR components.
pub fn bob_moments(p: &ScenarioParams, t: &TraceBundle, variant: MomentVariant) -> BobMoments {
    let m = p.m_antennas as f64;
    let bd = p.pathloss_direct_b;
    let om = omega(p);
    let mu_b = mu(p, p.delta_b(), p.noise_power_b);
    let a = p.element_area();
    match variant {
        MomentVariant::AsPrinted => {
            let om_tr = om * t.tr_theta;
            let c2 = 2.0 * bd * bd * m;
            let d2 = bd * om_tr;
            let ce = d2;
            let e2 = 2.0 * om_tr * om_tr + 2.0 * om * om * t.tr_theta_sq;
            let eta = a * p.pathloss_ris_rx_b * t.tr_alpha_core;
            BobMoments {
                mean_y: mean_yb(p, t),
                mean_z: mean_zb(p, t),
                second_y: c2 + 2.0 * d2 + 2.0 * ce + e2,
                second_z: mu_b * mu_b * eta + 2.0 * mu_b * eta + 1.0,
            }
        }
        MomentVariant::Corrected | MomentVariant::Exact => {
            let s1 = om * t.t1;
            let quad = t.t1 * t.t1 + t.t2;
            let eta = a * p.pathloss_ris_rx_b;
            BobMoments {
                mean_y: bd * m + s1,
                mean_z: mu_b * eta * t.t1 + 1.0,
                second_y: bd * bd * m * (m + 1.0)
                    + 2.0 * (m + 1.0) * bd * s1
                    + (1.0 + 1.0 / m) * om * om * quad,
                second_z: mu_b * mu_b * eta * eta * quad + 2.0 * mu_b * eta * t.t1 + 1.0,
            }
        }
    }
}

/// Gamma shape and scale from a mean and a second moment.
pub fn gamma_fit_from_moments(mean: f64, second: f64) -> Result<GammaFit> {
    let var = second - mean * mean;
    let k = mean * mean / var;
    let theta = var / mean;
    if !(k > 0.0 && theta > 0.0) || !k.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidFit {
            mean,
            second_moment: second,
            shape: k,
            scale: theta,
        });
    }
    Ok(GammaFit {
        k,
        theta,
        mean_used: mean,
        second_moment_used: second,
    })
}

/// Gamma approximation of `X_B` from trace moments (`Exact` falls back to the
/// corrected trace formulas, as in [`exp_fit`]).
pub fn prop1_gamma_fit(
    p: &ScenarioParams,
    t: &TraceBundle,
    variant: MomentVariant,
) -> Result<GammaFit> {
    let m = bob_moments(p, t, variant);
    gamma_fit_from_moments(m.varsigma(), m.iota())
}

/// Exponential approximation of `X_E` in the uncorrected Θ/Υ-trace form.
pub fn prop2_exp_fit(p: &ScenarioParams, t: &TraceBundle) -> Result<ExpFit> {
    exp_fit(p, t, MomentVariant::AsPrinted)
}

/// Exponential approximation of `X_E` under the chosen variant.
///
/// Trace bundles carry no spectrum, so [`MomentVariant::Exact`] is evaluated
/// here with the corrected trace formulas; use [`fit_pair`] for the spectral
/// version.
pub fn exp_fit(p: &ScenarioParams, t: &TraceBundle, variant: MomentVariant) -> Result<ExpFit> {
    let a = p.element_area();
    let a2 = a * a;
    let m = p.m_antennas as f64;
    let (b1, b2b, b2e) = (p.pathloss_ris, p.pathloss_ris_rx_b, p.pathloss_ris_rx_e);
    let (bdb, bde) = (p.pathloss_direct_b, p.pathloss_direct_e);
    let (mean_y, denominator_z, terms, bob_mean) = match variant {
        MomentVariant::AsPrinted => {
            let q_term = a2 * b1 * bde * b2b * m * t.tr_eve_q;
            let epsilon = a2 * a2 * b1 * b1 * b2b * b2e * m * t.tr_theta_theta;
            let xi = a2 * b1 * b2e * bdb * m * t.tr_theta;
            let varrho = m * bdb * bde;
            let bob_mean = bdb * m + a2 * b1 * b2b * m * t.tr_theta;
            let z = p.delta_e() * alpha(p, b2e, p.noise_power_e, t) + 1.0;
            let terms = EveTerms::AsPrinted {
                q_term,
                epsilon,
                xi,
                varrho,
                bob_mean,
            };
            (
                (q_term + epsilon + xi + varrho) / bob_mean,
                z,
                terms,
                bob_mean,
            )
        }
        MomentVariant::Corrected | MomentVariant::Exact => {
            let s = a2 * b1 * b2b * t.t1;
            let ris_term = a2 * b1 * b2e * t.t1;
            let share = if s + bdb > 0.0 { s / (s + bdb) } else { 0.0 };
            let beamforming_term = if t.t1 > 0.0 {
                a2 * b1 * b2e * (m - 1.0) * (t.t2 / t.t1) * share
            } else {
                0.0
            };
            let direct_term = bde;
            let z = mu(p, p.delta_e(), p.noise_power_e) * a * b2e * t.t1 + 1.0;
            let terms = EveTerms::Corrected {
                ris_term,
                beamforming_term,
                direct_term,
            };
            (
                ris_term + beamforming_term + direct_term,
                z,
                terms,
                bdb * m + s * m,
            )
        }
    };
    if !(bob_mean > 0.0) || !(denominator_z > 0.0) {
        return Err(Error::Degenerate(format!(
            "Eve fit denominator vanishes (Bob mean {bob_mean:e}, E[Z_E] {denominator_z:e})"
        )));
    }
    let theta = mean_y / denominator_z;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidFit {
            mean: theta,
            second_moment: 2.0 * theta * theta,
            shape: 1.0,
            scale: theta,
        });
    }
    Ok(ExpFit {
        theta,
        mean_y,
        denominator_z,
        terms,
    })
}

/// Eigenvalues of `KᴴK` with `K = Lᵀ Φᴴ L`, in descending order.
///
/// Their sum and sum of squares are `T₁` and `T₂`.
pub fn coupling_spectrum(corr: &CorrelationMatrix, phi: &[C64]) -> Result<Vec<f64>> {
    let l = corr
        .factor()
        .ok_or_else(|| Error::domain("correlation matrix has not been factorized"))?;
    let (n, r) = l.shape();
    if phi.len() != n {
        return Err(Error::domain(format!(
            "phase vector has length {}, expected {n}",
            phi.len()
        )));
    }
    crate::geometry::check_unit_modulus(phi)?;
    let mut lr = l.clone();
    let mut li = l.clone();
    for i in 0..n {
        let c = phi[i].conj();
        for j in 0..r {
            lr[(i, j)] = l[(i, j)] * c.re;
            li[(i, j)] = l[(i, j)] * c.im;
        }
    }
    let lt = l.transpose();
    let kr = &lt * lr;
    let ki = &lt * li;
    let re = kr.tr_mul(&kr) + ki.tr_mul(&ki);
    let im = kr.tr_mul(&ki) - ki.tr_mul(&kr);
    let h = DMatrix::<C64>::from_fn(r, r, |i, j| {
        C64::new(
            0.5 * (re[(i, j)] + re[(j, i)]),
            0.5 * (im[(i, j)] - im[(j, i)]),
        )
    });
    let mut eig: Vec<f64> = h
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Exact moments of the normalized SNRs at one Φ.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralMoments {
    pub mean_xb: f64,
    pub second_xb: f64,
    pub mean_xe: f64,
    /// `E[Y_E]`, split as in [`EveTerms::Exact`].
    pub ris_term: f64,
    pub beamforming_term: f64,
    pub direct_term: f64,
}

impl SpectralMoments {
    pub fn mean_ye(&self) -> f64 {
        self.ris_term + self.beamforming_term + self.direct_term
    }

    /// Moments of the mixture over equally likely Φ draws.
    pub fn mean(list: &[SpectralMoments]) -> Option<SpectralMoments> {
        if list.is_empty() {
            return None;
        }
        let n = list.len() as f64;
        let mut acc = SpectralMoments::default();
        for m in list {
            acc.mean_xb += m.mean_xb / n;
            acc.second_xb += m.second_xb / n;
            acc.mean_xe += m.mean_xe / n;
            acc.ris_term += m.ris_term / n;
            acc.beamforming_term += m.beamforming_term / n;
            acc.direct_term += m.direct_term / n;
        }
        Some(acc)
    }
}

const SPECTRAL_REL_TOL: f64 = 1e-10;
const LOG_MARGIN: f64 = 40.0;

fn ln_laplace(kappas: &[f64], t: f64) -> f64 {
    -kappas.iter().map(|k| (t * k).ln_1p()).sum::<f64>()
}

/// `E[X_B]`, `E[X_B²]` and `E[X_E]` for the spectrum `kappas` of `KᴴK`.
///
/// Writing `Q = ‖K z‖² = Σ κ_j |z_j|²` with `z ~ CN(0, I)`, Bob's SNR given
/// `Q` is `Gamma(M, β_d,B + s₁₂ Q)` over `μ_B s₂,B Q + 1`, with
/// `s₁₂ = A²β₁β₂,B`. Using `1/(c+1) = ∫ e^{-u(c+1)} du` and the Laplace
/// transform `E[e^{-tQ}] = Π (1+tκ_j)⁻¹`,
///
/// ```text
/// E[X_B]  = M      ∫ e^{-u}   L(t) [β_d,B + s₁₂ S₁(t)] du
/// E[X_B²] = M(M+1) ∫ u e^{-u} L(t) [β_d,B² + 2β_d,B s₁₂ S₁(t) + s₁₂² (S₁(t)² + S₂(t))] du
/// ```
///
/// with `t = u μ_B s₂,B`, `S₁ = Σ κ/(1+tκ)` and `S₂ = Σ κ²/(1+tκ)²`.
///
/// For Eve, MRT towards Bob gives `E[Z_G w wᴴ Z_Gᴴ] = I + (M−1) D` where `D`
/// is diagonal in the singular basis of `K` with
/// `d_j = κ_j ∫ e^{-τ β_d,B/s₁₂} (1+τκ_j)⁻¹ Π (1+τκ_i)⁻¹ dτ`. Eve's projected
/// power in eigen-direction `j` is then `s₁ s₂,E κ_j (1 + (M−1) d_j)`, and
///
/// ```text
/// E[X_E] = ∫ e^{-u} L(u μ_E s₂,E) [s₁ s₂,E Σ_j κ_j(1+(M−1)d_j)/(1+u μ_E s₂,E κ_j) + β_d,E] du.
/// ```
pub fn spectral_moments(p: &ScenarioParams, kappas: &[f64]) -> Result<SpectralMoments> {
    let kmax = kappas.iter().cloned().fold(0.0, f64::max);
    let ks: Vec<f64> = kappas
        .iter()
        .cloned()
        .filter(|&k| k > kmax * 1e-15)
        .collect();
    let a = p.element_area();
    let m = p.m_antennas as f64;
    let s1 = a * p.pathloss_ris;
    let s2b = a * p.pathloss_ris_rx_b;
    let s2e = a * p.pathloss_ris_rx_e;
    let s12 = s1 * s2b;
    let (bdb, bde) = (p.pathloss_direct_b, p.pathloss_direct_e);
    let mu_b = mu(p, p.delta_b(), p.noise_power_b);
    let mu_e = mu(p, p.delta_e(), p.noise_power_e);
    let t1: f64 = ks.iter().sum();
    let t2: f64 = ks.iter().map(|k| k * k).sum();

    // Bob.
    let cb = mu_b * s2b;
    let (mean_xb, second_xb) = if cb * kmax == 0.0 || ks.is_empty() {
        (
            m * (bdb + s12 * t1),
            m * (m + 1.0) * (bdb * bdb + 2.0 * bdb * s12 * t1 + s12 * s12 * (t1 * t1 + t2)),
        )
    } else {
        let y_lo = -LOG_MARGIN - (1.0 + cb * kmax).ln();
        let v = integrate_log_vec(
            |u, out| {
                let t = u * cb;
                let lw = ln_laplace(&ks, t) - u;
                let (mut sa, mut sb) = (0.0, 0.0);
                for k in &ks {
                    let g = k / (1.0 + t * k);
                    sa += g;
                    sb += g * g;
                }
                let w = lw.exp();
                out[0] = w * (bdb + s12 * sa);
                out[1] = w * u * (bdb * bdb + 2.0 * bdb * s12 * sa + s12 * s12 * (sa * sa + sb));
            },
            y_lo,
            60f64.ln(),
            2,
            SPECTRAL_REL_TOL,
            "Bob spectral moments",
        )?;
        (m * v[0], m * (m + 1.0) * v[1])
    };

    // Beamforming leakage towards Eve.
    let d: Vec<f64> = if m > 1.0 && s12 > 0.0 && !ks.is_empty() {
        let ratio = bdb / s12;
        let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_lo = -kmax.ln() - LOG_MARGIN;
        let mut y_hi = -kmin.ln() + LOG_MARGIN;
        if ratio > 0.0 {
            y_hi = y_hi.min((60.0 / ratio).ln());
        }
        integrate_log_vec(
            |tau, out| {
                let w = (ln_laplace(&ks, tau) - tau * ratio).exp();
                for (o, k) in out.iter_mut().zip(&ks) {
                    *o = w * k / (1.0 + tau * k);
                }
            },
            y_lo,
            y_hi.max(y_lo + 1.0),
            ks.len(),
            SPECTRAL_REL_TOL,
            "beamforming leakage",
        )?
    } else {
        vec![0.0; ks.len()]
    };
    let weights: Vec<f64> = ks
        .iter()
        .zip(&d)
        .map(|(k, dj)| k * (1.0 + (m - 1.0) * dj))
        .collect();
    let ris_term = s1 * s2e * t1;
    let beamforming_term =
        s1 * s2e * (m - 1.0) * ks.iter().zip(&d).map(|(k, dj)| k * dj).sum::<f64>();
    let direct_term = bde;

    let ce = mu_e * s2e;
    let mean_xe = if ce * kmax == 0.0 || ks.is_empty() {
        ris_term + beamforming_term + direct_term
    } else {
        let y_lo = -LOG_MARGIN - (1.0 + ce * kmax).ln();
        integrate_log_vec(
            |u, out| {
                let t = u * ce;
                let w = (ln_laplace(&ks, t) - u).exp();
                let proj: f64 = ks
                    .iter()
                    .zip(&weights)
                    .map(|(k, wj)| wj / (1.0 + t * k))
                    .sum();
                out[0] = w * (s1 * s2e * proj + bde);
            },
            y_lo,
            60f64.ln(),
            1,
            SPECTRAL_REL_TOL,
            "Eve spectral mean",
        )?[0]
    };
    Ok(SpectralMoments {
        mean_xb,
        second_xb,
        mean_xe,
        ris_term,
        beamforming_term,
        direct_term,
    })
}

/// How the analytic engine picks the Φ inside its trace forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiMode {
    /// Traces at a single Φ drawn from the design pipeline.
    Fixed,
    /// Traces averaged over a pool of pipeline draws.
    #[default]
    Expectation,
}

impl PhiMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhiMode::Fixed => "phi_fixed",
            PhiMode::Expectation => "phi_expectation",
        }
    }
}

pub const DEFAULT_PHI_DRAWS: usize = 200;

/// Traces for the analytic engine plus the matching Φ source for the Monte
/// Carlo engine.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPhi {
    pub traces: TraceBundle,
    /// Spectrum of `KᴴK` per draw; empty unless requested.
    pub spectra: Vec<Vec<f64>>,
    pub source: PhaseSource,
    /// Spread of `T₁` across the pool (0 for a single draw).
    pub t1_rel_std: f64,
}

/// Draw Φ from the design pipeline and evaluate the trace forms.
pub fn analytic_phi(
    p: &ScenarioParams,
    corr: &CorrelationMatrix,
    mode: PhiMode,
    draws: usize,
    seed: u64,
    with_spectra: bool,
) -> Result<AnalyticPhi> {
    let draws = match mode {
        PhiMode::Fixed => 1,
        PhiMode::Expectation => draws,
    };
    if draws == 0 {
        return Err(Error::domain("phi_expectation needs at least one draw"));
    }
    let pool = phase_pool(p, corr, draws, seed)?;
    let bundles = pool
        .par_iter()
        .map(|phi| trace_bundle(corr, phi))
        .collect::<Result<Vec<_>>>()?;
    let spectra = if with_spectra {
        pool.par_iter()
            .map(|phi| coupling_spectrum(corr, phi))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let traces = TraceBundle::mean(&bundles).expect("non-empty pool");
    let t1_rel_std = if bundles.len() > 1 {
        let var = bundles
            .iter()
            .map(|b| (b.t1 - traces.t1).powi(2))
            .sum::<f64>()
            / (bundles.len() - 1) as f64;
        var.sqrt() / traces.t1
    } else {
        0.0
    };
    let source = match mode {
        PhiMode::Fixed => PhaseSource::Fixed(pool.into_iter().next().expect("one draw")),
        PhiMode::Expectation => PhaseSource::Pool(pool),
    };
    Ok(AnalyticPhi {
        traces,
        spectra,
        source,
        t1_rel_std,
    })
}

/// Bob's Gamma fit and Eve's Exponential fit for a scenario and Φ set.
///
/// Trace-based variants use the pooled traces; `Exact` averages the spectral
/// moments over the pool, which is exact for the pooled mixture.
pub fn fit_pair(
    p: &ScenarioParams,
    phi: &AnalyticPhi,
    variant: MomentVariant,
) -> Result<(GammaFit, ExpFit)> {
    if variant.is_trace_based() {
        let g = prop1_gamma_fit(p, &phi.traces, variant)?;
        let e = exp_fit(p, &phi.traces, variant)?;
        return Ok((g, e));
    }
    if phi.spectra.is_empty() {
        return Err(Error::domain(
            "exact moments need the coupling spectra of the Φ pool",
        ));
    }
    let per_draw = phi
        .spectra
        .par_iter()
        .map(|k| spectral_moments(p, k))
        .collect::<Result<Vec<_>>>()?;
    let sm = SpectralMoments::mean(&per_draw).expect("non-empty");
    let g = gamma_fit_from_moments(sm.mean_xb, sm.second_xb)?;
    let theta = sm.mean_xe;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidFit {
            mean: theta,
            second_moment: 2.0 * theta * theta,
            shape: 1.0,
            scale: theta,
        });
    }
    let e = ExpFit {
        theta,
        mean_y: sm.mean_ye(),
        denominator_z: sm.mean_ye() / theta,
        terms: EveTerms::Exact {
            ris_term: sm.ris_term,
            beamforming_term: sm.beamforming_term,
            direct_term: sm.direct_term,
        },
    };
    Ok((g, e))
}
