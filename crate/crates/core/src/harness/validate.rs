//! Self-checks against independent oracles, reported as JSON.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::presets::figure_preset;
use super::sweep::db_to_linear;
use crate::channel::{
    sample_gaussian_vector, sample_von_mises, snr_batch, McOptions, PhaseSource, ScenarioParams,
};
use crate::error::Result;
use crate::geometry::{
    build_correlation, factorize, CorrelationMatrix, RisGeometry, DEFAULT_CLAMP_FLOOR,
};
use crate::moments::{
    analytic_phi, bob_moments, exp_fit, spectral_moments, MomentVariant, PhiMode, SpectralMoments,
};
use crate::secrecy::{sop_closed_form_detail, sop_quadrature, SecrecySnapshot};
use crate::specfun::{
    bessel_i_ratio, beta, gauss_2f1_nonpositive_z, gauss_2f1_via, ln_gamma,
    reg_lower_incomplete_gamma, Hyp2f1Path,
};

/// Signature of a `₂F₁(a, b; c; z)` implementation for `z ≤ 0`.
pub type Hyp2f1Fn = fn(f64, f64, f64, f64) -> Result<f64>;

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// `₂F₁` used by the identity check and the generic closed form.
    pub hyp2f1: Hyp2f1Fn,
    pub seed: u64,
    pub covariance_draws: usize,
    pub vm_draws: usize,
    pub oracle_trials: usize,
    pub slope_trials: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            hyp2f1: gauss_2f1_nonpositive_z,
            seed: 20_240_601,
            covariance_draws: 100_000,
            vm_draws: 100_000,
            oracle_trials: 100_000,
            slope_trials: 2_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub measured: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    /// Moment variant that passed the Monte Carlo oracle with the smallest
    /// worst-case z-score.
    pub moment_variant_winner: Option<String>,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn timed(name: &str, f: impl FnOnce() -> (bool, Value)) -> CheckResult {
    let t = Instant::now();
    let (passed, measured) = f();
    CheckResult {
        name: name.to_string(),
        passed,
        seconds: t.elapsed().as_secs_f64(),
        measured,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn failed(e: impl std::fmt::Display) -> (bool, Value) {
    (false, json!({ "error": e.to_string() }))
}

pub fn check_gamma_identities() -> CheckResult {
    timed("gamma_identities", || {
        let mut worst_rec: f64 = 0.0;
        for x in [0.3, 1.0, 2.5, 7.25, 19.0, 64.5] {
            let lhs = ln_gamma(x + 1.0).unwrap();
            let rhs = x.ln() + ln_gamma(x).unwrap();
            worst_rec = worst_rec.max(rel_err(lhs.exp(), rhs.exp()));
        }
        let mut worst_p: f64 = 0.0;
        for x in [1e-3, 0.1, 1.0, 3.0, 10.0, 40.0] {
            let p = reg_lower_incomplete_gamma(1.0, x).unwrap();
            worst_p = worst_p.max(rel_err(p, -(-x).exp_m1()));
        }
        let passed = worst_rec <= 1e-10 && worst_p <= 1e-10;
        (
            passed,
            json!({ "recurrence_rel_err": worst_rec, "p1_rel_err": worst_p }),
        )
    })
}

pub fn check_hyp2f1_identities(hyp: Hyp2f1Fn) -> CheckResult {
    timed("hyp2f1_identities", || {
        let ln2 = match hyp(1.0, 1.0, 2.0, -1.0) {
            Ok(v) => rel_err(v, std::f64::consts::LN_2),
            Err(e) => return failed(e),
        };
        let mut worst: f64 = 0.0;
        for (a, b, z) in [
            (0.5, 1.5, -0.3),
            (2.0, 3.0, -0.9),
            (4.5, 0.7, -2.0),
            (1.0, 6.0, -10.0),
        ] {
            match hyp(a, b, a, z) {
                Ok(v) => worst = worst.max(rel_err(v, (1.0 - z).powf(-b))),
                Err(e) => return failed(e),
            }
        }
        let passed = ln2 <= 1e-10 && worst <= 1e-10;
        (
            passed,
            json!({ "ln2_rel_err": ln2, "power_rel_err": worst }),
        )
    })
}

pub fn check_hyp2f1_paths() -> CheckResult {
    timed("hyp2f1_paths", || {
        let mut worst: f64 = 0.0;
        for k in [0.5, 1.0, 2.7, 5.0, 12.0] {
            for z in [-1e-3, -0.4, -1.0, -5.0, -80.0] {
                let p = gauss_2f1_via(k + 1.0, k, k + 1.0, z, Hyp2f1Path::Pfaff);
                let e = gauss_2f1_via(k + 1.0, k, k + 1.0, z, Hyp2f1Path::Euler);
                match (p, e) {
                    (Ok(p), Ok(e)) => worst = worst.max(rel_err(p, e)),
                    (Err(e), _) | (_, Err(e)) => return failed(e),
                }
            }
        }
        (worst <= 1e-10, json!({ "max_rel_diff": worst }))
    })
}

/// Random snapshots: closed form against quadrature, and the generic
/// hypergeometric form (through `hyp`) against the power form.
pub fn check_sop_engines(hyp: Hyp2f1Fn, seed: u64) -> CheckResult {
    timed("sop_engines", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_quad: f64 = 0.0;
        let mut worst_generic: f64 = 0.0;
        for _ in 0..50 {
            let k = 10f64.powf(rng.gen_range(-0.5..1.5));
            let theta_b = 10f64.powf(rng.gen_range(-12.0..-8.0));
            let theta_e = theta_b * 10f64.powf(rng.gen_range(-3.0..1.0));
            let r = rng.gen_range(0.1..3.0);
            let s = match SecrecySnapshot::from_parameters(1e12, 1e12, k, theta_b, theta_e, r) {
                Ok(s) => s,
                Err(e) => return failed(e),
            };
            let d = match sop_closed_form_detail(&s) {
                Ok(d) => d,
                Err(e) => return failed(e),
            };
            match sop_quadrature(&s, 1e-9) {
                Ok(q) => worst_quad = worst_quad.max((q - d.simplified).abs()),
                Err(e) => return failed(e),
            }
            let x = s.ratio();
            let y = x * r.exp2();
            let generic = match hyp(k + 1.0, k, k + 1.0, -y) {
                Ok(h) => (k * x.ln() + k * r * std::f64::consts::LN_2
                    - (k * beta(k, 1.0).unwrap()).ln()
                    + h.ln())
                .exp(),
                Err(e) => return failed(e),
            };
            worst_generic = worst_generic.max(rel_err(generic, d.simplified));
        }
        let passed = worst_quad <= 1e-6 && worst_generic <= 1e-10;
        (
            passed,
            json!({ "max_abs_quadrature_diff": worst_quad, "max_rel_generic_diff": worst_generic }),
        )
    })
}

pub fn check_sampler_covariance(draws: usize, seed: u64) -> CheckResult {
    timed("sampler_covariance", || {
        let g = RisGeometry::square(6, 0.25, 0.1).unwrap();
        let r = build_correlation(&g);
        let f = factorize(&r, DEFAULT_CLAMP_FLOOR).unwrap();
        let n = g.n_elements();
        let scale = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s_re = DMatrix::<f64>::zeros(n, n);
        let mut s_im = DMatrix::<f64>::zeros(n, n);
        let mut q_re = DMatrix::<f64>::zeros(n, n);
        let mut q_im = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            let x = sample_gaussian_vector(&mut rng, n, scale, f.factor()).unwrap();
            for a in 0..n {
                for b in a..n {
                    let v = x[a] * x[b].conj();
                    s_re[(a, b)] += v.re;
                    s_im[(a, b)] += v.im;
                    q_re[(a, b)] += v.re * v.re;
                    q_im[(a, b)] += v.im * v.im;
                }
            }
        }
        let d = draws as f64;
        let mut worst_z: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                for (sum, sq, target) in [
                    (s_re[(a, b)], q_re[(a, b)], scale * r.entries()[(a, b)]),
                    (s_im[(a, b)], q_im[(a, b)], 0.0),
                ] {
                    let mean = sum / d;
                    let var = (sq / d - mean * mean).max(0.0) * d / (d - 1.0);
                    let se = (var / d).sqrt();
                    if se > 0.0 {
                        worst_z = worst_z.max((mean - target).abs() / se);
                    }
                }
            }
        }
        (
            worst_z <= 5.0,
            json!({ "draws": draws, "max_abs_z": worst_z }),
        )
    })
}

pub fn check_von_mises(draws: usize, seed: u64) -> CheckResult {
    timed("von_mises_resultant", || {
        let mut out = Vec::new();
        let mut passed = true;
        for kappa in [1.0, 5.0, 20.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kappa as u64));
            let angles = sample_von_mises(&mut rng, kappa, draws).unwrap();
            let c = angles.iter().map(|a| a.cos()).sum::<f64>() / draws as f64;
            let s = angles.iter().map(|a| a.sin()).sum::<f64>() / draws as f64;
            let resultant = (c * c + s * s).sqrt();
            let expect = bessel_i_ratio(kappa).unwrap();
            passed &= (resultant - expect).abs() <= 0.01;
            out.push(json!({ "kappa": kappa, "resultant": resultant, "i1_over_i0": expect }));
        }
        (passed, Value::Array(out))
    })
}

/// Moment oracle on the Fig. 2b scenario (N = 144, `Aβ₂,B = −60 dB`) with a
/// single fixed Φ shared by both engines. Returns the check and the winner.
pub fn check_moment_oracle(trials: usize, seed: u64) -> (CheckResult, Option<String>) {
    let mut winner = None;
    let check = timed("moment_oracle", || {
        let spec = figure_preset("2b")
            .unwrap()
            .into_iter()
            .find(|s| s.curve == "N144_EU")
            .unwrap();
        let p = match spec.point_params(-60.0) {
            Ok(p) => p,
            Err(e) => return failed(e),
        };
        let mut p_ea = p.clone();
        p_ea.emi_flag_e = false;
        let corr = factorize(&build_correlation(&p.geometry), DEFAULT_CLAMP_FLOOR).unwrap();
        let phi = match analytic_phi(&p, &corr, PhiMode::Fixed, 1, seed, true) {
            Ok(a) => a,
            Err(e) => return failed(e),
        };
        let opts = McOptions {
            phases: phi.source.clone(),
            ..McOptions::default()
        };
        let samples = match snr_batch(&p, &corr, &opts, trials, seed ^ 0xA5A5) {
            Ok(s) => s,
            Err(e) => return failed(e),
        };
        let n = samples.len() as f64;
        let stats = |f: &dyn Fn(&crate::channel::SnrSample) -> f64| {
            let m = samples.iter().map(f).sum::<f64>() / n;
            let v = samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (v / n).sqrt())
        };
        let (xb, xb_se) = stats(&|s| s.gamma_b / p.gamma_bar_b());
        let (xe_eu, xe_eu_se) = stats(&|s| s.gamma_e / p.gamma_bar_e());
        // Removing the EMI term from Eve's denominator gives the EA sample.
        let (xe_ea, xe_ea_se) = stats(&|s| {
            s.gamma_e * (s.emi_power_term_e + p.noise_power_e) / p.noise_power_e / p.gamma_bar_e()
        });

        let exact = spectral_moments(&p, &phi.spectra[0]).and_then(|eu| {
            let ea = spectral_moments(&p_ea, &phi.spectra[0])?;
            Ok((eu, ea))
        });
        let mut rows = Vec::new();
        let mut best: Option<(f64, MomentVariant)> = None;
        for v in [
            MomentVariant::AsPrinted,
            MomentVariant::Corrected,
            MomentVariant::Exact,
        ] {
            let est = match v {
                MomentVariant::Exact => exact
                    .as_ref()
                    .map(|(eu, ea): &(SpectralMoments, SpectralMoments)| {
                        (eu.mean_xb, eu.mean_xe, ea.mean_xe)
                    })
                    .map_err(|e| e.to_string()),
                _ => {
                    let t = &phi.traces;
                    let vs = bob_moments(&p, t, v).varsigma();
                    match (exp_fit(&p, t, v), exp_fit(&p_ea, t, v)) {
                        (Ok(eu), Ok(ea)) => Ok((vs, eu.theta, ea.theta)),
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                    }
                }
            };
            match est {
                Ok((vs, te_eu, te_ea)) => {
                    let z = [
                        (vs - xb) / xb_se,
                        (te_ea - xe_ea) / xe_ea_se,
                        (te_eu - xe_eu) / xe_eu_se,
                    ];
                    let worst = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    if worst <= 3.0 && best.is_none_or(|(w, _)| worst < w) {
                        best = Some((worst, v));
                    }
                    rows.push(json!({
                        "variant": v.as_str(),
                        "varsigma_b": vs, "theta_e_ea": te_ea, "theta_e_eu": te_eu,
                        "z_varsigma_b": z[0], "z_theta_e_ea": z[1], "z_theta_e_eu": z[2],
                        "passed": worst <= 3.0,
                    }));
                }
                Err(e) => rows.push(json!({ "variant": v.as_str(), "error": e, "passed": false })),
            }
        }
        winner = best.map(|(_, v)| v.as_str().to_string());
        let measured = json!({
            "trials": trials,
            "mc_mean_xb": xb, "mc_mean_xb_se": xb_se,
            "mc_mean_xe_ea": xe_ea, "mc_mean_xe_ea_se": xe_ea_se,
            "mc_mean_xe_eu": xe_eu, "mc_mean_xe_eu_se": xe_eu_se,
            "variants": rows,
            "winner": winner,
        });
        (best.is_some(), measured)
    });
    (check, winner)
}

/// Ideal phases, one antenna and uncorrelated elements: the mean SNR is
/// `c (N² π²/16 + N (1 − π²/16))`, whose log-log slope is close to 2.
pub fn check_clean_scaling(trials: usize, seed: u64) -> CheckResult {
    timed("clean_n2_scaling", || {
        let mut pts = Vec::new();
        for side in [4usize, 8, 16] {
            let g = RisGeometry::square(side, 0.5, 0.1).unwrap();
            let n = g.n_elements();
            let corr = match factorize(
                &CorrelationMatrix::from_entries(DMatrix::identity(n, n)),
                DEFAULT_CLAMP_FLOOR,
            ) {
                Ok(c) => c,
                Err(e) => return failed(e),
            };
            let a = g.element_area();
            let p = ScenarioParams {
                tx_power: 0.1,
                noise_power_b: db_to_linear(-134.0),
                noise_power_e: db_to_linear(-134.0),
                emi_power: 0.0,
                pathloss_ris: db_to_linear(-60.0) / a,
                pathloss_ris_rx_b: db_to_linear(-60.0) / a,
                pathloss_ris_rx_e: db_to_linear(-60.0) / a,
                pathloss_direct_b: 0.0,
                pathloss_direct_e: 0.0,
                m_antennas: 1,
                vm_concentration: 1e12,
                emi_flag_b: true,
                emi_flag_e: true,
                secrecy_rate: 1.0,
                geometry: g,
            };
            let opts = McOptions {
                phases: PhaseSource::Designed,
                ..McOptions::default()
            };
            let s = match snr_batch(&p, &corr, &opts, trials, seed) {
                Ok(s) => s,
                Err(e) => return failed(e),
            };
            let mean = s.iter().map(|v| v.gamma_b).sum::<f64>() / s.len() as f64;
            let nn = n as f64;
            let q = std::f64::consts::PI * std::f64::consts::PI / 16.0;
            let oracle = nn * nn * q + nn * (1.0 - q);
            pts.push((nn, mean, oracle));
        }
        let slope = |ys: &dyn Fn(&(f64, f64, f64)) -> f64| {
            let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = pts.iter().map(|p| ys(p).ln()).collect();
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            sxy / sxx
        };
        let mc = slope(&|p| p.1);
        let oracle = slope(&|p| p.2);
        (
            (mc - 2.0).abs() <= 0.05,
            json!({ "slope_mc": mc, "slope_oracle": oracle, "n": [16, 64, 256] }),
        )
    })
}

pub fn validate() -> ValidationReport {
    validate_with(&ValidateOptions::default())
}

pub fn validate_with(opts: &ValidateOptions) -> ValidationReport {
    let mut checks = vec![
        check_gamma_identities(),
        check_hyp2f1_identities(opts.hyp2f1),
        check_hyp2f1_paths(),
        check_sop_engines(opts.hyp2f1, opts.seed),
        check_sampler_covariance(opts.covariance_draws, opts.seed),
        check_von_mises(opts.vm_draws, opts.seed),
    ];
    let (oracle, winner) = check_moment_oracle(opts.oracle_trials, opts.seed);
    checks.push(oracle);
    checks.push(check_clean_scaling(opts.slope_trials, opts.seed));
    ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        moment_variant_winner: winner,
        checks,
    }
}
