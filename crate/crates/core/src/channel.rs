//! Random channel draws, RIS phase design, MRT beamforming and per-trial SNRs.
//!
//! Every trial owns a ChaCha8 substream selected by `(seed, trial index)`, so
//! a batch of trials produces the same numbers no matter how it is split
//! across threads. Within a trial the draws are taken in a fixed order:
//! direct links (Bob, Eve), RIS-to-receiver links (Bob, Eve), the
//! transmitter-to-RIS matrix column by column, phase errors, then EMI.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CorrelationMatrix, RisGeometry, C64};

/// Trials are processed in fixed blocks of this size; block boundaries never
/// depend on the thread count.
pub const TRIAL_BLOCK: usize = 256;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Above this concentration the von Mises law is replaced by its wrapped
/// normal limit.
const VM_NORMAL_LIMIT: f64 = 1e6;

/// All scalars of the system model, in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub tx_power: f64,
    pub noise_power_b: f64,
    pub noise_power_e: f64,
    pub emi_power: f64,
    /// β₁, transmitter to RIS.
    pub pathloss_ris: f64,
    /// β₂,B, RIS to Bob.
    pub pathloss_ris_rx_b: f64,
    /// β₂,E, RIS to Eve.
    pub pathloss_ris_rx_e: f64,
    pub pathloss_direct_b: f64,
    pub pathloss_direct_e: f64,
    pub m_antennas: usize,
    pub vm_concentration: f64,
    pub emi_flag_b: bool,
    pub emi_flag_e: bool,
    pub secrecy_rate: f64,
    pub geometry: RisGeometry,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let nonneg = [
            ("tx_power", self.tx_power),
            ("emi_power", self.emi_power),
            ("pathloss_ris", self.pathloss_ris),
            ("pathloss_ris_rx_b", self.pathloss_ris_rx_b),
            ("pathloss_ris_rx_e", self.pathloss_ris_rx_e),
            ("pathloss_direct_b", self.pathloss_direct_b),
            ("pathloss_direct_e", self.pathloss_direct_e),
            ("vm_concentration", self.vm_concentration),
            ("secrecy_rate", self.secrecy_rate),
        ];
        for (name, v) in nonneg {
            let finite_ok = v.is_finite() || name == "vm_concentration";
            if !(v >= 0.0) || !finite_ok {
                return Err(Error::domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("noise_power_b", self.noise_power_b),
            ("noise_power_e", self.noise_power_e),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.m_antennas == 0 {
            return Err(Error::domain("m_antennas must be at least 1"));
        }
        if self.pathloss_direct_b == 0.0
            && (self.pathloss_ris == 0.0 || self.pathloss_ris_rx_b == 0.0)
        {
            return Err(Error::Degenerate(
                "Bob has neither a direct link nor a RIS link".into(),
            ));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.geometry.n_elements()
    }

    pub fn element_area(&self) -> f64 {
        self.geometry.element_area()
    }

    pub fn delta_b(&self) -> f64 {
        if self.emi_flag_b {
            1.0
        } else {
            0.0
        }
    }

    pub fn delta_e(&self) -> f64 {
        if self.emi_flag_e {
            1.0
        } else {
            0.0
        }
    }

    /// Signal-to-EMI power ratio `P β₁ / σ²_EMI` (infinite without EMI).
    pub fn rho(&self) -> f64 {
        if self.emi_power == 0.0 {
            f64::INFINITY
        } else {
            self.tx_power * self.pathloss_ris / self.emi_power
        }
    }

    /// Average transmit SNR at Bob, `P / σ_B²`.
    pub fn gamma_bar_b(&self) -> f64 {
        self.tx_power / self.noise_power_b
    }

    pub fn gamma_bar_e(&self) -> f64 {
        self.tx_power / self.noise_power_e
    }

    fn has_direct_b(&self) -> bool {
        self.pathloss_direct_b > 0.0
    }
}

/// Which receiver an evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bob,
    Eve,
}

/// Shape of the EMI quadratic form in the SNR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmiForm {
    /// `h₂ᴴ Φ R Φᴴ h₂`, the power of `h₂ᴴ Φ ν`.
    #[default]
    Hermitian,
    /// `Re(h₂ᴴ Φ R h₂)`, clamped at zero.
    AsPrintedRealPart,
}

/// Whether Eve sees the same EMI vector as Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EveEmiField {
    #[default]
    Shared,
    Independent,
}

/// Where the RIS phase matrix of each trial comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PhaseSource {
    /// Joint design on the trial's own channels plus von Mises noise.
    #[default]
    Designed,
    /// The same diagonal Φ for every trial.
    Fixed(Vec<C64>),
    /// Trial block `b` uses `pool[b % pool.len()]`.
    Pool(Vec<Vec<C64>>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct McOptions {
    pub emi_form: EmiForm,
    pub eve_emi_field: EveEmiField,
    pub phases: PhaseSource,
}

/// One joint draw of every random object in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_direct_b: DVector<C64>,
    pub h_direct_e: DVector<C64>,
    pub h2_b: DVector<C64>,
    pub h2_e: DVector<C64>,
    /// `N × M`; row `n` is `g_n`.
    pub g: DMatrix<C64>,
    pub emi: DVector<C64>,
    /// EMI vector reaching Eve (equal to `emi` for a shared field).
    pub emi_e: DVector<C64>,
    /// Diagonal of Φ.
    pub phase_matrix: Vec<C64>,
    pub beamformer: DVector<C64>,
    /// Ideal phases φ_n (empty when Φ was supplied externally).
    pub designed_phases: Vec<f64>,
    /// Phase errors added to the design (empty when Φ was supplied).
    pub phase_errors: Vec<f64>,
}

/// Per-trial SNRs and the interference powers behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSample {
    pub gamma_b: f64,
    pub gamma_e: f64,
    pub emi_power_term_b: f64,
    pub emi_power_term_e: f64,
}

/// RNG for substream `stream` of `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 mix of `seed` and `salt`, for deriving independent seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard circularly-symmetric complex Gaussian.
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn standard_complex_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| standard_complex(rng)).collect()
}

/// `√scale · L · z` with `z` standard complex Gaussian (`L = I` when absent).
pub fn sample_gaussian_vector<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    variance_scale: f64,
    factor: Option<&DMatrix<f64>>,
) -> Result<DVector<C64>> {
    if !(variance_scale >= 0.0) || !variance_scale.is_finite() {
        return Err(Error::domain(format!(
            "variance scale must be finite and >= 0, got {variance_scale}"
        )));
    }
    if let Some(l) = factor {
        if l.nrows() != dim {
            return Err(Error::domain(format!(
                "factor has {} rows, expected {dim}",
                l.nrows()
            )));
        }
    }
    let z = match factor {
        None => standard_complex_vec(rng, dim),
        Some(l) => standard_complex_vec(rng, l.ncols()),
    };
    Ok(color(factor, &z, variance_scale.sqrt()))
}

fn color(factor: Option<&DMatrix<f64>>, z: &[C64], s: f64) -> DVector<C64> {
    match factor {
        None => DVector::from_iterator(z.len(), z.iter().map(|v| v * s)),
        Some(l) => {
            let zr = DVector::from_iterator(z.len(), z.iter().map(|v| v.re));
            let zi = DVector::from_iterator(z.len(), z.iter().map(|v| v.im));
            let yr = l * zr;
            let yi = l * zi;
            DVector::from_iterator(
                l.nrows(),
                yr.iter().zip(yi.iter()).map(|(a, b)| C64::new(*a, *b) * s),
            )
        }
    }
}

fn wrap_angle(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// One zero-mean von Mises draw in `(−π, π]` (Best–Fisher rejection).
pub fn von_mises_one<R: Rng + ?Sized>(rng: &mut R, kappa: f64) -> f64 {
    if kappa == 0.0 {
        let u: f64 = rng.gen();
        return PI - 2.0 * PI * u;
    }
    if kappa > VM_NORMAL_LIMIT {
        let z: f64 = rng.sample(StandardNormal);
        return wrap_angle(z / kappa.sqrt());
    }
    let s = if kappa < 1e-5 {
        1.0 / kappa + kappa
    } else {
        let r = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
        let rho = (r - (2.0 * r).sqrt()) / (2.0 * kappa);
        (1.0 + rho * rho) / (2.0 * rho)
    };
    let w = loop {
        let u: f64 = rng.gen();
        let z = (PI * u).cos();
        let w = (1.0 + s * z) / (s + z);
        let y = kappa * (s - w);
        let v: f64 = rng.gen();
        if y * (2.0 - y) - v >= 0.0 || (y / v).ln() + 1.0 - y >= 0.0 {
            break w;
        }
    };
    let mut angle = w.clamp(-1.0, 1.0).acos();
    let u3: f64 = rng.gen();
    if u3 < 0.5 {
        angle = -angle;
    }
    if angle <= -PI {
        angle = PI;
    }
    angle
}

/// `count` i.i.d. zero-mean von Mises angles with concentration `kappa`.
pub fn sample_von_mises<R: Rng + ?Sized>(
    rng: &mut R,
    kappa: f64,
    count: usize,
) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return Err(Error::domain(format!(
            "von Mises concentration must be >= 0, got {kappa}"
        )));
    }
    Ok((0..count).map(|_| von_mises_one(rng, kappa)).collect())
}

/// Composite channel `h₂ᴴ Φ G + h_dᴴ` as an M-vector.
pub fn composite_channel(
    h2: &DVector<C64>,
    phi: &[C64],
    g: &DMatrix<C64>,
    h_direct: Option<&DVector<C64>>,
) -> DVector<C64> {
    let m = g.ncols();
    let mut out = DVector::from_element(m, C64::new(0.0, 0.0));
    for q in 0..m {
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..h2.len() {
            acc += h2[n].conj() * phi[n] * g[(n, q)];
        }
        if let Some(hd) = h_direct {
            acc += hd[q].conj();
        }
        out[q] = acc;
    }
    out
}

/// RIS phases aligning every reflected path with the direct path at Bob.
///
/// Without a direct link the common reference angle is 0.
pub fn design_phases(
    h2_b: &DVector<C64>,
    g: &DMatrix<C64>,
    h_direct_b: Option<&DVector<C64>>,
    w: &DVector<C64>,
) -> Vec<f64> {
    let reference = h_direct_b.map_or(0.0, |hd| hd.dotc(w).arg());
    let gw = g * w;
    (0..h2_b.len())
        .map(|n| reference + h2_b[n].arg() - gw[n].arg())
        .collect()
}

/// `Φ = diag(e^{jφ})`.
pub fn phase_matrix(phases: &[f64]) -> Vec<C64> {
    phases.iter().map(|&p| C64::from_polar(1.0, p)).collect()
}

/// Unit-norm MRT beamformer `(h₂ᴴΦG + h_dᴴ)ᴴ / ‖·‖`.
pub fn mrt_beamformer(
    h2_b: &DVector<C64>,
    phi: &[C64],
    g: &DMatrix<C64>,
    h_direct_b: Option<&DVector<C64>>,
) -> Result<DVector<C64>> {
    mrt_from_composite(&composite_channel(h2_b, phi, g, h_direct_b))
}

fn mrt_from_composite(h: &DVector<C64>) -> Result<DVector<C64>> {
    let norm = h.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate("composite channel to Bob is zero".into()));
    }
    Ok(h.map(|v| v.conj() / norm))
}

/// Outcome of the alternating phase / beamformer optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDesign {
    pub phases: Vec<f64>,
    pub w: DVector<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|h_B w|` after each iteration.
    pub objective: Vec<f64>,
}

/// Alternate [`design_phases`] and [`mrt_beamformer`] until the beamformer
/// settles.
pub fn joint_phase_beamforming(
    h2_b: &DVector<C64>,
    g: &DMatrix<C64>,
    h_direct_b: Option<&DVector<C64>>,
    max_iters: usize,
    tol: f64,
) -> Result<JointDesign> {
    if max_iters == 0 {
        return Err(Error::domain("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let m = g.ncols();
    let direct = h_direct_b.filter(|hd| hd.norm() > 0.0);
    let mut w = match direct {
        Some(hd) => hd.unscale(hd.norm()),
        None => DVector::from_element(m, C64::new(1.0 / (m as f64).sqrt(), 0.0)),
    };
    let mut objective = Vec::new();
    for it in 1..=max_iters {
        let phases = design_phases(h2_b, g, direct, &w);
        let h = composite_channel(h2_b, &phase_matrix(&phases), g, direct);
        let w_next = mrt_from_composite(&h)?;
        objective.push(h.norm());
        let step = (&w_next - &w).norm();
        w = w_next;
        if step < tol || it == max_iters {
            return Ok(JointDesign {
                phases,
                w,
                iterations: it,
                converged: step < tol,
                objective,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Add von Mises errors to the designed phases: returns `(Φ, errors)`.
pub fn apply_phase_noise<R: Rng + ?Sized>(
    rng: &mut R,
    phases: &[f64],
    kappa: f64,
) -> Result<(Vec<C64>, Vec<f64>)> {
    let errors = sample_von_mises(rng, kappa, phases.len())?;
    let phi = phases
        .iter()
        .zip(&errors)
        .map(|(p, e)| C64::from_polar(1.0, p + e))
        .collect();
    Ok((phi, errors))
}

fn require_factor(corr: &CorrelationMatrix, n: usize) -> Result<&DMatrix<f64>> {
    let l = corr
        .factor()
        .ok_or_else(|| Error::domain("correlation matrix must be factorized before sampling"))?;
    if l.nrows() != n {
        return Err(Error::domain(format!(
            "correlation is {}×{} but the geometry has {n} elements",
            l.nrows(),
            l.nrows()
        )));
    }
    Ok(l)
}

/// Draw a full realization. With `phi = None` the phases are designed on the
/// drawn channels and perturbed by von Mises noise; otherwise `phi` is used.
pub fn sample_realization<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    phi: Option<&[C64]>,
    eve_field: EveEmiField,
) -> Result<ChannelRealization> {
    let n = params.n_elements();
    let m = params.m_antennas;
    let a = params.element_area();
    let l = require_factor(corr, n)?;
    let h_direct_b = sample_gaussian_vector(rng, m, params.pathloss_direct_b, None)?;
    let h_direct_e = sample_gaussian_vector(rng, m, params.pathloss_direct_e, None)?;
    let h2_b = sample_gaussian_vector(rng, n, a * params.pathloss_ris_rx_b, Some(l))?;
    let h2_e = sample_gaussian_vector(rng, n, a * params.pathloss_ris_rx_e, Some(l))?;
    let mut g = DMatrix::from_element(n, m, C64::new(0.0, 0.0));
    for q in 0..m {
        let col = sample_gaussian_vector(rng, n, a * params.pathloss_ris, Some(l))?;
        g.set_column(q, &col);
    }
    let direct = params.has_direct_b().then_some(&h_direct_b);
    let (phase_matrix, designed_phases, phase_errors) = match phi {
        Some(p) => {
            if p.len() != n {
                return Err(Error::domain(format!(
                    "phase vector has length {}, expected {n}",
                    p.len()
                )));
            }
            (p.to_vec(), Vec::new(), Vec::new())
        }
        None => {
            let design =
                joint_phase_beamforming(&h2_b, &g, direct, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
            let (phi, errors) = apply_phase_noise(rng, &design.phases, params.vm_concentration)?;
            (phi, design.phases, errors)
        }
    };
    let beamformer = mrt_beamformer(&h2_b, &phase_matrix, &g, direct)?;
    let emi = sample_gaussian_vector(rng, n, a * params.emi_power, Some(l))?;
    let emi_e = match eve_field {
        EveEmiField::Shared => emi.clone(),
        EveEmiField::Independent => sample_gaussian_vector(rng, n, a * params.emi_power, Some(l))?,
    };
    Ok(ChannelRealization {
        h_direct_b,
        h_direct_e,
        h2_b,
        h2_e,
        g,
        emi,
        emi_e,
        phase_matrix,
        beamformer,
        designed_phases,
        phase_errors,
    })
}

/// EMI quadratic form `Q_i` of one receiver.
pub fn emi_quadratic_form(
    corr: &CorrelationMatrix,
    h2: &DVector<C64>,
    phi: &[C64],
    form: EmiForm,
) -> f64 {
    let r = corr.entries();
    let n = h2.len();
    // u = Φᴴ h₂ (hermitian) or u = h₂ (as printed); left factor is Φᴴ h₂ in both.
    let left: Vec<C64> = (0..n).map(|i| phi[i].conj() * h2[i]).collect();
    let right: Vec<C64> = match form {
        EmiForm::Hermitian => left.clone(),
        EmiForm::AsPrintedRealPart => h2.iter().cloned().collect(),
    };
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..n {
            row += right[j] * r[(i, j)];
        }
        acc += left[i].conj() * row;
    }
    acc.re.max(0.0)
}

/// Realized power of the EMI term `|h₂ᴴ Φ ν|²` at one receiver.
pub fn realized_interference(real: &ChannelRealization, side: Side) -> f64 {
    let (h2, nu) = match side {
        Side::Bob => (&real.h2_b, &real.emi),
        Side::Eve => (&real.h2_e, &real.emi_e),
    };
    let mut acc = C64::new(0.0, 0.0);
    for n in 0..h2.len() {
        acc += h2[n].conj() * real.phase_matrix[n] * nu[n];
    }
    acc.norm_sqr()
}

/// SNR of one receiver on a complete realization: `(γ, interference term)`.
pub fn received_snr(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    real: &ChannelRealization,
    side: Side,
    form: EmiForm,
) -> (f64, f64) {
    let (h2, hd, beta_d, sigma2, delta) = match side {
        Side::Bob => (
            &real.h2_b,
            &real.h_direct_b,
            params.pathloss_direct_b,
            params.noise_power_b,
            params.delta_b(),
        ),
        Side::Eve => (
            &real.h2_e,
            &real.h_direct_e,
            params.pathloss_direct_e,
            params.noise_power_e,
            params.delta_e(),
        ),
    };
    let direct = (beta_d > 0.0).then_some(hd);
    let h = composite_channel(h2, &real.phase_matrix, &real.g, direct);
    let signal = h.dot(&real.beamformer).norm_sqr();
    let emi_term = if delta > 0.0 && params.emi_power > 0.0 {
        params.element_area()
            * delta
            * params.emi_power
            * emi_quadratic_form(corr, h2, &real.phase_matrix, form)
    } else {
        0.0
    };
    (params.tx_power * signal / (emi_term + sigma2), emi_term)
}

/// Both SNRs of a realization.
pub fn snr_sample(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    real: &ChannelRealization,
    form: EmiForm,
) -> SnrSample {
    let (gamma_b, emi_power_term_b) = received_snr(params, corr, real, Side::Bob, form);
    let (gamma_e, emi_power_term_e) = received_snr(params, corr, real, Side::Eve, form);
    SnrSample {
        gamma_b,
        gamma_e,
        emi_power_term_b,
        emi_power_term_e,
    }
}

/// `trials` SNR samples, deterministic in `(params, options, trials, seed)`.
pub fn snr_batch(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    options: &McOptions,
    trials: usize,
    seed: u64,
) -> Result<Vec<SnrSample>> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    params.validate()?;
    let n = params.n_elements();
    require_factor(corr, n)?;
    match &options.phases {
        PhaseSource::Fixed(p) => check_phi(p, n)?,
        PhaseSource::Pool(pool) => {
            if pool.is_empty() {
                return Err(Error::domain("phase pool is empty"));
            }
            for p in pool {
                check_phi(p, n)?;
            }
        }
        PhaseSource::Designed => {}
    }
    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let out: Vec<Vec<SnrSample>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * TRIAL_BLOCK;
            let end = (start + TRIAL_BLOCK).min(trials);
            match &options.phases {
                PhaseSource::Designed => designed_block(params, corr, options, seed, start, end),
                PhaseSource::Fixed(p) => matched_block(params, corr, options, p, seed, start, end),
                PhaseSource::Pool(pool) => matched_block(
                    params,
                    corr,
                    options,
                    &pool[b % pool.len()],
                    seed,
                    start,
                    end,
                ),
            }
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

fn check_phi(p: &[C64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::domain(format!(
            "phase vector has length {}, expected {n}",
            p.len()
        )));
    }
    crate::geometry::check_unit_modulus(p)
}

fn designed_block(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    options: &McOptions,
    seed: u64,
    start: usize,
    end: usize,
) -> Result<Vec<SnrSample>> {
    (start..end)
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let real = sample_realization(&mut rng, params, corr, None, options.eve_emi_field)?;
            Ok(snr_sample(params, corr, &real, options.emi_form))
        })
        .collect()
}

/// Fixed-Φ trials without forming `G` or the RIS-side vectors explicitly.
///
/// With `h₂ = √s L z` and `G = √s₁ L Z`, every quantity only needs
/// `K z` where `K = Lᵀ Φᴴ L` (`r × r`): `h₂ᴴ Φ G = √(s s₁) (K z)ᴴ Z` and
/// `h₂ᴴ Φ R Φᴴ h₂ = s ‖K z‖²`. The draws are consumed in the same order as
/// [`sample_realization`], so both paths see identical channels.
fn matched_block(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    options: &McOptions,
    phi: &[C64],
    seed: u64,
    start: usize,
    end: usize,
) -> Result<Vec<SnrSample>> {
    let l = corr.factor().expect("checked by caller");
    let eigs = corr.factor_eigenvalues().expect("checked by caller");
    let (n, r) = l.shape();
    let m = params.m_antennas;
    let count = end - start;
    let a = params.element_area();

    // K = Lᵀ Φᴴ L, split into real and imaginary parts.
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

    let mut zr = DMatrix::<f64>::zeros(r, 2 * count);
    let mut zi = DMatrix::<f64>::zeros(r, 2 * count);
    let mut directs = Vec::with_capacity(count);
    let mut gs = Vec::with_capacity(count);
    for (k, t) in (start..end).enumerate() {
        let mut rng = trial_rng(seed, t as u64);
        let db = standard_complex_vec(&mut rng, m);
        let de = standard_complex_vec(&mut rng, m);
        for col in [2 * k, 2 * k + 1] {
            for row in 0..r {
                let z = standard_complex(&mut rng);
                zr[(row, col)] = z.re;
                zi[(row, col)] = z.im;
            }
        }
        let zg = standard_complex_vec(&mut rng, r * m);
        directs.push((db, de));
        gs.push(zg);
    }
    let vr = &kr * &zr - &ki * &zi;
    let vi = &kr * &zi + &ki * &zr;

    let s1 = a * params.pathloss_ris;
    let s2b = a * params.pathloss_ris_rx_b;
    let s2e = a * params.pathloss_ris_rx_e;
    let sdb = params.pathloss_direct_b.sqrt();
    let sde = params.pathloss_direct_e.sqrt();
    let cb = (s1 * s2b).sqrt();
    let ce = (s1 * s2e).sqrt();
    let emi_b = a * params.delta_b() * params.emi_power;
    let emi_e = a * params.delta_e() * params.emi_power;

    let mut out = Vec::with_capacity(count);
    let mut hb = vec![C64::new(0.0, 0.0); m];
    let mut he = vec![C64::new(0.0, 0.0); m];
    for k in 0..count {
        let (db, de) = &directs[k];
        let zg = &gs[k];
        let (cbk, cek) = (2 * k, 2 * k + 1);
        for q in 0..m {
            let mut accb = C64::new(0.0, 0.0);
            let mut acce = C64::new(0.0, 0.0);
            let col = &zg[q * r..(q + 1) * r];
            for (row, zq) in col.iter().enumerate() {
                accb += C64::new(vr[(row, cbk)], -vi[(row, cbk)]) * zq;
                acce += C64::new(vr[(row, cek)], -vi[(row, cek)]) * zq;
            }
            hb[q] = accb * cb + db[q].conj() * sdb;
            he[q] = acce * ce + de[q].conj() * sde;
        }
        let yb: f64 = hb.iter().map(|v| v.norm_sqr()).sum();
        if !(yb > 0.0) {
            return Err(Error::Degenerate("composite channel to Bob is zero".into()));
        }
        let cross: C64 = he.iter().zip(&hb).map(|(e, b)| e * b.conj()).sum();
        let ye = cross.norm_sqr() / yb;
        let q_of = |col: usize, s2: f64| -> f64 {
            match options.emi_form {
                EmiForm::Hermitian => {
                    s2 * (0..r)
                        .map(|row| vr[(row, col)].powi(2) + vi[(row, col)].powi(2))
                        .sum::<f64>()
                }
                EmiForm::AsPrintedRealPart => {
                    let v: f64 = (0..r)
                        .map(|row| {
                            eigs[row]
                                * (vr[(row, col)] * zr[(row, col)]
                                    + vi[(row, col)] * zi[(row, col)])
                        })
                        .sum();
                    (s2 * v).max(0.0)
                }
            }
        };
        let tb = if emi_b > 0.0 {
            emi_b * q_of(cbk, s2b)
        } else {
            0.0
        };
        let te = if emi_e > 0.0 {
            emi_e * q_of(cek, s2e)
        } else {
            0.0
        };
        out.push(SnrSample {
            gamma_b: params.tx_power * yb / (tb + params.noise_power_b),
            gamma_e: params.tx_power * ye / (te + params.noise_power_e),
            emi_power_term_b: tb,
            emi_power_term_e: te,
        });
    }
    Ok(out)
}

/// Φ matrices produced by the full design pipeline (joint design plus phase
/// noise) on `draws` independent channel draws.
pub fn phase_pool(
    params: &ScenarioParams,
    corr: &CorrelationMatrix,
    draws: usize,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    params.validate()?;
    (0..draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = trial_rng(seed, j as u64);
            sample_realization(&mut rng, params, corr, None, EveEmiField::Shared)
                .map(|r| r.phase_matrix)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_correlation, factorize, DEFAULT_CLAMP_FLOOR};

    fn params(n_side: usize, m: usize) -> ScenarioParams {
        ScenarioParams {
            tx_power: 0.1,
            noise_power_b: 1e-13,
            noise_power_e: 1e-13,
            emi_power: 1e-6,
            pathloss_ris: 1e-3,
            pathloss_ris_rx_b: 1e-3,
            pathloss_ris_rx_e: 1e-3,
            pathloss_direct_b: 1e-9,
            pathloss_direct_e: 1e-9,
            m_antennas: m,
            vm_concentration: 4.0,
            emi_flag_b: true,
            emi_flag_e: true,
            secrecy_rate: 1.0,
            geometry: RisGeometry::square(n_side, 0.25, 0.1).unwrap(),
        }
    }

    fn corr(p: &ScenarioParams) -> CorrelationMatrix {
        factorize(&build_correlation(&p.geometry), DEFAULT_CLAMP_FLOOR).unwrap()
    }

    #[test]
    fn zero_scale_gives_zero_vector() {
        let mut rng = trial_rng(1, 0);
        let v = sample_gaussian_vector(&mut rng, 4, 0.0, None).unwrap();
        assert!(v.iter().all(|c| *c == C64::new(0.0, 0.0)));
        assert!(sample_gaussian_vector(&mut rng, 4, -1.0, None).is_err());
    }

    #[test]
    fn von_mises_range_and_domain() {
        let mut rng = trial_rng(3, 0);
        for kappa in [0.0, 1e-7, 0.3, 5.0, 1e7] {
            for x in sample_von_mises(&mut rng, kappa, 2000).unwrap() {
                assert!(x > -PI && x <= PI);
            }
        }
        assert!(sample_von_mises(&mut rng, -0.5, 3).is_err());
        let tight = sample_von_mises(&mut rng, 1e6, 5000).unwrap();
        assert!(tight.iter().all(|x| x.abs() < 0.01));
    }

    #[test]
    fn design_aligns_every_path() {
        let p = params(3, 3);
        let c = corr(&p);
        let mut rng = trial_rng(9, 0);
        let real = sample_realization(&mut rng, &p, &c, None, EveEmiField::Shared).unwrap();
        let w = &real.beamformer;
        let phases = design_phases(&real.h2_b, &real.g, Some(&real.h_direct_b), w);
        let gw = &real.g * w;
        let reference = real.h_direct_b.dotc(w).arg();
        for n in 0..phases.len() {
            let term = real.h2_b[n].conj() * C64::from_polar(1.0, phases[n]) * gw[n];
            let diff = wrap_angle(term.arg() - reference);
            assert!(diff.abs() < 1e-9);
        }
    }

    #[test]
    fn single_antenna_without_direct_link_sums_magnitudes() {
        let mut p = params(3, 1);
        p.pathloss_direct_b = 0.0;
        let c = corr(&p);
        let mut rng = trial_rng(5, 1);
        let real = sample_realization(
            &mut rng,
            &p,
            &c,
            Some(&[C64::new(1.0, 0.0); 9]),
            EveEmiField::Shared,
        )
        .unwrap();
        let w = DVector::from_element(1, C64::new(1.0, 0.0));
        let phases = design_phases(&real.h2_b, &real.g, None, &w);
        let h = composite_channel(&real.h2_b, &phase_matrix(&phases), &real.g, None);
        let expected: f64 = (0..9)
            .map(|n| real.h2_b[n].norm() * real.g[(n, 0)].norm())
            .sum();
        assert!((h[0].norm() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn mrt_basic_cases() {
        let g = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let h2 = DVector::from_element(1, C64::new(0.3, -0.4));
        let w = mrt_beamformer(&h2, &[C64::new(1.0, 0.0)], &g, None).unwrap();
        assert!((w[0].norm() - 1.0).abs() < 1e-15);
        let h = composite_channel(&h2, &[C64::new(1.0, 0.0)], &g, None);
        assert!(((h[0] * w[0]).im).abs() < 1e-15);
        let zero = DVector::from_element(1, C64::new(0.0, 0.0));
        assert!(matches!(
            mrt_beamformer(&zero, &[C64::new(1.0, 0.0)], &g, None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn joint_design_single_antenna_converges_immediately() {
        let mut p = params(3, 1);
        p.pathloss_direct_b = 0.0;
        let c = corr(&p);
        let mut rng = trial_rng(2, 2);
        let real = sample_realization(
            &mut rng,
            &p,
            &c,
            Some(&[C64::new(1.0, 0.0); 9]),
            EveEmiField::Shared,
        )
        .unwrap();
        let d = joint_phase_beamforming(&real.h2_b, &real.g, None, 50, 1e-6).unwrap();
        assert_eq!(d.iterations, 1);
        assert!(d.converged);
        assert!(joint_phase_beamforming(&real.h2_b, &real.g, None, 0, 1e-6).is_err());
    }

    #[test]
    fn phase_noise_keeps_unit_modulus() {
        let mut rng = trial_rng(4, 0);
        let phases = vec![0.3, -1.0, 2.5, 3.1];
        let (phi, err) = apply_phase_noise(&mut rng, &phases, 2.0).unwrap();
        assert_eq!(err.len(), 4);
        for (k, p) in phi.iter().enumerate() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!((wrap_angle(p.arg() - phases[k] - err[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_emi_and_eve_cancellation() {
        let p = params(3, 2);
        let c = corr(&p);
        let mut rng = trial_rng(11, 0);
        let real = sample_realization(&mut rng, &p, &c, None, EveEmiField::Shared).unwrap();
        let mut quiet = p.clone();
        quiet.emi_power = 0.0;
        let (gb, tb) = received_snr(&quiet, &c, &real, Side::Bob, EmiForm::Hermitian);
        assert_eq!(tb, 0.0);
        let h = composite_channel(
            &real.h2_b,
            &real.phase_matrix,
            &real.g,
            Some(&real.h_direct_b),
        );
        let expected = p.gamma_bar_b() * h.norm_squared();
        assert!((gb - expected).abs() < 1e-10 * expected);

        let mut aware = p.clone();
        aware.emi_flag_e = false;
        let (ge_aware, _) = received_snr(&aware, &c, &real, Side::Eve, EmiForm::Hermitian);
        let (ge_quiet, _) = received_snr(&quiet, &c, &real, Side::Eve, EmiForm::Hermitian);
        assert_eq!(ge_aware, ge_quiet);
    }

    #[test]
    fn matched_fast_path_equals_reference() {
        let p = params(4, 3);
        let c = corr(&p);
        let pool = phase_pool(&p, &c, 1, 77).unwrap();
        let phi = pool[0].clone();
        for form in [EmiForm::Hermitian, EmiForm::AsPrintedRealPart] {
            let opts = McOptions {
                emi_form: form,
                phases: PhaseSource::Fixed(phi.clone()),
                ..Default::default()
            };
            let fast = snr_batch(&p, &c, &opts, 20, 5).unwrap();
            for (t, s) in fast.iter().enumerate() {
                let mut rng = trial_rng(5, t as u64);
                let real =
                    sample_realization(&mut rng, &p, &c, Some(&phi), EveEmiField::Shared).unwrap();
                let slow = snr_sample(&p, &c, &real, form);
                for (x, y) in [
                    (s.gamma_b, slow.gamma_b),
                    (s.gamma_e, slow.gamma_e),
                    (s.emi_power_term_b, slow.emi_power_term_b),
                    (s.emi_power_term_e, slow.emi_power_term_e),
                ] {
                    assert!(
                        (x - y).abs() <= 1e-9 * y.abs().max(1e-300),
                        "{form:?} t={t}: {x} vs {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn designed_batch_matches_per_trial_realizations() {
        let p = params(3, 2);
        let c = corr(&p);
        let opts = McOptions::default();
        let batch = snr_batch(&p, &c, &opts, 5, 21).unwrap();
        for (t, s) in batch.iter().enumerate() {
            let mut rng = trial_rng(21, t as u64);
            let real = sample_realization(&mut rng, &p, &c, None, EveEmiField::Shared).unwrap();
            assert_eq!(*s, snr_sample(&p, &c, &real, EmiForm::Hermitian));
        }
    }

    #[test]
    fn batch_rejects_bad_inputs() {
        let p = params(3, 2);
        let c = corr(&p);
        assert!(snr_batch(&p, &c, &McOptions::default(), 0, 1).is_err());
        let bad = McOptions {
            phases: PhaseSource::Fixed(vec![C64::new(1.0, 0.0); 4]),
            ..Default::default()
        };
        assert!(snr_batch(&p, &c, &bad, 10, 1).is_err());
        let unfactored = build_correlation(&p.geometry);
        assert!(snr_batch(&p, &unfactored, &McOptions::default(), 10, 1).is_err());
        let mut dead = p.clone();
        dead.pathloss_direct_b = 0.0;
        dead.pathloss_ris = 0.0;
        assert!(matches!(dead.validate(), Err(Error::Degenerate(_))));
    }
}
