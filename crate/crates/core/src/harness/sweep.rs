use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{
    derive_seed, snr_batch, EmiForm, EveEmiField, McOptions, PhaseSource, ScenarioParams,
};
use crate::error::{Error, Result};
use crate::geometry::{
    build_correlation, factorize, CorrelationMatrix, RisGeometry, DEFAULT_CLAMP_FLOOR,
};
use crate::moments::{
    analytic_phi, fit_pair, AnalyticPhi, MomentVariant, PhiMode, DEFAULT_PHI_DRAWS,
};
use crate::secrecy::{sop_closed_form, sop_empirical, SecrecySnapshot, MIN_EMPIRICAL_SAMPLES};

pub const SCHEMA_VERSION: u32 = 1;

const POOL_SALT: u64 = 0x5048_4950_4f4f_4c00;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptVariable {
    /// Total element count (perfect square, square surface).
    NElements,
    /// `Aβ₂,B` in dB.
    PathlossRisRxB,
    /// `ρ = Pβ₁/σ²_EMI` in dB.
    Rho,
    /// `β_d` in dB, applied to both direct links.
    DirectPathloss,
    /// Element spacing in wavelengths.
    Spacing,
}

impl SweptVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweptVariable::NElements => "n_elements",
            SweptVariable::PathlossRisRxB => "a_beta2_b_db",
            SweptVariable::Rho => "rho_db",
            SweptVariable::DirectPathloss => "beta_d_db",
            SweptVariable::Spacing => "spacing_lambda",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            SweptVariable::NElements,
            SweptVariable::PathlossRisRxB,
            SweptVariable::Rho,
            SweptVariable::DirectPathloss,
            SweptVariable::Spacing,
        ]
        .into_iter()
        .find(|v| v.as_str() == name)
    }
}

/// Which Φ the Monte Carlo engine uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum McPhases {
    /// The same Φ (or pool) the analytic engine evaluates.
    #[default]
    Matched,
    /// Per-trial joint design with phase noise.
    Designed,
}

impl McPhases {
    pub fn as_str(&self) -> &'static str {
        match self {
            McPhases::Matched => "matched",
            McPhases::Designed => "designed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modes {
    pub emi_form: EmiForm,
    pub phi_mode: PhiMode,
    pub phi_draws: usize,
    pub moment_variant: MomentVariant,
    pub mc_phases: McPhases,
    pub eve_emi_field: EveEmiField,
}

impl Default for Modes {
    fn default() -> Self {
        Modes {
            emi_form: EmiForm::Hermitian,
            phi_mode: PhiMode::Expectation,
            phi_draws: DEFAULT_PHI_DRAWS,
            moment_variant: MomentVariant::default(),
            mc_phases: McPhases::Matched,
            eve_emi_field: EveEmiField::Shared,
        }
    }
}

pub fn emi_form_str(f: EmiForm) -> &'static str {
    match f {
        EmiForm::Hermitian => "hermitian",
        EmiForm::AsPrintedRealPart => "as_printed_real_part",
    }
}

pub fn eve_emi_field_str(f: EveEmiField) -> &'static str {
    match f {
        EveEmiField::Shared => "shared",
        EveEmiField::Independent => "independent",
    }
}

/// One curve: a base scenario and the values of a single swept variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub curve: String,
    pub scenario: ScenarioParams,
    pub swept_variable: SweptVariable,
    pub values: Vec<f64>,
    /// Monte Carlo trials per point; 0 runs the analytic engine only.
    pub trials: usize,
    pub seed: u64,
    pub modes: Modes,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain("sweep values must be nonempty"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("sweep value {v} is not finite")));
        }
        if self.trials != 0 && self.trials < MIN_EMPIRICAL_SAMPLES {
            return Err(Error::domain(format!(
                "trials must be 0 or at least {MIN_EMPIRICAL_SAMPLES}, got {}",
                self.trials
            )));
        }
        if self.modes.phi_draws == 0 {
            return Err(Error::domain("phi_draws must be at least 1"));
        }
        self.scenario.validate()?;
        for &v in &self.values {
            self.point_params(v)?;
        }
        Ok(())
    }

    /// `"EA"` when Eve cancels the EMI, `"EU"` otherwise.
    pub fn eve_awareness(&self) -> &'static str {
        if self.scenario.emi_flag_e {
            "EU"
        } else {
            "EA"
        }
    }

    /// Scenario at one swept value. Path losses stay fixed in linear terms,
    /// so changing the size or spacing of the surface leaves every `β` as
    /// configured for the base geometry.
    pub fn point_params(&self, value: f64) -> Result<ScenarioParams> {
        let mut p = self.scenario.clone();
        let g = &self.scenario.geometry;
        match self.swept_variable {
            SweptVariable::NElements => {
                let side = value.sqrt().round();
                if !(value >= 1.0) || side * side != value {
                    return Err(Error::domain(format!(
                        "n_elements must be a perfect square, got {value}"
                    )));
                }
                p.geometry =
                    RisGeometry::new(side as usize, side as usize, g.d_h, g.d_v, g.wavelength)?;
            }
            SweptVariable::PathlossRisRxB => {
                p.pathloss_ris_rx_b = db_to_linear(value) / g.element_area();
            }
            SweptVariable::Rho => {
                if !(p.pathloss_ris > 0.0) {
                    return Err(Error::domain(
                        "a rho sweep needs a positive transmitter-RIS path loss",
                    ));
                }
                p.emi_power = p.tx_power * p.pathloss_ris / db_to_linear(value);
            }
            SweptVariable::DirectPathloss => {
                p.pathloss_direct_b = db_to_linear(value);
                p.pathloss_direct_e = db_to_linear(value);
            }
            SweptVariable::Spacing => {
                if !(value > 0.0) {
                    return Err(Error::domain(format!(
                        "spacing must be positive, got {value}"
                    )));
                }
                let d = value * g.wavelength;
                p.geometry = RisGeometry::new(g.n_rows, g.n_cols, d, d, g.wavelength)?;
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Values in ascending order (the row order of the output).
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Seed of the Monte Carlo run at one swept value.
pub fn point_seed(seed: u64, value: f64) -> u64 {
    derive_seed(seed, value.to_bits())
}

/// Seed of the Φ pool shared by every point of a sweep.
pub fn pool_seed(seed: u64) -> u64 {
    derive_seed(seed, POOL_SALT)
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub curve: String,
    pub swept_variable: String,
    pub swept_value: f64,
    pub rho_db: Option<f64>,
    pub sop_analytic: Option<f64>,
    pub sop_mc: Option<f64>,
    pub sop_mc_se: Option<f64>,
    /// Monte Carlo sample mean when trials ran, analytic mean otherwise.
    pub mean_snr_b: Option<f64>,
    pub mean_snr_e: Option<f64>,
    pub k_b: Option<f64>,
    pub theta_b: Option<f64>,
    pub theta_e: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub emi_form: String,
    pub phi_mode: String,
    pub moment_variant: String,
    pub mc_phases: String,
    pub eve_awareness: String,
    /// Analytic and Monte Carlo SOP differ by more than `max(3 SE, 10 %)`.
    pub flag: bool,
    pub error: String,
}

impl SweepRow {
    fn blank(spec: &SweepSpec, value: f64) -> Self {
        SweepRow {
            schema_version: SCHEMA_VERSION,
            curve: spec.curve.clone(),
            swept_variable: spec.swept_variable.as_str().to_string(),
            swept_value: value,
            rho_db: None,
            sop_analytic: None,
            sop_mc: None,
            sop_mc_se: None,
            mean_snr_b: None,
            mean_snr_e: None,
            k_b: None,
            theta_b: None,
            theta_e: None,
            trials: spec.trials,
            seed: spec.seed,
            emi_form: emi_form_str(spec.modes.emi_form).to_string(),
            phi_mode: spec.modes.phi_mode.as_str().to_string(),
            moment_variant: spec.modes.moment_variant.as_str().to_string(),
            mc_phases: spec.modes.mc_phases.as_str().to_string(),
            eve_awareness: spec.eve_awareness().to_string(),
            flag: false,
            error: String::new(),
        }
    }

    fn push_error(&mut self, stage: &str, e: &Error) {
        if !self.error.is_empty() {
            self.error.push_str("; ");
        }
        self.error.push_str(&format!("{stage}: {e}"));
    }
}

pub fn disagreement_flag(analytic: f64, mc: f64, se: f64) -> bool {
    (analytic - mc).abs() > (3.0 * se).max(0.1 * mc)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv(path: &Path) -> Result<SweepResult> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Ok(SweepResult { rows })
    }

    pub fn curve(&self, name: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.curve == name).collect()
    }
}

#[derive(Hash, PartialEq, Eq, Clone)]
struct GeomKey([u64; 5]);

impl GeomKey {
    fn of(g: &RisGeometry) -> Self {
        GeomKey([
            g.n_rows as u64,
            g.n_cols as u64,
            g.d_h.to_bits(),
            g.d_v.to_bits(),
            g.wavelength.to_bits(),
        ])
    }
}

#[derive(Hash, PartialEq, Eq, Clone)]
struct PhiKey {
    geom: GeomKey,
    m: usize,
    kappa: u64,
    draws: usize,
    seed: u64,
    spectra: bool,
    /// Path losses only steer the design when a direct link competes with
    /// the RIS path; otherwise the designed phases are scale-free.
    scales: Option<[u64; 3]>,
}

/// Copy of `p` with every quantity the phase design ignores set to a fixed
/// value, so a cached pool is bit-identical whichever point built it.
pub fn design_params(p: &ScenarioParams) -> ScenarioParams {
    let unit = 1.0 / p.element_area();
    let mut q = p.clone();
    q.tx_power = 1.0;
    q.noise_power_b = 1.0;
    q.noise_power_e = 1.0;
    q.emi_power = unit;
    q.pathloss_ris_rx_e = unit;
    q.pathloss_direct_e = 0.0;
    if p.pathloss_direct_b == 0.0 {
        q.pathloss_ris = unit;
        q.pathloss_ris_rx_b = unit;
    }
    q
}

/// Correlation matrices and Φ pools shared across the points and curves of
/// a run.
#[derive(Default)]
pub struct SweepCache {
    corr: HashMap<GeomKey, Arc<CorrelationMatrix>>,
    phi: HashMap<PhiKey, Arc<AnalyticPhi>>,
}

impl SweepCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn correlation(&mut self, g: &RisGeometry) -> Result<Arc<CorrelationMatrix>> {
        let key = GeomKey::of(g);
        if let Some(c) = self.corr.get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(factorize(&build_correlation(g), DEFAULT_CLAMP_FLOOR)?);
        self.corr.insert(key, c.clone());
        Ok(c)
    }

    pub fn phi(
        &mut self,
        p: &ScenarioParams,
        corr: &CorrelationMatrix,
        modes: &Modes,
        seed: u64,
    ) -> Result<Arc<AnalyticPhi>> {
        let draws = match modes.phi_mode {
            PhiMode::Fixed => 1,
            PhiMode::Expectation => modes.phi_draws,
        };
        let key = PhiKey {
            geom: GeomKey::of(&p.geometry),
            m: p.m_antennas,
            kappa: p.vm_concentration.to_bits(),
            draws,
            seed,
            spectra: !modes.moment_variant.is_trace_based(),
            scales: (p.pathloss_direct_b > 0.0).then(|| {
                [
                    p.pathloss_ris.to_bits(),
                    p.pathloss_ris_rx_b.to_bits(),
                    p.pathloss_direct_b.to_bits(),
                ]
            }),
        };
        if let Some(a) = self.phi.get(&key) {
            return Ok(a.clone());
        }
        let a = Arc::new(analytic_phi(
            &design_params(p),
            corr,
            modes.phi_mode,
            draws,
            seed,
            key.spectra,
        )?);
        self.phi.insert(key, a.clone());
        Ok(a)
    }
}

/// Evaluate one point with both engines; failures are recorded in the row.
pub fn run_point(spec: &SweepSpec, value: f64, cache: &mut SweepCache) -> SweepRow {
    let mut row = SweepRow::blank(spec, value);
    let p = match spec.point_params(value) {
        Ok(p) => p,
        Err(e) => {
            row.push_error("scenario", &e);
            return row;
        }
    };
    let rho = p.rho();
    row.rho_db = rho.is_finite().then(|| linear_to_db(rho));
    let corr = match cache.correlation(&p.geometry) {
        Ok(c) => c,
        Err(e) => {
            row.push_error("correlation", &e);
            return row;
        }
    };
    let phi = cache.phi(&p, &corr, &spec.modes, pool_seed(spec.seed));

    let mut analytic_means = None;
    match &phi {
        Ok(phi) => {
            let fitted = fit_pair(&p, phi, spec.modes.moment_variant).and_then(|(gb, ge)| {
                let snap =
                    SecrecySnapshot::new(p.gamma_bar_b(), p.gamma_bar_e(), gb, ge, p.secrecy_rate)?;
                Ok((gb, ge, sop_closed_form(&snap)?))
            });
            match fitted {
                Ok((gb, ge, sop)) => {
                    row.k_b = Some(gb.k);
                    row.theta_b = Some(gb.theta);
                    row.theta_e = Some(ge.theta);
                    row.sop_analytic = Some(sop);
                    analytic_means =
                        Some((p.gamma_bar_b() * gb.mean(), p.gamma_bar_e() * ge.theta));
                }
                Err(e) => row.push_error("analytic", &e),
            }
        }
        Err(e) => row.push_error("phi", e),
    }

    if spec.trials > 0 {
        let phases = match (spec.modes.mc_phases, &phi) {
            (McPhases::Designed, _) => Ok(PhaseSource::Designed),
            (McPhases::Matched, Ok(phi)) => Ok(phi.source.clone()),
            (McPhases::Matched, Err(_)) => Err(Error::Degenerate(
                "no Φ available for matched trials".into(),
            )),
        };
        let mc = phases.and_then(|phases| {
            let opts = McOptions {
                emi_form: spec.modes.emi_form,
                eve_emi_field: spec.modes.eve_emi_field,
                phases,
            };
            let samples = snr_batch(&p, &corr, &opts, spec.trials, point_seed(spec.seed, value))?;
            let n = samples.len() as f64;
            let mb = samples.iter().map(|s| s.gamma_b).sum::<f64>() / n;
            let me = samples.iter().map(|s| s.gamma_e).sum::<f64>() / n;
            let (sop, se) = sop_empirical(&samples, p.secrecy_rate)?;
            Ok((mb, me, sop, se))
        });
        match mc {
            Ok((mb, me, sop, se)) => {
                row.mean_snr_b = Some(mb);
                row.mean_snr_e = Some(me);
                row.sop_mc = Some(sop);
                row.sop_mc_se = Some(se);
            }
            Err(e) => row.push_error("monte_carlo", &e),
        }
    } else if let Some((mb, me)) = analytic_means {
        row.mean_snr_b = Some(mb);
        row.mean_snr_e = Some(me);
    }
    if let (Some(a), Some(m), Some(se)) = (row.sop_analytic, row.sop_mc, row.sop_mc_se) {
        row.flag = disagreement_flag(a, m, se);
    }
    row
}

/// Run one curve.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweeps(std::slice::from_ref(spec))
}

/// Run several curves with shared caches; rows follow the curve order and,
/// within a curve, ascending swept value.
pub fn run_sweeps(specs: &[SweepSpec]) -> Result<SweepResult> {
    for s in specs {
        s.validate()?;
    }
    let mut cache = SweepCache::new();
    let mut rows = Vec::new();
    for s in specs {
        for v in s.sorted_values() {
            rows.push(run_point(s, v, &mut cache));
        }
    }
    Ok(SweepResult { rows })
}

/// [`run_sweeps`] on a dedicated pool of `threads` workers.
pub fn run_sweeps_with_threads(specs: &[SweepSpec], threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {threads} threads: {e}")))?;
    pool.install(|| run_sweeps(specs))
}
