use super::config::{
    DEFAULT_NOISE_POWER_DBM, DEFAULT_SECRECY_RATE, DEFAULT_TX_POWER_DBM, DEFAULT_WAVELENGTH,
};
use super::sweep::{db_to_linear, dbm_to_watts, McPhases, Modes, SweepSpec, SweptVariable};
use crate::channel::ScenarioParams;
use crate::error::{Error, Result};
use crate::geometry::RisGeometry;

pub const FIGURE_NAMES: [&str; 4] = ["2a", "2b", "2c", "3"];

/// Per-element EMI power quoted for Fig. 2b, read as `A σ²_EMI`.
pub const FIG2B_EMI_ELEMENT_POWER_DBM: f64 = -45.0;

const PRESET_SEED: u64 = 2024;

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

struct Base {
    side: usize,
    spacing_lambda: f64,
    m: usize,
    kappa: f64,
    a_beta1_db: f64,
    a_beta2_b_db: f64,
    a_beta2_e_db: f64,
    /// Spacing whose element area converts the quoted `Aβ` values.
    reference_spacing_lambda: f64,
}

impl Base {
    fn scenario(&self) -> Result<ScenarioParams> {
        let geometry = RisGeometry::square(self.side, self.spacing_lambda, DEFAULT_WAVELENGTH)?;
        let d_ref = self.reference_spacing_lambda * DEFAULT_WAVELENGTH;
        let area = d_ref * d_ref;
        let noise = dbm_to_watts(DEFAULT_NOISE_POWER_DBM);
        Ok(ScenarioParams {
            tx_power: dbm_to_watts(DEFAULT_TX_POWER_DBM),
            noise_power_b: noise,
            noise_power_e: noise,
            emi_power: 0.0,
            pathloss_ris: db_to_linear(self.a_beta1_db) / area,
            pathloss_ris_rx_b: db_to_linear(self.a_beta2_b_db) / area,
            pathloss_ris_rx_e: db_to_linear(self.a_beta2_e_db) / area,
            pathloss_direct_b: 0.0,
            pathloss_direct_e: 0.0,
            m_antennas: self.m,
            vm_concentration: self.kappa,
            emi_flag_b: true,
            emi_flag_e: true,
            secrecy_rate: DEFAULT_SECRECY_RATE,
            geometry,
        })
    }
}

fn with_rho(mut p: ScenarioParams, rho_db: Option<f64>) -> ScenarioParams {
    p.emi_power = match rho_db {
        Some(r) => p.tx_power * p.pathloss_ris / db_to_linear(r),
        None => 0.0,
    };
    p
}

fn fig2a() -> Result<Vec<SweepSpec>> {
    let base = Base {
        side: 8,
        spacing_lambda: 0.25,
        m: 4,
        kappa: 3.0,
        a_beta1_db: -72.0,
        a_beta2_b_db: -72.0,
        a_beta2_e_db: -72.0,
        reference_spacing_lambda: 0.25,
    }
    .scenario()?;
    let modes = Modes {
        mc_phases: McPhases::Designed,
        ..Modes::default()
    };
    let n_values: Vec<f64> = [4.0f64, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0]
        .iter()
        .map(|s| s * s)
        .collect();
    Ok([
        ("no_emi", None),
        ("rho_5db", Some(5.0)),
        ("rho_-5db", Some(-5.0)),
    ]
    .into_iter()
    .map(|(name, rho)| SweepSpec {
        curve: name.to_string(),
        scenario: with_rho(base.clone(), rho),
        swept_variable: SweptVariable::NElements,
        values: n_values.clone(),
        trials: 10_000,
        seed: PRESET_SEED,
        modes,
    })
    .collect())
}

fn fig2b() -> Result<Vec<SweepSpec>> {
    let mut out = Vec::new();
    for side in [12usize, 18] {
        let mut base = Base {
            side,
            spacing_lambda: 1.0 / 3.0,
            m: 5,
            kappa: 7.0,
            a_beta1_db: -47.0,
            a_beta2_b_db: -60.0,
            a_beta2_e_db: -80.0,
            reference_spacing_lambda: 1.0 / 3.0,
        }
        .scenario()?;
        let emi = dbm_to_watts(FIG2B_EMI_ELEMENT_POWER_DBM) / base.element_area();
        for (label, power, eve_flag) in
            [("EA", emi, false), ("EU", emi, true), ("no_emi", 0.0, true)]
        {
            base.emi_power = power;
            base.emi_flag_e = eve_flag;
            out.push(SweepSpec {
                curve: format!("N{}_{label}", side * side),
                scenario: base.clone(),
                swept_variable: SweptVariable::PathlossRisRxB,
                values: range(-80.0, -40.0, 5.0),
                trials: 200_000,
                seed: PRESET_SEED,
                modes: Modes::default(),
            });
        }
    }
    Ok(out)
}

fn fig2c() -> Result<Vec<SweepSpec>> {
    [
        ("lambda_2", 0.5),
        ("lambda_3", 1.0 / 3.0),
        ("lambda_5", 0.2),
    ]
    .into_iter()
    .map(|(name, spacing)| {
        let mut p = Base {
            side: 10,
            spacing_lambda: spacing,
            m: 2,
            kappa: 5.0,
            a_beta1_db: -58.0,
            a_beta2_b_db: -58.0,
            a_beta2_e_db: -58.0,
            reference_spacing_lambda: 0.5,
        }
        .scenario()?;
        p.emi_flag_e = false;
        Ok(SweepSpec {
            curve: name.to_string(),
            scenario: with_rho(p, Some(20.0)),
            swept_variable: SweptVariable::Rho,
            values: range(-10.0, 40.0, 5.0),
            trials: 100_000,
            seed: PRESET_SEED,
            modes: Modes::default(),
        })
    })
    .collect()
}

fn fig3() -> Result<Vec<SweepSpec>> {
    let mut base = Base {
        side: 14,
        spacing_lambda: 0.25,
        m: 2,
        kappa: 5.0,
        a_beta1_db: -52.0,
        a_beta2_b_db: -52.0,
        a_beta2_e_db: -62.0,
        reference_spacing_lambda: 0.25,
    }
    .scenario()?;
    base.emi_flag_e = false;
    let rhos = [
        ("rho_20db", Some(20.0)),
        ("rho_25db", Some(25.0)),
        ("rho_30db", Some(30.0)),
        ("rho_40db", Some(40.0)),
        ("no_emi", None),
    ];
    Ok(rhos
        .into_iter()
        .map(|(name, rho)| SweepSpec {
            curve: name.to_string(),
            scenario: with_rho(base.clone(), rho),
            swept_variable: SweptVariable::DirectPathloss,
            values: range(-120.0, -50.0, 5.0),
            trials: 100_000,
            seed: PRESET_SEED,
            modes: Modes::default(),
        })
        .collect())
}

/// Curves of one figure preset with all of its scenario parameters.
pub fn figure_preset(name: &str) -> Result<Vec<SweepSpec>> {
    match name {
        "2a" => fig2a(),
        "2b" => fig2b(),
        "2c" => fig2c(),
        "3" => fig3(),
        _ => Err(Error::Config(format!(
            "unknown figure {name:?} (expected one of {})",
            FIGURE_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2a_parameters() {
        let specs = figure_preset("2a").unwrap();
        assert_eq!(specs.len(), 3);
        for s in &specs {
            assert_eq!(s.scenario.m_antennas, 4);
            assert_eq!(s.scenario.vm_concentration, 3.0);
            assert_eq!(s.scenario.pathloss_direct_b, 0.0);
            for n in [64.0, 144.0, 324.0] {
                assert!(s.values.contains(&n));
            }
            s.validate().unwrap();
        }
    }

    #[test]
    fn fig3_parameters() {
        let specs = figure_preset("3").unwrap();
        let rhos: Vec<f64> = specs
            .iter()
            .filter(|s| s.scenario.emi_power > 0.0)
            .map(|s| (10.0 * s.scenario.rho().log10() * 1e6).round() / 1e6)
            .collect();
        assert_eq!(rhos, vec![20.0, 25.0, 30.0, 40.0]);
        for s in &specs {
            assert_eq!(s.scenario.n_elements(), 196);
            assert!(!s.scenario.emi_flag_e);
            let a = s.scenario.element_area();
            assert!((10.0 * (a * s.scenario.pathloss_ris_rx_e).log10() + 62.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fig2b_emi_matches_quoted_power() {
        let specs = figure_preset("2b").unwrap();
        assert_eq!(specs.len(), 6);
        let s = specs.iter().find(|s| s.curve == "N144_EA").unwrap();
        let p = &s.scenario;
        let per_element_dbm = 10.0 * (p.element_area() * p.emi_power * 1e3).log10();
        assert!((per_element_dbm + 45.0).abs() < 1e-9);
        // P·Aβ₁ = −27 dBm against −45 dBm collected per element.
        assert!((10.0 * p.rho().log10() - 18.0).abs() < 1e-9);
    }

    #[test]
    fn fig2c_keeps_reference_pathloss() {
        let specs = figure_preset("2c").unwrap();
        let b: Vec<f64> = specs.iter().map(|s| s.scenario.pathloss_ris).collect();
        assert!(b.iter().all(|v| *v == b[0]));
        assert!(specs
            .iter()
            .all(|s| s.values.contains(&-10.0) && s.values.contains(&40.0)));
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(figure_preset("4x"), Err(Error::Config(_))));
    }
}
