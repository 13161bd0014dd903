//! JSON scenario files.
//!
//! A config describes one curve. Quantities quoted in dB or dBm use keys
//! with an explicit `_db`/`_dbm` suffix; linear alternatives end in `_w` or
//! carry no suffix. Giving both forms of the same quantity is an error, as is
//! any key the loader does not know.
//!
//! ```json
//! {
//!   "curve": "EA",
//!   "geometry": { "n_rows": 12, "n_cols": 12, "spacing_lambda": 0.3333 },
//!   "m_antennas": 5,
//!   "vm_concentration": 7,
//!   "a_beta1_db": -47, "a_beta2_b_db": -60, "a_beta2_e_db": -80,
//!   "rho_db": 20,
//!   "eve_awareness": "EA",
//!   "sweep": { "variable": "a_beta2_b_db", "values": [-80, -70, -60] },
//!   "trials": 100000,
//!   "seed": 7,
//!   "modes": { "moment_variant": "exact", "phi_mode": "phi_expectation" }
//! }
//! ```

use std::path::Path;

use serde_json::{Map, Value};

use super::sweep::{db_to_linear, dbm_to_watts, McPhases, Modes, SweepSpec, SweptVariable};
use crate::channel::{EmiForm, EveEmiField, ScenarioParams};
use crate::error::{Error, Result};
use crate::geometry::RisGeometry;
use crate::moments::{MomentVariant, PhiMode};

pub const DEFAULT_WAVELENGTH: f64 = 0.1;
pub const DEFAULT_TX_POWER_DBM: f64 = 20.0;
pub const DEFAULT_NOISE_POWER_DBM: f64 = -104.0;
pub const DEFAULT_SECRECY_RATE: f64 = 1.0;
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;

const TOP_KEYS: &[&str] = &[
    "curve",
    "geometry",
    "m_antennas",
    "vm_concentration",
    "a_beta1_db",
    "beta1_db",
    "beta1",
    "a_beta2_b_db",
    "beta2_b_db",
    "beta2_b",
    "a_beta2_e_db",
    "beta2_e_db",
    "beta2_e",
    "beta_d_b_db",
    "beta_d_b",
    "beta_d_e_db",
    "beta_d_e",
    "tx_power_dbm",
    "tx_power_w",
    "noise_power_dbm",
    "noise_power_w",
    "rho_db",
    "emi_power_dbm",
    "emi_power_w",
    "emi_element_power_dbm",
    "delta_b",
    "eve_awareness",
    "secrecy_rate",
    "sweep",
    "trials",
    "seed",
    "modes",
];
const GEOMETRY_KEYS: &[&str] = &[
    "n_rows",
    "n_cols",
    "spacing_lambda",
    "d_h_lambda",
    "d_v_lambda",
    "d_h",
    "d_v",
    "wavelength",
];
const SWEEP_KEYS: &[&str] = &["variable", "values"];
const MODE_KEYS: &[&str] = &[
    "emi_form",
    "phi_mode",
    "phi_draws",
    "moment_variant",
    "mc_phases",
    "eve_emi_field",
];

fn err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Obj<'a> {
    fn new(path: String, v: &'a Value) -> Result<Self> {
        match v.as_object() {
            Some(map) => Ok(Obj { path, map }),
            None => Err(err(
                if path.is_empty() { "<root>" } else { &path },
                "expected an object",
            )),
        }
    }

    fn at(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let mut unknown: Vec<&str> = self
            .map
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        unknown.sort_unstable();
        match unknown.first() {
            None => Ok(()),
            Some(_) => Err(err(
                if self.path.is_empty() {
                    "<root>"
                } else {
                    &self.path
                },
                format!("unknown keys: {}", unknown.join(", ")),
            )),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(err(
                    &self.at(key),
                    format!("expected a finite number, got {v}"),
                )),
            },
        }
    }

    fn count(&self, key: &str) -> Result<Option<u64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| {
                err(
                    &self.at(key),
                    format!("expected a non-negative integer, got {v}"),
                )
            }),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| err(&self.at(key), format!("expected a string, got {v}"))),
        }
    }

    fn object(&self, key: &str) -> Result<Option<Obj<'a>>> {
        self.map
            .get(key)
            .map(|v| Obj::new(self.at(key), v))
            .transpose()
    }

    /// The single key of `keys` present, or `None`; several is an error.
    fn exclusive<'k>(&self, keys: &[&'k str]) -> Result<Option<&'k str>> {
        let present: Vec<&str> = keys.iter().copied().filter(|k| self.has(k)).collect();
        match present.len() {
            0 => Ok(None),
            1 => Ok(Some(present[0])),
            _ => Err(err(
                if self.path.is_empty() {
                    "<root>"
                } else {
                    &self.path
                },
                format!("conflicting keys {} (give exactly one)", present.join(", ")),
            )),
        }
    }
}

fn required_groups(root: &Obj) -> Vec<&'static str> {
    let mut missing = Vec::new();
    let groups: &[(&str, &[&str])] = &[
        ("geometry", &["geometry"]),
        ("m_antennas", &["m_antennas"]),
        ("vm_concentration", &["vm_concentration"]),
        (
            "a_beta1_db | beta1_db | beta1",
            &["a_beta1_db", "beta1_db", "beta1"],
        ),
        (
            "a_beta2_b_db | beta2_b_db | beta2_b",
            &["a_beta2_b_db", "beta2_b_db", "beta2_b"],
        ),
        (
            "a_beta2_e_db | beta2_e_db | beta2_e",
            &["a_beta2_e_db", "beta2_e_db", "beta2_e"],
        ),
        ("sweep", &["sweep"]),
    ];
    for (label, keys) in groups {
        if !keys.iter().any(|k| root.has(k)) {
            missing.push(*label);
        }
    }
    missing
}

fn parse_geometry(g: &Obj) -> Result<RisGeometry> {
    g.reject_unknown(GEOMETRY_KEYS)?;
    let dim = |key: &str| -> Result<usize> {
        match g.count(key)? {
            Some(v) if v >= 1 => Ok(v as usize),
            Some(v) => Err(err(&g.at(key), format!("must be at least 1, got {v}"))),
            None => Err(err(&g.at(key), "missing required field")),
        }
    };
    let n_rows = dim("n_rows")?;
    let n_cols = dim("n_cols")?;
    let wavelength = g.number("wavelength")?.unwrap_or(DEFAULT_WAVELENGTH);
    if !(wavelength > 0.0) {
        return Err(err(
            &g.at("wavelength"),
            format!("must be positive, got {wavelength}"),
        ));
    }
    let forms = [
        g.has("spacing_lambda"),
        g.has("d_h_lambda") || g.has("d_v_lambda"),
        g.has("d_h") || g.has("d_v"),
    ];
    let (d_h, d_v) = match forms {
        [true, false, false] => {
            let s = g.number("spacing_lambda")?.unwrap() * wavelength;
            (s, s)
        }
        [false, true, false] => {
            let h = g
                .number("d_h_lambda")?
                .ok_or_else(|| err(&g.at("d_h_lambda"), "missing required field"))?;
            let v = g
                .number("d_v_lambda")?
                .ok_or_else(|| err(&g.at("d_v_lambda"), "missing required field"))?;
            (h * wavelength, v * wavelength)
        }
        [false, false, true] => {
            let h = g
                .number("d_h")?
                .ok_or_else(|| err(&g.at("d_h"), "missing required field"))?;
            let v = g
                .number("d_v")?
                .ok_or_else(|| err(&g.at("d_v"), "missing required field"))?;
            (h, v)
        }
        [false, false, false] => {
            return Err(err(
                &g.path,
                "spacing missing (spacing_lambda, d_h_lambda/d_v_lambda or d_h/d_v)",
            ))
        }
        _ => return Err(err(&g.path, "give the spacing in exactly one form")),
    };
    RisGeometry::new(n_rows, n_cols, d_h, d_v, wavelength).map_err(|e| err(&g.path, e))
}

/// Linear path loss from `a_<name>_db` (`Aβ` in dB), `<name>_db` or `<name>`.
fn pathloss(root: &Obj, name: &str, area: f64, required: bool) -> Result<f64> {
    let a_db = format!("a_{name}_db");
    let db = format!("{name}_db");
    let keys: Vec<&str> = if required {
        vec![a_db.as_str(), db.as_str(), name]
    } else {
        vec![db.as_str(), name]
    };
    let value = match root.exclusive(&keys)? {
        None => return Ok(0.0),
        Some(k) if k == a_db => db_to_linear(root.number(k)?.unwrap()) / area,
        Some(k) if k == db => db_to_linear(root.number(k)?.unwrap()),
        Some(k) => root.number(k)?.unwrap(),
    };
    if !(value >= 0.0) {
        return Err(err(
            &root.at(name),
            format!("path loss must be >= 0, got {value}"),
        ));
    }
    Ok(value)
}

fn power(root: &Obj, dbm_key: &str, w_key: &str, default_dbm: f64) -> Result<f64> {
    let v = match root.exclusive(&[dbm_key, w_key])? {
        None => dbm_to_watts(default_dbm),
        Some(k) if k == dbm_key => dbm_to_watts(root.number(k)?.unwrap()),
        Some(k) => root.number(k)?.unwrap(),
    };
    if !(v > 0.0) {
        return Err(err(
            &root.at(w_key),
            format!("power must be positive, got {v}"),
        ));
    }
    Ok(v)
}

fn flag01(root: &Obj, key: &str) -> Result<bool> {
    match root.number(key)? {
        None => Ok(true),
        Some(0.0) => Ok(false),
        Some(1.0) => Ok(true),
        Some(v) => Err(err(&root.at(key), format!("must be 0 or 1, got {v}"))),
    }
}

fn parse_modes(m: Option<Obj>) -> Result<Modes> {
    let mut modes = Modes::default();
    let Some(m) = m else { return Ok(modes) };
    m.reject_unknown(MODE_KEYS)?;
    let bad = |key: &str, v: &str, allowed: &str| {
        err(
            &m.at(key),
            format!("unknown value {v:?} (expected {allowed})"),
        )
    };
    if let Some(v) = m.string("emi_form")? {
        modes.emi_form = match v {
            "hermitian" => EmiForm::Hermitian,
            "as_printed_real_part" => EmiForm::AsPrintedRealPart,
            _ => return Err(bad("emi_form", v, "hermitian | as_printed_real_part")),
        };
    }
    if let Some(v) = m.string("phi_mode")? {
        modes.phi_mode = match v {
            "phi_fixed" => PhiMode::Fixed,
            "phi_expectation" => PhiMode::Expectation,
            _ => return Err(bad("phi_mode", v, "phi_fixed | phi_expectation")),
        };
    }
    if let Some(v) = m.count("phi_draws")? {
        if v == 0 {
            return Err(err(&m.at("phi_draws"), "must be at least 1"));
        }
        modes.phi_draws = v as usize;
    }
    if let Some(v) = m.string("moment_variant")? {
        modes.moment_variant = MomentVariant::parse(v)
            .ok_or_else(|| bad("moment_variant", v, "as_printed | corrected | exact"))?;
    }
    if let Some(v) = m.string("mc_phases")? {
        modes.mc_phases = match v {
            "matched" => McPhases::Matched,
            "designed" => McPhases::Designed,
            _ => return Err(bad("mc_phases", v, "matched | designed")),
        };
    }
    if let Some(v) = m.string("eve_emi_field")? {
        modes.eve_emi_field = match v {
            "shared" => EveEmiField::Shared,
            "independent" => EveEmiField::Independent,
            _ => return Err(bad("eve_emi_field", v, "shared | independent")),
        };
    }
    Ok(modes)
}

/// Parse a config document. Whitespace-only input counts as `{}`.
pub fn parse_config(text: &str) -> Result<SweepSpec> {
    let value: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("<root>: invalid JSON: {e}")))?
    };
    let root = Obj::new(String::new(), &value)?;
    root.reject_unknown(TOP_KEYS)?;
    let missing = required_groups(&root);
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required fields: {}",
            missing.join(", ")
        )));
    }

    let geometry = parse_geometry(&root.object("geometry")?.expect("checked"))?;
    let area = geometry.element_area();
    let m_antennas = match root.count("m_antennas")? {
        Some(m) if m >= 1 => m as usize,
        other => {
            return Err(err(
                "m_antennas",
                format!("must be at least 1, got {other:?}"),
            ))
        }
    };
    let kappa = root.number("vm_concentration")?.expect("checked");
    if !(kappa >= 0.0) {
        return Err(err(
            "vm_concentration",
            format!("must be >= 0, got {kappa}"),
        ));
    }
    let pathloss_ris = pathloss(&root, "beta1", area, true)?;
    let pathloss_ris_rx_b = pathloss(&root, "beta2_b", area, true)?;
    let pathloss_ris_rx_e = pathloss(&root, "beta2_e", area, true)?;
    let pathloss_direct_b = pathloss(&root, "beta_d_b", area, false)?;
    let pathloss_direct_e = pathloss(&root, "beta_d_e", area, false)?;
    let tx_power = power(&root, "tx_power_dbm", "tx_power_w", DEFAULT_TX_POWER_DBM)?;
    let noise = power(
        &root,
        "noise_power_dbm",
        "noise_power_w",
        DEFAULT_NOISE_POWER_DBM,
    )?;
    let emi_power = match root.exclusive(&[
        "rho_db",
        "emi_power_dbm",
        "emi_power_w",
        "emi_element_power_dbm",
    ])? {
        None => 0.0,
        Some("rho_db") => {
            if !(pathloss_ris > 0.0) {
                return Err(err("rho_db", "needs a positive transmitter-RIS path loss"));
            }
            tx_power * pathloss_ris / db_to_linear(root.number("rho_db")?.unwrap())
        }
        Some("emi_power_dbm") => dbm_to_watts(root.number("emi_power_dbm")?.unwrap()),
        Some("emi_element_power_dbm") => {
            dbm_to_watts(root.number("emi_element_power_dbm")?.unwrap()) / area
        }
        Some(k) => {
            let v = root.number(k)?.unwrap();
            if !(v >= 0.0) {
                return Err(err(k, format!("must be >= 0, got {v}")));
            }
            v
        }
    };
    let emi_flag_b = flag01(&root, "delta_b")?;
    let emi_flag_e = match root.string("eve_awareness")? {
        None | Some("EU") => true,
        Some("EA") => false,
        Some(v) => {
            return Err(err(
                "eve_awareness",
                format!("expected \"EA\" or \"EU\", got {v:?}"),
            ))
        }
    };
    let secrecy_rate = root.number("secrecy_rate")?.unwrap_or(DEFAULT_SECRECY_RATE);
    if !(secrecy_rate >= 0.0) {
        return Err(err(
            "secrecy_rate",
            format!("must be >= 0, got {secrecy_rate}"),
        ));
    }

    let sweep = root.object("sweep")?.expect("checked");
    sweep.reject_unknown(SWEEP_KEYS)?;
    let var_name = sweep
        .string("variable")?
        .ok_or_else(|| err(&sweep.at("variable"), "missing required field"))?;
    let swept_variable = SweptVariable::parse(var_name).ok_or_else(|| {
        err(
            &sweep.at("variable"),
            format!("unknown variable {var_name:?} (expected n_elements | a_beta2_b_db | rho_db | beta_d_db | spacing_lambda)"),
        )
    })?;
    let values = match sweep.map.get("values") {
        Some(Value::Array(a)) if !a.is_empty() => a
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    err(
                        &format!("sweep.values[{i}]"),
                        format!("expected a finite number, got {v}"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(err("sweep.values", "expected a nonempty array of numbers")),
        None => return Err(err("sweep.values", "missing required field")),
    };

    let trials = root
        .count("trials")?
        .map(|t| t as usize)
        .unwrap_or(DEFAULT_TRIALS);
    let seed = root.count("seed")?.unwrap_or(DEFAULT_SEED);
    let modes = parse_modes(root.object("modes")?)?;
    let curve = root.string("curve")?.unwrap_or("main").to_string();

    let spec = SweepSpec {
        curve,
        scenario: ScenarioParams {
            tx_power,
            noise_power_b: noise,
            noise_power_e: noise,
            emi_power,
            pathloss_ris,
            pathloss_ris_rx_b,
            pathloss_ris_rx_e,
            pathloss_direct_b,
            pathloss_direct_e,
            m_antennas,
            vm_concentration: kappa,
            emi_flag_b,
            emi_flag_e,
            secrecy_rate,
            geometry,
        },
        swept_variable,
        values,
        trials,
        seed,
        modes,
    };
    if let Err(e) = spec.validate() {
        return Err(Error::Config(format!("invalid scenario: {e}")));
    }
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
