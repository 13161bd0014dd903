use ris_secrecy::channel::{snr_batch, McOptions};
use ris_secrecy::geometry::{build_correlation, factorize, DEFAULT_CLAMP_FLOOR};
use ris_secrecy::harness::{
    design_params, load_config, parse_config, point_seed, pool_seed, run_sweep, run_sweeps,
    SweepResult, SCHEMA_VERSION,
};
use ris_secrecy::moments::{analytic_phi, fit_pair};
use ris_secrecy::secrecy::{sop_closed_form, sop_empirical, SecrecySnapshot};
use ris_secrecy::Error;

const SMALL: &str = r#"{
    "curve": "small",
    "geometry": { "n_rows": 4, "n_cols": 4, "spacing_lambda": 0.25 },
    "m_antennas": 2,
    "vm_concentration": 5,
    "a_beta1_db": -55, "a_beta2_b_db": -55, "a_beta2_e_db": -62,
    "rho_db": 10,
    "eve_awareness": "EU",
    "sweep": { "variable": "a_beta2_b_db", "values": [-50, -60] },
    "trials": 2000,
    "seed": 99,
    "modes": { "phi_draws": 8 }
}"#;

#[test]
fn single_point_equals_direct_engine_calls() {
    let spec = parse_config(SMALL).unwrap();
    let value = -60.0;
    let mut one = spec.clone();
    one.values = vec![value];
    let row = run_sweep(&one).unwrap().rows.remove(0);
    assert!(row.error.is_empty(), "{}", row.error);

    let p = spec.point_params(value).unwrap();
    let corr = factorize(&build_correlation(&p.geometry), DEFAULT_CLAMP_FLOOR).unwrap();
    let phi = analytic_phi(
        &design_params(&p),
        &corr,
        spec.modes.phi_mode,
        spec.modes.phi_draws,
        pool_seed(spec.seed),
        true,
    )
    .unwrap();
    let (gb, ge) = fit_pair(&p, &phi, spec.modes.moment_variant).unwrap();
    let snap =
        SecrecySnapshot::new(p.gamma_bar_b(), p.gamma_bar_e(), gb, ge, p.secrecy_rate).unwrap();
    assert_eq!(row.sop_analytic, Some(sop_closed_form(&snap).unwrap()));
    assert_eq!(row.k_b, Some(gb.k));
    assert_eq!(row.theta_e, Some(ge.theta));

    let opts = McOptions {
        phases: phi.source.clone(),
        ..McOptions::default()
    };
    let samples = snr_batch(&p, &corr, &opts, spec.trials, point_seed(spec.seed, value)).unwrap();
    let (sop, se) = sop_empirical(&samples, p.secrecy_rate).unwrap();
    assert_eq!(row.sop_mc, Some(sop));
    assert_eq!(row.sop_mc_se, Some(se));
    let mean_b = samples.iter().map(|s| s.gamma_b).sum::<f64>() / samples.len() as f64;
    assert_eq!(row.mean_snr_b, Some(mean_b));
}

#[test]
fn points_do_not_depend_on_their_neighbours() {
    let spec = parse_config(SMALL).unwrap();
    let both = run_sweep(&spec).unwrap();
    let mut alone = spec.clone();
    alone.values = vec![-50.0];
    let single = run_sweep(&alone).unwrap();
    let row = both.rows.iter().find(|r| r.swept_value == -50.0).unwrap();
    assert_eq!(*row, single.rows[0]);
}

#[test]
fn rows_come_out_sorted_with_metadata() {
    let spec = parse_config(SMALL).unwrap();
    let res = run_sweep(&spec).unwrap();
    let values: Vec<f64> = res.rows.iter().map(|r| r.swept_value).collect();
    assert_eq!(values, vec![-60.0, -50.0]);
    for r in &res.rows {
        assert_eq!(r.schema_version, SCHEMA_VERSION);
        assert_eq!(r.curve, "small");
        assert_eq!(r.swept_variable, "a_beta2_b_db");
        assert_eq!(r.eve_awareness, "EU");
        assert_eq!(r.moment_variant, "exact");
        assert_eq!(r.trials, 2000);
        assert_eq!(r.seed, 99);
        assert!((r.rho_db.unwrap() - 10.0).abs() < 1e-9);
    }
}

#[test]
fn rerun_gives_identical_csv_bytes() {
    let spec = parse_config(SMALL).unwrap();
    let a = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    let b = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    let mut other = spec.clone();
    other.seed += 1;
    let c = run_sweep(&other).unwrap().to_csv_string().unwrap();
    assert_ne!(a, c);
}

#[test]
fn csv_round_trip() {
    let spec = parse_config(SMALL).unwrap();
    let mut analytic = spec.clone();
    analytic.trials = 0;
    analytic.curve = "analytic".into();
    let res = run_sweeps(&[spec, analytic]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    res.save(&path).unwrap();
    let back = SweepResult::read_csv(&path).unwrap();
    assert_eq!(back, res);
    let analytic_rows = back.curve("analytic");
    assert!(analytic_rows
        .iter()
        .all(|r| r.sop_mc.is_none() && r.mean_snr_b.is_some()));
}

#[test]
fn extreme_point_does_not_abort_curve() {
    // An extreme point must not take the rest of the curve down with it.
    let text = SMALL.replace(r#""values": [-50, -60]"#, r#""values": [-50, -400]"#);
    let spec = parse_config(&text).unwrap();
    let res = run_sweep(&spec).unwrap();
    assert_eq!(res.rows.len(), 2);
    let good = res.rows.iter().find(|r| r.swept_value == -50.0).unwrap();
    assert!(good.error.is_empty());
    assert!(good.sop_analytic.is_some());
}

#[test]
fn config_file_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, SMALL).unwrap();
    let spec = load_config(&path).unwrap();
    assert_eq!(spec, parse_config(SMALL).unwrap());

    let missing = load_config(&dir.path().join("nope.json"));
    assert!(matches!(missing, Err(Error::Config(_))), "{missing:?}");

    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_config(&path), Err(Error::Config(_))));

    std::fs::write(&path, SMALL.replace("\"m_antennas\"", "\"m_antenas\"")).unwrap();
    match load_config(&path) {
        Err(Error::Config(msg)) => assert!(msg.contains("m_antenas"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}
