use nalgebra::DMatrix;
use proptest::prelude::*;
use ris_secrecy::channel::{PhaseSource, ScenarioParams};
use ris_secrecy::geometry::{
    build_correlation, factorize, trace_bundle, CorrelationMatrix, RisGeometry, C64,
    DEFAULT_CLAMP_FLOOR,
};
use ris_secrecy::moments::{
    coupling_spectrum, fit_pair, gamma_fit_from_moments, spectral_moments, AnalyticPhi,
    MomentVariant,
};
use ris_secrecy::secrecy::{sop_closed_form, sop_quadrature, SecrecySnapshot};

fn phases(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(0.0..std::f64::consts::TAU, n)
        .prop_map(|v| v.into_iter().map(|a| C64::from_polar(1.0, a)).collect())
}

fn permuted(r: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(perm[i], perm[j])])
}

fn scenario(side: usize, spacing: f64, emi_db: f64, direct_db: Option<f64>) -> ScenarioParams {
    let geometry = RisGeometry::square(side, spacing, 0.1).unwrap();
    let a = geometry.element_area();
    let l = |db: f64| 10f64.powf(db / 10.0);
    ScenarioParams {
        tx_power: 0.1,
        noise_power_b: l(-134.0),
        noise_power_e: l(-134.0),
        emi_power: l(-134.0 + emi_db) / a,
        pathloss_ris: l(-55.0) / a,
        pathloss_ris_rx_b: l(-58.0) / a,
        pathloss_ris_rx_e: l(-63.0) / a,
        pathloss_direct_b: direct_db.map(l).unwrap_or(0.0),
        pathloss_direct_e: direct_db.map(|d| l(d - 6.0)).unwrap_or(0.0),
        m_antennas: 2,
        vm_concentration: 4.0,
        emi_flag_b: true,
        emi_flag_e: true,
        secrecy_rate: 1.0,
        geometry,
    }
}

fn exact_sop(p: &ScenarioParams, corr: &CorrelationMatrix, phi: &[C64]) -> f64 {
    let a = AnalyticPhi {
        traces: trace_bundle(corr, phi).unwrap(),
        spectra: vec![coupling_spectrum(corr, phi).unwrap()],
        source: PhaseSource::Fixed(phi.to_vec()),
        t1_rel_std: 0.0,
    };
    let (gb, ge) = fit_pair(p, &a, MomentVariant::Exact).unwrap();
    let s = SecrecySnapshot::new(p.gamma_bar_b(), p.gamma_bar_e(), gb, ge, p.secrecy_rate).unwrap();
    sop_closed_form(&s).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Relabelling the elements (rows and columns of R together with the
    /// entries of Φ) leaves every trace and the coupling spectrum unchanged.
    #[test]
    fn element_relabelling_is_invisible(
        phi in phases(9),
        perm in Just((0..9).collect::<Vec<usize>>()).prop_shuffle(),
        spacing in 0.15f64..0.6,
    ) {
        let g = RisGeometry::square(3, spacing, 0.1).unwrap();
        let r = build_correlation(&g);
        let base = factorize(&r, DEFAULT_CLAMP_FLOOR).unwrap();
        let moved = factorize(&CorrelationMatrix::from_entries(permuted(r.entries(), &perm)), DEFAULT_CLAMP_FLOOR).unwrap();
        let phi_moved: Vec<C64> = perm.iter().map(|&i| phi[i]).collect();

        let t0 = trace_bundle(&base, &phi).unwrap();
        let t1 = trace_bundle(&moved, &phi_moved).unwrap();
        for (a, b) in [(t0.t1, t1.t1), (t0.t2, t1.t2), (t0.tr_theta, t1.tr_theta), (t0.tr_alpha_core, t1.tr_alpha_core), (t0.tr_eve_q, t1.tr_eve_q)] {
            prop_assert!(rel(a, b) < 1e-9, "{a} vs {b}");
        }
        let s0 = coupling_spectrum(&base, &phi).unwrap();
        let s1 = coupling_spectrum(&moved, &phi_moved).unwrap();
        let top = s0[0];
        for (a, b) in s0.iter().zip(&s1) {
            prop_assert!((a - b).abs() < 1e-9 * top, "{a} vs {b}");
        }
    }

    /// Scaling every power (transmit, noise, EMI) by one factor leaves the
    /// SOP unchanged.
    #[test]
    fn common_power_scaling_leaves_sop_unchanged(
        phi in phases(16),
        emi_db in -10.0f64..30.0,
        scale_db in -30.0f64..30.0,
        direct in prop::option::of(-110.0f64..-70.0),
    ) {
        let p = scenario(4, 0.25, emi_db, direct);
        let corr = factorize(&build_correlation(&p.geometry), DEFAULT_CLAMP_FLOOR).unwrap();
        let c = 10f64.powf(scale_db / 10.0);
        let mut q = p.clone();
        q.tx_power *= c;
        q.noise_power_b *= c;
        q.noise_power_e *= c;
        q.emi_power *= c;
        let a = exact_sop(&p, &corr, &phi);
        let b = exact_sop(&q, &corr, &phi);
        prop_assert!((a - b).abs() <= 1e-9 + 1e-7 * a, "{a} vs {b}");
    }

    /// The Gamma fit reproduces the two moments it was built from.
    #[test]
    fn gamma_fit_reproduces_its_moments(mean in 1e-6f64..1e6, cv2 in 1e-3f64..5.0) {
        let second = mean * mean * (1.0 + cv2);
        let f = gamma_fit_from_moments(mean, second).unwrap();
        prop_assert!(rel(f.k * f.theta, mean) < 1e-12);
        prop_assert!(rel(f.k * (f.k + 1.0) * f.theta * f.theta, second) < 1e-12);
        prop_assert!(rel(f.variance(), second - mean * mean) < 1e-9);
    }

    /// Scaling the coupling spectrum by `c` while dividing both RIS-to-receiver
    /// path losses by `c` leaves the normalized moments unchanged.
    #[test]
    fn spectral_moments_are_homogeneous(
        kappas in prop::collection::vec(0.0f64..50.0, 1..12),
        c in 0.1f64..10.0,
        emi_db in -10.0f64..30.0,
        direct in prop::option::of(-110.0f64..-70.0),
    ) {
        prop_assume!(kappas.iter().any(|k| *k > 1e-3));
        let p = scenario(4, 0.25, emi_db, direct);
        let mut q = p.clone();
        q.pathloss_ris_rx_b /= c;
        q.pathloss_ris_rx_e /= c;
        let scaled: Vec<f64> = kappas.iter().map(|k| k * c).collect();
        let a = spectral_moments(&p, &kappas).unwrap();
        let b = spectral_moments(&q, &scaled).unwrap();
        for (x, y) in [(a.mean_xb, b.mean_xb), (a.second_xb, b.second_xb), (a.mean_xe, b.mean_xe)] {
            prop_assert!(rel(x, y) < 1e-7, "{x} vs {y}");
        }
    }

    /// Closed form and quadrature agree on random snapshots.
    #[test]
    fn sop_engines_agree(
        k in 0.3f64..40.0,
        theta_b in 0.01f64..10.0,
        theta_e in 0.0f64..10.0,
        gb_db in -20.0f64..40.0,
        ge_db in -20.0f64..40.0,
        rate in 0.0f64..4.0,
    ) {
        let s = SecrecySnapshot::from_parameters(10f64.powf(gb_db / 10.0), 10f64.powf(ge_db / 10.0), k, theta_b, theta_e, rate).unwrap();
        let a = sop_closed_form(&s).unwrap();
        let b = sop_quadrature(&s, 1e-9).unwrap();
        prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        prop_assert!((0.0..=1.0).contains(&a));
    }

    /// The SOP grows with the target rate and with Eve's scale and falls
    /// with Bob's scale.
    #[test]
    fn sop_monotonicity(
        k in 0.5f64..20.0,
        theta_b in 0.05f64..5.0,
        theta_e in 0.05f64..5.0,
        rate in 0.0f64..3.0,
        step in 1.05f64..3.0,
    ) {
        let sop = |tb: f64, te: f64, r: f64| {
            sop_closed_form(&SecrecySnapshot::from_parameters(20.0, 20.0, k, tb, te, r).unwrap()).unwrap()
        };
        let base = sop(theta_b, theta_e, rate);
        let tol = 1e-12;
        prop_assert!(sop(theta_b, theta_e, rate + step - 1.0) >= base - tol);
        prop_assert!(sop(theta_b, theta_e * step, rate) >= base - tol);
        prop_assert!(sop(theta_b * step, theta_e, rate) <= base + tol);
    }
}
