use hapc_core::harness::{all_variants, compare_variants, run_scenario, ScenarioConfig, ScenarioOutput, Variant};
use hapc_core::{Error, Joint};

fn short(variant: Variant, cycles: u64) -> ScenarioConfig {
    ScenarioConfig {
        variant,
        n_cycles: cycles,
        ..Default::default()
    }
}

fn run(cfg: &ScenarioConfig) -> ScenarioOutput {
    run_scenario(cfg).unwrap()
}

#[test]
fn completes_the_requested_cycles_on_both_legs() {
    let out = run(&short(Variant::Hapc, 6));
    assert_eq!(out.summary.cycles_completed, 6);
    assert_eq!(out.metrics.len(), 12);
    assert_eq!(out.channels, ["quad", "ham"]);
    for m in &out.metrics {
        assert!(m.rms_err.hip >= 0.0 && m.rms_err.knee >= 0.0);
        assert!(m.mean_fitness.iter().all(|mu| (0.0..=1.0).contains(mu)));
        assert!(m.ticks > 0);
    }
}

#[test]
fn epc_never_stimulates_and_fpc_never_actuates() {
    let epc = run(&short(Variant::Epc, 4));
    assert!(epc.trace.iter().all(|r| r.pulse_width.iter().all(|&u| u == 0.0)));
    assert_eq!(epc.summary.rms_pulse_width_us, 0.0);
    assert!(epc.trace.iter().any(|r| r.tau_exo.hip != 0.0 || r.tau_exo.knee != 0.0));

    let fpc = run(&short(Variant::Fpc, 4));
    assert!(fpc.trace.iter().all(|r| r.tau_exo.hip == 0.0 && r.tau_exo.knee == 0.0));
    assert_eq!(fpc.summary.rms_exo_torque_nm, 0.0);
    assert!(fpc.trace.iter().any(|r| r.pulse_width.iter().any(|&u| u > 0.0)));
}

#[test]
fn hpc_keeps_its_gains_and_band() {
    let out = run(&short(Variant::Hpc, 6));
    let first = &out.metrics[0];
    for m in &out.metrics {
        assert_eq!(m.gamma_st, first.gamma_st);
        assert_eq!(m.gamma_sw, first.gamma_sw);
        assert_eq!(m.k_st, first.k_st);
        assert_eq!(m.k_sw, first.k_sw);
        assert_eq!(m.r_fesb, first.r_fesb);
    }
    assert!(out.trace.iter().all(|r| r.r_fesb == first.r_fesb));
}

#[test]
fn hapc_learns_away_from_the_initial_gains() {
    let out = run(&short(Variant::Hapc, 6));
    let last = out.metrics.last().unwrap();
    assert!(last.k_st.knee < 340.0 || last.k_sw.knee < 340.0);
    assert!(last.gamma_st.iter().chain(&last.gamma_sw).any(|&g| g < 1.0));
}

#[test]
fn identical_configs_give_identical_runs() {
    let cfg = ScenarioConfig {
        sensor_noise_deg: 0.3,
        rng_seed: 9,
        ..short(Variant::Hapc, 3)
    };
    let a = run(&cfg);
    assert_eq!(a, run(&cfg));
    let b = run(&ScenarioConfig { rng_seed: 10, ..cfg });
    assert_ne!(a.trace, b.trace);
}

#[test]
fn robot_acts_only_outside_the_fes_band() {
    let r_db = ScenarioConfig::default().r_db();
    for ideal in [true, false] {
        let mut cfg = short(Variant::Hapc, 8);
        cfg.exo.ideal_actuator = ideal;
        let out = run(&cfg);
        assert_eq!(out.summary.hierarchy_violations, 0, "ideal actuator {ideal}");
        for r in &out.trace {
            assert!(r.r_fesb >= r_db - 1e-15);
            for j in Joint::ALL {
                assert!(r.tau_exo[j] == 0.0 || r.eps[j].abs() > r.r_fesb, "t = {} {j:?}", r.t);
            }
        }
    }
}

#[test]
fn stiffer_exoskeleton_tracks_better() {
    let mut last = f64::INFINITY;
    for k in [50.0, 150.0, 340.0, 1000.0, 3000.0] {
        let mut cfg = short(Variant::Epc, 6);
        cfg.exo.baseline_stiffness = k;
        let err = run(&cfg).summary.rms_error_deg;
        assert!(err < last, "K0 = {k}: {err} after {last}");
        last = err;
    }
}

#[test]
fn comparison_normalises_to_hapc() {
    let (outputs, table) = compare_variants(&all_variants(&short(Variant::Hapc, 3))).unwrap();
    assert_eq!(outputs.len(), 4);
    let hapc = table.row(Variant::Hapc).unwrap();
    assert_eq!(hapc.normalised.error, 1.0);
    assert!((hapc.cost - 4.0).abs() < 1e-12);
    let epc = table.row(Variant::Epc).unwrap();
    assert_eq!(epc.raw.stimulation, 0.0);
    assert_eq!(epc.normalised.stimulation, 0.0);
}

#[test]
fn comparison_rejects_mismatched_scenarios() {
    let base = short(Variant::Hapc, 3);
    let mut other = base.with_variant(Variant::Epc);
    other.n_cycles = 4;
    assert!(matches!(compare_variants(&[base.clone(), other]), Err(Error::Config(_))));
    assert!(matches!(compare_variants(&[base.clone(), base.clone()]), Err(Error::Config(_))));
    assert!(matches!(compare_variants(&[base.with_variant(Variant::Epc)]), Err(Error::Config(_))));
    assert!(matches!(compare_variants(&[]), Err(Error::Config(_))));
}

#[test]
fn runaway_gains_report_divergence() {
    let mut cfg = short(Variant::Epc, 4);
    cfg.plant_substep = cfg.dt;
    cfg.exo.baseline_stiffness = 1e9;
    cfg.exo.torque_limit = 1e12;
    let err = run_scenario(&cfg).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn invalid_config_is_a_config_error() {
    let cfg = ScenarioConfig {
        n_cycles: 0,
        ..Default::default()
    };
    let err = run_scenario(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
