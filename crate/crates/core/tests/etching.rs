use cpn_core::etching::{
    build_etch_network, derivation_residuals, detect_oscillation, photon_ratio, EtchError, EtchParams, C4F8, DNP,
    SPECIES_NAMES, TTF,
};
use cpn_core::{integrate, IntegrationOptions, Trajectory};

fn run(p: &EtchParams, t_end: f64) -> Trajectory {
    let net = build_etch_network(p).unwrap();
    integrate(&net, &p.initial_state().unwrap(), t_end, &IntegrationOptions::default()).unwrap()
}

#[test]
fn closed_valve_gives_monotone_passivant() {
    let p = EtchParams { k4: 0.0, ..Default::default() };
    let traj = run(&p, 200.0);
    let c = traj.series(C4F8);
    assert!(c.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-30)));
}

#[test]
fn valve_population_is_conserved() {
    let traj = run(&EtchParams::default(), 200.0);
    let total0 = traj.states[0].concentrations[DNP] + traj.states[0].concentrations[TTF];
    for s in &traj.states {
        let total = s.concentrations[DNP] + s.concentrations[TTF];
        assert!((total - total0).abs() <= 1e-9 * total0);
    }
}

#[test]
fn diagnostics_agree_with_detector() {
    let p = EtchParams::default();
    let net = build_etch_network(&p).unwrap();
    let traj = run(&p, 200.0);
    let d = derivation_residuals(&traj, &p).unwrap();
    assert_eq!(d.zero_crossing_count, detect_oscillation(&traj, &net, SPECIES_NAMES[C4F8]).unwrap());
    assert!(d.eq7_normalized_max <= 1e-9);
    assert_eq!(d.times.len(), traj.len());
    assert!(d.r_p.iter().flatten().all(|r| r.is_finite() && *r >= 0.0));
}

#[test]
fn network_round_trips_through_parameters() {
    let p = EtchParams { k3: 2.5, source: 7.0, ..Default::default() };
    let net = build_etch_network(&p).unwrap();
    assert_eq!(EtchParams::from_network(&net, p.initial).unwrap(), p);
}

#[test]
fn photon_ratio_needs_generation() {
    let p = EtchParams::default();
    let n0 = p.initial_state().unwrap().concentrations;
    assert!(matches!(photon_ratio(&n0, &p), Err(EtchError::ZeroGenerationRate)));
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(EtchParams { k1: -1.0, ..Default::default() }.validate().is_err());
    assert!(EtchParams { k2: f64::NAN, ..Default::default() }.validate().is_err());
}
