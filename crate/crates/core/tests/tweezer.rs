use cpn_core::tweezer::{
    escape_threshold, plasma_frequency, simulate_rotation, DipoleDesign, EmWave, PhysConstants, RotationOptions,
    SignalConfig, SignalError,
};

#[test]
fn rotation_is_deterministic() {
    let cfg = SignalConfig::default();
    let model = cfg.design.model(5e-8, &cfg.constants);
    let d = cfg.drive_duration(&cfg.wave);
    let a = simulate_rotation(&model, &cfg.wave, d, &RotationOptions::default()).unwrap();
    let b = simulate_rotation(&model, &cfg.wave, d, &RotationOptions::default()).unwrap();
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.peak_force, b.peak_force);
}

#[test]
fn no_field_no_motion() {
    let cfg = SignalConfig::default();
    let model = cfg.design.model(5e-8, &cfg.constants);
    let wave = EmWave::new(0.0, 1e10);
    let r = simulate_rotation(&model, &wave, 1e-9, &RotationOptions::default()).unwrap();
    assert!(r.phi.iter().all(|&p| p == 0.0));
    assert_eq!(r.peak_force, 0.0);
}

#[test]
fn plasma_frequency_grows_as_square_root() {
    let k = PhysConstants::default();
    let mut last = 0.0;
    for n in [1e10, 1e12, 1e14, 1e16, 1e18] {
        let w = plasma_frequency(n, &k).unwrap();
        assert!(w > last);
        last = w;
    }
    assert!(plasma_frequency(-1.0, &k).is_err());
}

#[test]
fn escape_threshold_value() {
    let f = escape_threshold(0.1, 3.4e-10, &PhysConstants::default()).unwrap();
    assert!((f / 4.712284217647e-11 - 1.0).abs() < 1e-12);
    assert!(matches!(escape_threshold(0.1, 0.0, &PhysConstants::default()), Err(SignalError::NonPositiveGap(_))));
}

#[test]
fn population_counts_scale_with_length() {
    let cfg = SignalConfig::default();
    let pop = cfg.population().unwrap();
    let lengths = pop.lengths();
    assert_eq!(lengths.len(), cfg.lengths);
    assert!(lengths.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(pop.guest_count(lengths[0]).unwrap(), 1);
    assert!(pop.guest_count(1.234e-9).is_err());
}

#[test]
fn releasing_guests_raises_plasma_frequency() {
    let cfg = SignalConfig::default();
    let pop = cfg.population().unwrap();
    let on = cfg.respond(&pop, &cfg.wave).unwrap();
    let off = cfg.respond(&pop, &EmWave::new(cfg.wave.e0, 1e12)).unwrap();
    assert!(on.released_count > 0);
    assert_eq!(off.released_count, 0);
    assert!(on.omega_p > off.omega_p);
}

#[test]
fn zero_inertia_is_an_error() {
    let design = DipoleDesign { rod_density: 0.0, anchor_inertia: 0.0, guest_mass: 0.0, ..Default::default() };
    let model = design.model(1e-8, &PhysConstants::default());
    let err = simulate_rotation(&model, &EmWave::new(1e3, 1e9), 1e-9, &RotationOptions::default());
    assert!(matches!(err, Err(SignalError::ZeroMomentOfInertia)));
}
