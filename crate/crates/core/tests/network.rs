mod common;

use cpn_core::{integrate, IntegrationOptions, Method, RateModel, Reaction, ReactionNetwork, Species, SystemState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matrix_and_direct_forms_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_network(&mut rng, 10, 15);
        let st = common::random_state(&mut rng, &net);
        prop_assert_eq!(net.derivative(&st).unwrap(), net.direct_derivative(&st).unwrap());
    }

    #[test]
    fn balanced_networks_annihilate_composition(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::balanced_network(&mut rng);
        prop_assert!(net.elemental_residual(true).unwrap().is_balanced());
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let net = common::random_network(&mut rng, 6, 8);
        let mut st = common::random_state(&mut rng, &net);
        st.concentrations.iter_mut().for_each(|x| *x += 0.5);
        let jac = net.jacobian(&st).unwrap();
        for wrt in 0..net.species_count() {
            let h = 1e-6 * st.concentrations[wrt];
            let mut up = st.clone();
            let mut down = st.clone();
            up.concentrations[wrt] += h;
            down.concentrations[wrt] -= h;
            let (fu, fd) = (net.derivative(&up).unwrap(), net.derivative(&down).unwrap());
            // central differences lose about eps·|f|/h to round-off
            let noise = fu.iter().chain(&fd).fold(0.0f64, |m, x| m.max(x.abs())) * 1e-14 / h;
            let scale = jac.column(wrt).amax();
            for i in 0..net.species_count() {
                let fd_val = (fu[i] - fd[i]) / (2.0 * h);
                let err = (fd_val - jac[(i, wrt)]).abs();
                assert!(err <= 1e-5 * scale + noise, "d{i}/d{wrt}: {fd_val} vs {} (noise {noise:e})", jac[(i, wrt)]);
            }
        }
    }
}

#[test]
fn every_method_conserves_a_closed_exchange() {
    let net = ReactionNetwork::new(
        vec![Species::new("A"), Species::new("B")],
        vec![
            Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 2.0 }).unwrap(),
            Reaction::new([(1, 1)], [(0, 1)], RateModel::Constant { k: 0.5 }).unwrap(),
        ],
    )
    .unwrap();
    let st = SystemState::uniform(0.0, vec![1.0, 0.0], 1.0).unwrap();
    for (method, dt) in
        [(Method::ExplicitEuler, Some(1e-3)), (Method::Rk4Fixed, Some(1e-2)), (Method::AdaptiveStiff, None)]
    {
        let opts = IntegrationOptions { method, dt_init: dt, ..Default::default() };
        let traj = integrate(&net, &st, 10.0, &opts).unwrap();
        let end = &traj.last().unwrap().concentrations;
        assert!((end[0] + end[1] - 1.0).abs() < 1e-10, "{method:?}");
        // equilibrium A/B = 0.5/2
        assert!((end[0] - 0.2).abs() < 1e-3, "{method:?}: {end:?}");
    }
}

#[test]
fn stiff_decay_stays_non_negative() {
    let net = ReactionNetwork::new(
        vec![Species::new("A"), Species::new("B"), Species::new("C")],
        vec![
            Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1e6 }).unwrap(),
            Reaction::new([(1, 1)], [(2, 1)], RateModel::Constant { k: 1.0 }).unwrap(),
        ],
    )
    .unwrap();
    let st = SystemState::uniform(0.0, vec![1.0, 0.0, 0.0], 1.0).unwrap();
    let traj = integrate(&net, &st, 5.0, &IntegrationOptions::default()).unwrap();
    assert!(traj.states.iter().flat_map(|s| &s.concentrations).all(|&x| x >= 0.0));
    let c = traj.last().unwrap().concentrations[2];
    assert!((c - (1.0 - (-5.0f64).exp())).abs() < 1e-5, "{c}");
}

#[test]
fn arrhenius_temperature_dependence() {
    let rate = RateModel::Arrhenius { a: 5e-14, ea: 7.88 };
    let net = ReactionNetwork::new(
        vec![Species::new("A"), Species::new("B")],
        vec![Reaction::new([(0, 1)], [(1, 1)], rate).unwrap()],
    )
    .unwrap();
    let k = net.rate_coefficients(&[1.0, 1.0]).unwrap()[0];
    assert!((k / 1.8911652839131286e-17 - 1.0).abs() < 1e-14);
    let hot = net.rate_coefficients(&[2.0, 1.0]).unwrap()[0];
    assert!(hot > k);
}
