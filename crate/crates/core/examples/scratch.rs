use cpn_core::*;
fn main() {
    let net = parse_network("A -> B : const(0.7)\nB -> C : const(0.3)").unwrap().into_network().unwrap();
    let st = SystemState::uniform(0.0, vec![1.0, 0.0, 0.0], 1.0).unwrap();
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
    let traj = integrate_with_stops(&net, &st, 10.0, &times, &IntegrationOptions::default()).unwrap();
    let idx: Vec<usize> = times.iter().map(|t| traj.nearest_index(*t).unwrap()).collect();
    let target = Target {
        times: times.clone(),
        species: vec![0, 1, 2],
        values: idx.iter().map(|&i| traj.states[i].concentrations.clone()).collect(),
        weights: vec![1.0; 3],
    };
    for free in [vec![0], vec![0, 1]] {
        let mut start = net.clone();
        for &r in &free {
            let k = start.reactions()[r].rate().scale();
            start = start.with_rate(r, RateModel::Constant { k: 3.0 * k }).unwrap();
        }
        let pb = FitProblem {
            network: start,
            initial: st.clone(),
            free: free.iter().map(|&r| FreeParameter { reaction: r, lower: 1e-3, upper: 1e3 }).collect(),
            target: target.clone(),
            options: FitOptions::default(),
        };
        let t0 = std::time::Instant::now();
        let r = fit_rates(&pb).unwrap();
        println!(
            "{:?} loss {:e} evals {} conv {} hist {} mono {} {:?}",
            r.parameters,
            r.loss,
            r.evaluations,
            r.converged,
            r.history.len(),
            r.history.windows(2).all(|w| w[1] <= w[0]),
            t0.elapsed()
        );
    }
}
