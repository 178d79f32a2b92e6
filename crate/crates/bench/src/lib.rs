//! Benchmark fixtures shared by the criterion benches.

use cpn_core::{RateModel, Reaction, ReactionNetwork, Species, SystemState};

/// Linear chain `S0 -> S1 -> … -> S{n-1}` with a reverse step on every link,
/// started with everything in `S0`.
pub fn chain(n: usize) -> (ReactionNetwork, SystemState) {
    let species = (0..n).map(|i| Species::new(format!("S{i}"))).collect();
    let mut reactions = Vec::new();
    for i in 0..n - 1 {
        let k = 1.0 + i as f64 * 0.1;
        reactions.push(Reaction::new([(i, 1)], [(i + 1, 1)], RateModel::Constant { k }).unwrap());
        reactions.push(Reaction::new([(i + 1, 1)], [(i, 1)], RateModel::Constant { k: 0.1 * k }).unwrap());
    }
    let net = ReactionNetwork::new(species, reactions).unwrap();
    let mut n0 = vec![0.0; n];
    n0[0] = 1.0;
    (net, SystemState::uniform(0.0, n0, 1.0).unwrap())
}
