#![allow(dead_code)]

use cpn_core::{RateModel, Reaction, ReactionNetwork, Species, SystemState};
use rand::seq::SliceRandom;
use rand::Rng;

const NAMES: [&str; 14] = ["A", "B", "C", "Ar", "Ar+", "e-", "C4F8", "O2", "H2O", "x_1", "NO2", "CH3", "hv", "Y9"];

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn random_rate(rng: &mut impl Rng) -> RateModel {
    if rng.gen_bool(0.7) {
        RateModel::Constant { k: log_uniform(rng, 1e-3, 1e3) }
    } else {
        RateModel::Arrhenius { a: log_uniform(rng, 1e-14, 1e2), ea: rng.gen_range(0.0..10.0) }
    }
}

fn random_side(rng: &mut impl Rng, s: usize) -> Vec<(usize, u32)> {
    let n = rng.gen_range(1..=3.min(s));
    let mut idx: Vec<usize> = (0..s).collect();
    idx.shuffle(rng);
    idx[..n].iter().map(|&i| (i, rng.gen_range(1..=2))).collect()
}

/// Random network with at most `max_s` species and `max_r` reactions, with
/// a mix of constant and Arrhenius rates, order overrides and compositions.
pub fn random_network(rng: &mut impl Rng, max_s: usize, max_r: usize) -> ReactionNetwork {
    let s = rng.gen_range(1..=max_s);
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    let species: Vec<Species> = names[..s]
        .iter()
        .map(|&n| {
            if rng.gen_bool(0.5) {
                let mut elems: Vec<(&str, u32)> = Vec::new();
                for e in ["C", "H", "O"] {
                    if rng.gen_bool(0.6) {
                        elems.push((e, rng.gen_range(1..5)));
                    }
                }
                Species::new(n).with_composition(elems)
            } else {
                Species::new(n)
            }
        })
        .collect();
    let r = rng.gen_range(1..=max_r);
    let reactions = (0..r)
        .map(|_| {
            let reactants = random_side(rng, s);
            let products = random_side(rng, s);
            let mut rxn = Reaction::new(reactants.clone(), products, random_rate(rng)).unwrap();
            if rng.gen_bool(0.25) {
                let (i, _) = reactants[rng.gen_range(0..reactants.len())];
                let order = (rng.gen_range(0.0..3.0f64) * 4.0).round() / 4.0;
                rxn = rxn.with_order(i, order).unwrap();
            }
            rxn
        })
        .collect();
    ReactionNetwork::new(species, reactions).unwrap()
}

pub fn random_state(rng: &mut impl Rng, net: &ReactionNetwork) -> SystemState {
    let s = net.species_count();
    let n = (0..s).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
    let t = (0..s).map(|_| rng.gen_range(0.1..5.0)).collect();
    SystemState::new(0.0, n, t).unwrap()
}

/// Random network of association/dissociation reactions among molecules
/// built from two elements, so every reaction is elementally balanced.
pub fn balanced_network(rng: &mut impl Rng) -> ReactionNetwork {
    let formulas: [(u32, u32); 7] = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)];
    let species: Vec<Species> = formulas
        .iter()
        .map(|&(a, b)| {
            let mut comp = Vec::new();
            if a > 0 {
                comp.push(("P", a));
            }
            if b > 0 {
                comp.push(("Q", b));
            }
            Species::new(format!("P{a}Q{b}")).with_composition(comp)
        })
        .collect();
    let mut candidates = Vec::new();
    for (z, &(za, zb)) in formulas.iter().enumerate() {
        for (x, &(xa, xb)) in formulas.iter().enumerate() {
            for (y, &(ya, yb)) in formulas.iter().enumerate().skip(x) {
                if xa + ya == za && xb + yb == zb {
                    candidates.push((x, y, z));
                }
            }
        }
    }
    candidates.shuffle(rng);
    let count = rng.gen_range(2..=candidates.len().min(10));
    let mut reactions = Vec::new();
    for &(x, y, z) in &candidates[..count] {
        let pair = if x == y { vec![(x, 2)] } else { vec![(x, 1), (y, 1)] };
        let k = RateModel::Constant { k: log_uniform(rng, 0.1, 10.0) };
        let rxn = if rng.gen_bool(0.5) { Reaction::new(pair, [(z, 1)], k) } else { Reaction::new([(z, 1)], pair, k) };
        reactions.push(rxn.unwrap());
    }
    ReactionNetwork::new(species, reactions).unwrap()
}

pub fn structurally_equal(a: &ReactionNetwork, b: &ReactionNetwork) -> bool {
    a.species() == b.species() && a.reactions() == b.reactions()
}
