//! Species, reactions and the stoichiometric matrix form of a chemical
//! pathway network.
//!
//! A network with `s` species and `r` reactions carries two `s × r` integer
//! matrices: `phi` (product counts) and `gamma` (reactant counts). Each
//! reaction contributes `k · ∏ n^Δ` to the rate vector, and the species
//! time derivative is `(phi − gamma) · K`.
//!
//! Concentrations are per-volume number densities (m⁻³ by convention) and
//! temperatures are in eV, so an Arrhenius activation energy `Ea` in eV
//! divides directly by a temperature.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("reaction {reaction} references species index {index}, but the network has {count} species")]
    UnknownSpeciesIndex { reaction: usize, index: usize, count: usize },
    #[error("non-positive temperature {0} eV")]
    NonPositiveTemperature(f64),
    #[error("dimension mismatch: expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("species `{0}` has no elemental composition")]
    MissingComposition(String),
    #[error("invalid reaction: {0}")]
    InvalidReaction(String),
    #[error("invalid rate model: {0}")]
    InvalidRate(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    /// Element symbol to atom count. Empty for pseudo-species such as `hv`.
    #[serde(default)]
    pub composition: BTreeMap<String, u32>,
    /// Molecular mass in amu.
    #[serde(default)]
    pub mass: Option<f64>,
}

impl Species {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), composition: BTreeMap::new(), mass: None }
    }

    pub fn with_composition<S: Into<String>>(mut self, composition: impl IntoIterator<Item = (S, u32)>) -> Self {
        self.composition = composition.into_iter().map(|(e, c)| (e.into(), c)).collect();
        self
    }

    pub fn is_pseudo(&self) -> bool {
        self.composition.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateModel {
    Constant {
        k: f64,
    },
    /// `A · exp(−Ea / T)` with `Ea` and `T` in eV.
    Arrhenius {
        a: f64,
        ea: f64,
    },
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match *self {
            RateModel::Constant { k } if !ok(k) => {
                Err(NetworkError::InvalidRate(format!("rate constant {k} must be finite and >= 0")))
            }
            RateModel::Arrhenius { a, .. } if !ok(a) => {
                Err(NetworkError::InvalidRate(format!("pre-exponential factor {a} must be finite and >= 0")))
            }
            RateModel::Arrhenius { ea, .. } if !ok(ea) => {
                Err(NetworkError::InvalidRate(format!("activation energy {ea} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    /// The multiplicative magnitude of the model (`k` or `A`).
    pub fn scale(&self) -> f64 {
        match *self {
            RateModel::Constant { k } => k,
            RateModel::Arrhenius { a, .. } => a,
        }
    }

    pub fn with_scale(&self, value: f64) -> RateModel {
        match *self {
            RateModel::Constant { .. } => RateModel::Constant { k: value },
            RateModel::Arrhenius { ea, .. } => RateModel::Arrhenius { a: value, ea },
        }
    }
}

/// Rate coefficient of `model` at reactant mean temperature `t_mean` (eV).
pub fn arrhenius_k(model: &RateModel, t_mean: f64) -> Result<f64> {
    if !(t_mean > 0.0) {
        return Err(NetworkError::NonPositiveTemperature(t_mean));
    }
    Ok(match *model {
        RateModel::Constant { k } => k,
        RateModel::Arrhenius { a, ea } => a * (-ea / t_mean).exp(),
    })
}

/// How the reactant temperatures of a reaction are averaged before the
/// Arrhenius evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMean {
    /// Arithmetic mean over distinct reactant species.
    #[default]
    Distinct,
    /// Mean weighted by stoichiometric count.
    Stoichiometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    reactants: Vec<(usize, u32)>,
    products: Vec<(usize, u32)>,
    rate: RateModel,
    #[serde(default)]
    order_override: BTreeMap<usize, f64>,
}

/// Merges repeated species in a side, keeping first-occurrence order.
fn merge_side(side: impl IntoIterator<Item = (usize, u32)>) -> Vec<(usize, u32)> {
    let mut out: Vec<(usize, u32)> = Vec::new();
    for (idx, count) in side {
        match out.iter_mut().find(|(i, _)| *i == idx) {
            Some(entry) => entry.1 += count,
            None => out.push((idx, count)),
        }
    }
    out
}

impl Reaction {
    pub fn new(
        reactants: impl IntoIterator<Item = (usize, u32)>,
        products: impl IntoIterator<Item = (usize, u32)>,
        rate: RateModel,
    ) -> Result<Self> {
        let reactants: Vec<_> = reactants.into_iter().collect();
        let products: Vec<_> = products.into_iter().collect();
        if reactants.is_empty() || products.is_empty() {
            return Err(NetworkError::InvalidReaction("a reaction needs at least one reactant and one product".into()));
        }
        if reactants.iter().chain(&products).any(|&(_, c)| c == 0) {
            return Err(NetworkError::InvalidReaction("stoichiometric counts must be positive".into()));
        }
        rate.validate()?;
        Ok(Self {
            reactants: merge_side(reactants),
            products: merge_side(products),
            rate,
            order_override: BTreeMap::new(),
        })
    }

    /// Overrides the reaction order of one reactant.
    pub fn with_order(mut self, species: usize, order: f64) -> Result<Self> {
        if !(order.is_finite() && order >= 0.0) {
            return Err(NetworkError::InvalidReaction(format!("reaction order {order} must be finite and >= 0")));
        }
        if !self.reactants.iter().any(|&(i, _)| i == species) {
            return Err(NetworkError::InvalidReaction(format!(
                "order override for species index {species}, which is not a reactant"
            )));
        }
        self.order_override.insert(species, order);
        Ok(self)
    }

    pub fn with_rate(mut self, rate: RateModel) -> Result<Self> {
        rate.validate()?;
        self.rate = rate;
        Ok(self)
    }

    pub fn reactants(&self) -> &[(usize, u32)] {
        &self.reactants
    }

    pub fn products(&self) -> &[(usize, u32)] {
        &self.products
    }

    pub fn rate(&self) -> &RateModel {
        &self.rate
    }

    pub fn order_overrides(&self) -> &BTreeMap<usize, f64> {
        &self.order_override
    }

    /// Reaction order of reactant `species`: the override if present,
    /// otherwise its stoichiometric count.
    pub fn order_of(&self, species: usize) -> Option<f64> {
        let count = self.reactants.iter().find(|&&(i, _)| i == species)?.1;
        Some(self.order_override.get(&species).copied().unwrap_or(count as f64))
    }

    fn species_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.reactants.iter().chain(&self.products).map(|&(i, _)| i).chain(self.order_override.keys().copied())
    }

    /// Mass-action factor `∏ n^Δ` over reactants.
    fn mass_action(&self, concentrations: &[f64]) -> f64 {
        self.reactants
            .iter()
            .map(|&(i, count)| match self.order_override.get(&i) {
                Some(&order) => concentrations[i].powf(order),
                None => concentrations[i].powi(count as i32),
            })
            .product()
    }
}

/// Mean reactant temperature of `reaction` under `mode`.
pub fn reactant_mean_temperature(reaction: &Reaction, temperatures: &[f64], mode: TemperatureMean) -> f64 {
    let (sum, weight) = reaction.reactants.iter().fold((0.0, 0.0), |(sum, weight), &(i, count)| {
        let w = match mode {
            TemperatureMean::Distinct => 1.0,
            TemperatureMean::Stoichiometric => count as f64,
        };
        (sum + w * temperatures[i], weight + w)
    });
    sum / weight
}

/// Sparse column storage for an `s × r` count matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StoichMatrix {
    rows: usize,
    columns: Vec<Vec<(usize, u32)>>,
}

impl StoichMatrix {
    fn from_columns(rows: usize, columns: Vec<Vec<(usize, u32)>>) -> Self {
        let columns = columns
            .into_iter()
            .map(|mut c| {
                c.sort_by_key(|&(i, _)| i);
                c
            })
            .collect();
        Self { rows, columns }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.columns[col].iter().find(|&&(i, _)| i == row).map_or(0, |&(_, c)| c)
    }

    /// Non-zero entries of a column, sorted by row.
    pub fn column(&self, col: usize) -> &[(usize, u32)] {
        &self.columns[col]
    }

    pub fn to_dense(&self) -> DMatrix<i64> {
        let mut m = DMatrix::zeros(self.rows, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, c) in col {
                m[(i, j)] = c as i64;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub concentrations: Vec<f64>,
    /// Per-species temperature in eV.
    pub temperatures: Vec<f64>,
}

impl SystemState {
    pub fn new(t: f64, concentrations: Vec<f64>, temperatures: Vec<f64>) -> Result<Self> {
        let state = Self { t, concentrations, temperatures };
        state.validate()?;
        Ok(state)
    }

    /// All species at the same temperature.
    pub fn uniform(t: f64, concentrations: Vec<f64>, temperature: f64) -> Result<Self> {
        let temperatures = vec![temperature; concentrations.len()];
        Self::new(t, concentrations, temperatures)
    }

    pub fn validate(&self) -> Result<()> {
        if self.concentrations.len() != self.temperatures.len() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.concentrations.len(),
                actual: self.temperatures.len(),
            });
        }
        if !self.t.is_finite() {
            return Err(NetworkError::InvalidState(format!("time {} is not finite", self.t)));
        }
        if let Some(n) = self.concentrations.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
            return Err(NetworkError::InvalidState(format!("concentration {n} must be finite and >= 0")));
        }
        if let Some(&t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(NetworkError::NonPositiveTemperature(t));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.concentrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concentrations.is_empty()
    }
}

/// Per-reaction contributions `k_η · ∏ n^Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn contributions(&self) -> &[f64] {
        &self.0
    }
}

/// Result of one explicit Euler step.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerStep {
    pub state: SystemState,
    /// Species whose updated concentration went negative and was clamped.
    pub clamped: Vec<usize>,
}

impl EulerStep {
    pub fn was_clamped(&self) -> bool {
        !self.clamped.is_empty()
    }
}

/// Element-by-reaction balance of `composition · (phi − gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementalResidual {
    pub elements: Vec<String>,
    /// Reactions that were checked (those without pseudo-species).
    pub reactions: Vec<usize>,
    /// Reactions skipped because they involve pseudo-species.
    pub skipped: Vec<usize>,
    /// `residual[e][j]` is the imbalance of element `e` in `reactions[j]`.
    pub residual: Vec<Vec<i64>>,
}

impl ElementalResidual {
    pub fn is_balanced(&self) -> bool {
        self.residual.iter().flatten().all(|&r| r == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    phi: StoichMatrix,
    gamma: StoichMatrix,
    /// Non-zero entries of `phi − gamma`, per reaction.
    net: Vec<Vec<(usize, f64)>>,
    temperature_mean: TemperatureMean,
}

impl ReactionNetwork {
    /// Assembles the stoichiometric matrices for `reactions` over `species`.
    pub fn new(species: Vec<Species>, reactions: Vec<Reaction>) -> Result<Self> {
        let mut seen = HashSet::new();
        for sp in &species {
            if !seen.insert(sp.name.as_str()) {
                return Err(NetworkError::DuplicateSpecies(sp.name.clone()));
            }
        }
        let s = species.len();
        for (j, rxn) in reactions.iter().enumerate() {
            if let Some(index) = rxn.species_indices().find(|&i| i >= s) {
                return Err(NetworkError::UnknownSpeciesIndex { reaction: j, index, count: s });
            }
        }
        let phi = StoichMatrix::from_columns(s, reactions.iter().map(|r| r.products.clone()).collect());
        let gamma = StoichMatrix::from_columns(s, reactions.iter().map(|r| r.reactants.clone()).collect());
        let net = (0..reactions.len())
            .map(|j| {
                let mut col = vec![0i64; s];
                phi.column(j).iter().for_each(|&(i, c)| col[i] += c as i64);
                gamma.column(j).iter().for_each(|&(i, c)| col[i] -= c as i64);
                col.into_iter().enumerate().filter(|&(_, c)| c != 0).map(|(i, c)| (i, c as f64)).collect()
            })
            .collect();
        Ok(Self { species, reactions, phi, gamma, net, temperature_mean: TemperatureMean::Distinct })
    }

    pub fn with_temperature_mean(mut self, mode: TemperatureMean) -> Self {
        self.temperature_mean = mode;
        self
    }

    pub fn temperature_mean(&self) -> TemperatureMean {
        self.temperature_mean
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn phi(&self) -> &StoichMatrix {
        &self.phi
    }

    pub fn gamma(&self) -> &StoichMatrix {
        &self.gamma
    }

    /// Dense `phi − gamma`.
    pub fn net_matrix(&self) -> DMatrix<i64> {
        self.phi.to_dense() - self.gamma.to_dense()
    }

    /// Copy of the network with reaction `index` given a new rate model.
    pub fn with_rate(&self, index: usize, rate: RateModel) -> Result<Self> {
        let mut net = self.clone();
        let rxn = net
            .reactions
            .get_mut(index)
            .ok_or_else(|| NetworkError::InvalidReaction(format!("no reaction with index {index}")))?;
        rate.validate()?;
        rxn.rate = rate;
        Ok(net)
    }

    fn check_dims(&self, state: &SystemState) -> Result<()> {
        let s = self.species.len();
        for len in [state.concentrations.len(), state.temperatures.len()] {
            if len != s {
                return Err(NetworkError::DimensionMismatch { expected: s, actual: len });
            }
        }
        Ok(())
    }

    /// Rate coefficient of every reaction at the given per-species temperatures.
    pub fn rate_coefficients(&self, temperatures: &[f64]) -> Result<Vec<f64>> {
        if temperatures.len() != self.species.len() {
            return Err(NetworkError::DimensionMismatch { expected: self.species.len(), actual: temperatures.len() });
        }
        self.reactions
            .iter()
            .map(|r| {
                let t = reactant_mean_temperature(r, temperatures, self.temperature_mean);
                arrhenius_k(&r.rate, t)
            })
            .collect()
    }

    /// Contributions for precomputed rate coefficients, written into `out`.
    pub fn rates_into(&self, coefficients: &[f64], concentrations: &[f64], out: &mut [f64]) {
        for ((o, r), &k) in out.iter_mut().zip(&self.reactions).zip(coefficients) {
            *o = k * r.mass_action(concentrations);
        }
    }

    /// `(phi − gamma) · K` for precomputed coefficients, written into `out`.
    pub fn derivative_into(&self, coefficients: &[f64], concentrations: &[f64], rates: &mut [f64], out: &mut [f64]) {
        self.rates_into(coefficients, concentrations, rates);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (column, &kj) in self.net.iter().zip(rates.iter()) {
            for &(i, c) in column {
                out[i] += c * kj;
            }
        }
    }

    pub fn rate_vector(&self, state: &SystemState) -> Result<RateVector> {
        self.check_dims(state)?;
        let k = self.rate_coefficients(&state.temperatures)?;
        let mut out = vec![0.0; self.reactions.len()];
        self.rates_into(&k, &state.concentrations, &mut out);
        Ok(RateVector(out))
    }

    /// Species time derivative through the matrix product `(phi − gamma) · K`.
    pub fn derivative(&self, state: &SystemState) -> Result<Vec<f64>> {
        self.check_dims(state)?;
        let k = self.rate_coefficients(&state.temperatures)?;
        let mut rates = vec![0.0; self.reactions.len()];
        let mut out = vec![0.0; self.species.len()];
        self.derivative_into(&k, &state.concentrations, &mut rates, &mut out);
        Ok(out)
    }

    /// Species time derivative as a per-species sum over reactions, without
    /// forming the stoichiometric matrices.
    pub fn direct_derivative(&self, state: &SystemState) -> Result<Vec<f64>> {
        self.check_dims(state)?;
        let n = &state.concentrations;
        let mut out = Vec::with_capacity(self.species.len());
        for zeta in 0..self.species.len() {
            let mut sum = 0.0;
            for rxn in &self.reactions {
                let made: u32 = rxn.products.iter().filter(|p| p.0 == zeta).map(|p| p.1).sum();
                let used: u32 = rxn.reactants.iter().filter(|p| p.0 == zeta).map(|p| p.1).sum();
                if made == used {
                    continue;
                }
                let t = reactant_mean_temperature(rxn, &state.temperatures, self.temperature_mean);
                let k = arrhenius_k(&rxn.rate, t)?;
                let mut mass = 1.0;
                for &(xi, count) in &rxn.reactants {
                    let order = rxn.order_override.get(&xi).copied();
                    mass *= match order {
                        Some(d) => n[xi].powf(d),
                        None => n[xi].powi(count as i32),
                    };
                }
                sum += (made as f64 - used as f64) * (k * mass);
            }
            out.push(sum);
        }
        Ok(out)
    }

    /// Dense Jacobian `∂(dn/dt)/∂n` for precomputed coefficients.
    pub fn jacobian_into(&self, coefficients: &[f64], concentrations: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for ((j, rxn), &k) in self.reactions.iter().enumerate().zip(coefficients) {
            for &(wrt, _) in &rxn.reactants {
                let mut d = k;
                for &(i, count) in &rxn.reactants {
                    let order = rxn.order_override.get(&i).copied().unwrap_or(count as f64);
                    let n = concentrations[i];
                    d *= if i == wrt {
                        if order == 0.0 {
                            0.0
                        } else {
                            order * n.powf(order - 1.0)
                        }
                    } else {
                        n.powf(order)
                    };
                }
                if !d.is_finite() {
                    d = 0.0;
                }
                for &(i, c) in &self.net[j] {
                    jac[(i, wrt)] += c * d;
                }
            }
        }
    }

    pub fn jacobian(&self, state: &SystemState) -> Result<DMatrix<f64>> {
        self.check_dims(state)?;
        let k = self.rate_coefficients(&state.temperatures)?;
        let s = self.species.len();
        let mut jac = DMatrix::zeros(s, s);
        self.jacobian_into(&k, &state.concentrations, &mut jac);
        Ok(jac)
    }

    /// One explicit step `N + F(T, N)·dt`. Negative results are clamped to
    /// zero and reported.
    pub fn euler_step(&self, state: &SystemState, dt: f64) -> Result<EulerStep> {
        if !(dt > 0.0) {
            return Err(NetworkError::NonPositiveDt(dt));
        }
        let f = self.derivative(state)?;
        let mut clamped = Vec::new();
        let concentrations = state
            .concentrations
            .iter()
            .zip(&f)
            .enumerate()
            .map(|(i, (&n, &dn))| {
                let next = n + dn * dt;
                if next < 0.0 {
                    clamped.push(i);
                    0.0
                } else {
                    next
                }
            })
            .collect();
        Ok(EulerStep {
            state: SystemState { t: state.t + dt, concentrations, temperatures: state.temperatures.clone() },
            clamped,
        })
    }

    /// Elemental imbalance of every reaction. Reactions touching a
    /// pseudo-species are skipped unless `strict`, in which case they are an
    /// error.
    pub fn elemental_residual(&self, strict: bool) -> Result<ElementalResidual> {
        let elements: Vec<String> = self
            .species
            .iter()
            .flat_map(|s| s.composition.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut checked = Vec::new();
        let mut skipped = Vec::new();
        for (j, rxn) in self.reactions.iter().enumerate() {
            let pseudo = rxn.reactants.iter().chain(&rxn.products).find(|&&(i, _)| self.species[i].is_pseudo());
            match pseudo {
                Some(&(i, _)) if strict => return Err(NetworkError::MissingComposition(self.species[i].name.clone())),
                Some(_) => skipped.push(j),
                None => checked.push(j),
            }
        }
        let residual = elements
            .iter()
            .map(|e| {
                checked
                    .iter()
                    .map(|&j| {
                        let count = |side: &[(usize, u32)]| -> i64 {
                            side.iter()
                                .map(|&(i, c)| {
                                    c as i64 * self.species[i].composition.get(e).copied().unwrap_or(0) as i64
                                })
                                .sum()
                        };
                        count(self.phi.column(j)) - count(self.gamma.column(j))
                    })
                    .collect()
            })
            .collect();
        Ok(ElementalResidual { elements, reactions: checked, skipped, residual })
    }

    /// Row vector `w` over species; returns `w · (phi − gamma)` per reaction.
    pub fn weighted_net_change(&self, weights: &[f64]) -> Vec<f64> {
        (0..self.reactions.len())
            .map(|j| {
                let made: f64 = self.phi.column(j).iter().map(|&(i, c)| weights[i] * c as f64).sum();
                let used: f64 = self.gamma.column(j).iter().map(|&(i, c)| weights[i] * c as f64).sum();
                made - used
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn abc() -> ReactionNetwork {
        let species = ["A", "B", "C"].map(Species::new).to_vec();
        let rxn = Reaction::new([(0, 1), (1, 1)], [(2, 1)], RateModel::Constant { k: 2.0 }).unwrap();
        ReactionNetwork::new(species, vec![rxn]).unwrap()
    }

    #[test]
    fn assemble_single_reaction() {
        let net = abc();
        let net_m = net.net_matrix();
        assert_eq!([0, 1, 2].map(|i| net.phi().get(i, 0)), [0, 0, 1]);
        assert_eq!([0, 1, 2].map(|i| net.gamma().get(i, 0)), [1, 1, 0]);
        assert_eq!([net_m[(0, 0)], net_m[(1, 0)], net_m[(2, 0)]], [-1, -1, 1]);
    }

    #[test]
    fn dimerization_order_defaults_to_count() {
        let species = vec![Species::new("A"), Species::new("A2")];
        let rxn = Reaction::new([(0, 2)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        let net = ReactionNetwork::new(species, vec![rxn]).unwrap();
        assert_eq!(net.gamma().get(0, 0), 2);
        assert_eq!(net.reactions()[0].order_of(0), Some(2.0));
        let st = SystemState::uniform(0.0, vec![3.0, 0.0], 1.0).unwrap();
        assert_eq!(net.rate_vector(&st).unwrap().0, vec![9.0]);
    }

    #[test]
    fn empty_network_has_zero_derivative() {
        let net = ReactionNetwork::new(vec![Species::new("A")], vec![]).unwrap();
        assert_eq!(net.phi().ncols(), 0);
        assert_eq!(net.gamma().nrows(), 1);
        let st = SystemState::uniform(0.0, vec![4.0], 1.0).unwrap();
        assert_eq!(net.derivative(&st).unwrap(), vec![0.0]);
    }

    #[test]
    fn duplicate_and_unknown_species_rejected() {
        let dup = ReactionNetwork::new(vec![Species::new("A"), Species::new("A")], vec![]);
        assert_eq!(dup, Err(NetworkError::DuplicateSpecies("A".into())));
        let rxn = Reaction::new([(3, 1)], [(0, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        let bad = ReactionNetwork::new(vec![Species::new("A")], vec![rxn]);
        assert!(matches!(bad, Err(NetworkError::UnknownSpeciesIndex { index: 3, .. })));
    }

    #[test]
    fn arrhenius_values() {
        let m = RateModel::Arrhenius { a: 2.0, ea: 0.0 };
        assert_eq!(arrhenius_k(&m, 0.3).unwrap(), 2.0);
        let m = RateModel::Arrhenius { a: 1.0, ea: 1.0 };
        assert_relative_eq!(arrhenius_k(&m, 1.0).unwrap(), 0.367_879_441_171_442_3, max_relative = 1e-15);
        // 5e-14 * exp(-7.88), evaluated independently in extended precision.
        let m = RateModel::Arrhenius { a: 5.0e-14, ea: 15.76 };
        assert_relative_eq!(arrhenius_k(&m, 2.0).unwrap(), 1.891_165_283_913_128_6e-17, max_relative = 1e-13);
        assert_eq!(arrhenius_k(&m, 0.0), Err(NetworkError::NonPositiveTemperature(0.0)));
        assert_eq!(arrhenius_k(&RateModel::Constant { k: 3.0 }, 0.1).unwrap(), 3.0);
    }

    #[test]
    fn mean_temperature_modes() {
        let two = Reaction::new([(0, 1), (1, 1)], [(2, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        assert_eq!(reactant_mean_temperature(&two, &[1.0, 3.0, 9.0], TemperatureMean::Distinct), 2.0);
        let one = Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        assert_eq!(reactant_mean_temperature(&one, &[1.5, 7.0], TemperatureMean::Distinct), 1.5);
        let dimer = Reaction::new([(0, 2)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        assert_eq!(reactant_mean_temperature(&dimer, &[0.5, 7.0], TemperatureMean::Distinct), 0.5);
        let mixed = Reaction::new([(0, 2), (1, 1)], [(2, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        assert_eq!(reactant_mean_temperature(&mixed, &[1.0, 4.0, 1.0], TemperatureMean::Stoichiometric), 2.0);
        assert_eq!(reactant_mean_temperature(&mixed, &[1.0, 4.0, 1.0], TemperatureMean::Distinct), 2.5);
    }

    #[test]
    fn rate_vector_and_derivative_examples() {
        let net = abc();
        let st = SystemState::uniform(0.0, vec![3.0, 4.0, 0.0], 1.0).unwrap();
        assert_eq!(net.rate_vector(&st).unwrap().0, vec![24.0]);
        assert_eq!(net.derivative(&st).unwrap(), vec![-24.0, -24.0, 24.0]);
        assert_eq!(net.direct_derivative(&st).unwrap(), vec![-24.0, -24.0, 24.0]);
        let st0 = SystemState::uniform(0.0, vec![3.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(net.rate_vector(&st0).unwrap().0, vec![0.0]);
    }

    #[test]
    fn symmetric_exchange_is_stationary() {
        let species = vec![Species::new("A"), Species::new("B")];
        let fwd = Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.3 }).unwrap();
        let back = Reaction::new([(1, 1)], [(0, 1)], RateModel::Constant { k: 1.3 }).unwrap();
        let net = ReactionNetwork::new(species, vec![fwd, back]).unwrap();
        let st = SystemState::uniform(0.0, vec![0.7, 0.7], 1.0).unwrap();
        assert_eq!(net.derivative(&st).unwrap(), vec![0.0, 0.0]);
        let single = ReactionNetwork::new(
            vec![Species::new("A"), Species::new("B")],
            vec![Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap()],
        )
        .unwrap();
        let st = SystemState::uniform(0.0, vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(single.direct_derivative(&st).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = abc();
        let st = SystemState::uniform(0.0, vec![1.0, 1.0], 1.0).unwrap();
        assert!(matches!(net.derivative(&st), Err(NetworkError::DimensionMismatch { .. })));
        assert!(matches!(net.direct_derivative(&st), Err(NetworkError::DimensionMismatch { .. })));
    }

    #[test]
    fn euler_examples() {
        let decay = ReactionNetwork::new(
            vec![Species::new("A"), Species::new("B")],
            vec![Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap()],
        )
        .unwrap();
        let st = SystemState::uniform(0.0, vec![1.0, 0.0], 1.0).unwrap();
        let out = decay.euler_step(&st, 0.1).unwrap();
        assert_relative_eq!(out.state.concentrations[0], 0.9, max_relative = 1e-15);
        assert_eq!(out.state.t, 0.1);
        assert!(!out.was_clamped());

        let st = SystemState::uniform(0.0, vec![0.05, 0.0], 1.0).unwrap();
        let k20 = decay.with_rate(0, RateModel::Constant { k: 20.0 }).unwrap();
        let out = k20.euler_step(&st, 0.1).unwrap();
        assert_eq!(out.state.concentrations[0], 0.0);
        assert_eq!(out.clamped, vec![0]);

        let idle = ReactionNetwork::new(vec![Species::new("A")], vec![]).unwrap();
        let st = SystemState::uniform(2.0, vec![5.0], 1.0).unwrap();
        let out = idle.euler_step(&st, 0.5).unwrap();
        assert_eq!(out.state.concentrations, st.concentrations);
        assert_eq!(out.state.t, 2.5);
        assert_eq!(idle.euler_step(&st, 0.0), Err(NetworkError::NonPositiveDt(0.0)));
    }

    #[test]
    fn elemental_residual_cases() {
        let species = vec![
            Species::new("H2").with_composition([("H", 2)]),
            Species::new("O").with_composition([("O", 1)]),
            Species::new("H2O").with_composition([("H", 2), ("O", 1)]),
        ];
        let rxn = Reaction::new([(0, 1), (1, 1)], [(2, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        let net = ReactionNetwork::new(species, vec![rxn]).unwrap();
        let res = net.elemental_residual(true).unwrap();
        assert!(res.is_balanced());
        assert_eq!(res.elements, vec!["H", "O"]);

        let species =
            vec![Species::new("A").with_composition([("X", 1)]), Species::new("B").with_composition([("X", 2)])];
        let rxn = Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        let net = ReactionNetwork::new(species, vec![rxn]).unwrap();
        assert_eq!(net.elemental_residual(false).unwrap().residual, vec![vec![1]]);

        let species = vec![Species::new("hv"), Species::new("DNP")];
        let rxn = Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        let net = ReactionNetwork::new(species, vec![rxn]).unwrap();
        let res = net.elemental_residual(false).unwrap();
        assert!(res.elements.is_empty() && res.residual.is_empty());
        assert_eq!(res.skipped, vec![0]);
        assert_eq!(net.elemental_residual(true), Err(NetworkError::MissingComposition("hv".into())));
    }

    #[test]
    fn invalid_inputs() {
        assert!(Reaction::new([], [(0, 1)], RateModel::Constant { k: 1.0 }).is_err());
        assert!(Reaction::new([(0, 1)], [], RateModel::Constant { k: 1.0 }).is_err());
        assert!(Reaction::new([(0, 0)], [(1, 1)], RateModel::Constant { k: 1.0 }).is_err());
        assert!(Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: -1.0 }).is_err());
        assert!(Reaction::new([(0, 1)], [], RateModel::Arrhenius { a: 1.0, ea: -0.1 }).is_err());
        let r = Reaction::new([(0, 1)], [(1, 1)], RateModel::Constant { k: 1.0 }).unwrap();
        assert!(r.clone().with_order(1, 1.0).is_err());
        assert!(r.with_order(0, -0.5).is_err());
        assert!(SystemState::uniform(0.0, vec![-1.0], 1.0).is_err());
        assert!(SystemState::uniform(0.0, vec![1.0], 0.0).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let species = ["A", "B", "C"].map(Species::new).to_vec();
        let r1 = Reaction::new([(0, 2), (1, 1)], [(2, 1)], RateModel::Constant { k: 0.7 }).unwrap();
        let r2 = Reaction::new([(2, 1)], [(0, 1)], RateModel::Arrhenius { a: 3.0, ea: 0.4 })
            .unwrap()
            .with_order(2, 1.5)
            .unwrap();
        let net = ReactionNetwork::new(species, vec![r1, r2]).unwrap();
        let st = SystemState::uniform(0.0, vec![1.2, 0.8, 2.1], 0.9).unwrap();
        let jac = net.jacobian(&st).unwrap();
        for j in 0..3 {
            let h = 1e-6;
            let mut up = st.clone();
            let mut dn = st.clone();
            up.concentrations[j] += h;
            dn.concentrations[j] -= h;
            let fu = net.derivative(&up).unwrap();
            let fd = net.derivative(&dn).unwrap();
            for i in 0..3 {
                let fd_ij = (fu[i] - fd[i]) / (2.0 * h);
                assert!((jac[(i, j)] - fd_ij).abs() < 1e-7, "J[{i},{j}]");
            }
        }
    }
}
