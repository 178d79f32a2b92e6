//! Self-regulating etch/passivation network.
//!
//! Ions bombard the substrate and release an etch product; the product is
//! excited by further ion impacts and emits photons on relaxation. Photons
//! trip a rotaxane valve (DNP → TTF) that releases C4F8, and C4F8 intercepts
//! ions. The valve relaxes back (TTF → DNP), photons escape, and a constant
//! ion source keeps the plasma running, so the release of C4F8 switches on
//! and off by itself.
//!
//! Reactions, in index order:
//!
//! | # | reaction                 | coefficient |
//! |---|--------------------------|-------------|
//! | 0 | ion + s → p + op         | k1          |
//! | 1 | ion + p → ex + op        | k2          |
//! | 2 | ex → hv + p              | k3          |
//! | 3 | DNP + hv → TTF + C4F8    | k4          |
//! | 4 | ion + C4F8 → op          | k5          |
//! | 5 | TTF → DNP                | k6          |
//! | 6 | hv → hv_out              | k7          |
//! | 7 | src → src + ion          | source      |
//!
//! `src` is a zeroth-order catalyst pseudo-species; `hv_out` collects escaped
//! photons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::Trajectory;
use crate::network::{NetworkError, RateModel, Reaction, ReactionNetwork, Species, SystemState};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtchError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("photon generation rate k3·n_ex is zero")]
    ZeroGenerationRate,
    #[error("need at least {needed} trajectory samples, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("invalid etch parameters: {0}")]
    InvalidParams(String),
    #[error("mechanism does not contain the etch reaction {0}")]
    MissingReaction(String),
}

pub type Result<T> = std::result::Result<T, EtchError>;

pub const ION: usize = 0;
pub const S: usize = 1;
pub const P: usize = 2;
pub const EX: usize = 3;
pub const HV: usize = 4;
pub const C4F8: usize = 5;
pub const OP: usize = 6;
pub const DNP: usize = 7;
pub const TTF: usize = 8;
pub const HV_OUT: usize = 9;
pub const SRC: usize = 10;

pub const SPECIES_NAMES: [&str; 11] = ["ion", "s", "p", "ex", "hv", "C4F8", "op", "DNP", "TTF", "hv_out", "src"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtchInitial {
    pub ion: f64,
    pub s: f64,
    pub p: f64,
    pub ex: f64,
    pub hv: f64,
    #[serde(rename = "C4F8")]
    pub c4f8: f64,
    pub op: f64,
    #[serde(rename = "DNP")]
    pub dnp: f64,
    #[serde(rename = "TTF")]
    pub ttf: f64,
}

impl Default for EtchInitial {
    fn default() -> Self {
        Self { ion: 1.0, s: 290.0, p: 0.0, ex: 0.0, hv: 0.0, c4f8: 0.0, op: 0.0, dnp: 32.0, ttf: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtchParams {
    /// ion–substrate etching
    pub k1: f64,
    /// ion–product excitation
    pub k2: f64,
    /// excited-product photon emission
    pub k3: f64,
    /// photon-triggered valve release of C4F8
    pub k4: f64,
    /// ion–C4F8 passivation
    pub k5: f64,
    /// valve re-arming TTF → DNP
    pub k6: f64,
    /// photon escape
    pub k7: f64,
    /// constant ion source (zeroth order)
    pub source: f64,
    pub initial: EtchInitial,
}

impl Default for EtchParams {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 0.012,
            k3: 1.4,
            k4: 0.08,
            k5: 0.9,
            k6: 1.2,
            k7: 0.0025,
            source: 20.0,
            initial: EtchInitial::default(),
        }
    }
}

impl EtchParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
            ("k7", self.k7),
            ("source", self.source),
            ("initial.ion", self.initial.ion),
            ("initial.s", self.initial.s),
            ("initial.p", self.initial.p),
            ("initial.ex", self.initial.ex),
            ("initial.hv", self.initial.hv),
            ("initial.C4F8", self.initial.c4f8),
            ("initial.op", self.initial.op),
            ("initial.DNP", self.initial.dnp),
            ("initial.TTF", self.initial.ttf),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EtchError::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn coefficients(&self) -> [f64; 8] {
        [self.k1, self.k2, self.k3, self.k4, self.k5, self.k6, self.k7, self.source]
    }

    /// Initial state in network species order, at a uniform 1 eV.
    pub fn initial_state(&self) -> Result<SystemState> {
        let i = &self.initial;
        let n = vec![i.ion, i.s, i.p, i.ex, i.hv, i.c4f8, i.op, i.dnp, i.ttf, 0.0, 1.0];
        Ok(SystemState::uniform(0.0, n, 1.0)?)
    }

    /// Recovers parameters from a mechanism whose reactions follow the
    /// layout of [`build_etch_network`] (matched by reactant and product
    /// names, in any order).
    pub fn from_network(net: &ReactionNetwork, initial: EtchInitial) -> Result<Self> {
        let template = build_etch_network(&EtchParams::default())?;
        let signature = |n: &ReactionNetwork, r: &Reaction| {
            let names = |side: &[(usize, u32)]| {
                let mut v: Vec<(String, u32)> = side.iter().map(|&(i, c)| (n.species()[i].name.clone(), c)).collect();
                v.sort();
                v
            };
            (names(r.reactants()), names(r.products()))
        };
        let mut k = [0.0; 8];
        for (slot, tr) in template.reactions().iter().enumerate() {
            let want = signature(&template, tr);
            let found =
                net.reactions().iter().find(|r| signature(net, r) == want).ok_or_else(|| {
                    EtchError::MissingReaction(crate::netparser::format_reaction(tr, template.species()))
                })?;
            k[slot] = found.rate().scale();
        }
        let params =
            EtchParams { k1: k[0], k2: k[1], k3: k[2], k4: k[3], k5: k[4], k6: k[5], k7: k[6], source: k[7], initial };
        params.validate()?;
        Ok(params)
    }
}

/// One side of a reaction: `(species, count)` pairs.
type Side = &'static [(usize, u32)];

/// Builds the etch/passivation network for `params`.
pub fn build_etch_network(params: &EtchParams) -> Result<ReactionNetwork> {
    params.validate()?;
    let species = SPECIES_NAMES.iter().map(|&n| Species::new(n)).collect();
    let layout: [(Side, Side); 8] = [
        (&[(ION, 1), (S, 1)], &[(P, 1), (OP, 1)]),
        (&[(ION, 1), (P, 1)], &[(EX, 1), (OP, 1)]),
        (&[(EX, 1)], &[(HV, 1), (P, 1)]),
        (&[(DNP, 1), (HV, 1)], &[(TTF, 1), (C4F8, 1)]),
        (&[(ION, 1), (C4F8, 1)], &[(OP, 1)]),
        (&[(TTF, 1)], &[(DNP, 1)]),
        (&[(HV, 1)], &[(HV_OUT, 1)]),
        (&[(SRC, 1)], &[(SRC, 1), (ION, 1)]),
    ];
    let mut reactions = Vec::with_capacity(layout.len());
    for ((reactants, products), k) in layout.into_iter().zip(params.coefficients()) {
        let rxn = Reaction::new(reactants.iter().copied(), products.iter().copied(), RateModel::Constant { k })?;
        reactions.push(rxn);
    }
    reactions[7] = reactions[7].clone().with_order(SRC, 0.0)?;
    Ok(ReactionNetwork::new(species, reactions)?)
}

/// `(dn_p/dt, dn_C4F8/dt, dn_ion/dt)` written out term by term from the
/// product, C4F8 and ion balance equations, with the ion source added.
pub fn balance_terms(n: &[f64], p: &EtchParams) -> (f64, f64, f64) {
    let dp = p.k1 * n[ION] * n[S] - p.k2 * n[ION] * n[P] + p.k3 * n[EX];
    let dc = p.k4 * n[DNP] * n[HV] - p.k5 * n[ION] * n[C4F8];
    let dion = -p.k1 * n[ION] * n[S] - p.k2 * n[ION] * n[P] - p.k5 * n[ION] * n[C4F8] + p.source;
    (dp, dc, dion)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonRatio {
    pub value: f64,
    /// Set when absorption outpaces generation (`R_p ≥ 1`).
    pub at_or_above_one: bool,
}

/// Ratio of photon absorption by the valve to photon generation,
/// `k4·n_DNP·n_hv / (k3·n_ex)`.
pub fn photon_ratio(n: &[f64], params: &EtchParams) -> Result<PhotonRatio> {
    let generation = params.k3 * n[EX];
    if generation == 0.0 {
        return Err(EtchError::ZeroGenerationRate);
    }
    let value = params.k4 * n[DNP] * n[HV] / generation;
    Ok(PhotonRatio { value, at_or_above_one: value >= 1.0 })
}

/// Diagnostic series aligned with the trajectory samples. Entries are
/// `None` where a quantity is undefined (zero photon generation, zero ion
/// density, or `k5 = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtchDiagnostics {
    pub times: Vec<f64>,
    pub r_p: Vec<Option<f64>>,
    pub dn_p_dt: Vec<f64>,
    pub dn_c4f8_dt: Vec<f64>,
    pub eq7_residual: Vec<Option<f64>>,
    /// `max |eq7_residual| / max |dn_C4F8/dt|`.
    pub eq7_normalized_max: f64,
    pub phi: Vec<Option<f64>>,
    pub psi: Vec<Option<f64>>,
    pub omega: Vec<Option<f64>>,
    pub eq9_residual: Vec<Option<f64>>,
    pub eq9_abs_max: f64,
    /// `−Φ·Ω / Ψ²`, reported next to the numerical `dn_p/dt`.
    pub eq10_predicted_rate: Vec<Option<f64>>,
    pub zero_crossing_count: usize,
    /// Pearson correlation of `n_C4F8` with `dn_p/dt`.
    pub c4f8_etch_rate_correlation: f64,
    /// Number of samples where `R_p ≥ 1`.
    pub r_p_at_or_above_one: usize,
}

/// Relative threshold (of the series maximum) below which a derivative
/// counts as zero when looking for sign changes.
pub const ZERO_CROSSING_REL_TOL: f64 = 1e-9;

/// Evaluates the photon ratio, the C4F8 balance identity and the
/// Φ/Ψ/Ω coupling coefficients along `traj`.
pub fn derivation_residuals(traj: &Trajectory, params: &EtchParams) -> Result<EtchDiagnostics> {
    let m = traj.len();
    if m < 3 {
        return Err(EtchError::InsufficientPoints { needed: 3, got: m });
    }
    let p = params;
    let times = traj.times();
    let dn_p_dt = traj.derivative_series(P);
    let dn_c4f8_dt = traj.derivative_series(C4F8);
    let dn_ion_dt = traj.derivative_series(ION);

    let r_p: Vec<Option<f64>> =
        traj.states.iter().map(|s| photon_ratio(&s.concentrations, p).ok().map(|r| r.value)).collect();

    let eq7_residual: Vec<Option<f64>> = traj
        .states
        .iter()
        .zip(&r_p)
        .enumerate()
        .map(|(i, (s, rp))| {
            let n = &s.concentrations;
            rp.map(|rp| {
                let rhs =
                    rp * dn_p_dt[i] + rp * p.k2 * n[ION] * n[P] - rp * p.k1 * n[ION] * n[S] - p.k5 * n[ION] * n[C4F8];
                dn_c4f8_dt[i] - rhs
            })
        })
        .collect();
    let res_max = eq7_residual.iter().flatten().fold(0.0f64, |a, &r| a.max(r.abs()));
    let rate_max = dn_c4f8_dt.iter().fold(0.0f64, |a, &r| a.max(r.abs()));
    let eq7_normalized_max = if rate_max > 0.0 { res_max / rate_max } else { res_max };

    // Inner term of Φ: (1 / (k5 n_ion)) dn_ion/dt + (k1 / k5) n_s.
    let inner: Vec<Option<f64>> = traj
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = &s.concentrations;
            (p.k5 > 0.0 && n[ION] > 0.0).then(|| dn_ion_dt[i] / (p.k5 * n[ION]) + p.k1 / p.k5 * n[S])
        })
        .collect();
    let inner_rate = stats::centered_difference(&times, &inner);

    let mut phi = Vec::with_capacity(m);
    let mut psi = Vec::with_capacity(m);
    let mut omega = Vec::with_capacity(m);
    let mut eq9_residual = Vec::with_capacity(m);
    let mut eq10 = Vec::with_capacity(m);
    for i in 0..m {
        let n = &traj.states[i].concentrations;
        let (ph, ps, om) = match (r_p[i], inner_rate[i]) {
            (Some(rp), Some(d_inner)) if p.k5 > 0.0 => {
                let ph = -d_inner - dn_ion_dt[i] - (rp - 1.0) * p.k1 * n[ION] * n[S];
                let ps = rp - p.k2 / p.k5;
                let om = (rp - 1.0) * p.k2 * n[ION];
                (Some(ph), Some(ps), Some(om))
            }
            (Some(rp), _) if p.k5 > 0.0 => (None, Some(rp - p.k2 / p.k5), Some((rp - 1.0) * p.k2 * n[ION])),
            _ => (None, None, None),
        };
        eq9_residual.push(match (ph, ps, om) {
            (Some(ph), Some(ps), Some(om)) => Some(ph - (ps * dn_p_dt[i] + om * n[P])),
            _ => None,
        });
        eq10.push(match (ph, ps, om) {
            (Some(ph), Some(ps), Some(om)) if ps != 0.0 => Some(-ph * om / (ps * ps)),
            _ => None,
        });
        phi.push(ph);
        psi.push(ps);
        omega.push(om);
    }
    let eq9_abs_max = eq9_residual.iter().flatten().fold(0.0f64, |a, &r| a.max(r.abs()));

    let c4f8 = traj.series(C4F8);
    Ok(EtchDiagnostics {
        zero_crossing_count: stats::count_sign_changes_rel(&dn_c4f8_dt, ZERO_CROSSING_REL_TOL),
        c4f8_etch_rate_correlation: stats::pearson(&c4f8, &dn_p_dt),
        r_p_at_or_above_one: r_p.iter().flatten().filter(|&&r| r >= 1.0).count(),
        times,
        r_p,
        dn_p_dt,
        dn_c4f8_dt,
        eq7_residual,
        eq7_normalized_max,
        phi,
        psi,
        omega,
        eq9_residual,
        eq9_abs_max,
        eq10_predicted_rate: eq10,
    })
}

/// Number of strict sign changes in the stored derivative of `species`.
/// Values within `ZERO_CROSSING_REL_TOL · max|d/dt|` of zero are skipped.
pub fn detect_oscillation(traj: &Trajectory, net: &ReactionNetwork, species: &str) -> Result<usize> {
    let idx = net.species_index(species).ok_or_else(|| EtchError::UnknownSpecies(species.to_string()))?;
    if traj.len() < 2 {
        return Err(EtchError::InsufficientPoints { needed: 2, got: traj.len() });
    }
    Ok(stats::count_sign_changes_rel(&traj.derivative_series(idx), ZERO_CROSSING_REL_TOL))
}
