//! Nanotube-tweezer signal processor.
//!
//! An incident wave drives charged nanotube rotors of different lengths.
//! Rotors whose guest feels a force above the escape threshold release
//! their guest molecules into a weakly ionized gas, and the extra
//! ionization channel shifts the plasma frequency. The chain
//! wave → rotor → release → chemistry → ω_p is exposed piece by piece and
//! end to end through [`respond`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{self, IntegrationError, IntegrationOptions, Trajectory};
use crate::network::{NetworkError, RateModel, Reaction, ReactionNetwork, Species, SystemState};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("moment of inertia is zero")]
    ZeroMomentOfInertia,
    #[error("gap distance must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("length {0:e} m has no entry in the guest-count map")]
    UnmappedLength(f64),
    #[error("need at least {needed} trajectory samples, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

pub type Result<T> = std::result::Result<T, SignalError>;

fn invalid(msg: impl Into<String>) -> SignalError {
    SignalError::Invalid(msg.into())
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(msg()))
    }
}

/// Vacuum constants, CODATA 2018.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysConstants {
    pub e: f64,
    pub m_e: f64,
    pub epsilon: f64,
    pub c: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self { e: 1.602_176_634e-19, m_e: 9.109_383_701_5e-31, epsilon: 8.854_187_812_8e-12, c: 299_792_458.0 }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e", self.e), ("m_e", self.m_e), ("epsilon", self.epsilon), ("c", self.c)] {
            require(v.is_finite() && v > 0.0, || format!("constant {name} must be positive, got {v}"))?;
        }
        Ok(())
    }
}

/// Monochromatic linearly polarized wave, `E(t) = E0·cos(k_E·c·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmWave {
    /// V/m
    pub e0: f64,
    /// Hz
    pub frequency: f64,
    /// Field direction in the rotor plane; normalized on use.
    #[serde(default = "default_polarization")]
    pub polarization: [f64; 2],
    /// Drive phase at t = 0, rad.
    #[serde(default)]
    pub phase: f64,
}

fn default_polarization() -> [f64; 2] {
    [1.0, 0.0]
}

impl EmWave {
    pub fn new(e0: f64, frequency: f64) -> Self {
        Self { e0, frequency, polarization: default_polarization(), phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.e0.is_finite() && self.e0 >= 0.0, || format!("E0 must be ≥ 0, got {}", self.e0))?;
        require(self.frequency.is_finite() && self.frequency > 0.0, || {
            format!("frequency must be positive, got {}", self.frequency)
        })?;
        require(self.phase.is_finite(), || format!("phase must be finite, got {}", self.phase))?;
        let [x, y] = self.polarization;
        require(x.is_finite() && y.is_finite() && (x != 0.0 || y != 0.0), || {
            "polarization must be a non-zero vector".to_string()
        })
    }

    /// Wavenumber `2π·f/c`.
    pub fn wavenumber(&self, k: &PhysConstants) -> f64 {
        2.0 * PI * self.frequency / k.c
    }

    pub fn field(&self, t: f64) -> f64 {
        self.e0 * (2.0 * PI * self.frequency * t + self.phase).cos()
    }

    fn polarization_angle(&self) -> f64 {
        self.polarization[1].atan2(self.polarization[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    /// C
    pub q: f64,
    /// distance from the rotation axis, m
    pub r: f64,
    /// body-frame angle, rad
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub m: f64,
    pub r: f64,
}

/// Planar rigid rotor carrying point charges, point masses, a uniform rod
/// and a guest molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweezerModel {
    pub charges: Vec<PointCharge>,
    #[serde(default)]
    pub masses: Vec<PointMass>,
    /// Linear mass density of the tube, kg/m, spread uniformly over `length`.
    #[serde(default)]
    pub rod_density: f64,
    /// Inertia of whatever the rotor is mounted on, kg·m².
    #[serde(default)]
    pub anchor_inertia: f64,
    pub guest: PointMass,
    /// m
    pub length: f64,
    /// Initial orientation, rad.
    #[serde(default)]
    pub phi0: f64,
    /// Initial angular rate, rad/s.
    #[serde(default)]
    pub omega0: f64,
}

impl TweezerModel {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        require(self.length.is_finite() && self.length > 0.0, || {
            format!("length must be positive, got {}", self.length)
        })?;
        for c in &self.charges {
            require(c.q.is_finite() && c.phi.is_finite() && finite_nonneg(c.r), || format!("invalid charge {c:?}"))?;
        }
        for m in self.masses.iter().chain([&self.guest]) {
            require(finite_nonneg(m.m) && finite_nonneg(m.r), || format!("invalid mass {m:?}"))?;
        }
        require(finite_nonneg(self.rod_density) && finite_nonneg(self.anchor_inertia), || {
            "rod density and anchor inertia must be ≥ 0".to_string()
        })?;
        require(self.phi0.is_finite() && self.omega0.is_finite(), || {
            "initial angle and rate must be finite".to_string()
        })
    }

    /// Total moment of inertia about the rotation axis, guest included.
    pub fn moment_of_inertia(&self) -> f64 {
        let points: f64 = self.masses.iter().chain([&self.guest]).map(|p| p.m * p.r * p.r).sum();
        points + self.rod_density * self.length.powi(3) / 12.0 + self.anchor_inertia
    }

    /// Torque per unit field, `-Σ q_i r_i sin(θ_i - β)` with
    /// `θ_i = φ_i + φ + φ_0` and `β` the polarization angle.
    fn torque_per_field(&self, phi: f64, beta: f64) -> f64 {
        -self.charges.iter().map(|c| c.q * c.r * (c.phi + phi + self.phi0 - beta).sin()).sum::<f64>()
    }

    /// Largest possible torque per unit field, `|Σ q_i r_i e^{iφ_i}|`.
    fn max_torque_per_field(&self) -> f64 {
        let (x, y) = self
            .charges
            .iter()
            .fold((0.0, 0.0), |(x, y), c| (x + c.q * c.r * c.phi.cos(), y + c.q * c.r * c.phi.sin()));
        x.hypot(y)
    }
}

/// Parameters for the default rotor family: a ±q dipole at the two tips of
/// a uniform tube, guest at one tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipoleDesign {
    /// Tip charge in units of the elementary charge.
    pub charge_e: f64,
    pub rod_density: f64,
    pub anchor_inertia: f64,
    pub guest_mass: f64,
    pub phi0: f64,
    pub omega0: f64,
}

impl Default for DipoleDesign {
    fn default() -> Self {
        Self {
            charge_e: 0.1,
            // (10,10) tube: 40 carbon atoms per 0.246 nm
            rod_density: 3.25e-15,
            anchor_inertia: 1.7e-38,
            // 200 u
            guest_mass: 3.32e-25,
            phi0: 0.3,
            omega0: 0.0,
        }
    }
}

impl DipoleDesign {
    pub fn model(&self, length: f64, k: &PhysConstants) -> TweezerModel {
        let q = self.charge_e * k.e;
        let r = length / 2.0;
        TweezerModel {
            charges: vec![PointCharge { q, r, phi: 0.0 }, PointCharge { q: -q, r, phi: PI }],
            masses: Vec::new(),
            rod_density: self.rod_density,
            anchor_inertia: self.anchor_inertia,
            guest: PointMass { m: self.guest_mass, r },
            length,
            phi0: self.phi0,
            omega0: self.omega0,
        }
    }
}

/// How the guest force is read off the rotor state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceForm {
    /// `m_g·|dω/dt|·r_g`, a force.
    #[default]
    Acceleration,
    /// `m_g·|ω|·r_g`, the literal cross-product form (momentum units).
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationOptions {
    /// RK4 steps per period, where the period is the shorter of the wave
    /// period and the rotor's small-angle libration period at peak field.
    pub steps_per_period: usize,
    pub force_form: ForceForm,
}

impl Default for RotationOptions {
    fn default() -> Self {
        Self { steps_per_period: 200, force_form: ForceForm::Acceleration }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub omega: Vec<f64>,
    pub force: Vec<f64>,
    pub peak_force: f64,
}

/// Integrates the rotor under `wave` for `duration` seconds with fixed-step
/// RK4 and records the guest force at every step.
pub fn simulate_rotation(
    model: &TweezerModel,
    wave: &EmWave,
    duration: f64,
    opts: &RotationOptions,
) -> Result<Rotation> {
    model.validate()?;
    wave.validate()?;
    require(duration.is_finite() && duration > 0.0, || format!("duration must be positive, got {duration}"))?;
    require(opts.steps_per_period >= 50, || format!("steps_per_period must be ≥ 50, got {}", opts.steps_per_period))?;
    let inertia = model.moment_of_inertia();
    if !(inertia > 0.0) {
        return Err(SignalError::ZeroMomentOfInertia);
    }

    let beta = wave.polarization_angle();
    let accel = |t: f64, phi: f64| wave.field(t) * model.torque_per_field(phi, beta) / inertia;
    let libration = wave.e0 * model.max_torque_per_field() / inertia;
    let mut period = 1.0 / wave.frequency;
    if libration > 0.0 {
        period = period.min(2.0 * PI / libration.sqrt());
    }
    let steps = ((duration / period) * opts.steps_per_period as f64).ceil().max(1.0) as usize;
    let h = duration / steps as f64;

    let (m_g, r_g) = (model.guest.m, model.guest.r);
    let force = |t: f64, phi: f64, omega: f64| match opts.force_form {
        ForceForm::Acceleration => m_g * accel(t, phi).abs() * r_g,
        ForceForm::Momentum => m_g * omega.abs() * r_g,
    };

    let mut out = Rotation {
        times: Vec::with_capacity(steps + 1),
        phi: Vec::with_capacity(steps + 1),
        omega: Vec::with_capacity(steps + 1),
        force: Vec::with_capacity(steps + 1),
        peak_force: 0.0,
    };
    let (mut phi, mut omega) = (0.0, model.omega0);
    for i in 0..=steps {
        let t = i as f64 * h;
        if i > 0 {
            let t0 = t - h;
            let (p1, w1) = (omega, accel(t0, phi));
            let (p2, w2) = (omega + 0.5 * h * w1, accel(t0 + 0.5 * h, phi + 0.5 * h * p1));
            let (p3, w3) = (omega + 0.5 * h * w2, accel(t0 + 0.5 * h, phi + 0.5 * h * p2));
            let (p4, w4) = (omega + h * w3, accel(t, phi + h * p3));
            phi += h / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
            omega += h / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4);
        }
        let f = force(t, phi, omega);
        out.peak_force = out.peak_force.max(f);
        out.times.push(t);
        out.phi.push(phi);
        out.omega.push(omega);
        out.force.push(f);
    }
    Ok(out)
}

/// Force needed to pull a guest off its binding site, `E_b / d`.
pub fn escape_threshold(bond_energy_ev: f64, gap: f64, k: &PhysConstants) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(SignalError::NonPositiveGap(gap));
    }
    Ok(bond_energy_ev * k.e / gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuestEntry {
    pub length: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweezerPopulation {
    pub models: Vec<TweezerModel>,
    pub guest_counts: Vec<GuestEntry>,
    /// Escape force, N.
    pub f_bc: f64,
}

/// Relative tolerance used to match a model length against the guest map.
const LENGTH_MATCH_REL: f64 = 1e-9;

impl TweezerPopulation {
    /// `n` dipole rotors geometrically spaced over `[l_min, l_max]`, with the
    /// linear guest map `round(L / l_min)`.
    pub fn geometric(
        design: &DipoleDesign,
        n: usize,
        l_min: f64,
        l_max: f64,
        f_bc: f64,
        k: &PhysConstants,
    ) -> Result<Self> {
        require(n >= 1 && l_min > 0.0 && l_max >= l_min, || {
            format!("need n ≥ 1 and 0 < l_min ≤ l_max, got n={n}, [{l_min}, {l_max}]")
        })?;
        let ratio = if n > 1 { (l_max / l_min).powf(1.0 / (n - 1) as f64) } else { 1.0 };
        let lengths: Vec<f64> = (0..n).map(|i| if i + 1 == n { l_max } else { l_min * ratio.powi(i as i32) }).collect();
        let pop = Self {
            models: lengths.iter().map(|&l| design.model(l, k)).collect(),
            guest_counts: lengths
                .iter()
                .map(|&l| GuestEntry { length: l, count: (l / l_min).round() as u64 })
                .collect(),
            f_bc,
        };
        pop.validate()?;
        Ok(pop)
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.length).collect()
    }

    pub fn validate(&self) -> Result<()> {
        require(!self.models.is_empty(), || "population is empty".to_string())?;
        require(self.f_bc.is_finite() && self.f_bc >= 0.0, || format!("F_bc must be ≥ 0, got {}", self.f_bc))?;
        for m in &self.models {
            m.validate()?;
        }
        require(self.models.windows(2).all(|w| w[0].length < w[1].length), || {
            "lengths must be strictly increasing".to_string()
        })
    }

    pub fn guest_count(&self, length: f64) -> Result<u64> {
        self.guest_counts
            .iter()
            .find(|g| (g.length - length).abs() <= LENGTH_MATCH_REL * length.abs())
            .map(|g| g.count)
            .ok_or(SignalError::UnmappedLength(length))
    }
}

/// Peak guest force of every rotor in the population, in length order.
pub fn peak_forces(pop: &TweezerPopulation, wave: &EmWave, duration: f64, opts: &RotationOptions) -> Result<Vec<f64>> {
    pop.validate()?;
    pop.models.par_iter().map(|m| simulate_rotation(m, wave, duration, opts).map(|r| r.peak_force)).collect()
}

/// Lengths whose peak guest force reaches `F_bc`.
pub fn released_lengths(
    pop: &TweezerPopulation,
    wave: &EmWave,
    duration: f64,
    opts: &RotationOptions,
) -> Result<Vec<f64>> {
    let peaks = peak_forces(pop, wave, duration, opts)?;
    Ok(pop.models.iter().zip(peaks).filter(|(_, f)| *f > 0.0 && *f >= pop.f_bc).map(|(m, _)| m.length).collect())
}

pub fn released_guest_count(
    pop: &TweezerPopulation,
    wave: &EmWave,
    duration: f64,
    opts: &RotationOptions,
) -> Result<u64> {
    released_lengths(pop, wave, duration, opts)?.into_iter().map(|l| pop.guest_count(l)).sum()
}

pub const E: usize = 0;
pub const G: usize = 1;
pub const I_G: usize = 2;
pub const GAS: usize = 3;
pub const I_GAS: usize = 4;
pub const SIGNAL_SPECIES: [&str; 5] = ["e", "g", "i_g", "gas", "i_gas"];
/// Charge number of each signal species.
pub const CHARGE: [f64; 5] = [-1.0, 0.0, 1.0, 0.0, 1.0];

/// Rates and initial densities of the guest-doped plasma. Units are
/// arbitrary but consistent (m⁻³ and m³/s in the shipped defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalChemParams {
    /// guest ionization e + g → i_g + 2e
    pub k2: f64,
    /// guest-ion recombination e + i_g → g
    pub k3: f64,
    /// gas ionization e + gas → i_gas + 2e
    pub k4: f64,
    /// gas-ion recombination e + i_gas → gas
    pub k5: f64,
    pub n_gas: f64,
    pub n_e: f64,
    pub n_i_g: f64,
    pub n_i_gas: f64,
    pub n_g: f64,
    /// Guest density contributed by one released molecule.
    pub density_per_guest: f64,
}

impl Default for SignalChemParams {
    fn default() -> Self {
        Self {
            k2: 2e-15,
            k3: 1e-13,
            k4: 9e-18,
            k5: 1e-13,
            n_gas: 1e22,
            n_e: 1e15,
            n_i_g: 0.0,
            n_i_gas: 1e15,
            n_g: 0.0,
            density_per_guest: 1e15,
        }
    }
}

impl SignalChemParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("n_gas", self.n_gas),
            ("n_e", self.n_e),
            ("n_i_g", self.n_i_g),
            ("n_i_gas", self.n_i_gas),
            ("n_g", self.n_g),
            ("density_per_guest", self.density_per_guest),
        ];
        for (name, v) in named {
            require(v.is_finite() && v >= 0.0, || format!("{name} must be finite and ≥ 0, got {v}"))?;
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<SystemState> {
        let mut n = [0.0; 5];
        n[E] = self.n_e;
        n[G] = self.n_g;
        n[I_G] = self.n_i_g;
        n[GAS] = self.n_gas;
        n[I_GAS] = self.n_i_gas;
        Ok(SystemState::uniform(0.0, n.to_vec(), 1.0)?)
    }
}

/// One side of a reaction: `(species, count)` pairs.
type Side = &'static [(usize, u32)];

/// Electron-impact ionization and recombination of guest and background gas.
pub fn build_signal_network(p: &SignalChemParams) -> Result<ReactionNetwork> {
    p.validate()?;
    let species = vec![
        Species::new("e"),
        Species::new("g").with_composition([("G", 1)]),
        Species::new("i_g").with_composition([("G", 1)]),
        Species::new("gas").with_composition([("X", 1)]),
        Species::new("i_gas").with_composition([("X", 1)]),
    ];
    let layout: [(Side, Side, f64); 4] = [
        (&[(E, 1), (G, 1)], &[(I_G, 1), (E, 2)], p.k2),
        (&[(E, 1), (I_G, 1)], &[(G, 1)], p.k3),
        (&[(E, 1), (GAS, 1)], &[(I_GAS, 1), (E, 2)], p.k4),
        (&[(E, 1), (I_GAS, 1)], &[(GAS, 1)], p.k5),
    ];
    let reactions = layout
        .into_iter()
        .map(|(r, pr, k)| Reaction::new(r.iter().copied(), pr.iter().copied(), RateModel::Constant { k }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ReactionNetwork::new(species, reactions)?)
}

/// `n_e - n_i_g - n_i_gas`.
pub fn net_negative_charge(n: &[f64]) -> f64 {
    -CHARGE.iter().zip(n).map(|(z, x)| z * x).sum::<f64>()
}

/// The approximation holds when the guest is a small fraction of the gas.
pub const EQ19_ASSUMPTION: &str = "assuming that k4·n_gas ≫ k5·n_g";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eq19Check {
    pub times: Vec<f64>,
    /// `n_g(t)`
    pub lhs: Vec<f64>,
    /// `∫k4·n_e·n_gas dt − ∫k5·n_e² dt − n_e + n_g(0) + n_e(0)`
    pub rhs: Vec<f64>,
    /// `max|lhs − rhs|` over the largest magnitude reached by any term of
    /// the balance.
    pub max_relative_error: f64,
    pub assumption: &'static str,
}

/// Compares the guest density with its low-ionization estimate built from
/// electron and gas densities alone.
pub fn eq19_check(traj: &Trajectory, p: &SignalChemParams) -> Result<Eq19Check> {
    if traj.len() < 2 {
        return Err(SignalError::InsufficientPoints { needed: 2, got: traj.len() });
    }
    let times = traj.times();
    let (ne, ng, ngas) = (traj.series(E), traj.series(G), traj.series(GAS));
    let src: Vec<f64> = ne.iter().zip(&ngas).map(|(e, g)| p.k4 * e * g).collect();
    let sink: Vec<f64> = ne.iter().map(|e| p.k5 * e * e).collect();
    let i4 = stats::cumulative_trapezoid(&times, &src);
    let i5 = stats::cumulative_trapezoid(&times, &sink);
    let offset = ng[0] + ne[0];
    let rhs: Vec<f64> = (0..times.len()).map(|i| i4[i] - i5[i] - ne[i] + offset).collect();

    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let scale = [max_abs(&i4), max_abs(&i5), max_abs(&ne), max_abs(&ng)].into_iter().fold(0.0f64, f64::max);
    let diff = ng.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let max_relative_error = if scale > 0.0 { diff / scale } else { 0.0 };
    Ok(Eq19Check { times, lhs: ng, rhs, max_relative_error, assumption: EQ19_ASSUMPTION })
}

/// Electron plasma frequency `sqrt(n_e·e²/(ε·m_e))`, rad/s.
pub fn plasma_frequency(n_e: f64, k: &PhysConstants) -> Result<f64> {
    require(n_e.is_finite() && n_e >= 0.0, || format!("electron density must be ≥ 0, got {n_e}"))?;
    Ok((n_e * k.e * k.e / (k.epsilon * k.m_e)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseOptions {
    /// Rotor drive window, in wave periods.
    pub drive_periods: f64,
    pub rotation: RotationOptions,
    /// Relative steady-state tolerance on `‖dn/dt‖ / ‖n‖`.
    pub steady_tol: f64,
    pub integration: IntegrationOptions,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            drive_periods: 5.0,
            rotation: RotationOptions::default(),
            steady_tol: 1e-9,
            integration: IntegrationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Response {
    pub released_count: u64,
    /// Initial guest density after the release.
    pub n_g0: f64,
    pub n_e: f64,
    pub omega_p: f64,
    pub converged: bool,
}

/// Runs the whole chain: release guests for `wave`, settle the plasma for
/// at most `settle` time units, and report the plasma frequency.
pub fn respond(
    pop: &TweezerPopulation,
    chem: &SignalChemParams,
    wave: &EmWave,
    settle: f64,
    k: &PhysConstants,
    opts: &ResponseOptions,
) -> Result<Response> {
    k.validate()?;
    require(opts.drive_periods > 0.0, || format!("drive_periods must be positive, got {}", opts.drive_periods))?;
    let released_count = if wave.e0 > 0.0 {
        released_guest_count(pop, wave, opts.drive_periods / wave.frequency, &opts.rotation)?
    } else {
        wave.validate()?;
        pop.validate()?;
        0
    };
    let mut p = *chem;
    p.n_g += released_count as f64 * chem.density_per_guest;
    let net = build_signal_network(&p)?;
    let ss = integrator::steady_state(&net, &p.initial_state()?, opts.steady_tol, settle, &opts.integration)?;
    let n_e = ss.state.concentrations[E].max(0.0);
    Ok(Response { released_count, n_g0: p.n_g, n_e, omega_p: plasma_frequency(n_e, k)?, converged: ss.converged })
}

/// Everything needed to run the signal pipeline, as shipped in the JSON
/// config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    pub design: DipoleDesign,
    pub lengths: usize,
    pub l_min: f64,
    pub l_max: f64,
    /// eV
    pub bond_energy: f64,
    /// m
    pub gap: f64,
    pub wave: EmWave,
    pub chem: SignalChemParams,
    /// Time cap for the plasma to settle.
    pub settle: f64,
    pub response: ResponseOptions,
    pub constants: PhysConstants,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            design: DipoleDesign::default(),
            lengths: 32,
            l_min: 5e-9,
            l_max: 5e-7,
            bond_energy: 0.43,
            gap: 3.4e-10,
            wave: EmWave::new(3e12, 1e10),
            chem: SignalChemParams::default(),
            settle: 1.0,
            response: ResponseOptions::default(),
            constants: PhysConstants::default(),
        }
    }
}

impl SignalConfig {
    pub fn population(&self) -> Result<TweezerPopulation> {
        let f_bc = escape_threshold(self.bond_energy, self.gap, &self.constants)?;
        TweezerPopulation::geometric(&self.design, self.lengths, self.l_min, self.l_max, f_bc, &self.constants)
    }

    /// Rotor drive window for `wave`, s.
    pub fn drive_duration(&self, wave: &EmWave) -> f64 {
        self.response.drive_periods / wave.frequency
    }

    pub fn respond(&self, pop: &TweezerPopulation, wave: &EmWave) -> Result<Response> {
        respond(pop, &self.chem, wave, self.settle, &self.constants, &self.response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> PhysConstants {
        PhysConstants::default()
    }

    #[test]
    fn default_wave_releases_an_interior_band() {
        let cfg = SignalConfig::default();
        let pop = cfg.population().unwrap();
        let released =
            released_lengths(&pop, &cfg.wave, cfg.drive_duration(&cfg.wave), &cfg.response.rotation).unwrap();
        let lengths = pop.lengths();
        assert!(!released.is_empty());
        assert!(!released.contains(&lengths[0]) && !released.contains(&lengths[lengths.len() - 1]));
        let baseline = cfg.respond(&pop, &EmWave { e0: 0.0, ..cfg.wave }).unwrap();
        let driven = cfg.respond(&pop, &cfg.wave).unwrap();
        assert!(driven.omega_p > baseline.omega_p);
        assert_eq!(driven, cfg.respond(&pop, &cfg.wave).unwrap());
    }

    #[test]
    fn escape_threshold_examples() {
        let f = escape_threshold(0.1, 3.4e-10, &k()).unwrap();
        assert!((f - 4.712_284_217_647e-11).abs() < 1e-21);
        assert_eq!(escape_threshold(0.0, 3.4e-10, &k()).unwrap(), 0.0);
        assert_eq!(escape_threshold(0.1, 6.8e-10, &k()).unwrap(), f / 2.0);
        assert_eq!(escape_threshold(0.1, 0.0, &k()), Err(SignalError::NonPositiveGap(0.0)));
    }

    #[test]
    fn plasma_frequency_examples() {
        let w = plasma_frequency(1e16, &k()).unwrap();
        assert!((w / 5_641_460_231.18 - 1.0).abs() < 1e-11);
        assert_eq!(plasma_frequency(0.0, &k()).unwrap(), 0.0);
        assert_eq!(plasma_frequency(4e16, &k()).unwrap(), 2.0 * w);
        assert!(plasma_frequency(-1.0, &k()).is_err());
    }

    #[test]
    fn undriven_rotor_stays_put() {
        let model = DipoleDesign::default().model(5e-8, &k());
        let wave = EmWave::new(0.0, 1e10);
        let r = simulate_rotation(&model, &wave, 1e-9, &RotationOptions::default()).unwrap();
        assert!(r.phi.iter().all(|&p| p == 0.0));
        assert_eq!(r.peak_force, 0.0);

        let mut neutral = model.clone();
        neutral.charges.iter_mut().for_each(|c| c.q = 0.0);
        let r = simulate_rotation(&neutral, &EmWave::new(1e12, 1e10), 1e-9, &RotationOptions::default()).unwrap();
        assert_eq!(r.peak_force, 0.0);
    }

    #[test]
    fn massless_rotor_is_rejected() {
        let mut model = DipoleDesign::default().model(5e-8, &k());
        model.rod_density = 0.0;
        model.anchor_inertia = 0.0;
        model.guest.m = 0.0;
        let err = simulate_rotation(&model, &EmWave::new(1.0, 1e9), 1e-9, &RotationOptions::default());
        assert_eq!(err, Err(SignalError::ZeroMomentOfInertia));
    }

    #[test]
    fn field_reversal_symmetry() {
        let model = DipoleDesign::default().model(4e-8, &k());
        let mut flipped = model.clone();
        flipped.charges.iter_mut().for_each(|c| c.q = -c.q);
        let wave = EmWave::new(3e12, 1e10);
        let shifted = EmWave { phase: PI, ..wave };
        let opts = RotationOptions::default();
        let a = simulate_rotation(&model, &wave, 2e-10, &opts).unwrap();
        let b = simulate_rotation(&flipped, &shifted, 2e-10, &opts).unwrap();
        for (x, y) in a.force.iter().zip(&b.force) {
            assert!((x - y).abs() <= 1e-12 * a.peak_force);
        }
    }

    #[test]
    fn guest_counts_sum_over_released_lengths() {
        let mut pop = TweezerPopulation::geometric(&DipoleDesign::default(), 6, 1e-8, 1e-7, 0.0, &k()).unwrap();
        assert_eq!(pop.guest_count(1e-7).unwrap(), 10);
        assert_eq!(pop.guest_count(3e-3), Err(SignalError::UnmappedLength(3e-3)));
        let wave = EmWave::new(0.0, 1e10);
        let opts = RotationOptions::default();
        assert!(released_lengths(&pop, &wave, 1e-9, &opts).unwrap().is_empty());
        assert_eq!(released_guest_count(&pop, &wave, 1e-9, &opts).unwrap(), 0);
        let all = released_lengths(&pop, &EmWave::new(1e10, 1e10), 1e-9, &opts).unwrap();
        assert_eq!(all, pop.lengths());
        pop.guest_counts.pop();
        assert!(matches!(
            released_guest_count(&pop, &EmWave::new(1e10, 1e10), 1e-9, &opts),
            Err(SignalError::UnmappedLength(_))
        ));
    }

    #[test]
    fn signal_network_examples() {
        let p = SignalChemParams { k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, ..Default::default() };
        let net = build_signal_network(&p).unwrap();
        let st = SystemState::uniform(0.0, vec![1.0, 2.0, 0.0, 10.0, 0.0], 1.0).unwrap();
        let d = net.derivative(&st).unwrap();
        assert_eq!(d[E], 12.0);
        let st = SystemState::uniform(0.0, vec![0.7, 2.0, 0.3, 10.0, 0.4], 1.0).unwrap();
        let d = net.derivative(&st).unwrap();
        assert_eq!(d[I_G], -d[G]);
        assert!(net.weighted_net_change(&CHARGE).iter().all(|&c| c == 0.0));

        let off = SignalChemParams { k2: 0.0, k4: 0.0, ..p };
        let st = SystemState::uniform(0.0, vec![1.0, 2.0, 0.0, 10.0, 0.0], 1.0).unwrap();
        let d = build_signal_network(&off).unwrap().derivative(&st).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn balance_estimate_decoupled_and_constant_limits() {
        let p = SignalChemParams { k2: 0.0, k3: 0.0, ..Default::default() };
        let net = build_signal_network(&p).unwrap();
        let traj = crate::integrate(
            &net,
            &p.initial_state().unwrap(),
            2e-4,
            &IntegrationOptions::default().with_rel_tol(1e-10),
        )
        .unwrap();
        let c = eq19_check(&traj, &p).unwrap();
        assert!(c.lhs.iter().all(|&x| x == 0.0));
        assert!(c.max_relative_error < 1e-4, "{}", c.max_relative_error);

        let frozen = SignalChemParams { k2: 0.0, k3: 0.0, k4: 0.0, k5: 0.0, n_g: 5.0, ..Default::default() };
        let net = build_signal_network(&frozen).unwrap();
        let traj =
            crate::integrate(&net, &frozen.initial_state().unwrap(), 1.0, &IntegrationOptions::default()).unwrap();
        assert_eq!(eq19_check(&traj, &frozen).unwrap().max_relative_error, 0.0);
    }
}
