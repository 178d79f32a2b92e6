//! Time integration of a [`ReactionNetwork`].
//!
//! Three methods are available:
//!
//! * `ExplicitEuler`: the bare `N + F·dt` step, with negative results
//!   clamped to zero and recorded.
//! * `Rk4Fixed`: classic fourth-order Runge–Kutta at a fixed step, with the
//!   same clamping rule.
//! * `AdaptiveStiff`: extrapolated linearly implicit Euler (harmonic
//!   sequence 1, 2, 3, 4). Each substep solves `(I − h·J) Δ = h·f`, which is
//!   L-stable, and the Aitken–Neville table yields a fourth-order result with
//!   an embedded third-order error estimate. Steps whose scaled error exceeds
//!   one, or that drive a concentration below `−abs_tol`, are rejected and
//!   retried with a smaller step.
//!
//! Temperatures are held fixed, so rate coefficients are evaluated once per
//! integration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, ReactionNetwork, SystemState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("step size underflow at t = {t} (dt = {dt})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("singular iteration matrix at t = {t}")]
    SingularMatrix { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integration options: {0}")]
    InvalidOptions(String),
}

pub type Result<T> = std::result::Result<T, IntegrationError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExplicitEuler,
    #[serde(alias = "rk4")]
    Rk4Fixed,
    #[default]
    AdaptiveStiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationOptions {
    pub method: Method,
    /// Initial step for the adaptive method and the step of the fixed
    /// methods. Chosen automatically when absent.
    pub dt_init: Option<f64>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
    /// Absolute tolerance; defaults to `1e-12 · max initial concentration`.
    pub abs_tol: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveStiff,
            dt_init: None,
            dt_min: 1e-24,
            dt_max: f64::MAX,
            rel_tol: 1e-8,
            abs_tol: None,
            max_steps: 1_000_000,
        }
    }
}

impl IntegrationOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt_init = Some(dt);
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = Some(abs_tol);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IntegrationError::InvalidOptions(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return bad(format!("need 0 < dt_min <= dt_max, got dt_min = {}, dt_max = {}", self.dt_min, self.dt_max));
        }
        if let Some(dt) = self.dt_init {
            if !(dt >= self.dt_min && dt <= self.dt_max) {
                return bad(format!("dt_init = {dt} outside [dt_min, dt_max]"));
            }
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if let Some(a) = self.abs_tol {
            if !(a > 0.0) {
                return bad(format!("abs_tol must be positive, got {a}"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }

    fn resolved_abs_tol(&self, state0: &SystemState) -> f64 {
        self.abs_tol.unwrap_or_else(|| {
            let max = state0.concentrations.iter().fold(0.0f64, |m, &x| m.max(x));
            if max > 0.0 {
                1e-12 * max
            } else {
                1e-300
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepEventKind {
    /// Concentrations clamped to zero by a fixed-step method.
    Clamped { species: Vec<usize> },
    /// Adaptive step rejected because the error estimate was too large.
    RejectedError { dt: f64, error: f64 },
    /// Adaptive step rejected because it produced a negative concentration.
    RejectedNegative { dt: f64, species: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepEvent {
    /// Time at the start of the attempted step.
    pub t: f64,
    #[serde(flatten)]
    pub kind: StepEventKind,
}

/// Accepted states with their derivatives, in strictly increasing time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub derivatives: Vec<Vec<f64>>,
    pub step_events: Vec<StepEvent>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&SystemState> {
        self.states.last()
    }

    /// Concentration series of one species.
    pub fn series(&self, species: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.concentrations[species]).collect()
    }

    /// Stored derivative series of one species.
    pub fn derivative_series(&self, species: usize) -> Vec<f64> {
        self.derivatives.iter().map(|d| d[species]).collect()
    }

    /// Index of the accepted step closest in time to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.states.is_empty() {
            return None;
        }
        let i = self.states.partition_point(|s| s.t < t);
        if i == 0 {
            return Some(0);
        }
        if i == self.states.len() {
            return Some(i - 1);
        }
        if (self.states[i].t - t).abs() < (t - self.states[i - 1].t).abs() {
            Some(i)
        } else {
            Some(i - 1)
        }
    }

    fn push(&mut self, state: SystemState, derivative: Vec<f64>) {
        self.states.push(state);
        self.derivatives.push(derivative);
    }
}

/// Shared evaluation context: the network plus coefficients frozen at the
/// (constant) temperatures.
struct Rhs<'a> {
    net: &'a ReactionNetwork,
    coefficients: Vec<f64>,
    rates: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(net: &'a ReactionNetwork, state: &SystemState) -> Result<Self> {
        if state.concentrations.len() != net.species_count() {
            return Err(NetworkError::DimensionMismatch {
                expected: net.species_count(),
                actual: state.concentrations.len(),
            }
            .into());
        }
        state.validate()?;
        let coefficients = net.rate_coefficients(&state.temperatures)?;
        Ok(Self { net, coefficients, rates: vec![0.0; net.reaction_count()] })
    }

    fn eval(&mut self, y: &[f64], out: &mut [f64]) {
        self.net.derivative_into(&self.coefficients, y, &mut self.rates, out);
    }

    fn derivative(&mut self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.eval(y, &mut out);
        out
    }

    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        self.net.jacobian_into(&self.coefficients, y, jac);
    }
}

/// Control returned by the per-step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Integrates from `state0` to `t_end`, returning every accepted step.
pub fn integrate(
    net: &ReactionNetwork,
    state0: &SystemState,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    integrate_observed(net, state0, t_end, &[], opts, |_, _| Flow::Continue)
}

/// Like [`integrate`], but every time in `stops` (inside the window) is
/// landed on exactly by an accepted step.
pub fn integrate_with_stops(
    net: &ReactionNetwork,
    state0: &SystemState,
    t_end: f64,
    stops: &[f64],
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    integrate_observed(net, state0, t_end, stops, opts, |_, _| Flow::Continue)
}

/// Core driver. `observe` sees every accepted state (including the initial
/// one) with its derivative and may stop the integration early.
pub fn integrate_observed(
    net: &ReactionNetwork,
    state0: &SystemState,
    t_end: f64,
    stops: &[f64],
    opts: &IntegrationOptions,
    mut observe: impl FnMut(&SystemState, &[f64]) -> Flow,
) -> Result<Trajectory> {
    opts.validate()?;
    if !(t_end >= state0.t) {
        return Err(IntegrationError::InvalidOptions(format!(
            "t_end = {t_end} precedes the initial time {}",
            state0.t
        )));
    }
    let mut rhs = Rhs::new(net, state0)?;
    let mut stops: Vec<f64> = stops.iter().copied().filter(|&t| t > state0.t && t < t_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(t_end);

    let mut traj = Trajectory::default();
    let f0 = rhs.derivative(&state0.concentrations);
    let flow = observe(state0, &f0);
    traj.push(state0.clone(), f0);
    if flow == Flow::Stop || t_end == state0.t {
        return Ok(traj);
    }

    match opts.method {
        Method::ExplicitEuler | Method::Rk4Fixed => {
            fixed_steps(&mut rhs, state0, &stops, opts, &mut traj, &mut observe)?
        }
        Method::AdaptiveStiff => adaptive(&mut rhs, state0, &stops, opts, &mut traj, &mut observe)?,
    }
    Ok(traj)
}

fn fixed_steps(
    rhs: &mut Rhs<'_>,
    state0: &SystemState,
    stops: &[f64],
    opts: &IntegrationOptions,
    traj: &mut Trajectory,
    observe: &mut impl FnMut(&SystemState, &[f64]) -> Flow,
) -> Result<()> {
    let t_end = *stops.last().unwrap();
    let dt = opts.dt_init.unwrap_or((t_end - state0.t) / 1000.0);
    let s = state0.len();
    let mut y = state0.concentrations.clone();
    let mut t = state0.t;
    let mut steps = 0usize;
    let mut stop_idx = 0usize;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; s], vec![0.0; s], vec![0.0; s], vec![0.0; s]);
    let mut tmp = vec![0.0; s];
    while stop_idx < stops.len() {
        let target = stops[stop_idx];
        let remaining = target - t;
        // Land exactly on the stop when the remainder is within rounding of dt.
        let (h, lands) = if remaining <= dt * (1.0 + 1e-12) { (remaining, true) } else { (dt, false) };
        if steps >= opts.max_steps {
            return Err(IntegrationError::MaxStepsExceeded { t, steps });
        }
        steps += 1;
        rhs.eval(&y, &mut k1);
        match opts.method {
            Method::ExplicitEuler => {
                for i in 0..s {
                    y[i] += h * k1[i];
                }
            }
            _ => {
                for i in 0..s {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                rhs.eval(&tmp, &mut k2);
                for i in 0..s {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                rhs.eval(&tmp, &mut k3);
                for i in 0..s {
                    tmp[i] = y[i] + h * k3[i];
                }
                rhs.eval(&tmp, &mut k4);
                for i in 0..s {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        let t_prev = t;
        t = if lands { target } else { t + h };
        let mut clamped = Vec::new();
        for (i, yi) in y.iter_mut().enumerate() {
            if !yi.is_finite() {
                return Err(IntegrationError::NonFinite { t });
            }
            if *yi < 0.0 {
                *yi = 0.0;
                clamped.push(i);
            }
        }
        if !clamped.is_empty() {
            traj.step_events.push(StepEvent { t: t_prev, kind: StepEventKind::Clamped { species: clamped } });
        }
        if lands {
            stop_idx += 1;
        }
        let state = SystemState { t, concentrations: y.clone(), temperatures: state0.temperatures.clone() };
        let f = rhs.derivative(&y);
        let flow = observe(&state, &f);
        traj.push(state, f);
        if flow == Flow::Stop {
            break;
        }
    }
    Ok(())
}

/// Number of rows in the extrapolation table.
const STAGES: usize = 4;

fn adaptive(
    rhs: &mut Rhs<'_>,
    state0: &SystemState,
    stops: &[f64],
    opts: &IntegrationOptions,
    traj: &mut Trajectory,
    observe: &mut impl FnMut(&SystemState, &[f64]) -> Flow,
) -> Result<()> {
    let s = state0.len();
    let abs_tol = opts.resolved_abs_tol(state0);
    let rel_tol = opts.rel_tol;
    let mut y = DVector::from_column_slice(&state0.concentrations);
    let mut t = state0.t;
    let t_end = *stops.last().unwrap();
    let mut f = DVector::from_column_slice(&traj.derivatives[0]);

    let mut h = match opts.dt_init {
        Some(h) => h,
        None => initial_step(&y, &f, abs_tol, rel_tol, t_end - t),
    }
    .clamp(opts.dt_min, opts.dt_max);

    let mut jac = DMatrix::zeros(s, s);
    let mut table: Vec<DVector<f64>> = vec![DVector::zeros(s); STAGES];
    let mut work = vec![0.0; s];
    let mut steps = 0usize;
    let mut stop_idx = 0usize;
    let mut last_rejected = false;

    while stop_idx < stops.len() {
        let target = stops[stop_idx];
        let mut lands = false;
        let mut h_try = h;
        if t + h_try >= target || (target - t - h_try) < 1e-12 * h_try {
            h_try = target - t;
            lands = true;
        }
        if steps >= opts.max_steps {
            return Err(IntegrationError::MaxStepsExceeded { t, steps });
        }
        steps += 1;

        rhs.jacobian(y.as_slice(), &mut jac);
        for (row, table_row) in table.iter_mut().enumerate() {
            let n = row + 1;
            let hs = h_try / n as f64;
            let m = DMatrix::identity(s, s) - &jac * hs;
            let lu = m.lu();
            let mut yc = y.clone();
            for sub in 0..n {
                let rhs_vec = if sub == 0 {
                    f.clone() * hs
                } else {
                    rhs.eval(yc.as_slice(), &mut work);
                    DVector::from_column_slice(&work) * hs
                };
                let delta = lu.solve(&rhs_vec).ok_or(IntegrationError::SingularMatrix { t })?;
                yc += delta;
            }
            *table_row = yc;
        }
        // Aitken–Neville over the harmonic sequence; table[j] ends as T[j][j].
        let mut lower = table[STAGES - 2].clone();
        for k in 1..STAGES {
            for j in (k..STAGES).rev() {
                let ratio = (j + 1) as f64 / (j + 1 - k) as f64 - 1.0;
                let diff = &table[j] - &table[j - 1];
                table[j] += diff / ratio;
            }
            if k == STAGES - 2 {
                lower = table[STAGES - 1].clone();
            }
        }
        let y_new = table[STAGES - 1].clone();
        let mut err = 0.0f64;
        for i in 0..s {
            let sc = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((y_new[i] - lower[i]).abs() / sc);
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }

        let negative = y_new.iter().position(|&v| v < -abs_tol);
        if err > 1.0 || negative.is_some() {
            let kind = match negative {
                Some(species) if err <= 1.0 => StepEventKind::RejectedNegative { dt: h_try, species },
                _ => StepEventKind::RejectedError { dt: h_try, error: err },
            };
            traj.step_events.push(StepEvent { t, kind });
            let factor =
                if err.is_finite() && err > 1.0 { (0.9 * err.powf(-1.0 / STAGES as f64)).clamp(0.2, 0.5) } else { 0.5 };
            h = h_try * factor;
            if h < opts.dt_min {
                return Err(IntegrationError::StepUnderflow { t, dt: h });
            }
            last_rejected = true;
            continue;
        }

        y = y_new.map(|v| v.max(0.0));
        t = if lands { target } else { t + h_try };
        if lands {
            stop_idx += 1;
        }
        rhs.eval(y.as_slice(), &mut work);
        f.copy_from_slice(&work);

        let mut factor = if err > 0.0 { 0.9 * err.powf(-1.0 / STAGES as f64) } else { 4.0 };
        factor = factor.clamp(0.2, 4.0);
        if last_rejected {
            factor = factor.min(1.0);
        }
        last_rejected = false;
        // A shortened landing step says nothing about the natural step size.
        let base = if lands { h.max(h_try) } else { h_try };
        h = (base * factor).clamp(opts.dt_min, opts.dt_max);

        let state = SystemState { t, concentrations: y.as_slice().to_vec(), temperatures: state0.temperatures.clone() };
        let flow = observe(&state, &work);
        traj.push(state, work.clone());
        if flow == Flow::Stop {
            break;
        }
    }
    Ok(())
}

fn initial_step(y: &DVector<f64>, f: &DVector<f64>, abs_tol: f64, rel_tol: f64, span: f64) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..y.len() {
        let sc = abs_tol + rel_tol * y[i].abs();
        d0 = d0.max(y[i].abs() / sc);
        d1 = d1.max(f[i].abs() / sc);
    }
    let h = if d1 <= 1e-5 {
        span
    } else if d0 <= 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    h.min(span).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: SystemState,
    pub converged: bool,
    /// `‖dn/dt‖∞ / max(‖n‖∞, floor)` at the returned state.
    pub residual: f64,
}

/// Integrates until `‖dn/dt‖∞ / max(‖n‖∞, floor) ≤ tol`, or `t_cap`.
pub fn steady_state(
    net: &ReactionNetwork,
    state0: &SystemState,
    tol: f64,
    t_cap: f64,
    opts: &IntegrationOptions,
) -> Result<SteadyState> {
    if !(tol > 0.0) {
        return Err(IntegrationError::InvalidOptions(format!("steady-state tolerance must be positive, got {tol}")));
    }
    let floor = opts.resolved_abs_tol(state0);
    let measure = |st: &SystemState, f: &[f64]| {
        let fmax = f.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let nmax = st.concentrations.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        fmax / nmax.max(floor)
    };
    let mut found: Option<(SystemState, f64)> = None;
    let traj = integrate_observed(net, state0, t_cap.max(state0.t), &[], opts, |st, f| {
        let r = measure(st, f);
        if r <= tol {
            found = Some((st.clone(), r));
            Flow::Stop
        } else {
            Flow::Continue
        }
    })?;
    Ok(match found {
        Some((state, residual)) => SteadyState { state, converged: true, residual },
        None => {
            let last = traj.states.last().unwrap().clone();
            let residual = measure(&last, traj.derivatives.last().unwrap());
            SteadyState { state: last, converged: false, residual }
        }
    })
}
