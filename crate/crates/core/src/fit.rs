//! Fitting rate coefficients to a target trajectory.
//!
//! Free coefficients are searched in log space with a bounded Nelder–Mead
//! simplex, restarted from a small Latin-hypercube set of points. Each loss
//! evaluation is a full forward integration that stops exactly on the
//! target sample times.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate_with_stops, IntegrationOptions, Trajectory};
use crate::network::{NetworkError, ReactionNetwork, SystemState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no species selected for the loss")]
    EmptySelection,
    #[error("target has no samples")]
    EmptyTarget,
    #[error("no free parameters")]
    NoFreeParameters,
    #[error("target sample at t = {target} has no candidate sample (nearest t = {nearest})")]
    GridMismatch { target: f64, nearest: f64 },
    #[error("parameter {index}: {reason}")]
    InvalidParameter { index: usize, reason: String },
    #[error("invalid fit problem: {0}")]
    Invalid(String),
    #[error("simulation failed at the initial point: {0}")]
    SimulationFailure(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Sampled values of selected species, one row per sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub times: Vec<f64>,
    pub species: Vec<usize>,
    /// `values[sample][k]` is species `species[k]` at `times[sample]`.
    pub values: Vec<Vec<f64>>,
    /// One weight per selected species.
    pub weights: Vec<f64>,
}

impl Target {
    pub fn from_trajectory(traj: &Trajectory, species: &[usize], weights: &[f64]) -> Result<Self> {
        let target = Self {
            times: traj.times(),
            species: species.to_vec(),
            values: traj.states.iter().map(|s| species.iter().map(|&i| s.concentrations[i]).collect()).collect(),
            weights: weights.to_vec(),
        };
        target.validate(usize::MAX)?;
        Ok(target)
    }

    pub fn validate(&self, species_count: usize) -> Result<()> {
        if self.species.is_empty() {
            return Err(FitError::EmptySelection);
        }
        if self.times.is_empty() {
            return Err(FitError::EmptyTarget);
        }
        if self.weights.len() != self.species.len() {
            return Err(FitError::Invalid(format!(
                "{} weights for {} species",
                self.weights.len(),
                self.species.len()
            )));
        }
        if let Some(&i) = self.species.iter().find(|&&i| i >= species_count) {
            return Err(FitError::Invalid(format!("species index {i} out of range")));
        }
        if self.values.len() != self.times.len() || self.values.iter().any(|r| r.len() != self.species.len()) {
            return Err(FitError::Invalid("target value table has the wrong shape".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FitError::Invalid("weights must be finite and ≥ 0".into()));
        }
        if self.times.iter().chain(self.values.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(FitError::Invalid("target contains non-finite values".into()));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(FitError::Invalid("target times must be non-decreasing".into()));
        }
        Ok(())
    }
}

/// Candidate samples must lie within this fraction of the target span of
/// the requested time.
const GRID_TOL: f64 = 1e-9;

/// Weighted sum of squared differences, with each target sample matched to
/// the nearest candidate sample.
pub fn trajectory_loss(candidate: &Trajectory, target: &Target) -> Result<f64> {
    target.validate(usize::MAX)?;
    let span = target.times[target.times.len() - 1] - target.times[0];
    let tol = GRID_TOL * span.abs().max(target.times[0].abs()).max(f64::MIN_POSITIVE);
    let mut loss = 0.0;
    for (t, row) in target.times.iter().zip(&target.values) {
        let idx = candidate.nearest_index(*t).ok_or(FitError::EmptyTarget)?;
        let state = &candidate.states[idx];
        if (state.t - t).abs() > tol {
            return Err(FitError::GridMismatch { target: *t, nearest: state.t });
        }
        for ((&sp, &w), &y) in target.species.iter().zip(&target.weights).zip(row) {
            let c = *state
                .concentrations
                .get(sp)
                .ok_or_else(|| FitError::Invalid(format!("species index {sp} out of range")))?;
            loss += w * (c - y) * (c - y);
        }
    }
    Ok(loss)
}

/// A rate coefficient left free, identified by reaction index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub reaction: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Maximum number of loss evaluations after the initial one.
    pub budget: usize,
    /// Simplex starts, the first being the template's own coefficients.
    pub starts: usize,
    pub seed: u64,
    /// Stop once the simplex spans less than this in log space and its
    /// losses agree to `f_tol` (relative).
    pub x_tol: f64,
    pub f_tol: f64,
    pub integration: IntegrationOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { budget: 2000, starts: 4, seed: 0, x_tol: 1e-9, f_tol: 1e-12, integration: IntegrationOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    /// Template; the current coefficients of the free reactions are the
    /// initial guess.
    pub network: ReactionNetwork,
    pub initial: SystemState,
    pub free: Vec<FreeParameter>,
    pub target: Target,
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub parameters: Vec<f64>,
    pub loss: f64,
    pub initial_loss: f64,
    /// Loss evaluations performed, the initial one included.
    pub evaluations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
    /// Best loss after each accepted simplex update of the winning start.
    pub history: Vec<f64>,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(FitError::NoFreeParameters);
        }
        self.target.validate(self.network.species_count())?;
        self.initial.validate()?;
        if self.initial.len() != self.network.species_count() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.network.species_count(),
                actual: self.initial.len(),
            }
            .into());
        }
        for (index, p) in self.free.iter().enumerate() {
            let bad = |reason: String| Err(FitError::InvalidParameter { index, reason });
            if p.reaction >= self.network.reaction_count() {
                return bad(format!("reaction {} does not exist", p.reaction));
            }
            if !(p.lower > 0.0 && p.upper.is_finite() && p.lower < p.upper) {
                return bad(format!("bounds must satisfy 0 < lower < upper, got [{}, {}]", p.lower, p.upper));
            }
            if self.free[..index].iter().any(|q| q.reaction == p.reaction) {
                return bad(format!("reaction {} is listed twice", p.reaction));
            }
        }
        if self.options.starts == 0 {
            return Err(FitError::Invalid("need at least one start".into()));
        }
        Ok(())
    }

    /// Current coefficients of the free reactions.
    pub fn initial_parameters(&self) -> Vec<f64> {
        self.free.iter().map(|p| self.network.reactions()[p.reaction].rate().scale()).collect()
    }

    /// Network with the free coefficients replaced by `params`.
    pub fn network_with(&self, params: &[f64]) -> Result<ReactionNetwork> {
        let mut net = self.network.clone();
        for (p, &k) in self.free.iter().zip(params) {
            let rate = net.reactions()[p.reaction].rate().with_scale(k);
            net = net.with_rate(p.reaction, rate)?;
        }
        Ok(net)
    }

    /// Loss at `params`, or `None` when the forward run fails.
    pub fn loss_at(&self, params: &[f64]) -> Option<f64> {
        let net = self.network_with(params).ok()?;
        let t_end = *self.target.times.last()?;
        let traj =
            integrate_with_stops(&net, &self.initial, t_end, &self.target.times, &self.options.integration).ok()?;
        trajectory_loss(&traj, &self.target).ok().filter(|l| l.is_finite())
    }
}

/// Fits the free coefficients of `problem`.
pub fn fit_rates(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let x0 = problem.initial_parameters();
    let bounds: Vec<(f64, f64)> = problem.free.iter().map(|p| (p.lower.ln(), p.upper.ln())).collect();
    let u0: Vec<f64> = x0.iter().zip(&bounds).map(|(x, &(lo, hi))| x.ln().clamp(lo, hi)).collect();
    let f0 = problem
        .loss_at(&exp_all(&u0))
        .ok_or_else(|| FitError::SimulationFailure(format!("parameters {:?}", exp_all(&u0))))?;

    let opts = &problem.options;
    if opts.budget == 0 {
        return Ok(FitResult {
            parameters: exp_all(&u0),
            loss: f0,
            initial_loss: f0,
            evaluations: 1,
            converged: false,
            budget_exhausted: true,
            history: vec![f0],
        });
    }

    let mut starts = vec![u0.clone()];
    starts.extend(latin_points(&bounds, opts.starts - 1, opts.seed));
    let share = opts.budget / starts.len();
    let extra = opts.budget % starts.len();
    let runs: Vec<SimplexRun> = starts
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let budget = share + usize::from(i < extra);
            let known = (i == 0).then_some(f0);
            nelder_mead(|v| problem.loss_at(&exp_all(v)), u, known, &bounds, budget, opts.x_tol, opts.f_tol)
        })
        .collect();

    let evaluations = 1 + runs.iter().map(|r| r.evaluations).sum::<usize>();
    let best = runs
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.loss.is_finite())
        .min_by(|(i, a), (j, b)| a.loss.total_cmp(&b.loss).then(i.cmp(j)))
        .map(|(_, r)| r);
    Ok(match best {
        Some(run) if run.loss <= f0 => FitResult {
            parameters: exp_all(&run.x),
            loss: run.loss,
            initial_loss: f0,
            evaluations,
            converged: run.converged,
            budget_exhausted: !run.converged,
            history: run.history,
        },
        _ => FitResult {
            parameters: exp_all(&u0),
            loss: f0,
            initial_loss: f0,
            evaluations,
            converged: false,
            budget_exhausted: true,
            history: vec![f0],
        },
    })
}

fn exp_all(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| v.exp()).collect()
}

/// `n` points of a Latin hypercube over the log box, one stratum per point
/// and dimension.
fn latin_points(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (p, s) in points.iter_mut().zip(strata) {
            let u: f64 = rng.gen();
            p[d] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    points
}

struct SimplexRun {
    x: Vec<f64>,
    loss: f64,
    evaluations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Bounded Nelder–Mead: trial points are projected onto the box, failed
/// evaluations count as +∞.
fn nelder_mead(
    f: impl Fn(&[f64]) -> Option<f64>,
    x0: &[f64],
    f_x0: Option<f64>,
    bounds: &[(f64, f64)],
    budget: usize,
    x_tol: f64,
    f_tol: f64,
) -> SimplexRun {
    let n = x0.len();
    let mut evaluations = 0;
    let project = |x: &mut Vec<f64>| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let eval = |x: &[f64], evaluations: &mut usize| -> f64 {
        *evaluations += 1;
        f(x).unwrap_or(f64::INFINITY)
    };

    let mut x_start = x0.to_vec();
    project(&mut x_start);
    let f_start = match f_x0 {
        Some(v) => v,
        None => eval(&x_start, &mut evaluations),
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x_start.clone(), f_start)];
    for d in 0..n {
        if evaluations >= budget {
            break;
        }
        let (lo, hi) = bounds[d];
        let step = (0.25 * (hi - lo)).min(0.5);
        let mut x = x_start.clone();
        x[d] = if x[d] + step <= hi { x[d] + step } else { x[d] - step };
        project(&mut x);
        let fx = eval(&x, &mut evaluations);
        simplex.push((x, fx));
    }
    let mut history = vec![f_start];
    let mut converged = false;
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);
    if simplex.len() <= n {
        return SimplexRun { x: simplex[0].0.clone(), loss: simplex[0].1, evaluations, converged: false, history };
    }
    history.push(simplex[0].1);

    while evaluations < budget {
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if diameter <= x_tol && (worst - best).abs() <= f_tol * best.abs().max(f64::MIN_POSITIVE) || worst == 0.0 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..n).map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| {
            let mut x: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut x);
            x
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evaluations);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = if evaluations < budget { eval(&xe, &mut evaluations) } else { f64::INFINITY };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(0.5);
                (xc.clone(), if evaluations < budget { eval(&xc, &mut evaluations) } else { f64::INFINITY })
            } else {
                let xc = along(-0.5);
                (xc.clone(), if evaluations < budget { eval(&xc, &mut evaluations) } else { f64::INFINITY })
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex[1..].iter_mut() {
                    if evaluations >= budget {
                        break;
                    }
                    let x: Vec<f64> = v.0.iter().zip(&x_best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let fx = eval(&x, &mut evaluations);
                    *v = (x, fx);
                }
            }
        }
        sort(&mut simplex);
        history.push(simplex[0].1);
    }
    SimplexRun { x: simplex[0].0.clone(), loss: simplex[0].1, evaluations, converged, history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;
    use crate::parse_network;

    fn chain() -> (ReactionNetwork, SystemState) {
        let net = parse_network("A -> B : const(0.7)\nB -> C : const(0.3)").unwrap().into_network().unwrap();
        let st = SystemState::uniform(0.0, vec![1.0, 0.0, 0.0], 1.0).unwrap();
        (net, st)
    }

    #[test]
    fn loss_examples() {
        let (net, st) = chain();
        let traj = integrate(&net, &st, 2.0, &IntegrationOptions::default()).unwrap();
        let target = Target::from_trajectory(&traj, &[0, 1], &[1.0, 1.0]).unwrap();
        assert_eq!(trajectory_loss(&traj, &target).unwrap(), 0.0);

        let mut shifted = traj.clone();
        let delta = 0.25;
        shifted.states.iter_mut().for_each(|s| s.concentrations[1] += delta);
        let m = traj.len() as f64;
        let loss = trajectory_loss(&shifted, &target).unwrap();
        assert!((loss - m * delta * delta).abs() < 1e-12 * m);

        assert_eq!(Target::from_trajectory(&traj, &[], &[]), Err(FitError::EmptySelection));
    }

    #[test]
    fn off_grid_candidate_is_rejected() {
        let (net, st) = chain();
        let traj = integrate(&net, &st, 2.0, &IntegrationOptions::default()).unwrap();
        let target = Target { times: vec![0.123_456], species: vec![0], values: vec![vec![0.9]], weights: vec![1.0] };
        assert!(matches!(trajectory_loss(&traj, &target), Err(FitError::GridMismatch { .. })));
    }

    #[test]
    fn zero_budget_returns_initial_point() {
        let (net, st) = chain();
        let traj = integrate(&net, &st, 2.0, &IntegrationOptions::default()).unwrap();
        let target = Target::from_trajectory(&traj, &[0, 1], &[1.0, 1.0]).unwrap();
        let problem = FitProblem {
            network: net.with_rate(0, crate::RateModel::Constant { k: 2.1 }).unwrap(),
            initial: st,
            free: vec![FreeParameter { reaction: 0, lower: 1e-3, upper: 1e3 }],
            target,
            options: FitOptions { budget: 0, ..Default::default() },
        };
        let r = fit_rates(&problem).unwrap();
        assert_eq!(r.parameters, vec![2.1]);
        assert_eq!(r.loss, r.initial_loss);
        assert!(r.budget_exhausted && !r.converged);
    }

    #[test]
    fn latin_points_cover_each_stratum_once() {
        let bounds = [(0.0, 1.0), (-2.0, 2.0)];
        let pts = latin_points(&bounds, 5, 3);
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            let mut strata: Vec<usize> = pts.iter().map(|p| ((p[d] - lo) / (hi - lo) * 5.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3, 4]);
        }
        assert_eq!(pts, latin_points(&bounds, 5, 3));
    }

    #[test]
    fn simplex_minimizes_a_bowl() {
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let run = nelder_mead(
            |x| Some((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2)),
            &[3.0, 3.0],
            None,
            &bounds,
            2000,
            1e-10,
            1e-14,
        );
        assert!(run.converged);
        assert!((run.x[0] - 1.0).abs() < 1e-6 && (run.x[1] + 0.5).abs() < 1e-6);
        assert!(run.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
