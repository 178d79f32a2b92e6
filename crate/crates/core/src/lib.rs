//! Chemical pathway networks: compile reaction lists into stoichiometric
//! matrix form, integrate their rate equations, and analyze the etching and
//! tweezer signal-processing demonstrators built on top of them; fit rate
//! coefficients to target trajectories.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod etching;
pub mod fit;
pub mod integrator;
pub mod netparser;
pub mod network;
pub mod stats;
pub mod tweezer;

pub use fit::{fit_rates, trajectory_loss, FitError, FitOptions, FitProblem, FitResult, FreeParameter, Target};
pub use integrator::{
    integrate, integrate_with_stops, steady_state, IntegrationError, IntegrationOptions, Method, SteadyState,
    Trajectory,
};
pub use netparser::{
    parse_network, parse_network_with, serialize_network, MechanismDocument, ParseError, ParseErrorKind, ParseOptions,
};
pub use network::{
    arrhenius_k, reactant_mean_temperature, NetworkError, RateModel, RateVector, Reaction, ReactionNetwork, Species,
    SystemState, TemperatureMean,
};
