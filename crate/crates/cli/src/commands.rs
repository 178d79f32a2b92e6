use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use cpn_core::etching::{self, EtchParams, C4F8};
use cpn_core::fit::{fit_rates, FitOptions, FitProblem, FreeParameter, Target};
use cpn_core::netparser::format_reaction;
use cpn_core::tweezer::{peak_forces, EmWave, SignalConfig};
use cpn_core::{
    integrate, parse_network_with, IntegrationOptions, Method, ParseOptions, ReactionNetwork, SystemState, Trajectory,
};

use crate::io::{self, usage, Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    ExplicitEuler,
    Rk4,
    AdaptiveStiff,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ExplicitEuler => Method::ExplicitEuler,
            MethodArg::Rk4 => Method::Rk4Fixed,
            MethodArg::AdaptiveStiff => Method::AdaptiveStiff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Integrator settings shared by the simulating subcommands.
#[derive(Args, Debug)]
pub struct IntegrationArgs {
    /// Integration method
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Relative tolerance of the adaptive method
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Absolute tolerance [default: 1e-12 × largest initial concentration]
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Initial step (adaptive) or fixed step (Euler, RK4)
    #[arg(long)]
    dt: Option<f64>,
    /// Maximum number of accepted steps
    #[arg(long)]
    max_steps: Option<usize>,
}

impl IntegrationArgs {
    fn apply(&self, mut opts: IntegrationOptions) -> Result<IntegrationOptions> {
        if let Some(m) = self.method {
            opts.method = m.into();
        }
        if let Some(v) = self.rel_tol {
            opts.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            opts.abs_tol = Some(v);
        }
        if let Some(v) = self.dt {
            opts.dt_init = Some(v);
        }
        if let Some(v) = self.max_steps {
            opts.max_steps = v;
        }
        opts.validate().map_err(|e| usage(e.to_string()))?;
        Ok(opts)
    }
}

fn parse_mechanism(path: &Path, strict: bool) -> Result<ReactionNetwork> {
    let text = io::read_text(path)?;
    let doc = parse_network_with(&text, ParseOptions { strict }).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    doc.into_network().with_context(|| format!("{}: invalid mechanism", path.display()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn trajectory_csv(path: &Path, net: &ReactionNetwork, traj: &Trajectory) -> Result<()> {
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain(net.species().iter().map(|s| s.name.clone())).collect();
    io::write_csv(
        path,
        &header,
        traj.states.iter().map(|s| {
            std::iter::once(Field::Float(s.t)).chain(s.concentrations.iter().map(|&c| Field::Float(c))).collect()
        }),
    )
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Mechanism file
    mechanism: PathBuf,
    /// End time
    #[arg(long)]
    t_end: f64,
    /// Initial concentration as NAME=VALUE; repeatable, unlisted species start at 0
    #[arg(long = "init", value_name = "NAME=VALUE")]
    init: Vec<String>,
    /// Temperature of every species, eV
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Require species declarations in the mechanism
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    integration: IntegrationArgs,
    /// Output file, `-` for stdout
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Output format: CSV with header `t,<species...>` or JSON
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write a gnuplot script plotting the output
    #[arg(long, value_name = "PATH")]
    gnuplot_script: Option<PathBuf>,
}

fn initial_concentrations(net: &ReactionNetwork, init: &[String]) -> Result<Vec<f64>> {
    let mut n = vec![0.0; net.species_count()];
    for item in init {
        let (name, value) =
            item.split_once('=').ok_or_else(|| usage(format!("--init `{item}` is not of the form NAME=VALUE")))?;
        let idx = net.species_index(name.trim()).ok_or_else(|| usage(format!("--init: unknown species `{name}`")))?;
        n[idx] = value.trim().parse().map_err(|_| usage(format!("--init: `{value}` is not a number")))?;
    }
    Ok(n)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    positive("--t-end", args.t_end)?;
    let net = parse_mechanism(&args.mechanism, args.strict)?;
    let opts = args.integration.apply(IntegrationOptions::default())?;
    let n0 = initial_concentrations(&net, &args.init)?;
    let state = SystemState::uniform(0.0, n0, args.temperature)?;
    let traj = integrate(&net, &state, args.t_end, &opts)?;
    match args.format {
        Format::Csv => trajectory_csv(&args.out, &net, &traj)?,
        Format::Json => io::write_json(
            &args.out,
            &json!({
                "species": net.species().iter().map(|s| &s.name).collect::<Vec<_>>(),
                "t": traj.times(),
                "concentrations": traj.states.iter().map(|s| &s.concentrations).collect::<Vec<_>>(),
            }),
        )?,
    }
    if let Some(script) = &args.gnuplot_script {
        let text = io::gnuplot_script(&args.out, net.species_count() + 1, false, false, "t", "concentration");
        io::write_text(script, &text)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EtchArgs {
    /// Etch parameters as JSON [default: built-in parameters]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Take rate coefficients from a mechanism file instead (initial densities still come from --config)
    #[arg(long)]
    mechanism: Option<PathBuf>,
    /// Override a config field, e.g. `k4=0` or `initial.s=20`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// End time [default: 200/k1]
    #[arg(long)]
    t_end: Option<f64>,
    #[command(flatten)]
    integration: IntegrationArgs,
    /// Trajectory CSV, `-` for stdout
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Diagnostics JSON (photon ratio, residuals, zero crossings)
    #[arg(long)]
    diag: Option<PathBuf>,
    /// Also write a gnuplot script plotting the trajectory
    #[arg(long, value_name = "PATH")]
    gnuplot_script: Option<PathBuf>,
}

pub fn etch(args: EtchArgs) -> Result<()> {
    let mut params: EtchParams = io::load_config(args.config.as_deref(), &args.set)?;
    if let Some(mech) = &args.mechanism {
        let net = parse_mechanism(mech, false)?;
        params = EtchParams::from_network(&net, params.initial).with_context(|| mech.display().to_string())?;
    }
    params.validate()?;
    let t_end = args.t_end.unwrap_or(200.0 / params.k1);
    positive("--t-end", t_end)?;
    let opts = args.integration.apply(IntegrationOptions::default())?;
    let net = etching::build_etch_network(&params)?;
    let traj = integrate(&net, &params.initial_state()?, t_end, &opts)?;
    trajectory_csv(&args.out, &net, &traj)?;
    if let Some(diag) = &args.diag {
        let d = etching::derivation_residuals(&traj, &params)?;
        let crossings = etching::detect_oscillation(&traj, &net, etching::SPECIES_NAMES[C4F8])?;
        let mut value = serde_json::to_value(&d)?;
        let obj = value.as_object_mut().expect("diagnostics serialize to an object");
        obj.insert("params".into(), serde_json::to_value(params)?);
        obj.insert("zero_crossing_count".into(), json!(crossings));
        obj.insert("t_end".into(), json!(t_end));
        io::write_json(diag, &value)?;
    }
    if let Some(script) = &args.gnuplot_script {
        let text = io::gnuplot_script(&args.out, net.species_count() + 1, false, false, "t", "density");
        io::write_text(script, &text)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SignalArgs {
    /// Signal pipeline config as JSON [default: built-in config]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `wave.e0=1e12`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log-spaced frequency scan START:STOP:COUNT in Hz; without it only the config wave is run
    #[arg(long, value_name = "START:STOP:COUNT")]
    freq_scan: Option<String>,
    /// Response CSV `frequency_hz,n_g_released,omega_p_rad_s`, `-` for stdout
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Also write the peak guest force of every length for the config wave
    #[arg(long, value_name = "PATH")]
    peaks: Option<PathBuf>,
    /// Also write a gnuplot script plotting the response
    #[arg(long, value_name = "PATH")]
    gnuplot_script: Option<PathBuf>,
}

/// Parses `start:stop:count` into `count` log-spaced values.
pub fn parse_scan(scan: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("--freq-scan `{scan}` is not START:STOP:COUNT"));
    let parts: Vec<&str> = scan.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let start: f64 = a.trim().parse().map_err(|_| bad())?;
    let stop: f64 = b.trim().parse().map_err(|_| bad())?;
    let count: usize = n.trim().parse().map_err(|_| bad())?;
    if !(start > 0.0 && stop > 0.0 && start.is_finite() && stop.is_finite()) || count == 0 {
        return Err(usage(format!("--freq-scan `{scan}` needs positive frequencies and count ≥ 1")));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let (la, lb) = (start.ln(), stop.ln());
    Ok((0..count)
        .map(|i| match i {
            0 => start,
            i if i + 1 == count => stop,
            i => (la + (lb - la) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect())
}

pub fn signal(args: SignalArgs) -> Result<()> {
    let cfg: SignalConfig = io::load_config(args.config.as_deref(), &args.set)?;
    let freqs = match &args.freq_scan {
        Some(scan) => parse_scan(scan)?,
        None => vec![cfg.wave.frequency],
    };
    let pop = cfg.population()?;
    let responses = freqs
        .par_iter()
        .map(|&f| cfg.respond(&pop, &EmWave { frequency: f, ..cfg.wave }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    for (f, r) in freqs.iter().zip(&responses) {
        if !r.converged {
            eprintln!("warning: plasma did not settle within {} at {f:e} Hz", cfg.settle);
        }
    }
    let header = ["frequency_hz", "n_g_released", "omega_p_rad_s"].map(String::from);
    io::write_csv(
        &args.out,
        &header,
        freqs
            .iter()
            .zip(&responses)
            .map(|(&f, r)| vec![Field::Float(f), Field::Int(r.released_count), Field::Float(r.omega_p)]),
    )?;
    if let Some(path) = &args.peaks {
        let peaks = peak_forces(&pop, &cfg.wave, cfg.drive_duration(&cfg.wave), &cfg.response.rotation)?;
        let header = ["length_m", "peak_force_n", "released"].map(String::from);
        io::write_csv(
            path,
            &header,
            pop.models.iter().zip(peaks).map(|(m, f)| {
                vec![Field::Float(m.length), Field::Float(f), Field::Int(u64::from(f > 0.0 && f >= pop.f_bc))]
            }),
        )?;
    }
    if let Some(script) = &args.gnuplot_script {
        let text = io::gnuplot_script(&args.out, 3, true, false, "frequency (Hz)", "value");
        io::write_text(script, &text)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Fit problem as JSON
    #[arg(long)]
    problem: PathBuf,
    /// Override a problem field, e.g. `options.budget=100`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Result JSON, `-` for stdout
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct FreeSpec {
    reaction: usize,
    lower: f64,
    upper: f64,
    /// Initial guess; the mechanism's coefficient when absent.
    #[serde(default)]
    initial: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct FitProblemFile {
    /// Mechanism path, relative to the problem file.
    mechanism: PathBuf,
    #[serde(default)]
    initial: BTreeMap<String, f64>,
    #[serde(default = "one")]
    temperature: f64,
    free: Vec<FreeSpec>,
    /// Target CSV with header `t,<species...>`, relative to the problem file.
    target: PathBuf,
    /// Species to fit; all target columns when empty.
    #[serde(default)]
    species: Vec<String>,
    /// One weight per fitted species; 1 when empty.
    #[serde(default)]
    weights: Vec<f64>,
    #[serde(default)]
    options: FitOptions,
}

fn one() -> f64 {
    1.0
}

pub fn fit(args: FitArgs) -> Result<()> {
    let file: FitProblemFile = io::load_document(&args.problem, &args.set)?;
    let mech_path = io::relative_to(&args.problem, &file.mechanism);
    let mut net = parse_mechanism(&mech_path, false)?;

    let mut n0 = vec![0.0; net.species_count()];
    for (name, &v) in &file.initial {
        let i = net.species_index(name).ok_or_else(|| anyhow!("initial: unknown species `{name}`"))?;
        n0[i] = v;
    }
    for (k, f) in file.free.iter().enumerate() {
        if let Some(guess) = f.initial {
            let rxn =
                net.reactions().get(f.reaction).ok_or_else(|| anyhow!("free[{k}]: no reaction {}", f.reaction))?;
            let rate = rxn.rate().with_scale(guess);
            net = net.with_rate(f.reaction, rate)?;
        }
    }

    let target_path = io::relative_to(&args.problem, &file.target);
    let table = io::read_csv(&target_path)?;
    if table.header.first().map(String::as_str) != Some("t") {
        bail!("{}: first column must be `t`", target_path.display());
    }
    let names: Vec<String> = if file.species.is_empty() { table.header[1..].to_vec() } else { file.species.clone() };
    let mut columns = Vec::with_capacity(names.len());
    let mut species = Vec::with_capacity(names.len());
    for name in &names {
        let col = table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: no column `{name}`", target_path.display()))?;
        columns.push(col);
        species
            .push(net.species_index(name).ok_or_else(|| anyhow!("target species `{name}` is not in the mechanism"))?);
    }
    let weights = if file.weights.is_empty() { vec![1.0; names.len()] } else { file.weights.clone() };
    let target = Target {
        times: table.rows.iter().map(|r| r[0]).collect(),
        species,
        values: table.rows.iter().map(|r| columns.iter().map(|&c| r[c]).collect()).collect(),
        weights,
    };

    let problem = FitProblem {
        network: net,
        initial: SystemState::uniform(0.0, n0, file.temperature)?,
        free: file
            .free
            .iter()
            .map(|f| FreeParameter { reaction: f.reaction, lower: f.lower, upper: f.upper })
            .collect(),
        target,
        options: file.options,
    };
    let result = fit_rates(&problem)?;
    let fitted = problem.network_with(&result.parameters)?;
    let parameters: Vec<_> = problem
        .free
        .iter()
        .zip(&result.parameters)
        .map(|(p, &v)| {
            json!({
                "reaction": p.reaction,
                "equation": format_reaction(&fitted.reactions()[p.reaction], fitted.species()),
                "value": v,
            })
        })
        .collect();
    io::write_json(
        &args.out,
        &json!({
            "parameters": parameters,
            "loss": result.loss,
            "initial_loss": result.initial_loss,
            "evaluations": result.evaluations,
            "converged": result.converged,
            "budget_exhausted": result.budget_exhausted,
            "history": result.history,
        }),
    )
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Mechanism file
    mechanism: PathBuf,
    /// Require species declarations and compositions for every species
    #[arg(long)]
    strict: bool,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Exit with status 1 when any checked reaction is unbalanced
    #[arg(long)]
    require_balanced: bool,
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let net = parse_mechanism(&args.mechanism, args.strict)?;
    let res = net.elemental_residual(args.strict)?;
    let unbalanced: Vec<usize> = (0..res.reactions.len())
        .filter(|&j| res.residual.iter().any(|row| row[j] != 0))
        .map(|j| res.reactions[j])
        .collect();
    let describe = |j: usize| format_reaction(&net.reactions()[j], net.species());
    match args.format {
        Format::Json => io::write_json(
            Path::new("-"),
            &json!({
                "species": net.species_count(),
                "reactions": net.reaction_count(),
                "elements": res.elements,
                "balanced": res.is_balanced(),
                "checked": res.reactions,
                "skipped": res.skipped,
                "unbalanced": unbalanced.iter().map(|&j| json!({
                    "reaction": j,
                    "equation": describe(j),
                    "residual": res.elements.iter().zip(&res.residual)
                        .map(|(e, row)| (e.clone(), row[res.reactions.iter().position(|&r| r == j).unwrap()]))
                        .filter(|(_, r)| *r != 0)
                        .collect::<BTreeMap<_, _>>(),
                })).collect::<Vec<_>>(),
            }),
        )?,
        Format::Csv => {
            let header = ["reaction", "status"].map(String::from);
            let mut w =
                csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(std::io::stdout().lock());
            w.write_record(&header)?;
            for j in 0..net.reaction_count() {
                let status = if res.skipped.contains(&j) {
                    "skipped"
                } else if unbalanced.contains(&j) {
                    "unbalanced"
                } else {
                    "balanced"
                };
                w.write_record([j.to_string(), status.to_string()])?;
            }
            w.flush()?;
        }
    }
    if args.require_balanced && !unbalanced.is_empty() {
        bail!("{} unbalanced reaction(s): {}", unbalanced.len(), describe(unbalanced[0]));
    }
    Ok(())
}
