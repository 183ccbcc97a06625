// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] from, in order of precedence,
//! command-line flags, an optional TOML file given by `--config`, and
//! per-subcommand defaults. The resolved config is echoed into the JSON
//! summary. Exit codes: 0 when all checks pass, 1 on a failed check, 2 on
//! bad input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::collective::{self, Branch, DiffusionOptions, NgOptions};
use crate::fock::{self, build_site_ops, DensityMatrix, C64};
use crate::lindblad::{self, build_liouvillian, LindbladError};
use crate::meanfield::{self, BcsParams, MeanFieldError, MomentumGrid};
use crate::opspec::{parse_model, validate, ModelSpec};
use crate::response::{self, SweepRanges};
use crate::symmetry::{self, Verdict};
use crate::SCHEMA_VERSION;

#[derive(Debug, Parser)]
#[command(name = "gaugebench", version, about = "Gauge-invariance workbench for lossy fermion models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact Lindblad evolution of a lattice model.
    Simulate(Overrides),
    /// Symmetry class of a model, checked by simulation.
    Classify(Overrides),
    /// Mean-field BCS dynamics with two-body loss.
    Bcs(Overrides),
    /// Phase-mode sound velocity and diffusion.
    Ngmode(Overrides),
    /// Randomized vertex-identity and gauge-shift sweeps.
    Wtcheck(Overrides),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Classify(_) => "classify",
            Command::Bcs(_) => "bcs",
            Command::Ngmode(_) => "ngmode",
            Command::Wtcheck(_) => "wtcheck",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Simulate(o)
            | Command::Classify(o)
            | Command::Bcs(o)
            | Command::Ngmode(o)
            | Command::Wtcheck(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum InitState {
    /// Empty lattice.
    Vacuum,
    /// Identity over the dimension.
    Mixed,
    /// Random state block-diagonal in particle number.
    Block,
    /// Random full-rank state with coherences between particle numbers.
    Random,
    /// `(|0⟩ + |↑↓ on site 0⟩)/√2`.
    Pair,
}

/// Optional parameters shared by the command line and the TOML config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Model file for the lattice tier.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Final time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    /// Output time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Loss rate; overrides every dissipator rate of a model.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Interaction strength.
    #[arg(long = "U")]
    #[serde(rename = "U")]
    pub coupling: Option<f64>,
    /// Chemical potential.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Number of radial momentum points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Momentum cutoff in units of k_F.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Gap for the phase-mode solver.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub qmin: Option<f64>,
    #[arg(long)]
    pub qmax: Option<f64>,
    #[arg(long)]
    pub qsteps: Option<usize>,
    /// Number of random samples for sweeps.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial state for the lattice tier.
    #[arg(long, value_enum)]
    pub init: Option<InitState>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Overrides {
    fn or(self, other: Overrides) -> Overrides {
        Overrides {
            config: self.config.or(other.config),
            model: self.model.or(other.model),
            t_final: self.t_final.or(other.t_final),
            dt: self.dt.or(other.dt),
            gamma: self.gamma.or(other.gamma),
            coupling: self.coupling.or(other.coupling),
            mu: self.mu.or(other.mu),
            grid: self.grid.or(other.grid),
            cutoff: self.cutoff.or(other.cutoff),
            delta: self.delta.or(other.delta),
            qmin: self.qmin.or(other.qmin),
            qmax: self.qmax.or(other.qmax),
            qsteps: self.qsteps.or(other.qsteps),
            samples: self.samples.or(other.samples),
            seed: self.seed.or(other.seed),
            init: self.init.or(other.init),
            out: self.out.or(other.out),
            format: self.format.or(other.format),
        }
    }
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: Option<PathBuf>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub dt: f64,
    pub gamma: Option<f64>,
    #[serde(rename = "U")]
    pub coupling: Option<f64>,
    pub mu: Option<f64>,
    pub grid: usize,
    pub cutoff: f64,
    pub delta: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub qsteps: usize,
    pub samples: usize,
    pub seed: u64,
    pub init: InitState,
    pub out: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Input(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<LindbladError> for CliError {
    fn from(e: LindbladError) -> Self {
        match e {
            LindbladError::NonConvergence { .. }
            | LindbladError::TraceDrift { .. }
            | LindbladError::Positivity { .. }
            | LindbladError::TooCoarse(_) => CliError::Failed(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MeanFieldError> for CliError {
    fn from(e: MeanFieldError) -> Self {
        match e {
            MeanFieldError::InvalidGrid(_) | MeanFieldError::InvalidInput(_) | MeanFieldError::NoSolution { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<collective::CollectiveError> for CliError {
    fn from(e: collective::CollectiveError) -> Self {
        match e {
            collective::CollectiveError::InvalidInput(_) | collective::CollectiveError::ZeroGap(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

fn load_overrides(path: &Path) -> Result<Overrides, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Input(format!("--{name} must be positive, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<f64, CliError> {
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Input(format!("--{name} must be non-negative, got {x}")))
    }
}

/// Resolves flags, config file and defaults for `command`.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    let flags = command.overrides().clone();
    let file = match &flags.config {
        Some(p) => load_overrides(p)?,
        None => Overrides::default(),
    };
    let o = flags.or(file);
    let name = command.name();
    let lattice = matches!(command, Command::Simulate(_) | Command::Classify(_));
    let default_format = match command {
        Command::Classify(_) | Command::Wtcheck(_) => Format::Json,
        _ => Format::Csv,
    };
    let cfg = RunConfig {
        command: name.to_string(),
        model: o.model,
        t_final: o.t_final.or(matches!(command, Command::Bcs(_)).then_some(100.0)),
        dt: o.dt.unwrap_or(if lattice { 0.05 } else { 0.01 }),
        gamma: o.gamma,
        coupling: o.coupling,
        mu: o.mu,
        grid: o.grid.unwrap_or(512),
        cutoff: o.cutoff.unwrap_or(3.0),
        delta: o.delta.unwrap_or(0.05),
        qmin: o.qmin.unwrap_or(0.001),
        qmax: o.qmax.unwrap_or(0.05),
        qsteps: o.qsteps.unwrap_or(10),
        samples: o.samples.unwrap_or(1000),
        seed: o.seed.unwrap_or(0),
        init: o.init.unwrap_or(InitState::Block),
        out: o.out,
        format: o.format.unwrap_or(default_format),
    };
    positive("dt", cfg.dt)?;
    positive("cutoff", cfg.cutoff)?;
    positive("delta", cfg.delta)?;
    if let Some(t) = cfg.t_final {
        non_negative("T", t)?;
    }
    if let Some(g) = cfg.gamma {
        non_negative("gamma", g)?;
    }
    if cfg.grid == 0 || cfg.qsteps == 0 || cfg.samples == 0 {
        return Err(CliError::Input("--grid, --qsteps and --samples must be at least 1".into()));
    }
    if lattice && cfg.model.is_none() {
        return Err(CliError::Input(format!("{name} needs --model")));
    }
    Ok(cfg)
}

/// Output of one subcommand before it is written.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Value,
    pub csv: Option<Vec<u8>>,
    pub pass: bool,
    pub failures: Vec<String>,
}

fn summary(cfg: &RunConfig, result: Value, failures: &[String]) -> Value {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(cfg.command));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    if let Value::Object(r) = result {
        m.extend(r);
    }
    m.insert("pass".into(), json!(failures.is_empty()));
    m.insert("failures".into(), json!(failures));
    Value::Object(m)
}

fn report(cfg: &RunConfig, result: Value, csv: Option<Vec<u8>>, failures: Vec<String>) -> Report {
    Report { summary: summary(cfg, result, &failures), csv, pass: failures.is_empty(), failures }
}

fn load_model(cfg: &RunConfig) -> Result<ModelSpec, CliError> {
    let path = cfg.model.as_ref().ok_or_else(|| CliError::Input("missing --model".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut spec = parse_model(&text).map_err(|e| CliError::Input(format!("{}:{e}", path.display())))?;
    if let Some(g) = cfg.gamma {
        for d in &mut spec.dissipators {
            d.rate = g;
        }
    }
    if let Some(u) = cfg.coupling {
        spec.interaction = u;
    }
    if let Some(mu) = cfg.mu {
        spec.chemical_potential = mu;
    }
    let issues = validate(&spec);
    if !issues.is_empty() {
        return Err(CliError::Input(format!("{}: {issues}", path.display())));
    }
    Ok(spec)
}

/// Initial density matrix on `num_sites` sites.
pub fn initial_state(init: InitState, num_sites: usize, seed: u64) -> Result<DensityMatrix, CliError> {
    let ops = build_site_ops(num_sites).map_err(|e| CliError::Input(e.to_string()))?;
    let dim = ops.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match init {
        InitState::Vacuum => DensityMatrix::basis_state(dim, 0),
        InitState::Mixed => DensityMatrix::maximally_mixed(dim),
        InitState::Block => fock::random::block_diagonal(&ops.sectors(), &mut rng),
        InitState::Random => fock::random::density(dim, &mut rng),
        InitState::Pair => {
            let mut psi = DVector::from_element(dim, C64::new(0.0, 0.0));
            let s = std::f64::consts::FRAC_1_SQRT_2;
            psi[0] = C64::new(s, 0.0);
            psi[0b11] = C64::new(s, 0.0);
            DensityMatrix::pure(&psi)
        }
    })
}

fn default_time(spec: &ModelSpec) -> f64 {
    let g = spec.dissipators.iter().map(|d| d.rate).fold(0.0, f64::max);
    if g > 0.0 {
        10.0 / g
    } else {
        10.0
    }
}

/// Pairwise agreement required of the three `O_N` evaluations.
pub const ON_AGREEMENT: f64 = 1e-10;

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = load_model(cfg)?;
    let t_final = cfg.t_final.unwrap_or_else(|| default_time(&spec));
    let l = build_liouvillian(&spec)?;
    let rho0 = initial_state(cfg.init, spec.num_sites, cfg.seed)?;
    let traj = lindblad::evolve(&l, &rho0, t_final, cfg.dt)?;
    let continuity = match lindblad::continuity_residual(&traj, &spec) {
        Ok(r) => Some(r),
        Err(LindbladError::UnsupportedDissipator(label)) => {
            log::warn!("continuity residual skipped: `{label}` is not on-site");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, continuity.as_ref()).map_err(|e| CliError::Io(io::Error::other(e)))?;
    let disagreement = traj.on_disagreement();
    let mut failures = Vec::new();
    if disagreement >= ON_AGREEMENT {
        failures.push(format!("O_N evaluations disagree by {disagreement:e}"));
    }
    let class = symmetry::classify_liouvillian(&l);
    let result = json!({
        "T": t_final,
        "steps": traj.records.len() - 1,
        "substeps": traj.substeps,
        "class": class.class,
        "N_drift": traj.n_drift(),
        "ON_drift": traj.on_drift(),
        "ON_max_abs": traj.records.iter().map(|r| r.on_direct.abs()).fold(0.0, f64::max),
        "ON_disagreement": disagreement,
        "continuity_max": continuity.as_ref().map(|c| c.max),
    });
    Ok(report(cfg, result, Some(csv), failures))
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = load_model(cfg)?;
    let t_final = cfg.t_final.unwrap_or_else(|| default_time(&spec));
    let rho0 = initial_state(cfg.init, spec.num_sites, cfg.seed)?;
    let v = symmetry::verify_by_simulation(&spec, &rho0, t_final, cfg.dt)?;
    let mut failures = v.simulation.mismatches.clone();
    if v.simulation.verdict == Verdict::Inconclusive {
        failures.push("drift between the conserved and broken thresholds".into());
    }
    let result = serde_json::to_value(&v).expect("report serializes");
    Ok(report(cfg, result, None, failures))
}

fn momentum_grid(cfg: &RunConfig) -> Result<MomentumGrid, CliError> {
    Ok(MomentumGrid::uniform_3d(cfg.grid, cfg.cutoff, cfg.mu.unwrap_or(0.5), 1.0)?)
}

/// Tolerance on positivity and monotonicity of the mean-field `O_N`.
pub const MF_ON_TOL: f64 = 1e-9;

pub fn cmd_bcs(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = momentum_grid(cfg)?;
    let u = cfg.coupling.unwrap_or(2.5);
    positive("U", u)?;
    let gamma = cfg.gamma.unwrap_or(0.1 * u);
    let t_final = cfg.t_final.unwrap_or(100.0);
    let delta0 = meanfield::solve_gap(u, &grid)?;
    let state = meanfield::init_bcs(delta0, &grid)?;
    let traj = meanfield::evolve_bcs(&state, &grid, &BcsParams::new(u, gamma, cfg.dt, t_final))?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| CliError::Io(io::Error::other(e)))?;
    let on: Vec<f64> = traj.records.iter().map(|r| r.on).collect();
    let on_max = on.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst_decrease = on.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let mut failures = Vec::new();
    if on_max > MF_ON_TOL {
        failures.push(format!("mean-field O_N reached {on_max:e} > 0"));
    }
    if worst_decrease > MF_ON_TOL {
        failures.push(format!("mean-field O_N decreased by {worst_decrease:e}"));
    }
    let first = &traj.records[0];
    let last = traj.records.last().expect("initial record");
    let abs_delta: Vec<f64> = traj.records.iter().map(|r| r.delta.norm()).collect();
    let result = json!({
        "U": u,
        "gamma": gamma,
        "T": t_final,
        "delta0": delta0,
        "substeps": traj.substeps,
        "absDelta_final": last.delta.norm(),
        "absDelta_spread": abs_delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - abs_delta.iter().cloned().fold(f64::INFINITY, f64::min),
        "N_initial": first.n,
        "N_final": last.n,
        "ON_initial": first.on,
        "ON_final": last.on,
        "ON_change": last.on - first.on,
        "ON_max": on_max,
        "ON_worst_decrease": worst_decrease,
        "max_norm_deviation": traj.max_norm_deviation(),
    });
    Ok(report(cfg, result, Some(csv), failures))
}

/// Relative tolerance on the fitted sound velocity.
pub const SOUND_TOL: f64 = 0.01;
/// Relative tolerance on the numeric diffusion coefficient.
pub const DIFFUSION_TOL: f64 = 0.1;

pub fn cmd_ngmode(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = momentum_grid(cfg)?;
    let delta = cfg.delta;
    let qs = collective::q_window(cfg.qmin, cfg.qmax, cfg.qsteps)?;
    let density = response::density_from_greens(delta, &grid).map_err(|e| CliError::Input(e.to_string()))?;
    let gamma_n = match cfg.gamma {
        Some(g) => g * density,
        None => 0.01 * delta,
    };
    let vf = grid.v_fermi();
    let sound = collective::solve_sound_velocity(&qs, delta, &grid, &NgOptions::default())?;
    let vs = collective::sound_velocity_analytic(vf);
    let d_analytic = collective::diffusion_analytic(gamma_n, 1.0, vf, delta)?;
    let opts = DiffusionOptions::default();
    let plus = collective::diffusion_unchecked(&qs, gamma_n, delta, &grid, Branch::Plus, &opts)?;
    let minus = collective::diffusion_unchecked(&qs, gamma_n, delta, &grid, Branch::Minus, &opts)?;
    let converged = plus.points.iter().chain(&minus.points).all(|p| p.rel_change() <= opts.rel_tol);

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(io::Error::other(e));
    w.write_record(["q", "q0_root", "f_q", "D_est", "D_analytic"]).map_err(csv_err)?;
    for ((q, q0), p) in sound.roots.iter().zip(&plus.points) {
        let d_est = gamma_n * p.f_fine / (q * q);
        w.write_record([
            q.to_string(),
            q0.to_string(),
            p.f_fine.to_string(),
            d_est.to_string(),
            d_analytic.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let csv = w.into_inner().map_err(|e| CliError::Io(io::Error::other(e.to_string())))?;

    let rel_vs = (sound.slope - vs).abs() / vs;
    let rel_d = (plus.d - d_analytic).abs() / d_analytic.abs().max(f64::MIN_POSITIVE);
    let mut failures = Vec::new();
    if rel_vs >= SOUND_TOL {
        failures.push(format!("sound velocity off by {rel_vs:e}"));
    }
    if !converged {
        failures.push("first-order quadrature did not converge under refinement".into());
    }
    if rel_d >= DIFFUSION_TOL {
        failures.push(format!("diffusion coefficient off by {rel_d:e}"));
    }
    let dispersion = collective::Dispersion::new(&qs, sound.slope, converged.then_some(plus.d), vs, d_analytic);
    let result = json!({
        "delta": delta,
        "gamma_n": gamma_n,
        "density": density,
        "v_F": vf,
        "v_s_fit": sound.slope,
        "v_s_analytic": vs,
        "D_fit": plus.d,
        "D_fit_minus_branch": minus.d,
        "D_analytic": d_analytic,
        "D_converged": converged,
        "regime_warning": plus.regime_warning,
        "rel_err": { "v_s": rel_vs, "D": rel_d },
        "dispersion": dispersion,
    });
    Ok(report(cfg, result, Some(csv), failures))
}

/// Bound on the vertex-identity residual.
pub const WT_TOL: f64 = 1e-12;
/// Bound on gauge-shift and transversality violations.
pub const GAUGE_TOL: f64 = 1e-14;

pub fn cmd_wtcheck(cfg: &RunConfig) -> Result<Report, CliError> {
    let ranges = SweepRanges::default();
    let wt = response::wt_sweep(cfg.samples, cfg.seed, &ranges);
    let gauge = response::gauge_sweep(cfg.samples, cfg.seed.wrapping_add(1));
    let greens = response::greens_sweep(cfg.samples, cfg.seed.wrapping_add(2), &ranges);
    let mut failures = Vec::new();
    if wt.max_residual >= WT_TOL {
        failures.push(format!("vertex identity residual {:e}", wt.max_residual));
    }
    if gauge.max_gauge_delta >= GAUGE_TOL {
        failures.push(format!("gauge shift changed the current by {:e}", gauge.max_gauge_delta));
    }
    if gauge.max_transversality >= GAUGE_TOL {
        failures.push(format!("q·δJ = {:e}", gauge.max_transversality));
    }
    let result = json!({
        "samples": cfg.samples,
        "max_residual": wt.max_residual,
        "worst_sample": wt.worst,
        "resampled": wt.resampled,
        "gauge_shift_max_delta": gauge.max_gauge_delta,
        "transversality_max": gauge.max_transversality,
        "greens": greens,
    });
    Ok(report(cfg, result, None, failures))
}

/// Runs a parsed command and returns its report.
pub fn execute(command: &Command) -> Result<(RunConfig, Report), CliError> {
    let cfg = resolve(command)?;
    let rep = match command {
        Command::Simulate(_) => cmd_simulate(&cfg)?,
        Command::Classify(_) => cmd_classify(&cfg)?,
        Command::Bcs(_) => cmd_bcs(&cfg)?,
        Command::Ngmode(_) => cmd_ngmode(&cfg)?,
        Command::Wtcheck(_) => cmd_wtcheck(&cfg)?,
    };
    Ok((cfg, rep))
}

/// Writes a report. JSON goes to `--out` when the format is `json` or the
/// command has no table; otherwise the table goes to `--out` (or stdout) and
/// the JSON summary to stdout (or stderr when the table took stdout).
pub fn write_report<O: Write, E: Write>(
    cfg: &RunConfig,
    rep: &Report,
    stdout: &mut O,
    stderr: &mut E,
) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(&rep.summary).expect("summary serializes");
    text.push('\n');
    match (&rep.csv, cfg.format) {
        (Some(csv), Format::Csv) => match &cfg.out {
            Some(p) => {
                fs::write(p, csv)?;
                stdout.write_all(text.as_bytes())
            }
            None => {
                stdout.write_all(csv)?;
                stderr.write_all(text.as_bytes())
            }
        },
        _ => match &cfg.out {
            Some(p) => fs::write(p, text),
            None => stdout.write_all(text.as_bytes()),
        },
    }
}

/// Entry point behind the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (cfg, rep) = match execute(&cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = write_report(&cfg, &rep, &mut io::stdout().lock(), &mut io::stderr().lock()) {
        eprintln!("error: {e}");
        return 2;
    }
    for f in &rep.failures {
        eprintln!("check failed: {f}");
    }
    if rep.pass {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("gaugebench").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_parse() {
        let cli = parse(&["bcs", "--U", "2", "--T", "5", "--gamma", "0.1", "--format", "json"]);
        let cfg = resolve(&cli.command).unwrap();
        assert_eq!(cfg.coupling, Some(2.0));
        assert_eq!(cfg.t_final, Some(5.0));
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.grid, 512);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "U = 3.0\ngrid = 64\nseed = 9\n").unwrap();
        let cli = parse(&["bcs", "--config", path.to_str().unwrap(), "--U", "1.5"]);
        let cfg = resolve(&cli.command).unwrap();
        assert_eq!(cfg.coupling, Some(1.5));
        assert_eq!(cfg.grid, 64);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_config_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "bogus = 1\n").unwrap();
        let cli = parse(&["bcs", "--config", path.to_str().unwrap()]);
        assert_eq!(resolve(&cli.command).unwrap_err().exit_code(), 2);
        let cli = parse(&["bcs", "--dt=-1"]);
        assert_eq!(resolve(&cli.command).unwrap_err().exit_code(), 2);
        let cli = parse(&["simulate"]);
        assert_eq!(resolve(&cli.command).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn initial_states() {
        let ops = build_site_ops(1).unwrap();
        let n = ops.total_number();
        for init in [InitState::Vacuum, InitState::Mixed, InitState::Block] {
            let rho = initial_state(init, 1, 3).unwrap();
            assert!(fock::commutator(&n, &fock::FockOp::from_dense(rho.matrix())).frobenius_norm() < 1e-12);
        }
        let rho = initial_state(InitState::Pair, 1, 0).unwrap();
        assert!((lindblad::observable_on_direct(&rho) + 1.0).abs() < 1e-12);
        let rho = initial_state(InitState::Random, 1, 0).unwrap();
        assert!(lindblad::observable_on_direct(&rho) < -1e-6);
    }

    #[test]
    fn wtcheck_small() {
        let cli = parse(&["wtcheck", "--samples", "50", "--seed", "4"]);
        let (cfg, rep) = execute(&cli.command).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        assert_eq!(rep.summary["schema_version"], 1);
        assert_eq!(rep.summary["config"]["samples"], 50);
        let mut out = Vec::new();
        write_report(&cfg, &rep, &mut out, &mut io::sink()).unwrap();
        let v: Value = serde_json::from_slice(&out).unwrap();
        assert!(v["max_residual"].as_f64().unwrap() < WT_TOL);
    }
}
