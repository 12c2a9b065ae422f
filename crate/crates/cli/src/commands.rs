//! Subcommands. Each one loads its config, runs the core routine, writes CSV
//! and JSON outputs into the run directory and finishes with a manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fbplab_core::barriers::{separating_element, BarrierError, LevelRecord, SeparatingOptions};
use fbplab_core::fbp::analytic::DiffuseStationary;
use fbplab_core::fbp::{
    bd_wave, recommended_r_max, relaxed_solve, squeeze_check, stationary_profile, trapezoid_profile, RelaxedOptions,
};
use fbplab_core::green::KernelVariant;
use fbplab_core::io::{Cell, CsvTable};
use fbplab_core::lattice::{discretize, simulate_lattice, total_mass_series, LatticeState};
use fbplab_core::particles::{hydro_check, run_replicas, simulate_barriers, simulate_basic, ParticleState};
use fbplab_core::profile::CutSide;
use fbplab_core::rng::derive_seed;
use fbplab_core::stats::{folded_normal_moments, mean, variance};
use fbplab_core::variants::{bd_simulate, diffuse_simulate, dr_mean_field, dr_simulate, InjectionLaw, VariantTrajectory};
use fbplab_core::{fbp::analytic::trapezoid_tail, DensityProfile, FluxParams, Grid};

use crate::config::{parse_override, Config};
use crate::rundir::{RunDir, RunRecord, SeedEntry};
use crate::suites::{run_suite, Scale};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "fbplab", version, about = "Free-boundary heat equation with current reservoirs: solvers, simulators, checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; built-in defaults fill the keys it leaves out
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.h=0.005`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (default `runs/<subcommand>`)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Diffuse,
    Bd,
    Dr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Order,
    Barriers,
    Fbp,
    Particles,
    Lattice,
    Variants,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    /// Remove mass from the left end instead of the right
    FlipCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Acceptance,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Separating element by dyadic refinement of the barriers
    Barriers {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: Option<f64>,
        /// Mass of the initial profile
        #[arg(long = "M")]
        mass: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        j: Option<f64>,
    },
    /// ε-relaxed moving-edge solution with window-wise mass restoration
    SolveFbp {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long = "M")]
        mass: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        j: Option<f64>,
    },
    /// Brownian particles with the rightmost sent to the origin, and the barrier triple
    SimulateParticles {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Symmetric exclusion-free lattice gas with current reservoirs
    SimulateLattice {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Related selection models
    Variants {
        #[arg(value_enum)]
        model: Model,
        #[command(flatten)]
        common: Common,
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Total mass on the N³ time scale against reflected Brownian motion
    MassProcess {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Property and acceptance suites
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, value_enum)]
        mutate: Option<Mutation>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: RunRecord,
    pub passed: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Barriers { .. } => "barriers",
            Self::SolveFbp { .. } => "solve-fbp",
            Self::SimulateParticles { .. } => "simulate-particles",
            Self::SimulateLattice { .. } => "simulate-lattice",
            Self::Variants { .. } => "variants",
            Self::MassProcess { .. } => "mass-process",
            Self::Verify { .. } => "verify",
        }
    }
}

const REQUIRED: &[&str] = &["flux.j"];

fn load(defaults: Value, common: &Common, flags: Vec<(&str, Option<Value>)>) -> Result<Config, CliError> {
    let mut overrides: Vec<(String, Value)> = flags
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), json!(s)));
    }
    for s in &common.sets {
        overrides.push(parse_override(s)?);
    }
    Config::load(defaults, REQUIRED, common.config.as_deref(), &overrides)
}

fn out_dir(out: &Option<PathBuf>, name: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| Path::new("runs").join(name))
}

fn flux(cfg: &Config) -> Result<FluxParams, CliError> {
    let j = cfg.positive("flux.j")?;
    FluxParams::new(j).map_err(|e| CliError::ConfigInvalid {
        field: "flux.j".into(),
        reason: e.to_string(),
    })
}

fn grid(cfg: &Config) -> Result<Grid, CliError> {
    let h = cfg.positive("grid.h")?;
    let r = cfg.positive("grid.r_max")?;
    if r < 2.0 * h {
        return Err(CliError::ConfigInvalid {
            field: "grid.r_max".into(),
            reason: format!("{r} is below two cells"),
        });
    }
    Grid::covering(h, r).map_err(|e| CliError::ConfigInvalid {
        field: "grid.h".into(),
        reason: e.to_string(),
    })
}

fn cut_side(cfg: &Config) -> Result<CutSide, CliError> {
    match cfg.str("cut")? {
        "right" => Ok(CutSide::Right),
        "left" => Ok(CutSide::Left),
        other => Err(CliError::ConfigInvalid {
            field: "cut".into(),
            reason: format!("expected right or left, got {other}"),
        }),
    }
}

fn uniform_law(cfg: &Config, key: &str) -> Result<InjectionLaw, CliError> {
    let a = cfg.f64(&format!("{key}.a"))?;
    let b = cfg.f64(&format!("{key}.b"))?;
    let cells = cfg.count(&format!("{key}.cells"))?;
    InjectionLaw::uniform(a, b, cells).map_err(|e| CliError::ConfigInvalid {
        field: key.to_string(),
        reason: e.to_string(),
    })
}

/// `profile.kind` ∈ {stationary, trapezoid, uniform, bd_wave, file}, times `profile.scale`.
fn profile(cfg: &Config, g: Grid, p: FluxParams) -> Result<DensityProfile, CliError> {
    let kind = cfg.str("profile.kind")?;
    let mass = || cfg.positive("profile.mass");
    let u = match kind {
        "stationary" => stationary_profile(mass()?, p, g),
        "trapezoid" => trapezoid_profile(mass()?, p, g),
        "bd_wave" => bd_wave(mass()?, g),
        "uniform" => {
            let m = mass()?;
            let a = cfg.non_negative("profile.a")?;
            let b = cfg.positive("profile.b")?;
            if b <= a {
                return Err(CliError::ConfigInvalid {
                    field: "profile.b".into(),
                    reason: "must exceed profile.a".into(),
                });
            }
            DensityProfile::from_tail_fn(g, |r| m * ((b - r.max(a)) / (b - a)).clamp(0.0, 1.0))
        }
        "file" => {
            let path = cfg.str("profile.path")?;
            DensityProfile::read(Path::new(path)).map_err(|e| CliError::module(path, e))?
        }
        other => {
            return Err(CliError::ConfigInvalid {
                field: "profile.kind".into(),
                reason: format!("unknown kind {other}"),
            })
        }
    };
    let scale = if cfg.has("profile.scale") { cfg.positive("profile.scale")? } else { 1.0 };
    Ok(if scale == 1.0 { u } else { u.scaled(scale) })
}

fn opt_f(x: Option<f64>) -> Option<Value> {
    x.map(|v| json!(v))
}

fn opt_u(x: Option<u64>) -> Option<Value> {
    x.map(|v| json!(v))
}

/// Evenly spaced points `a, ..., b`.
fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![b];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn replica_seeds(label: &str, master: u64, count: usize) -> Vec<SeedEntry> {
    (0..count)
        .map(|r| SeedEntry {
            label: format!("{label}/{r}"),
            seed: derive_seed(master, &[r as u64]),
        })
        .collect()
}

pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Barriers { common, t, mass, tol, j } => {
            let cfg = load(
                json!({
                    "seed": 0,
                    "flux": {"j": 1.0},
                    "grid": {"h": 0.0025, "r_max": 3.0},
                    "profile": {"kind": "stationary", "mass": 1.0},
                    "t": 1.0,
                    "tol": 1e-3,
                    "kappa": 10.0,
                    "depth": {"min": 2, "max": 14},
                    "cut": "right",
                    "variant": "half_line",
                    "exact_dyadic": false,
                }),
                common,
                vec![("t", opt_f(*t)), ("profile.mass", opt_f(*mass)), ("tol", opt_f(*tol)), ("flux.j", opt_f(*j))],
            )?;
            barriers(&cfg, &out_dir(&common.out, "barriers"))
        }
        Command::SolveFbp { common, t_end, mass, epsilon, j } => {
            let cfg = load(
                json!({
                    "seed": 0,
                    "flux": {"j": 1.0},
                    "grid": {"h": 0.005, "r_max": 3.0},
                    "profile": {"kind": "stationary", "mass": 1.0, "scale": 1.2},
                    "T": 1.0,
                    "epsilon": 0.02,
                    "dt": 1e-4,
                    "mass_tol": 1e-9,
                    "squeeze": {"enabled": true, "steps": 64, "kappa": 10.0},
                    "snapshots": {"every": 10},
                }),
                common,
                vec![("T", opt_f(*t_end)), ("profile.mass", opt_f(*mass)), ("epsilon", opt_f(*epsilon)), ("flux.j", opt_f(*j))],
            )?;
            solve_fbp(&cfg, &out_dir(&common.out, "solve-fbp"))
        }
        Command::SimulateParticles { common, n, t, replicas } => {
            let cfg = load(
                json!({
                    "seed": 1,
                    "flux": {"j": 1.0},
                    "grid": {"h": 0.0025, "r_max": 3.0},
                    "profile": {"kind": "stationary", "mass": 1.0},
                    "N": 10000,
                    "replicas": 4,
                    "t": 0.5,
                    "saves": 2,
                    "tails": {"points": 121},
                    "hydro": {"enabled": true, "tol": 0.03, "coverage": 0.95, "sep_tol": 1e-3},
                    "barriers": {"enabled": true, "N": 1000, "delta": 0.05, "windows": 8, "substeps": 32, "runs": 4},
                }),
                common,
                vec![("N", opt_u(*n)), ("t", opt_f(*t)), ("replicas", opt_u(*replicas))],
            )?;
            simulate_particles(&cfg, &out_dir(&common.out, "simulate-particles"))
        }
        Command::SimulateLattice { common, n, t } => {
            let cfg = load(
                json!({
                    "seed": 1,
                    "flux": {"j": 1.0},
                    "N": 64,
                    "M": 1.0,
                    "initial": "trapezoid",
                    "t": 0.05,
                    "time_scale": "N3",
                    "saves": 4,
                    "replicas": 2,
                }),
                common,
                vec![("N", opt_u(*n)), ("t", opt_f(*t))],
            )?;
            simulate_lattice_cmd(&cfg, &out_dir(&common.out, "simulate-lattice"))
        }
        Command::Variants { model, common, n, t } => {
            let cfg = load(
                json!({
                    "seed": 1,
                    "flux": {"j": 1.0},
                    "N": 2000,
                    "t": 1.0,
                    "saves": 4,
                    "grid": {"h": 0.005, "r_max": 6.0},
                    "tails": {"points": 121},
                    "law": {"a": 0.0, "b": 0.4, "cells": 8},
                    "kappa": {"a": -0.5, "b": 1.0, "cells": 15},
                    "meanfield": {"delta": 1e-3},
                }),
                common,
                vec![("N", opt_u(*n)), ("t", opt_f(*t))],
            )?;
            let name = match model {
                Model::Diffuse => "diffuse",
                Model::Bd => "bd",
                Model::Dr => "dr",
            };
            variants(&cfg, *model, &out_dir(&common.out, &format!("variants-{name}")))
        }
        Command::MassProcess { common, n, t, replicas } => {
            let cfg = load(
                json!({
                    "seed": 1,
                    "flux": {"j": 1.0},
                    "N": 64,
                    "M": 1.0,
                    "t": 0.05,
                    "replicas": 400,
                    "path_points": 8,
                    "tolerance": 0.15,
                }),
                common,
                vec![("N", opt_u(*n)), ("t", opt_f(*t)), ("replicas", opt_u(*replicas))],
            )?;
            mass_process(&cfg, &out_dir(&common.out, "mass-process"))
        }
        Command::Verify { suite, mutate, seed, out, scale } => {
            let name = match suite {
                Suite::Order => "order",
                Suite::Barriers => "barriers",
                Suite::Fbp => "fbp",
                Suite::Particles => "particles",
                Suite::Lattice => "lattice",
                Suite::Variants => "variants",
                Suite::All => "all",
            };
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Acceptance => Scale::Acceptance,
            };
            verify(name, scale, *seed, mutate.is_some(), &out_dir(out, &format!("verify-{name}")))
        }
    }
}

fn level_table(levels: &[LevelRecord]) -> CsvTable {
    let mut t = CsvTable::new(&["level", "delta", "gap_L1", "gap_sup", "mass_upper", "mass_lower", "refinement_defect"]);
    for l in levels {
        t.row(&[
            Cell::U(u64::from(l.level)),
            Cell::F(l.delta),
            Cell::F(l.gap_l1),
            Cell::F(l.gap_sup),
            Cell::F(l.mass_upper),
            Cell::F(l.mass_lower),
            Cell::F(l.refinement_defect),
        ]);
    }
    t
}

fn barriers(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let p = flux(cfg)?;
    let g = grid(cfg)?;
    let u = profile(cfg, g, p)?;
    let t = cfg.positive("t")?;
    let tol = cfg.positive("tol")?;
    let kappa = cfg.non_negative("kappa")?;
    let variant = match cfg.str("variant")? {
        "half_line" => KernelVariant::HalfLine,
        "interval" => KernelVariant::Interval,
        other => {
            return Err(CliError::ConfigInvalid {
                field: "variant".into(),
                reason: format!("expected half_line or interval, got {other}"),
            })
        }
    };
    let opts = SeparatingOptions {
        min_depth: cfg.u64("depth.min")? as u32,
        max_depth: cfg.u64("depth.max")? as u32,
        variant,
        cut_side: cut_side(cfg)?,
        exact_dyadic: cfg.bool("exact_dyadic")?,
    };
    let mut dir = RunDir::create(out)?;
    let (levels, summary, passed) = match separating_element(&u, t, tol, p, &opts) {
        Ok(res) => {
            dir.write("separating.csv", res.profile.to_csv_string().as_bytes())?;
            dir.write_json("separating.json", &res.profile.sidecar())?;
            let gap = res.levels.last().map_or(f64::NAN, |l| l.gap_sup);
            let bound = tol + kappa * g.h();
            let summary = json!({
                "levels": res.n_levels,
                "final_gap_sup": gap,
                "final_gap_l1": res.levels.last().map_or(f64::NAN, |l| l.gap_l1),
                "bound": bound,
                "l1_to_initial": res.profile.l1_distance(&u),
                "mass": res.profile.total_mass(),
            });
            (res.levels, summary, gap <= bound)
        }
        Err(BarrierError::NoConvergence { levels, gap, depth, .. }) => {
            log::warn!("no convergence at depth {depth}: gap {gap:e}");
            (levels, json!({ "converged": false, "final_gap_sup": gap, "depth": depth }), false)
        }
        Err(e) => return Err(CliError::module("barriers", e)),
    };
    dir.write("levels.csv", level_table(&levels).as_str().as_bytes())?;
    let seed = cfg.u64("seed")?;
    let record = dir.finish("barriers", cfg.snapshot(), seed, vec![], 0, summary, passed)?;
    Ok(Outcome { record, passed })
}

fn solve_fbp(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let p = flux(cfg)?;
    let g = grid(cfg)?;
    let u0 = profile(cfg, g, p)?;
    let t_end = cfg.positive("T")?;
    let eps = cfg.positive("epsilon")?;
    let opts = RelaxedOptions {
        dt: cfg.positive("dt")?,
        mass_tol: cfg.positive("mass_tol")?,
        ..Default::default()
    };
    let need = recommended_r_max(u0.support_end(), t_end);
    let u0 = if g.r_max() < need {
        u0.padded(Grid::covering(g.h(), need).map_err(|e| CliError::module("grid", e))?.n())
    } else {
        u0
    };
    let sol = relaxed_solve(&u0, t_end, eps, p, &opts).map_err(|e| CliError::module("solve-fbp", e))?;
    let mut dir = RunDir::create(out)?;

    let mut edge = CsvTable::new(&["t", "x", "velocity"]);
    let vel = sol.edge.velocities();
    for (k, &x) in sol.edge.nodes().iter().enumerate() {
        let v = vel.get(k).copied().unwrap_or(f64::NAN);
        edge.row(&[Cell::F(k as f64 * sol.window), Cell::F(x), Cell::F(v)]);
    }
    dir.write("edge.csv", edge.as_str().as_bytes())?;

    let run = &sol.run;
    let mut mass = CsvTable::new(&["t", "mass", "edge", "flux", "lost"]);
    for (k, lost) in run.lost_series().into_iter().enumerate() {
        mass.row(&[Cell::F(run.times[k]), Cell::F(run.mass[k]), Cell::F(run.edge[k]), Cell::F(run.flux[k]), Cell::F(lost)]);
    }
    dir.write("mass.csv", mass.as_str().as_bytes())?;

    let every = cfg.count("snapshots.every")?;
    let last = run.snapshots.len().saturating_sub(1);
    let mut snaps = CsvTable::new(&["t", "r", "value"]);
    for (k, (t, s)) in run.snapshots.iter().enumerate() {
        if k % every != 0 && k != last {
            continue;
        }
        let sg = s.grid();
        for (i, &v) in s.values().iter().enumerate().take(s.active_len()) {
            snaps.row(&[Cell::F(*t), Cell::F(sg.center(i)), Cell::F(v)]);
        }
    }
    dir.write("snapshots.csv", snaps.as_str().as_bytes())?;

    let m0 = run.mass[0];
    let excursion = run.mass.iter().fold(0.0f64, |a, m| a.max((m - m0).abs()));
    let windows = sol.edge.nodes().len() - 1;
    let restore = (1..=windows)
        .map(|k| (run.mass_at(k as f64 * sol.window) - m0).abs())
        .fold(0.0f64, f64::max);
    let mut passed = excursion <= eps + 1e-4 && restore <= 1e-6;
    let mut summary = json!({
        "windows": windows,
        "window": sol.window,
        "max_mass_excursion": excursion,
        "max_restoration_error": restore,
        "max_loss_excursion": sol.max_excursion,
        "clip_mass": run.clip_mass,
    });
    if cfg.bool("squeeze.enabled")? {
        let delta = t_end / cfg.count("squeeze.steps")? as f64;
        let sq = squeeze_check(&sol, &u0, t_end, delta, p, cfg.non_negative("squeeze.kappa")?);
        passed &= sq.pass;
        summary["squeeze"] = json!({
            "delta": delta,
            "modulus": sq.modulus,
            "lower_violation": sq.lower_violation,
            "upper_violation": sq.upper_violation,
            "pass": sq.pass,
        });
    }
    let seed = cfg.u64("seed")?;
    let record = dir.finish("solve-fbp", cfg.snapshot(), seed, vec![], 0, summary, passed)?;
    Ok(Outcome { record, passed })
}

fn tails_rows(table: &mut CsvTable, state: &ParticleState, rs: &[f64], replica: Option<usize>) {
    for &r in rs {
        let mut row = vec![Cell::F(state.time), Cell::F(r), Cell::F(state.tail(r))];
        if let Some(k) = replica {
            row.push(Cell::U(k as u64));
        }
        table.row(&row);
    }
}

fn simulate_particles(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let p = flux(cfg)?;
    let g = grid(cfg)?;
    let raw = profile(cfg, g, p)?;
    // particles carry mass 1/N each
    let rho0 = raw.scaled(1.0 / raw.total_mass());
    let n = cfg.count("N")?;
    let reps = cfg.count("replicas")?;
    let t = cfg.positive("t")?;
    let saves = linspace(t / cfg.count("saves")? as f64, t, cfg.count("saves")?);
    let rs = linspace(0.0, g.r_max(), cfg.count("tails.points")?);
    let seed = cfg.u64("seed")?;
    let hydro_master = derive_seed(seed, &[0]);
    let barrier_master = derive_seed(seed, &[1]);

    let runs = run_replicas(reps, hydro_master, |_, s| simulate_basic(n, &rho0, p, t, &saves, s));
    let runs: Vec<_> = runs
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::module("simulate-particles", e))?;
    let mut dir = RunDir::create(out)?;
    let mut tails = CsvTable::new(&["t", "r", "fraction", "replica"]);
    for (k, tr) in runs.iter().enumerate() {
        for s in &tr.snapshots {
            tails_rows(&mut tails, s, &rs, Some(k));
        }
    }
    dir.write("empirical_tails.csv", tails.as_str().as_bytes())?;
    let mut events: u64 = runs.iter().map(|r| r.events).sum();
    let mut seeds = replica_seeds("hydro", hydro_master, reps);
    let mut passed = true;
    let mut summary = json!({ "N": n, "replicas": reps, "events": events });

    if cfg.bool("hydro.enabled")? {
        let sep = separating_element(&rho0, t, cfg.positive("hydro.sep_tol")?, p, &SeparatingOptions::default())
            .map_err(|e| CliError::module("reference profile", e))?;
        let finals: Vec<ParticleState> = runs.iter().map(|r| r.snapshots.last().expect("final").clone()).collect();
        let rep = hydro_check(&finals, &sep.profile, cfg.positive("hydro.tol")?, cfg.positive("hydro.coverage")?);
        let mut table = CsvTable::new(&["replica", "t", "sup_distance"]);
        for (k, d) in rep.distances.iter().enumerate() {
            table.row(&[Cell::U(k as u64), Cell::F(t), Cell::F(*d)]);
        }
        dir.write("hydro.csv", table.as_str().as_bytes())?;
        dir.write("reference.csv", sep.profile.to_csv_string().as_bytes())?;
        dir.write_json("reference.json", &sep.profile.sidecar())?;
        passed &= rep.pass;
        summary["hydro"] = json!({
            "median": rep.median, "q95": rep.q95, "fraction_within": rep.fraction_within,
            "tol": rep.tol, "pass": rep.pass,
        });
    }
    if cfg.bool("barriers.enabled")? {
        let bn = cfg.count("barriers.N")?;
        let delta = cfg.positive("barriers.delta")?;
        let windows = cfg.count("barriers.windows")?;
        let substeps = cfg.count("barriers.substeps")?;
        let bruns = cfg.count("barriers.runs")?;
        let res = run_replicas(bruns, barrier_master, |_, s| simulate_barriers(bn, &rho0, p, delta, windows, substeps, s));
        let res: Vec<_> = res
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::module("particle barriers", e))?;
        let mut table = CsvTable::new(&["run", "window", "t", "events", "lower_ok", "upper_ok", "degenerate"]);
        let mut ok_runs = 0;
        for (k, tr) in res.iter().enumerate() {
            let mut ok = true;
            for f in &tr.flags {
                ok &= f.lower_ok && f.upper_ok.unwrap_or(true);
                events += f.events as u64;
                let upper = f.upper_ok.map_or(Cell::S("na".into()), Cell::B);
                table.row(&[
                    Cell::U(k as u64),
                    Cell::U(f.window as u64),
                    Cell::F(f.time),
                    Cell::U(f.events as u64),
                    Cell::B(f.lower_ok),
                    upper,
                    Cell::B(f.degenerate),
                ]);
            }
            ok_runs += usize::from(ok);
        }
        dir.write("barrier_flags.csv", table.as_str().as_bytes())?;
        passed &= ok_runs == bruns;
        seeds.extend(replica_seeds("barriers", barrier_master, bruns));
        summary["barriers"] = json!({ "runs": bruns, "ordered_runs": ok_runs });
    }
    let record = dir.finish("simulate-particles", cfg.snapshot(), seed, seeds, events, summary, passed)?;
    Ok(Outcome { record, passed })
}

fn lattice_start(cfg: &Config, n: usize, p: FluxParams) -> Result<LatticeState, CliError> {
    let occ = match cfg.str("initial")? {
        "trapezoid" => {
            let m = cfg.positive("M")?;
            discretize(n, |r| trapezoid_tail(m, p, r))
        }
        "empty" => vec![0; n + 1],
        other => {
            return Err(CliError::ConfigInvalid {
                field: "initial".into(),
                reason: format!("expected trapezoid or empty, got {other}"),
            })
        }
    };
    LatticeState::new(occ).map_err(|e| CliError::module("lattice", e))
}

fn lattice_size(cfg: &Config) -> Result<usize, CliError> {
    let n = cfg.usize("N")?;
    if n < 3 {
        return Err(CliError::ConfigInvalid {
            field: "N".into(),
            reason: "need at least 3 sites".into(),
        });
    }
    Ok(n)
}

fn simulate_lattice_cmd(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let p = flux(cfg)?;
    let n = lattice_size(cfg)?;
    let nf = n as f64;
    let t = cfg.positive("t")?;
    let scale = match cfg.str("time_scale")? {
        "N2" => nf * nf,
        "N3" => nf.powi(3),
        other => {
            return Err(CliError::ConfigInvalid {
                field: "time_scale".into(),
                reason: format!("expected N2 or N3, got {other}"),
            })
        }
    };
    let xi0 = lattice_start(cfg, n, p)?;
    let micro_saves: Vec<f64> = linspace(t / cfg.count("saves")? as f64, t, cfg.count("saves")?)
        .into_iter()
        .map(|s| s * scale)
        .collect();
    let reps = cfg.count("replicas")?;
    let seed = cfg.u64("seed")?;
    let runs = run_replicas(reps, seed, |_, s| simulate_lattice(&xi0, p, t * scale, &micro_saves, s));
    let runs: Vec<_> = runs
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::module("simulate-lattice", e))?;
    let mut dir = RunDir::create(out)?;
    let mut occ = CsvTable::new(&["replica", "t", "x", "xi"]);
    let mut mass = CsvTable::new(&["replica", "t", "mass"]);
    let mut events = 0;
    for (k, tr) in runs.iter().enumerate() {
        for s in std::iter::once(&xi0).chain(tr.snapshots.iter()) {
            for (x, &c) in s.occupation.iter().enumerate() {
                occ.row(&[Cell::U(k as u64), Cell::F(s.time / scale), Cell::U(x as u64), Cell::U(c)]);
            }
        }
        for (tm, m) in total_mass_series(tr) {
            mass.row(&[Cell::U(k as u64), Cell::F(tm / scale), Cell::F(m as f64 / nf)]);
        }
        events += tr.bulk_events + tr.reservoir.len() as u64;
    }
    dir.write("occupancy.csv", occ.as_str().as_bytes())?;
    dir.write("mass.csv", mass.as_str().as_bytes())?;
    let finals: Vec<f64> = runs
        .iter()
        .map(|tr| tr.snapshots.last().map_or(0.0, |s| s.total() as f64 / nf))
        .collect();
    let summary = json!({ "N": n, "micro_time": t * scale, "final_mass_mean": mean(&finals) });
    let record = dir.finish(
        "simulate-lattice",
        cfg.snapshot(),
        seed,
        replica_seeds("replica", seed, reps),
        events,
        summary,
        true,
    )?;
    Ok(Outcome { record, passed: true })
}

fn variant_outputs(dir: &mut RunDir, tr: &VariantTrajectory, points: usize) -> Result<(), CliError> {
    let lo = tr.snapshots.iter().map(|s| s.positions()[0]).fold(f64::INFINITY, f64::min).floor();
    let hi = tr
        .snapshots
        .iter()
        .map(|s| s.positions()[s.len() - 1])
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    let rs = linspace(lo, hi.max(lo + 1.0), points);
    let mut tails = CsvTable::new(&["t", "r", "fraction"]);
    for s in &tr.snapshots {
        tails_rows(&mut tails, s, &rs, None);
    }
    dir.write("tails.csv", tails.as_str().as_bytes())?;
    let mut edges = CsvTable::new(&["t", "min", "median", "max"]);
    for e in &tr.edges {
        edges.row(&[Cell::F(e.time), Cell::F(e.min), Cell::F(e.median), Cell::F(e.max)]);
    }
    dir.write("edges.csv", edges.as_str().as_bytes())
}

fn variants(cfg: &Config, model: Model, out: &Path) -> Result<Outcome, CliError> {
    let g = grid(cfg)?;
    let n = cfg.count("N")?;
    let t = cfg.positive("t")?;
    let saves = linspace(t / cfg.count("saves")? as f64, t, cfg.count("saves")?);
    let seed = cfg.u64("seed")?;
    let points = cfg.count("tails.points")?;
    let mut dir = RunDir::create(out)?;
    let mut summary = json!({ "N": n, "t": t });
    let (name, tr) = match model {
        Model::Diffuse => {
            let f = uniform_law(cfg, "law")?;
            if f.pieces().first().is_some_and(|p| p.0 < 0.0) {
                return Err(CliError::ConfigInvalid {
                    field: "law.a".into(),
                    reason: "injection must be on the half-line".into(),
                });
            }
            let st = DiffuseStationary::new(1.0, &f);
            let rho = st.profile(g);
            let tr = diffuse_simulate(n, &rho, &f, t, &saves, seed).map_err(|e| CliError::module("diffuse", e))?;
            let d = tr.snapshots.last().map_or(f64::NAN, |s| s.sup_tail_distance(&rho));
            summary["stationary_edge"] = json!(st.edge);
            summary["sup_distance_to_stationary"] = json!(d);
            ("variants-diffuse", tr)
        }
        Model::Bd => {
            let rho = bd_wave(1.0, g);
            let tr = bd_simulate(n, &rho, t, &saves, seed).map_err(|e| CliError::module("bd", e))?;
            if let (Some(a), Some(b)) = (tr.edges.first(), tr.edges.last()) {
                if b.time > a.time {
                    summary["median_speed"] = json!((b.median - a.median) / (b.time - a.time));
                }
            }
            ("variants-bd", tr)
        }
        Model::Dr => {
            let kappa = uniform_law(cfg, "kappa")?;
            let rho = DensityProfile::from_tail_fn(g, |r| (2.0 - r.max(1.0)).clamp(0.0, 1.0));
            let tr = dr_simulate(n, &rho, &kappa, t, &saves, seed).map_err(|e| CliError::module("dr", e))?;
            let mf = dr_mean_field(&rho, &kappa, t, cfg.positive("meanfield.delta")?)
                .map_err(|e| CliError::module("dr mean field", e))?;
            dir.write("meanfield.csv", mf.profile.to_csv_string().as_bytes())?;
            dir.write_json("meanfield.json", &mf.profile.sidecar())?;
            let d = tr.snapshots.last().map_or(f64::NAN, |s| s.sup_tail_distance(&mf.profile));
            summary["sup_distance_to_mean_field"] = json!(d);
            summary["mean_field_lost"] = json!(mf.lost);
            ("variants-dr", tr)
        }
    };
    variant_outputs(&mut dir, &tr, points)?;
    let record = dir.finish(name, cfg.snapshot(), seed, vec![], tr.events, summary, true)?;
    Ok(Outcome { record, passed: true })
}

fn mass_process(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let p = flux(cfg)?;
    let n = lattice_size(cfg)?;
    let nf = n as f64;
    let m = cfg.positive("M")?;
    let t = cfg.positive("t")?;
    let reps = cfg.count("replicas")?;
    if reps < 2 {
        return Err(CliError::ConfigInvalid {
            field: "replicas".into(),
            reason: "need at least 2 for a variance".into(),
        });
    }
    let points = cfg.count("path_points")?;
    let tolerance = cfg.positive("tolerance")?;
    let seed = cfg.u64("seed")?;
    let xi0 = LatticeState::new(discretize(n, |r| trapezoid_tail(m, p, r))).map_err(|e| CliError::module("lattice", e))?;
    let micro = nf.powi(3) * t;
    let saves: Vec<f64> = linspace(micro / points as f64, micro, points);
    let runs = run_replicas(reps, seed, |_, s| simulate_lattice(&xi0, p, micro, &saves, s));
    let runs: Vec<_> = runs
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::module("mass-process", e))?;
    let mut dir = RunDir::create(out)?;
    let m0 = xi0.total() as f64 / nf;
    let mut paths = CsvTable::new(&["replica", "t", "mass"]);
    let mut events = 0;
    for (k, tr) in runs.iter().enumerate() {
        paths.row(&[Cell::U(k as u64), Cell::F(0.0), Cell::F(m0)]);
        for s in &tr.snapshots {
            paths.row(&[Cell::U(k as u64), Cell::F(s.time / nf.powi(3)), Cell::F(s.total() as f64 / nf)]);
        }
        events += tr.bulk_events + tr.reservoir.len() as u64;
    }
    dir.write("mass_paths.csv", paths.as_str().as_bytes())?;
    let finals: Vec<f64> = runs
        .iter()
        .map(|tr| tr.snapshots.last().map_or(0.0, |s| s.total() as f64 / nf))
        .collect();
    // |ξ| is a ±1 walk with rate j/N per direction, so Var(|ξ_{N³t}|/N) → 2jt before folding
    let (e1, e2) = folded_normal_moments(m0, (2.0 * p.j * t).sqrt());
    let oracle = e2 - e1 * e1;
    let var = variance(&finals);
    let rel = (var / oracle - 1.0).abs();
    let passed = rel <= tolerance;
    let summary = json!({
        "N": n, "t": t, "replicas": reps, "initial_mass": m0,
        "mean": mean(&finals), "oracle_mean": e1,
        "variance": var, "oracle_variance": oracle, "relative_error": rel, "tolerance": tolerance,
    });
    let record = dir.finish("mass-process", cfg.snapshot(), seed, replica_seeds("replica", seed, reps), events, summary, passed)?;
    Ok(Outcome { record, passed })
}

fn verify(suite: &str, scale: Scale, seed: u64, flip_cut: bool, out: &Path) -> Result<Outcome, CliError> {
    let cut = if flip_cut { CutSide::Left } else { CutSide::Right };
    let checks = run_suite(suite, scale, seed, cut).ok_or_else(|| CliError::ConfigInvalid {
        field: "suite".into(),
        reason: format!("unknown suite {suite}"),
    })?;
    let passed = checks.iter().all(|c| c.pass);
    let mut dir = RunDir::create(out)?;
    let report = json!({
        "suite": suite,
        "scale": scale,
        "master_seed": seed,
        "mutation": if flip_cut { "flip-cut" } else { "none" },
        "pass": passed,
        "checks": checks,
    });
    dir.write_json("report.json", &report)?;
    let mut table = CsvTable::new(&["suite", "check", "pass", "metric", "threshold"]);
    for c in &checks {
        table.row(&[
            Cell::S(c.suite.clone()),
            Cell::S(c.name.clone()),
            Cell::B(c.pass),
            Cell::F(c.metric),
            Cell::F(c.threshold),
        ]);
    }
    dir.write("checks.csv", table.as_str().as_bytes())?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    let config = json!({ "suite": suite, "scale": scale, "mutation": flip_cut });
    let summary = json!({ "checks": checks.len(), "failed": failed });
    let record = dir.finish("verify", &config, seed, vec![], 0, summary, passed)?;
    Ok(Outcome { record, passed })
}
