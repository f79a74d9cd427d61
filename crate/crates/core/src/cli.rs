//! Command-line front end: key=value run configurations, seeded dispatch to
//! the simulation modules, and deterministic CSV/JSON emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cone::{convergence_diagnostic, ConeEngine, ConeError, ConeSetup};
use crate::gmc::{ball_masses, gmc_measure, scaling_exponent, synthesize_lgf, GmcError, Lattice, Statistic};
use crate::langevin::{companion_system, mixing_profile, LangevinError};
use crate::lbm::{lbm_from_clock, spec_dim_estimate, ClockField, EnsembleSetup, LbmError};
use crate::params::{ParamError, Params};
use crate::sphavg::{deriv_autocov, output_grid, simulate_repr, simulate_sde, variance_increment, RadialSample, SphError};
use crate::stats::var;
use crate::stochastic::{sample_brownian, uniform_grid, RngSeed, StochasticError};

pub const COMMANDS: [&str; 6] = ["sphavg", "specdim", "gmc", "lbm", "mixing", "cone"];

pub const USAGE: &str = "usage: lgf-lab <command> [--config PATH] [--seed N] [--threads N] [--out DIR] [--tolerance-scale X] [--method repr|sde|both] [--set key=value]...
commands: sphavg specdim gmc lbm mixing cone
environment: LGFLAB_SEED supplies the seed when neither --seed nor the config sets one";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown command {0:?}")]
    UnknownCommand(String),
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    Value { key: String, value: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sph(#[from] SphError),
    #[error(transparent)]
    Gmc(#[from] GmcError),
    #[error(transparent)]
    Lbm(#[from] LbmError),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
}

impl CliError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownCommand(_) => "unknown_command",
            Self::Syntax { .. } | Self::UnknownKey(_) | Self::Value { .. } | Self::Invalid(_) => "config",
            Self::Io(_) => "io",
            Self::Param(_) => "params",
            Self::Sph(_) => "sphavg",
            Self::Gmc(_) => "gmc",
            Self::Lbm(_) => "lbm",
            Self::Langevin(_) => "langevin",
            Self::Cone(_) => "cone",
            Self::Stochastic(_) => "stochastic",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

/// Which radial simulators `sphavg` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimChoice {
    Repr,
    Sde,
    Both,
}

impl SimChoice {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "repr" => Some(Self::Repr),
            "sde" => Some(Self::Sde),
            "both" => Some(Self::Both),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Repr => "repr",
            Self::Sde => "sde",
            Self::Both => "both",
        }
    }
}

/// Full description of one run. `out` and `threads` affect where and how
/// fast, never what: they are excluded from the input hash and file headers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub d: u32,
    pub gamma: f64,
    pub beta: f64,
    pub t_max: f64,
    pub h: f64,
    pub cutoff: f64,
    pub method: SimChoice,
    pub lattice_n: usize,
    pub side: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub reps: usize,
    pub paths: usize,
    pub radius: f64,
    pub b: f64,
    pub b_list: Vec<f64>,
    pub probes: Vec<f64>,
    pub chi_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub radii: Vec<f64>,
    pub seed: Option<u64>,
    pub tolerance_scale: f64,
    pub threads: usize,
    pub out: PathBuf,
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Desk-scale defaults for `command`.
    pub fn defaults(command: &str) -> Result<Self, CliError> {
        if !COMMANDS.contains(&command) {
            return Err(CliError::UnknownCommand(command.to_string()));
        }
        let mut c = Self {
            command: command.to_string(),
            d: 4,
            gamma: 1.0,
            beta: 0.0,
            t_max: 5.0,
            h: 0.01,
            cutoff: 15.0,
            method: SimChoice::Both,
            lattice_n: 32,
            side: 4.0,
            epsilon: 0.25,
            steps: 200,
            reps: 200,
            paths: 16,
            radius: 1.0,
            b: 20.0,
            b_list: vec![5.0, 10.0, 20.0],
            probes: vec![-1.0, 1.0, 2.0],
            chi_list: vec![-0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4],
            t_list: vec![0.02, 0.04, 0.08],
            radii: vec![0.125, 0.25, 0.5],
            seed: None,
            tolerance_scale: 1.0,
            threads: 0,
            out: PathBuf::from("lgf-out"),
        };
        match command {
            "gmc" => {
                c.d = 2;
                c.lattice_n = 64;
                c.epsilon = 0.125;
                c.reps = 8;
            }
            "lbm" => {
                c.d = 2;
                c.lattice_n = 64;
                c.epsilon = 0.125;
                c.t_max = 0.25;
                c.steps = 2000;
            }
            "specdim" => {
                c.d = 2;
                c.lattice_n = 32;
                c.epsilon = 0.25;
                c.reps = 4;
                c.paths = 16;
                c.steps = 32;
            }
            "mixing" => {
                c.t_max = 20.0;
                c.h = 0.5;
                c.reps = 20;
            }
            "cone" => {
                c.beta = 2.5;
                c.h = 0.02;
                c.reps = 100;
                c.t_max = 2.0;
            }
            _ => {}
        }
        Ok(c)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = || CliError::Value { key: key.to_string(), value: value.to_string() };
        let f = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let u = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let list = |v: &str| -> Result<Vec<f64>, CliError> {
            if v.trim().is_empty() {
                return Ok(vec![]);
            }
            v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        match key {
            "command" => {
                if !COMMANDS.contains(&value) {
                    return Err(CliError::UnknownCommand(value.to_string()));
                }
                self.command = value.to_string();
            }
            "d" => self.d = value.trim().parse().map_err(|_| bad())?,
            "gamma" => self.gamma = f(value)?,
            "beta" => self.beta = f(value)?,
            "t_max" => self.t_max = f(value)?,
            "h" => self.h = f(value)?,
            "cutoff" => self.cutoff = f(value)?,
            "method" => self.method = SimChoice::parse(value.trim()).ok_or_else(bad)?,
            "lattice_n" => self.lattice_n = u(value)?,
            "side" => self.side = f(value)?,
            "epsilon" => self.epsilon = f(value)?,
            "steps" => self.steps = u(value)?,
            "reps" => self.reps = u(value)?,
            "paths" => self.paths = u(value)?,
            "radius" => self.radius = f(value)?,
            "b" => self.b = f(value)?,
            "b_list" => self.b_list = list(value)?,
            "probes" => self.probes = list(value)?,
            "chi_list" => self.chi_list = list(value)?,
            "t_list" => self.t_list = list(value)?,
            "radii" => self.radii = list(value)?,
            "seed" => self.seed = Some(value.trim().parse().map_err(|_| bad())?),
            "tolerance_scale" => self.tolerance_scale = f(value)?,
            "threads" => self.threads = u(value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(CliError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses `key=value` lines (blank lines and `#` comments ignored);
    /// `command` must come first or be supplied through `fallback_command`.
    pub fn parse(text: &str, fallback_command: Option<&str>) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(CliError::Syntax { line: i + 1, text: raw.to_string() })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let command = pairs
            .iter()
            .find(|(k, _)| k == "command")
            .map(|(_, v)| v.as_str())
            .or(fallback_command)
            .ok_or_else(|| CliError::Invalid("no command given".into()))?;
        let mut c = Self::defaults(command)?;
        for (k, v) in &pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    fn entries(&self, with_runtime: bool) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("command", self.command.clone()),
            ("d", self.d.to_string()),
            ("gamma", self.gamma.to_string()),
            ("beta", self.beta.to_string()),
            ("t_max", self.t_max.to_string()),
            ("h", self.h.to_string()),
            ("cutoff", self.cutoff.to_string()),
            ("method", self.method.name().to_string()),
            ("lattice_n", self.lattice_n.to_string()),
            ("side", self.side.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("steps", self.steps.to_string()),
            ("reps", self.reps.to_string()),
            ("paths", self.paths.to_string()),
            ("radius", self.radius.to_string()),
            ("b", self.b.to_string()),
            ("b_list", fmt_list(&self.b_list)),
            ("probes", fmt_list(&self.probes)),
            ("chi_list", fmt_list(&self.chi_list)),
            ("t_list", fmt_list(&self.t_list)),
            ("radii", fmt_list(&self.radii)),
        ];
        if let Some(s) = self.seed {
            e.push(("seed", s.to_string()));
        }
        e.push(("tolerance_scale", self.tolerance_scale.to_string()));
        if with_runtime {
            e.push(("threads", self.threads.to_string()));
            e.push(("out", self.out.display().to_string()));
        }
        e
    }

    /// Renders the configuration as `key=value` lines; `parse` inverts it.
    pub fn render(&self) -> String {
        self.entries(true).into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of everything that determines the emitted data.
    pub fn input_hash(&self) -> String {
        let text: String = self.entries(false).into_iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn params(&self) -> Result<Params, CliError> {
        Ok(Params::new(self.d, self.gamma, self.beta)?)
    }

    pub fn rng_seed(&self) -> RngSeed {
        RngSeed::new(self.seed.unwrap_or(0), 0)
    }

    /// Checks the settings every command relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        let pos =
            |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(CliError::Invalid(format!("{name} = {v} must be positive"))) };
        pos("h", self.h)?;
        pos("t_max", self.t_max)?;
        pos("side", self.side)?;
        pos("epsilon", self.epsilon)?;
        pos("radius", self.radius)?;
        pos("tolerance_scale", self.tolerance_scale)?;
        if self.reps == 0 || self.steps == 0 || self.paths == 0 {
            return Err(CliError::Invalid("reps, steps and paths must be positive".into()));
        }
        Ok(())
    }
}

/// Files written by one command, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

struct Emitter<'a> {
    cfg: &'a RunConfig,
    params: Params,
    files: Vec<PathBuf>,
}

impl Emitter<'_> {
    fn header(&self) -> String {
        let p = &self.params;
        let mut h = format!("# lgf-lab {} {}\n", self.cfg.command, env!("CARGO_PKG_VERSION"));
        let _ = writeln!(h, "# params: d={} gamma={} beta={} Q={} alpha={}", p.d, p.gamma, p.beta, p.q_val, p.alpha);
        for (k, v) in self.cfg.entries(false) {
            let _ = writeln!(h, "# config: {k}={v}");
        }
        let _ = writeln!(h, "# input-hash: {}", self.cfg.input_hash());
        h
    }

    fn csv(&mut self, name: &str, columns: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut s = self.header();
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    fn json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        let p = &self.params;
        let doc = json!({
            "command": self.cfg.command,
            "config": self.cfg.entries(false).into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect::<BTreeMap<_, _>>(),
            "input_hash": self.cfg.input_hash(),
            "params": { "d": p.d, "gamma": p.gamma, "beta": p.beta, "Q": p.q_val, "alpha": p.alpha },
            "result": body,
        });
        // serde_json maps are ordered by key, so output is stable.
        self.write(name, &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.cfg.out.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn radial_rows(s: &RadialSample) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut cols = vec!["t".to_string(), "S".to_string()];
    cols.extend((1..=s.deriv_values.len()).map(|k| format!("S{k}")));
    let rows = (0..s.times.len())
        .map(|i| {
            let mut r = vec![s.times[i], s.s_values[i]];
            r.extend(s.deriv_values.iter().map(|c| c[i]));
            r
        })
        .collect();
    (cols, rows)
}

type Simulator<'a> = Box<dyn Fn(RngSeed) -> Result<RadialSample, SphError> + 'a>;

fn cmd_sphavg(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    let d = cfg.d;
    let grid = output_grid(cfg.t_max, cfg.h);
    let seed = cfg.rng_seed();
    let mut sims: Vec<(&str, Simulator)> = vec![];
    if cfg.method != SimChoice::Sde {
        sims.push(("repr", Box::new(|s| simulate_repr(&grid, d, cfg.cutoff, s))));
    }
    if cfg.method != SimChoice::Repr {
        sims.push(("sde", Box::new(|s| simulate_sde(&grid, d, s))));
    }
    let mut summary = BTreeMap::new();
    for (k, (name, sim)) in sims.iter().enumerate() {
        let sample = sim(seed.child(k as u64))?;
        let (cols, rows) = radial_rows(&sample);
        em.csv(&format!("sphavg_{name}.csv"), &cols, rows.into_iter())?;
        if cfg.method == SimChoice::Both {
            // Replicate variance at the final grid time against the closed form.
            let finals: Vec<f64> =
                (0..cfg.reps).map(|r| sim(seed.child(1000 + r as u64)).map(|s| *s.s_values.last().expect("nonempty"))).collect::<Result<_, _>>()?;
            summary.insert(name.to_string(), var(&finals));
        }
    }
    let cov_rows = grid
        .iter()
        .map(|&t| Ok(vec![t, variance_increment(t, d)?, if d >= 4 { deriv_autocov(t, d)? } else { f64::NAN }]))
        .collect::<Result<Vec<_>, SphError>>()?;
    em.csv("sphavg_cov.csv", &["t".into(), "var_increment".into(), "deriv_autocov".into()], cov_rows.into_iter())?;
    if cfg.method == SimChoice::Both {
        let target = variance_increment(cfg.t_max, d)?;
        let band = 3.0 * target * (2.0 / cfg.reps as f64).sqrt() * cfg.tolerance_scale;
        let within = summary.values().all(|v| (v - target).abs() <= band);
        em.json(
            "sphavg_summary.json",
            json!({ "t": cfg.t_max, "var_analytic": target, "var_empirical": summary, "band": band, "within_tolerance": within }),
        )?;
    }
    Ok(())
}

fn cmd_specdim(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    let params = em.params;
    let setup = EnsembleSetup {
        lattice: Lattice::new(cfg.d as usize, cfg.lattice_n, cfg.side)?,
        epsilon: cfg.epsilon,
        n_fields: cfg.reps,
        n_paths: cfg.paths,
        steps: cfg.steps,
    };
    let est = spec_dim_estimate(&params, setup, &cfg.chi_list, &cfg.t_list, cfg.rng_seed())?;
    let tol = 0.1 * cfg.tolerance_scale;
    let within = (est.d_spec_hat / est.formula_value - 1.0).abs() <= tol;
    let mut v = to_value(&est);
    v["within_tolerance"] = json!(within);
    v["relative_tolerance"] = json!(tol);
    em.json("specdim.json", v)
}

fn cmd_gmc(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    use rayon::prelude::*;
    let lat = Lattice::new(cfg.d as usize, cfg.lattice_n, cfg.side)?;
    let seed = cfg.rng_seed();
    let origin = vec![0.0; lat.d];
    let table = (0..cfg.reps)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>, GmcError> {
            let f = synthesize_lgf(lat, seed.child(k as u64))?;
            let m = gmc_measure(&f, cfg.gamma, cfg.epsilon)?;
            ball_masses(&m, &origin, &cfg.radii)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = scaling_exponent(&table, &cfg.radii, 1.0, Statistic::LogMean)?;
    let rows = cfg.radii.iter().enumerate().map(|(j, &r)| {
        let logs: Vec<f64> = table.iter().map(|row| row[j].ln()).collect();
        vec![r, r.ln(), logs.iter().sum::<f64>() / logs.len() as f64]
    });
    em.csv("gmc_ball_masses.csv", &["r".into(), "log_r".into(), "mean_log_mass".into()], rows)?;
    let target = cfg.d as f64;
    let within = (fit.slope / target - 1.0).abs() <= 0.05 * cfg.tolerance_scale;
    em.json("gmc_scaling.json", json!({ "q": 1.0, "fit": to_value(&fit), "target": target, "within_tolerance": within }))
}

fn cmd_lbm(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    let params = em.params;
    let lat = Lattice::new(cfg.d as usize, cfg.lattice_n, cfg.side)?;
    let seed = cfg.rng_seed();
    let field = synthesize_lgf(lat, seed.child(0))?;
    let cf = ClockField::new(&field, params.alpha, cfg.epsilon)?;
    let path = sample_brownian(lat.d, &uniform_grid(0.0, cfg.t_max, cfg.steps), seed.child(1))?;
    let clock = cf.clock(&path)?;
    let f_end = *clock.f_values.last().expect("nonempty");
    em.csv("lbm_clock.csv", &["t".into(), "F".into()], clock.times.iter().zip(&clock.f_values).map(|(t, f)| vec![*t, *f]))?;
    let out_grid = uniform_grid(0.0, f_end, cfg.steps);
    let lbm = lbm_from_clock(&clock, &path, &out_grid)?;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=lat.d).map(|k| format!("x{k}")));
    em.csv("lbm_path.csv", &cols, (0..lbm.len()).map(|i| std::iter::once(lbm.times[i]).chain(lbm.point(i).iter().copied()).collect()))
}

fn cmd_mixing(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    em.params.require_langevin_order()?;
    let sys = companion_system(cfg.d)?;
    let n = (cfg.t_max / cfg.h).round() as usize;
    let t_grid: Vec<f64> = (1..=n).map(|k| k as f64 * cfg.h).collect();
    let curve = mixing_profile(&sys, cfg.radius, &t_grid, cfg.reps, cfg.rng_seed())?;
    em.csv(
        "mixing_tv.csv",
        &["t".into(), "tv_bound".into(), "worst_kl".into()],
        (0..curve.times.len()).map(|i| vec![curve.times[i], curve.tv[i], curve.worst_kl[i]]),
    )
}

fn cmd_cone(cfg: &RunConfig, em: &mut Emitter) -> Result<(), CliError> {
    let params = em.params;
    let lo = cfg.probes.iter().cloned().fold(0.0f64, f64::min);
    let hi = cfg.probes.iter().cloned().fold(cfg.t_max, f64::max);
    let setup = ConeSetup { d: cfg.d, q_minus_beta: params.q_minus_beta(), beta: cfg.beta, window: (lo, hi), h: cfg.h };
    let engine = ConeEngine::new(setup)?;
    let seed = cfg.rng_seed();
    let c = engine.cone_sample(cfg.b, seed.child(0))?;
    let (cols, rows) = radial_rows(&c.trajectory);
    em.csv("cone_trajectory.csv", &cols, rows.into_iter())?;
    let m = convergence_diagnostic(&engine, &cfg.b_list, &cfg.probes, cfg.reps, seed.child(1))?;
    em.json("cone_distances.json", json!({ "sigma_b": c.sigma_b, "b": c.b, "distances": to_value(&m) }))
}

/// Runs `cfg.command`, writing data files and a timestamped sidecar into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let mut em = Emitter { cfg, params: cfg.params()?, files: vec![] };
    match cfg.command.as_str() {
        "sphavg" => cmd_sphavg(cfg, &mut em)?,
        "specdim" => cmd_specdim(cfg, &mut em)?,
        "gmc" => cmd_gmc(cfg, &mut em)?,
        "lbm" => cmd_lbm(cfg, &mut em)?,
        "mixing" => cmd_mixing(cfg, &mut em)?,
        "cone" => cmd_cone(cfg, &mut em)?,
        other => return Err(CliError::UnknownCommand(other.to_string())),
    }
    write_sidecar(cfg, &em.files)?;
    Ok(RunOutput { files: em.files })
}

fn write_sidecar(cfg: &RunConfig, files: &[PathBuf]) -> Result<(), CliError> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let names: Vec<String> = files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    let meta = json!({
        "command": cfg.command,
        "files": names,
        "input_hash": cfg.input_hash(),
        "threads": cfg.threads,
        "unix_time": secs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(cfg.out.join(format!("{}.meta.json", cfg.command)), serde_json::to_string_pretty(&meta).expect("serializable") + "\n")?;
    Ok(())
}

/// Parsed command-line flags (before merging with a config file).
#[derive(Debug, Clone, Default, PartialEq, clap::Parser)]
#[command(name = "lgf-lab", about = "Desk-scale log-correlated field experiments", disable_help_subcommand = true)]
pub struct Flags {
    /// Command: sphavg, specdim, gmc, lbm, mixing or cone.
    pub command: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "tolerance-scale")]
    pub tolerance_scale: Option<f64>,
    #[arg(long)]
    pub method: Option<String>,
    /// Extra `key=value` overrides.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

/// Merges config file, flags and the `LGFLAB_SEED` fallback.
pub fn resolve(flags: &Flags, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
    let text = match &flags.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text, flags.command.as_deref())?;
    if let Some(c) = &flags.command {
        if c != &cfg.command {
            cfg.set("command", c)?;
        }
    }
    for kv in &flags.set {
        let (k, v) = kv.split_once('=').ok_or(CliError::Syntax { line: 0, text: kv.clone() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(m) = &flags.method {
        cfg.set("method", m)?;
    }
    if let Some(s) = flags.seed {
        cfg.seed = Some(s);
    } else if cfg.seed.is_none() {
        if let Some(e) = env_seed {
            cfg.set("seed", e)?;
        }
    }
    if let Some(t) = flags.threads {
        cfg.threads = t;
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    if let Some(x) = flags.tolerance_scale {
        cfg.tolerance_scale = x;
    }
    Ok(cfg)
}

/// Whole CLI; returns the process exit code.
pub fn main_with(args: &[String], env_seed: Option<&str>) -> i32 {
    use clap::Parser;
    let flags = match Flags::try_parse_from(args) {
        Ok(f) => f,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match flags.command.as_deref() {
        Some(c) if COMMANDS.contains(&c) => {}
        _ if flags.command.is_none() && flags.config.is_some() => {}
        _ => {
            eprintln!("{USAGE}");
            return 2;
        }
    }
    let cfg = match resolve(&flags, env_seed) {
        Ok(c) => c,
        Err(e) => {
            println!("{}", e.to_json());
            return if matches!(e, CliError::UnknownCommand(_)) { 2 } else { 1 };
        }
    };
    if cfg.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match run(&cfg) {
        Ok(out) => {
            for f in out.files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            println!("{}", e.to_json());
            1
        }
    }
}

/// Writes `cfg.render()` to `path`.
pub fn save_config(cfg: &RunConfig, path: &FsPath) -> Result<(), CliError> {
    fs::write(path, cfg.render())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for c in COMMANDS {
            let mut cfg = RunConfig::defaults(c).unwrap();
            cfg.seed = Some(7);
            cfg.gamma = 0.1 + 0.2;
            cfg.b_list = vec![1.0 / 3.0, 2.5];
            assert_eq!(RunConfig::parse(&cfg.render(), None).unwrap(), cfg);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(RunConfig::parse("command=nope", None), Err(CliError::UnknownCommand(_))));
        assert!(matches!(RunConfig::parse("command=gmc\nfoo=1", None), Err(CliError::UnknownKey(_))));
        assert!(matches!(RunConfig::parse("command=gmc\ngamma", None), Err(CliError::Syntax { .. })));
        assert!(matches!(RunConfig::parse("command=gmc\ngamma=x", None), Err(CliError::Value { .. })));
        let beta_over = RunConfig::parse("command=specdim\nbeta=5", None).unwrap();
        assert!(matches!(beta_over.validate(), Err(CliError::Param(_))));
    }

    #[test]
    fn seed_precedence() {
        let flags = Flags { command: Some("mixing".into()), ..Default::default() };
        assert_eq!(resolve(&flags, Some("9")).unwrap().seed, Some(9));
        let flags = Flags { seed: Some(3), ..flags };
        assert_eq!(resolve(&flags, Some("9")).unwrap().seed, Some(3));
    }

    #[test]
    fn hash_ignores_runtime_knobs() {
        let a = RunConfig::defaults("gmc").unwrap();
        let mut b = a.clone();
        b.threads = 4;
        b.out = PathBuf::from("/elsewhere");
        assert_eq!(a.input_hash(), b.input_hash());
        b.gamma = 0.5;
        assert_ne!(a.input_hash(), b.input_hash());
    }
}
