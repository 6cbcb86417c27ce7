//! Flat dotted-key configuration: defaults, file, then command-line
//! overrides, each layer replacing the one below. Every key is typed and
//! listed in one schema table; anything else is rejected by name.

use std::fmt;
use std::fs;
use std::path::Path;

use pso_core::objective::ObjectiveFunction;
use pso_core::runner::{steps_per_epoch, RunConfig, StopWindow, UpdateMode};
use pso_core::schedules::KickTarget;
use pso_core::swarm::{DiffusionType, Distribution, MemoryMode, SwarmParams};

#[derive(Debug)]
pub enum ConfigError {
    /// A key not present in the schema, named verbatim.
    UnknownKey(String),
    /// File-level problems: missing file, unreadable, not valid TOML.
    Parse(String),
    /// A known key carrying a value of the wrong type or out of range.
    Value(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey(k) => write!(f, "unknown configuration key \"{k}\""),
            ConfigError::Parse(m) => write!(f, "{m}"),
            ConfigError::Value(m) => write!(f, "{m}"),
        }
    }
}

/// Everything the CLI can be told, with experiment-grade defaults
/// (20-dimensional Rastrigin benchmark run).
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub objective_name: String,
    pub objective_dim: usize,

    pub swarm_n: usize,
    pub swarm_m: f64,
    pub swarm_gamma: f64,
    pub swarm_lambda1: f64,
    pub swarm_lambda2: f64,
    pub swarm_sigma1: f64,
    pub swarm_sigma2: f64,
    pub swarm_alpha: f64,
    pub swarm_kappa: f64,
    pub swarm_theta: f64,
    pub swarm_beta: f64,
    pub swarm_dt: f64,
    pub swarm_diffusion: String,
    pub swarm_memory: String,

    pub init_position_mean: f64,
    pub init_position_var: f64,
    pub init_velocity_mean: f64,
    pub init_velocity_var: f64,

    pub batch_n_data: usize,
    pub batch_n_particle: usize,
    pub batch_update: String,

    /// Epoch budget; negative derives the budget from `run.t_final`.
    pub run_epochs: i64,
    pub run_t_final: f64,
    pub run_seed: u64,
    pub run_recording_interval: u64,
    pub run_success_tol: f64,
    /// Stop-window length in records; 0 disables early stopping.
    pub run_stop_window: usize,
    pub run_stop_tol: f64,

    pub schedule_cooling: bool,
    pub schedule_mu: f64,
    /// Stagnation tolerance; negative takes the library default.
    pub schedule_stagnation_tol: f64,
    pub schedule_kick_magnitude: f64,
    pub schedule_kick_target: String,
    pub schedule_min_particles: usize,

    pub phase_m_grid: Vec<f64>,
    pub phase_sigma_grid: Vec<f64>,
    pub phase_runs_per_cell: usize,

    pub mfa_ns: Vec<usize>,
    pub mfa_n_ref: usize,
    pub mfa_t_final: f64,
    pub mfa_reps: usize,

    pub laplace_n: usize,
    pub laplace_alphas: Vec<f64>,
}

impl Default for CliConfig {
    fn default() -> CliConfig {
        CliConfig {
            objective_name: "rastrigin".into(),
            objective_dim: 20,
            swarm_n: 100,
            swarm_m: 0.2,
            swarm_gamma: 0.8,
            swarm_lambda1: 0.0,
            swarm_lambda2: 1.0,
            swarm_sigma1: 0.0,
            swarm_sigma2: 2.0,
            swarm_alpha: 100.0,
            swarm_kappa: 50.0,
            swarm_theta: 0.0,
            swarm_beta: f64::INFINITY,
            swarm_dt: 0.01,
            swarm_diffusion: "anisotropic".into(),
            swarm_memory: "off".into(),
            init_position_mean: 2.0,
            init_position_var: 4.0,
            init_velocity_mean: 0.0,
            init_velocity_var: 1.0,
            batch_n_data: 0,
            batch_n_particle: 0,
            batch_update: "full".into(),
            run_epochs: -1,
            run_t_final: 100.0,
            run_seed: 42,
            run_recording_interval: 1,
            run_success_tol: 0.25,
            run_stop_window: 0,
            run_stop_tol: 1e-8,
            schedule_cooling: false,
            schedule_mu: 0.0,
            schedule_stagnation_tol: -1.0,
            schedule_kick_magnitude: 0.0,
            schedule_kick_target: "velocities".into(),
            schedule_min_particles: 2,
            phase_m_grid: vec![0.1, 0.2, 0.3, 0.4],
            phase_sigma_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
            phase_runs_per_cell: 25,
            mfa_ns: vec![50, 100, 200, 400, 800],
            mfa_n_ref: 6400,
            mfa_t_final: 5.0,
            mfa_reps: 20,
            laplace_n: 10_000,
            laplace_alphas: (0..=10).map(|k| f64::from(1u32 << k)).collect(),
        }
    }
}

/// Apply one key to the config. The match arms double as the key schema.
fn apply(cfg: &mut CliConfig, key: &str, value: &toml::Value) -> Result<(), ConfigError> {
    match key {
        "objective.name" => cfg.objective_name = get_string(key, value)?,
        "objective.dim" => cfg.objective_dim = get_usize(key, value)?,
        "swarm.n" => cfg.swarm_n = get_usize(key, value)?,
        "swarm.m" => cfg.swarm_m = get_f64(key, value)?,
        "swarm.gamma" => cfg.swarm_gamma = get_f64(key, value)?,
        "swarm.lambda1" => cfg.swarm_lambda1 = get_f64(key, value)?,
        "swarm.lambda2" => cfg.swarm_lambda2 = get_f64(key, value)?,
        "swarm.sigma1" => cfg.swarm_sigma1 = get_f64(key, value)?,
        "swarm.sigma2" => cfg.swarm_sigma2 = get_f64(key, value)?,
        "swarm.alpha" => cfg.swarm_alpha = get_f64(key, value)?,
        "swarm.kappa" => cfg.swarm_kappa = get_f64(key, value)?,
        "swarm.theta" => cfg.swarm_theta = get_f64(key, value)?,
        "swarm.beta" => cfg.swarm_beta = get_f64(key, value)?,
        "swarm.dt" => cfg.swarm_dt = get_f64(key, value)?,
        "swarm.diffusion" => cfg.swarm_diffusion = get_string(key, value)?,
        "swarm.memory" => cfg.swarm_memory = get_string(key, value)?,
        "init.position_mean" => cfg.init_position_mean = get_f64(key, value)?,
        "init.position_var" => cfg.init_position_var = get_f64(key, value)?,
        "init.velocity_mean" => cfg.init_velocity_mean = get_f64(key, value)?,
        "init.velocity_var" => cfg.init_velocity_var = get_f64(key, value)?,
        "batch.n_data" => cfg.batch_n_data = get_usize(key, value)?,
        "batch.n_particle" => cfg.batch_n_particle = get_usize(key, value)?,
        "batch.update" => cfg.batch_update = get_string(key, value)?,
        "run.epochs" => cfg.run_epochs = get_i64(key, value)?,
        "run.t_final" => cfg.run_t_final = get_f64(key, value)?,
        "run.seed" => cfg.run_seed = get_u64(key, value)?,
        "run.recording_interval" => cfg.run_recording_interval = get_u64(key, value)?,
        "run.success_tol" => cfg.run_success_tol = get_f64(key, value)?,
        "run.stop_window" => cfg.run_stop_window = get_usize(key, value)?,
        "run.stop_tol" => cfg.run_stop_tol = get_f64(key, value)?,
        "schedule.cooling" => cfg.schedule_cooling = get_bool(key, value)?,
        "schedule.mu" => cfg.schedule_mu = get_f64(key, value)?,
        "schedule.stagnation_tol" => cfg.schedule_stagnation_tol = get_f64(key, value)?,
        "schedule.kick_magnitude" => cfg.schedule_kick_magnitude = get_f64(key, value)?,
        "schedule.kick_target" => cfg.schedule_kick_target = get_string(key, value)?,
        "schedule.min_particles" => cfg.schedule_min_particles = get_usize(key, value)?,
        "phase.m_grid" => cfg.phase_m_grid = get_f64_array(key, value)?,
        "phase.sigma_grid" => cfg.phase_sigma_grid = get_f64_array(key, value)?,
        "phase.runs_per_cell" => cfg.phase_runs_per_cell = get_usize(key, value)?,
        "mfa.ns" => cfg.mfa_ns = get_usize_array(key, value)?,
        "mfa.n_ref" => cfg.mfa_n_ref = get_usize(key, value)?,
        "mfa.t_final" => cfg.mfa_t_final = get_f64(key, value)?,
        "mfa.reps" => cfg.mfa_reps = get_usize(key, value)?,
        "laplace.n" => cfg.laplace_n = get_usize(key, value)?,
        "laplace.alphas" => cfg.laplace_alphas = get_f64_array(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

fn get_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(x) => Ok(*x as f64),
        other => Err(type_error(key, "a number", other)),
    }
}

fn get_i64(key: &str, v: &toml::Value) -> Result<i64, ConfigError> {
    match v {
        toml::Value::Integer(x) => Ok(*x),
        other => Err(type_error(key, "an integer", other)),
    }
}

fn get_u64(key: &str, v: &toml::Value) -> Result<u64, ConfigError> {
    let x = get_i64(key, v)?;
    u64::try_from(x)
        .map_err(|_| ConfigError::Value(format!("{key} must be nonnegative, got {x}")))
}

fn get_usize(key: &str, v: &toml::Value) -> Result<usize, ConfigError> {
    Ok(get_u64(key, v)? as usize)
}

fn get_bool(key: &str, v: &toml::Value) -> Result<bool, ConfigError> {
    match v {
        toml::Value::Boolean(b) => Ok(*b),
        other => Err(type_error(key, "a boolean", other)),
    }
}

fn get_string(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        other => Err(type_error(key, "a string", other)),
    }
}

fn get_f64_array(key: &str, v: &toml::Value) -> Result<Vec<f64>, ConfigError> {
    match v {
        toml::Value::Array(xs) => xs.iter().map(|x| get_f64(key, x)).collect(),
        other => Err(type_error(key, "an array of numbers", other)),
    }
}

fn get_usize_array(key: &str, v: &toml::Value) -> Result<Vec<usize>, ConfigError> {
    match v {
        toml::Value::Array(xs) => xs.iter().map(|x| get_usize(key, x)).collect(),
        other => Err(type_error(key, "an array of integers", other)),
    }
}

fn type_error(key: &str, expected: &str, got: &toml::Value) -> ConfigError {
    ConfigError::Value(format!("{key} expects {expected}, got {}", got.type_str()))
}

/// Walk a parsed TOML document depth-first, emitting (dotted key, leaf value)
/// pairs in document order. Arrays are leaves.
fn flatten<'v>(prefix: &str, value: &'v toml::Value, out: &mut Vec<(String, &'v toml::Value)>) {
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf)),
    }
}

fn apply_document(cfg: &mut CliConfig, doc: &toml::Value) -> Result<(), ConfigError> {
    let mut pairs = Vec::new();
    flatten("", doc, &mut pairs);
    for (key, value) in pairs {
        apply(cfg, &key, value)?;
    }
    Ok(())
}

/// Build the configuration: defaults, then the file (if any), then `key=value`
/// overrides in order.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<CliConfig, ConfigError> {
    let mut cfg = CliConfig::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(|e| {
            ConfigError::Parse(format!("cannot read config file {}: {e}", p.display()))
        })?;
        let doc: toml::Value = text.parse().map_err(|e| {
            ConfigError::Parse(format!("config file {} is not valid TOML: {e}", p.display()))
        })?;
        apply_document(&mut cfg, &doc)?;
    }
    for item in overrides {
        let Some((key, raw)) = item.split_once('=') else {
            return Err(ConfigError::Parse(format!(
                "override \"{item}\" is not of the form key=value"
            )));
        };
        let key = key.trim();
        let value = parse_override_value(raw.trim());
        apply(&mut cfg, key, &value)?;
    }
    Ok(cfg)
}

/// Overrides accept bare TOML scalars/arrays; anything unparseable is taken
/// as a string, so `objective.name=sphere` works without quoting.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").unwrap(),
        _ => toml::Value::String(raw.to_string()),
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        // Debug formatting is shortest-round-trip and always a valid TOML
        // float (keeps a decimal point or exponent).
        format!("{x:?}")
    }
}

fn fmt_f64_array(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_usize_array(xs: &[usize]) -> String {
    let items: Vec<String> = xs.iter().map(usize::to_string).collect();
    format!("[{}]", items.join(", "))
}

impl CliConfig {
    /// The effective configuration as a TOML document; loading it back
    /// reproduces this configuration exactly.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("objective.name", format!("\"{}\"", self.objective_name));
        line("objective.dim", self.objective_dim.to_string());
        line("swarm.n", self.swarm_n.to_string());
        line("swarm.m", fmt_f64(self.swarm_m));
        line("swarm.gamma", fmt_f64(self.swarm_gamma));
        line("swarm.lambda1", fmt_f64(self.swarm_lambda1));
        line("swarm.lambda2", fmt_f64(self.swarm_lambda2));
        line("swarm.sigma1", fmt_f64(self.swarm_sigma1));
        line("swarm.sigma2", fmt_f64(self.swarm_sigma2));
        line("swarm.alpha", fmt_f64(self.swarm_alpha));
        line("swarm.kappa", fmt_f64(self.swarm_kappa));
        line("swarm.theta", fmt_f64(self.swarm_theta));
        line("swarm.beta", fmt_f64(self.swarm_beta));
        line("swarm.dt", fmt_f64(self.swarm_dt));
        line("swarm.diffusion", format!("\"{}\"", self.swarm_diffusion));
        line("swarm.memory", format!("\"{}\"", self.swarm_memory));
        line("init.position_mean", fmt_f64(self.init_position_mean));
        line("init.position_var", fmt_f64(self.init_position_var));
        line("init.velocity_mean", fmt_f64(self.init_velocity_mean));
        line("init.velocity_var", fmt_f64(self.init_velocity_var));
        line("batch.n_data", self.batch_n_data.to_string());
        line("batch.n_particle", self.batch_n_particle.to_string());
        line("batch.update", format!("\"{}\"", self.batch_update));
        line("run.epochs", self.run_epochs.to_string());
        line("run.t_final", fmt_f64(self.run_t_final));
        line("run.seed", self.run_seed.to_string());
        line("run.recording_interval", self.run_recording_interval.to_string());
        line("run.success_tol", fmt_f64(self.run_success_tol));
        line("run.stop_window", self.run_stop_window.to_string());
        line("run.stop_tol", fmt_f64(self.run_stop_tol));
        line("schedule.cooling", self.schedule_cooling.to_string());
        line("schedule.mu", fmt_f64(self.schedule_mu));
        line("schedule.stagnation_tol", fmt_f64(self.schedule_stagnation_tol));
        line("schedule.kick_magnitude", fmt_f64(self.schedule_kick_magnitude));
        line("schedule.kick_target", format!("\"{}\"", self.schedule_kick_target));
        line("schedule.min_particles", self.schedule_min_particles.to_string());
        line("phase.m_grid", fmt_f64_array(&self.phase_m_grid));
        line("phase.sigma_grid", fmt_f64_array(&self.phase_sigma_grid));
        line("phase.runs_per_cell", self.phase_runs_per_cell.to_string());
        line("mfa.ns", fmt_usize_array(&self.mfa_ns));
        line("mfa.n_ref", self.mfa_n_ref.to_string());
        line("mfa.t_final", fmt_f64(self.mfa_t_final));
        line("mfa.reps", self.mfa_reps.to_string());
        line("laplace.n", self.laplace_n.to_string());
        line("laplace.alphas", fmt_f64_array(&self.laplace_alphas));
        s
    }

    pub fn objective(&self) -> Result<ObjectiveFunction, ConfigError> {
        ObjectiveFunction::by_name(&self.objective_name, self.objective_dim)
            .map_err(|e| ConfigError::Value(e.to_string()))
    }

    pub fn swarm_params(&self) -> Result<SwarmParams, ConfigError> {
        let diffusion = match self.swarm_diffusion.as_str() {
            "anisotropic" => DiffusionType::Anisotropic,
            "isotropic" => DiffusionType::Isotropic,
            other => {
                return Err(ConfigError::Value(format!(
                    "swarm.diffusion must be \"anisotropic\" or \"isotropic\", got \"{other}\""
                )))
            }
        };
        let memory = match self.swarm_memory.as_str() {
            "off" => MemoryMode::Off,
            "soft" => MemoryMode::Soft,
            "hard" => MemoryMode::Hard,
            other => {
                return Err(ConfigError::Value(format!(
                    "swarm.memory must be \"off\", \"soft\" or \"hard\", got \"{other}\""
                )))
            }
        };
        Ok(SwarmParams {
            mass: self.swarm_m,
            friction: self.swarm_gamma,
            lambda1: self.swarm_lambda1,
            lambda2: self.swarm_lambda2,
            sigma1: self.swarm_sigma1,
            sigma2: self.swarm_sigma2,
            alpha: self.swarm_alpha,
            kappa: self.swarm_kappa,
            theta: self.swarm_theta,
            beta: self.swarm_beta,
            dt: self.swarm_dt,
            diffusion,
            memory,
            particles: self.swarm_n,
            dim: self.objective_dim,
        })
    }

    pub fn position_init(&self) -> Distribution {
        Distribution::gaussian_iso(self.objective_dim, self.init_position_mean, self.init_position_var)
    }

    pub fn velocity_init(&self) -> Distribution {
        Distribution::gaussian_iso(self.objective_dim, self.init_velocity_mean, self.init_velocity_var)
    }

    /// Assemble the full run configuration, deriving the epoch budget from
    /// `run.t_final` when `run.epochs` is negative.
    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let update = match self.batch_update.as_str() {
            "full" => UpdateMode::Full,
            "partial" => UpdateMode::Partial,
            other => {
                return Err(ConfigError::Value(format!(
                    "batch.update must be \"full\" or \"partial\", got \"{other}\""
                )))
            }
        };
        let kick_target = match self.schedule_kick_target.as_str() {
            "positions" => KickTarget::Positions,
            "velocities" => KickTarget::Velocities,
            other => {
                return Err(ConfigError::Value(format!(
                    "schedule.kick_target must be \"positions\" or \"velocities\", got \"{other}\""
                )))
            }
        };
        let stop_window = if self.run_stop_window == 0 {
            None
        } else {
            Some(StopWindow { window: self.run_stop_window, tol: self.run_stop_tol })
        };
        let mut rc = RunConfig {
            objective: self.objective()?,
            params: self.swarm_params()?,
            position: self.position_init(),
            velocity: self.velocity_init(),
            n_data_batch: self.batch_n_data,
            n_particle_batch: self.batch_n_particle,
            update,
            max_epochs: 0,
            stop_window,
            cooling: self.schedule_cooling,
            decay_mu: self.schedule_mu,
            stagnation_tol: (self.schedule_stagnation_tol >= 0.0)
                .then_some(self.schedule_stagnation_tol),
            kick_magnitude: self.schedule_kick_magnitude,
            kick_target,
            min_particles: self.schedule_min_particles,
            recording_interval: self.run_recording_interval,
            success_tol: self.run_success_tol,
            seed: self.run_seed,
        };
        rc.max_epochs = if self.run_epochs >= 0 {
            self.run_epochs as u64
        } else {
            if !(self.run_t_final >= 0.0) || !self.run_t_final.is_finite() {
                return Err(ConfigError::Value(format!(
                    "run.t_final must be a nonnegative finite time, got {}",
                    self.run_t_final
                )));
            }
            let spe = steps_per_epoch(&rc).map_err(|e| ConfigError::Value(e.to_string()))?;
            (self.run_t_final / (self.swarm_dt * spe as f64)).round() as u64
        };
        Ok(rc)
    }
}
