//! Command-line front end for consensus-dynamics swarm experiments.
//!
//! Exit codes: 0 success, 1 divergence or I/O failure, 2 configuration error.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use pso_core::consensus::laplace_estimate;
use pso_core::meanfield::mfa_error_curve;
use pso_core::runner::{phase_diagram, run};
use pso_core::swarm::{init_swarm, InitSpec, SwarmParams};
use pso_core::PsoError;

use config::{CliConfig, ConfigError};

#[derive(Parser)]
#[command(
    name = "pso",
    about = "Consensus-dynamics particle swarm optimization experiments",
    after_help = "Configuration is layered: built-in defaults, then --config FILE (TOML with \
flat dotted keys such as swarm.m), then trailing KEY=VALUE overrides. Unknown keys are \
rejected by name. The default output directory is $PSO_OUT_DIR, falling back to the \
current directory."
)]
struct Cli {
    /// Configuration file (TOML, flat dotted keys).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory; defaults to $PSO_OUT_DIR, then the current directory.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Log progress and the effective configuration to stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimization run; writes series.csv and run_report.json.
    Run {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Success-probability sweep over (m, sigma2); writes phase.csv and
    /// phase_report.json.
    PhaseDiagram {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Coupling-error scaling against a frozen-consensus reference; writes
    /// mfa.csv and mfa_report.json.
    MfaScaling {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check the weighted-minimum estimate against its envelope on sampled
    /// points; writes laplace.csv.
    LaplaceCheck {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Time the configured run without writing any files.
    Bench {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

enum CliError {
    /// Bad configuration: exit 2.
    Config(String),
    /// Failed output: exit 1.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<PsoError> for CliError {
    fn from(e: PsoError) -> CliError {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    let (overrides, needs_out_dir) = match &cli.command {
        Command::Run { overrides }
        | Command::PhaseDiagram { overrides }
        | Command::MfaScaling { overrides }
        | Command::LaplaceCheck { overrides } => (overrides.clone(), true),
        Command::Bench { overrides } => (overrides.clone(), false),
    };
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    if cli.verbose > 0 {
        eprint!("[pso] effective configuration:\n{}", cfg.to_toml());
    }
    let out_dir = resolve_out_dir(cli.out_dir.as_deref(), needs_out_dir)?;

    match cli.command {
        Command::Run { .. } => cmd_run(&cfg, &out_dir, cli.verbose),
        Command::PhaseDiagram { .. } => cmd_phase(&cfg, &out_dir, cli.verbose),
        Command::MfaScaling { .. } => cmd_mfa(&cfg, &out_dir, cli.verbose),
        Command::LaplaceCheck { .. } => cmd_laplace(&cfg, &out_dir),
        Command::Bench { .. } => cmd_bench(&cfg),
    }
}

fn resolve_out_dir(flag: Option<&Path>, create: bool) -> Result<PathBuf, CliError> {
    let dir = match flag {
        Some(d) => d.to_path_buf(),
        None => match std::env::var_os("PSO_OUT_DIR") {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("."),
        },
    };
    if create {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(dir)
}

fn emit_effective_config(cfg: &CliConfig, out_dir: &Path) -> Result<(), CliError> {
    let path = out_dir.join("effective_config.toml");
    output::write_atomic(&path, &cfg.to_toml()).map_err(io_err(&path))
}

fn cmd_run(cfg: &CliConfig, out_dir: &Path, verbose: u8) -> Result<ExitCode, CliError> {
    let rc = cfg.run_config()?;
    if verbose > 0 {
        eprintln!("[pso] run: {} epochs, seed {}", rc.max_epochs, rc.seed);
    }
    let report = run(&rc)?;
    emit_effective_config(cfg, out_dir)?;
    let series_path = out_dir.join("series.csv");
    output::write_atomic(&series_path, &output::series_csv(&report))
        .map_err(io_err(&series_path))?;
    let report_path = out_dir.join("run_report.json");
    output::write_atomic(&report_path, &output::to_json(&report))
        .map_err(io_err(&report_path))?;
    println!(
        "run: steps={} epochs={} particles={} diverged={} success={} best={:.6e} wall={:.3}s",
        report.steps,
        report.epochs_completed,
        report.particles_final,
        report.diverged,
        report.success.map_or("unknown".to_string(), |b| b.to_string()),
        report.best_seen_value,
        report.wall_seconds,
    );
    if report.diverged {
        eprintln!("run diverged; partial series written to {}", series_path.display());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_phase(cfg: &CliConfig, out_dir: &Path, verbose: u8) -> Result<ExitCode, CliError> {
    let base = cfg.run_config()?;
    if verbose > 0 {
        eprintln!(
            "[pso] phase diagram: {} x {} cells, {} runs each",
            cfg.phase_m_grid.len(),
            cfg.phase_sigma_grid.len(),
            cfg.phase_runs_per_cell
        );
    }
    let started = std::time::Instant::now();
    let diagram = phase_diagram(
        &base,
        &cfg.phase_m_grid,
        &cfg.phase_sigma_grid,
        cfg.phase_runs_per_cell,
    )?;
    emit_effective_config(cfg, out_dir)?;
    let csv_path = out_dir.join("phase.csv");
    output::write_atomic(&csv_path, &output::phase_csv(&diagram)).map_err(io_err(&csv_path))?;
    let json_path = out_dir.join("phase_report.json");
    output::write_atomic(&json_path, &output::to_json(&diagram)).map_err(io_err(&json_path))?;
    println!(
        "phase-diagram: {} cells x {} runs, wall={:.1}s -> {}",
        diagram.cells.len(),
        diagram.runs_per_cell,
        started.elapsed().as_secs_f64(),
        csv_path.display(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_mfa(cfg: &CliConfig, out_dir: &Path, verbose: u8) -> Result<ExitCode, CliError> {
    let obj = cfg.objective()?;
    let params = cfg.swarm_params()?;
    if verbose > 0 {
        eprintln!(
            "[pso] mfa scaling: sizes {:?}, reference {}, {} repetitions",
            cfg.mfa_ns, cfg.mfa_n_ref, cfg.mfa_reps
        );
    }
    let curve = mfa_error_curve(
        &obj,
        &params,
        &cfg.position_init(),
        &cfg.velocity_init(),
        &cfg.mfa_ns,
        cfg.mfa_n_ref,
        cfg.mfa_t_final,
        cfg.mfa_reps,
        cfg.run_seed,
    )?;
    emit_effective_config(cfg, out_dir)?;
    let csv_path = out_dir.join("mfa.csv");
    output::write_atomic(&csv_path, &output::mfa_csv(&curve)).map_err(io_err(&csv_path))?;
    let json_path = out_dir.join("mfa_report.json");
    output::write_atomic(&json_path, &output::to_json(&curve)).map_err(io_err(&json_path))?;
    println!(
        "mfa-scaling: slope={:.4} (half-width {:.4}) exclusion={:.3} -> {}",
        curve.slope,
        curve.slope_half_width,
        curve.exclusion_fraction,
        csv_path.display(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_laplace(cfg: &CliConfig, out_dir: &Path) -> Result<ExitCode, CliError> {
    let obj = cfg.objective()?;
    let params = SwarmParams { particles: cfg.laplace_n, ..cfg.swarm_params()? }.validated()?;
    let init = InitSpec {
        position: cfg.position_init(),
        velocity: cfg.velocity_init(),
        seed: cfg.run_seed,
    };
    let state = init_swarm(&params, &init, &obj)?;
    let mut values = Vec::with_capacity(cfg.laplace_n);
    for i in 0..cfg.laplace_n {
        values.push(obj.eval_full(state.positions.row(i).as_slice().unwrap())?);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let n = values.len() as f64;
    let mut rows = Vec::with_capacity(cfg.laplace_alphas.len());
    let mut violations = 0usize;
    for &alpha in &cfg.laplace_alphas {
        let estimate = laplace_estimate(&values, alpha)?;
        let width = n.ln() / alpha;
        if !(estimate >= min && estimate <= min + width) {
            violations += 1;
        }
        rows.push((alpha, estimate, min, width));
    }
    emit_effective_config(cfg, out_dir)?;
    let csv_path = out_dir.join("laplace.csv");
    output::write_atomic(&csv_path, &output::laplace_csv(&rows)).map_err(io_err(&csv_path))?;
    println!(
        "laplace-check: {} alphas on {} samples, {} envelope violations -> {}",
        rows.len(),
        cfg.laplace_n,
        violations,
        csv_path.display(),
    );
    if violations > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(cfg: &CliConfig) -> Result<ExitCode, CliError> {
    let rc = cfg.run_config()?;
    let report = run(&rc)?;
    let rate = if report.wall_seconds > 0.0 {
        report.steps as f64 / report.wall_seconds
    } else {
        f64::INFINITY
    };
    println!(
        "bench: steps={} particles={} dim={} wall={:.3}s steps_per_sec={:.0} diverged={}",
        report.steps,
        report.particles_final,
        rc.params.dim,
        report.wall_seconds,
        rate,
        report.diverged,
    );
    if report.diverged {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
