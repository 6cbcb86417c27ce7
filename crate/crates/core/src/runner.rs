//! End-to-end driver: epochs, mini-batch loops, partition updates, schedules,
//! stopping, and the phase-diagram sweep.
//!
//! One run executes the full loop nest: per epoch the data terms are
//! re-partitioned into batches; per batch the particles are re-partitioned
//! into sets; per set a consensus point is computed from that set alone
//! (local bests with their cached values in memory mode, positions evaluated
//! against the active batch otherwise) and the swarm is advanced one kernel
//! step toward it, moving either all particles or only the set. The step
//! counter advances once per set, so an epoch performs
//! `(M / n_E) * (N / n_N)` steps. At each epoch end the optional schedules
//! run: particle decay driven by the variance contraction, then cooling.

use ndarray::s;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

use crate::consensus::consensus_point_subset;
use crate::diagnostics::{
    classify_success, empirical_variance, h_memory, h_memoryless, DEFAULT_SUCCESS_TOL,
};
use crate::dynamics::{step_memory, step_memoryless, Active, ActiveObjective, StepContext};
use crate::error::PsoError;
use crate::objective::{make_data_batches, ObjectiveFunction};
use crate::rng::{mix, Channel, Stream};
use crate::schedules::{particle_decay, stagnation_kick, KickTarget, ScheduleState};
use crate::swarm::{init_swarm, Distribution, InitSpec, MemoryMode, SwarmParams, SwarmState};

/// Whether a kernel step moves every particle toward the current partition's
/// consensus or only the partition itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    Full,
    Partial,
}

/// Early-stopping rule: stop once the recorded consensus has moved less than
/// `tol` between consecutive records across the last `window` records.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StopWindow {
    pub window: usize,
    pub tol: f64,
}

impl Default for StopWindow {
    fn default() -> StopWindow {
        StopWindow { window: 20, tol: 1e-8 }
    }
}

/// Complete specification of one run.
#[derive(Clone)]
pub struct RunConfig {
    pub objective: ObjectiveFunction,
    pub params: SwarmParams,
    pub position: Distribution,
    pub velocity: Distribution,
    /// Data-batch size n_E; 0 means the full term set (no batching).
    pub n_data_batch: usize,
    /// Particle-partition size n_N; 0 means all particles (one set). Must
    /// divide the initial particle count.
    pub n_particle_batch: usize,
    pub update: UpdateMode,
    pub max_epochs: u64,
    pub stop_window: Option<StopWindow>,
    pub cooling: bool,
    /// Particle-decay strength in [0, 1]; 0 disables decay.
    pub decay_mu: f64,
    /// Stagnation tolerance; `None` takes the default `1e-4 sqrt(d)`.
    pub stagnation_tol: Option<f64>,
    pub kick_magnitude: f64,
    pub kick_target: KickTarget,
    pub min_particles: usize,
    /// Record diagnostics every this many steps (the initial and final states
    /// are always recorded).
    pub recording_interval: u64,
    /// Infinity-norm tolerance for success classification.
    pub success_tol: f64,
    pub seed: u64,
}

impl RunConfig {
    /// Configuration with every optional mechanism off: no batching, one
    /// particle set, full updates, no cooling, decay, or kicks.
    pub fn new(
        objective: ObjectiveFunction,
        params: SwarmParams,
        position: Distribution,
        velocity: Distribution,
        max_epochs: u64,
        seed: u64,
    ) -> RunConfig {
        RunConfig {
            objective,
            params,
            position,
            velocity,
            n_data_batch: 0,
            n_particle_batch: 0,
            update: UpdateMode::Full,
            max_epochs,
            stop_window: None,
            cooling: false,
            decay_mu: 0.0,
            stagnation_tol: None,
            kick_magnitude: 0.0,
            kick_target: KickTarget::Velocities,
            min_particles: 2,
            recording_interval: 1,
            success_tol: DEFAULT_SUCCESS_TOL,
            seed,
        }
    }
}

/// One diagnostics row.
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub t: f64,
    pub h: f64,
    pub variance: f64,
    /// Best full-objective value seen up to this record.
    pub best_value: f64,
    pub consensus: Vec<f64>,
}

/// Everything a finished (or aborted) run reports.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub final_consensus: Vec<f64>,
    pub best_seen_value: f64,
    pub series: Vec<Record>,
    /// Success against the known minimizer; `None` when the objective does
    /// not carry one.
    pub success: Option<bool>,
    pub epochs_completed: u64,
    pub steps: u64,
    pub particles_final: usize,
    pub diverged: bool,
    pub stopped_by_window: bool,
    pub wall_seconds: f64,
}

/// Number of kernel steps one epoch performs at the initial particle count.
pub fn steps_per_epoch(config: &RunConfig) -> Result<u64, PsoError> {
    let (data_batches, particle_sets, _, _) = resolve_batching(config)?;
    Ok(data_batches as u64 * particle_sets as u64)
}

/// Returns (batches per epoch, sets per epoch, effective n_E if batching,
/// effective n_N).
fn resolve_batching(config: &RunConfig) -> Result<(usize, usize, Option<usize>, usize), PsoError> {
    let n = config.params.particles;
    let n_n = if config.n_particle_batch == 0 { n } else { config.n_particle_batch };
    if n_n == 0 || n % n_n != 0 {
        return Err(PsoError::invalid(format!(
            "particle batch size {n_n} does not divide particle count {n}"
        )));
    }
    match config.objective.term_count() {
        Some(m) => {
            let n_e = if config.n_data_batch == 0 { m } else { config.n_data_batch };
            if n_e == 0 || m % n_e != 0 {
                return Err(PsoError::invalid(format!(
                    "data batch size {n_e} does not divide term count {m}"
                )));
            }
            let active = if n_e < m { Some(n_e) } else { None };
            Ok((m / n_e, n / n_n, active, n_n))
        }
        None => {
            if config.n_data_batch > 1 {
                return Err(PsoError::invalid(
                    "data batching requires a sum-structured objective",
                ));
            }
            Ok((1, n / n_n, None, n_n))
        }
    }
}

fn validate_config(config: &RunConfig) -> Result<SwarmParams, PsoError> {
    let params = config.params.clone().validated()?;
    if config.objective.dim() != params.dim {
        return Err(PsoError::invalid("objective and swarm dimensions differ"));
    }
    if !(config.decay_mu >= 0.0 && config.decay_mu <= 1.0) {
        return Err(PsoError::invalid("decay strength must lie in [0, 1]"));
    }
    if config.recording_interval == 0 {
        return Err(PsoError::invalid("recording interval must be at least 1"));
    }
    if !(config.success_tol > 0.0) || !config.success_tol.is_finite() {
        return Err(PsoError::invalid("success tolerance must be positive and finite"));
    }
    if config.kick_magnitude < 0.0 || !config.kick_magnitude.is_finite() {
        return Err(PsoError::invalid("kick magnitude must be nonnegative"));
    }
    if let Some(tol) = config.stagnation_tol {
        if tol < 0.0 || !tol.is_finite() {
            return Err(PsoError::invalid("stagnation tolerance must be nonnegative"));
        }
    }
    if config.min_particles == 0 {
        return Err(PsoError::invalid("minimum particle count must be at least 1"));
    }
    if let Some(w) = &config.stop_window {
        if w.window < 2 || !(w.tol > 0.0) {
            return Err(PsoError::invalid(
                "stop window needs at least 2 records and a positive tolerance",
            ));
        }
    }
    Ok(params)
}

struct Driver<'a> {
    cfg: &'a RunConfig,
    base: SwarmParams,
    state: SwarmState,
    sched: ScheduleState,
    series: Vec<Record>,
    best_seen: f64,
    /// Effective data batch size when mini-batching is active.
    data_batch: Option<usize>,
    n_particle: usize,
    epochs_completed: u64,
    stopped_by_window: bool,
    last_record_step: Option<u64>,
}

impl Driver<'_> {
    fn memory_on(&self) -> bool {
        self.base.memory != MemoryMode::Off
    }

    fn effective_params(&self) -> SwarmParams {
        SwarmParams {
            alpha: self.sched.alpha,
            sigma1: self.sched.sigma1,
            sigma2: self.sched.sigma2,
            particles: self.state.n(),
            ..self.base.clone()
        }
    }

    /// Full-objective values of every row of `points`.
    fn full_values(&self, points: &ndarray::Array2<f64>) -> Result<Vec<f64>, PsoError> {
        let mut vals = Vec::with_capacity(points.nrows());
        for i in 0..points.nrows() {
            vals.push(self.cfg.objective.eval_full(points.row(i).as_slice().unwrap())?);
        }
        Ok(vals)
    }

    /// Consensus of the whole swarm under the full objective: local bests in
    /// memory mode, positions otherwise. Also folds the evaluated values into
    /// the best-seen tracker.
    fn global_consensus(&mut self) -> Result<Vec<f64>, PsoError> {
        let all: Vec<usize> = (0..self.state.n()).collect();
        let (points, vals) = if self.memory_on() {
            let bests = self.state.local_bests.as_ref().unwrap();
            (bests.clone(), self.full_values(bests)?)
        } else {
            (self.state.positions.clone(), self.full_values(&self.state.positions)?)
        };
        for &v in &vals {
            if v < self.best_seen {
                self.best_seen = v;
            }
        }
        consensus_point_subset(points.view(), &vals, &all, self.sched.alpha)
    }

    fn record(&mut self) -> Result<(), PsoError> {
        if self.memory_on() {
            // Positions contribute to best-seen even before they become bests.
            for v in self.full_values(&self.state.positions)? {
                if v < self.best_seen {
                    self.best_seen = v;
                }
            }
        }
        let consensus = self.global_consensus()?;
        let eff = self.effective_params();
        let h = if self.memory_on() {
            h_memory(&self.state, &eff)?
        } else {
            h_memoryless(&self.state, &eff)
        };
        self.series.push(Record {
            t: self.state.time(self.base.dt),
            h,
            variance: empirical_variance(self.state.positions.view()),
            best_value: self.best_seen,
            consensus,
        });
        self.last_record_step = Some(self.state.step);
        Ok(())
    }

    fn window_stop_met(&self) -> bool {
        let Some(w) = &self.cfg.stop_window else { return false };
        if self.series.len() < w.window {
            return false;
        }
        let tail = &self.series[self.series.len() - w.window..];
        tail.windows(2).all(|pair| {
            let d2: f64 = pair[0]
                .consensus
                .iter()
                .zip(&pair[1].consensus)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() < w.tol
        })
    }

    /// Consensus of one particle set. Memory mode reads the cached local-best
    /// values; otherwise the set's positions are evaluated against the active
    /// batch.
    fn partition_consensus(
        &self,
        set: &[usize],
        active_obj: &ActiveObjective,
        scratch: &mut [f64],
    ) -> Result<Vec<f64>, PsoError> {
        if self.memory_on() {
            consensus_point_subset(
                self.state.local_bests.as_ref().unwrap().view(),
                self.state.best_values.as_ref().unwrap().as_slice().unwrap(),
                set,
                self.sched.alpha,
            )
        } else {
            for &i in set {
                scratch[i] = active_obj.value(self.state.positions.row(i).as_slice().unwrap())?;
            }
            consensus_point_subset(self.state.positions.view(), scratch, set, self.sched.alpha)
        }
    }

    /// Particle sets for one (epoch, batch) pair: a seeded permutation chopped
    /// into blocks of n_N, each sorted so consensus accumulation stays in
    /// index order. A single set skips the shuffle entirely.
    fn particle_sets(&self, epoch: u64, batch_index: u64) -> Vec<Vec<usize>> {
        let n = self.state.n();
        if self.n_particle >= n {
            return vec![(0..n).collect()];
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut stream = Stream::new(&[
            self.state.seed,
            Channel::ParticleShuffle as u64,
            epoch,
            batch_index,
        ]);
        stream.shuffle(&mut perm);
        perm.chunks(self.n_particle)
            .map(|c| {
                let mut set = c.to_vec();
                set.sort_unstable();
                set
            })
            .collect()
    }

    fn truncate_particles(&mut self, keep: usize) {
        if keep >= self.state.n() {
            return;
        }
        self.state.positions = self.state.positions.slice(s![..keep, ..]).to_owned();
        self.state.velocities = self.state.velocities.slice(s![..keep, ..]).to_owned();
        if let Some(b) = &self.state.local_bests {
            self.state.local_bests = Some(b.slice(s![..keep, ..]).to_owned());
        }
        if let Some(v) = &self.state.best_values {
            self.state.best_values = Some(v.slice(s![..keep]).to_owned());
        }
        self.sched.particles = keep;
    }

    /// The full loop nest. Divergence surfaces as `Err(PsoError::Diverged)`.
    fn drive(&mut self) -> Result<(), PsoError> {
        for e in 0..self.cfg.max_epochs {
            let epoch_idx = u64::from(self.sched.epoch);
            let eff = self.effective_params();
            let var_start =
                (self.sched.mu > 0.0).then(|| empirical_variance(self.state.positions.view()));

            let plan = match self.data_batch {
                Some(n_e) => {
                    let m = self.cfg.objective.term_count().unwrap();
                    let mut stream = Stream::new(&[
                        self.state.seed,
                        Channel::DataShuffle as u64,
                        epoch_idx,
                    ]);
                    Some(make_data_batches(m, n_e, &mut stream)?)
                }
                None => None,
            };

            // Cached local-best values start against the full objective;
            // under batching they are re-recorded against the first active
            // batch before any step uses them.
            if e == 0 && self.memory_on() {
                if let Some(p) = &plan {
                    let batch = &p.batches()[0];
                    let bests = self.state.local_bests.as_ref().unwrap();
                    let mut vals = self.state.best_values.as_ref().unwrap().clone();
                    for i in 0..bests.nrows() {
                        vals[i] = self
                            .cfg
                            .objective
                            .eval_batch(bests.row(i).as_slice().unwrap(), batch)?;
                    }
                    self.state.best_values = Some(vals);
                }
            }

            let batch_count = plan.as_ref().map_or(1, |p| p.batches().len());
            let mut scratch = vec![0.0; self.state.n()];
            for bi in 0..batch_count {
                let batch = plan.as_ref().map(|p| p.batches()[bi].as_slice());
                let active_obj = match batch {
                    Some(b) => ActiveObjective::Batch(&self.cfg.objective, b),
                    None => ActiveObjective::Full(&self.cfg.objective),
                };
                for set in self.particle_sets(epoch_idx, bi as u64) {
                    let cons = self.partition_consensus(&set, &active_obj, &mut scratch)?;
                    let active = match self.cfg.update {
                        UpdateMode::Full => Active::All,
                        UpdateMode::Partial => Active::Subset(&set),
                    };
                    let ctx = StepContext { consensus: &cons, objective: active_obj, active };
                    if self.memory_on() {
                        step_memory(&mut self.state, &eff, &ctx)?;
                    } else {
                        step_memoryless(&mut self.state, &eff, &ctx)?;
                    }
                    stagnation_kick(&mut self.state, &mut self.sched, &cons, eff.dt);
                    if self.state.step % self.cfg.recording_interval == 0 {
                        self.record()?;
                    }
                }
            }

            self.epochs_completed += 1;
            if self.window_stop_met() {
                self.stopped_by_window = true;
                return Ok(());
            }
            if let Some(vs) = var_start {
                let ve = empirical_variance(self.state.positions.view());
                let keep = particle_decay(
                    self.state.n(),
                    self.sched.mu,
                    vs,
                    ve,
                    self.sched.min_particles,
                );
                self.truncate_particles(keep);
            }
            self.sched.cooling_step();
        }
        Ok(())
    }
}

/// Execute one full run. Divergence is reported in the result, not as an
/// error; errors are reserved for invalid configurations and failed
/// evaluations.
pub fn run(config: &RunConfig) -> Result<RunReport, PsoError> {
    let started = Instant::now();
    let base = validate_config(config)?;
    let (_, _, data_batch, n_particle) = resolve_batching(config)?;

    let init = InitSpec {
        position: config.position.clone(),
        velocity: config.velocity.clone(),
        seed: config.seed,
    };
    let state = init_swarm(&base, &init, &config.objective)?;
    let mut sched = ScheduleState::from_params(&base);
    sched.mu = config.decay_mu;
    sched.cooling_enabled = config.cooling;
    if let Some(tol) = config.stagnation_tol {
        sched.stagnation_tol = tol;
    }
    sched.kick_magnitude = config.kick_magnitude;
    sched.kick_target = config.kick_target;
    sched.min_particles = config.min_particles;

    let mut driver = Driver {
        cfg: config,
        base,
        state,
        sched,
        series: Vec::new(),
        best_seen: f64::INFINITY,
        data_batch,
        n_particle,
        epochs_completed: 0,
        stopped_by_window: false,
        last_record_step: None,
    };
    driver.record()?;

    let diverged = match driver.drive() {
        Ok(()) => false,
        Err(PsoError::Diverged { .. }) => true,
        Err(e) => return Err(e),
    };

    if !diverged && driver.last_record_step != Some(driver.state.step) {
        driver.record()?;
    }
    let final_consensus = if diverged {
        driver.series.last().unwrap().consensus.clone()
    } else {
        driver.global_consensus()?
    };
    let success = config.objective.minimizer().map(|xstar| {
        classify_success(&final_consensus, xstar, config.success_tol, diverged)
    });

    Ok(RunReport {
        final_consensus,
        best_seen_value: driver.best_seen,
        series: driver.series,
        success,
        epochs_completed: driver.epochs_completed,
        steps: driver.state.step,
        particles_final: driver.state.n(),
        diverged,
        stopped_by_window: driver.stopped_by_window,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One cell of a phase diagram.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseCell {
    pub mass: f64,
    pub sigma2: f64,
    pub success_prob: f64,
    pub diverged_frac: f64,
}

/// Success probabilities over a (mass, sigma2) grid.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseDiagram {
    pub m_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    /// Row-major over (m, sigma2).
    pub cells: Vec<PhaseCell>,
    pub runs_per_cell: usize,
}

/// Sweep mass and consensus-noise strength, running `runs_per_cell`
/// independent seeded runs per cell. Friction is slaved to the mass as
/// `gamma = 1 - m` and the memory noise to the consensus noise as
/// `sigma1 = lambda1 sigma2`. Cells run concurrently; every cell's seeds
/// derive from (seed, i, j, r), so the matrix is reproducible regardless of
/// thread count. Diverged runs count as failures.
pub fn phase_diagram(
    base: &RunConfig,
    m_grid: &[f64],
    sigma_grid: &[f64],
    runs_per_cell: usize,
) -> Result<PhaseDiagram, PsoError> {
    if m_grid.is_empty() || sigma_grid.is_empty() {
        return Err(PsoError::invalid("phase-diagram grids must be nonempty"));
    }
    if runs_per_cell == 0 {
        return Err(PsoError::invalid("need at least one run per cell"));
    }
    if base.objective.minimizer().is_none() {
        return Err(PsoError::invalid(
            "phase diagram needs an objective with a known minimizer",
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..m_grid.len())
        .flat_map(|i| (0..sigma_grid.len()).map(move |j| (i, j)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let m = m_grid[i];
            let sigma2 = sigma_grid[j];
            let mut successes = 0usize;
            let mut diverged = 0usize;
            for r in 0..runs_per_cell {
                let mut cfg = base.clone();
                cfg.params.mass = m;
                cfg.params.friction = 1.0 - m;
                cfg.params.sigma2 = sigma2;
                cfg.params.sigma1 = cfg.params.lambda1 * sigma2;
                cfg.seed = mix(&[base.seed, i as u64, j as u64, r as u64]);
                let report = run(&cfg)?;
                if report.diverged {
                    diverged += 1;
                }
                if report.success == Some(true) {
                    successes += 1;
                }
            }
            Ok(PhaseCell {
                mass: m,
                sigma2,
                success_prob: successes as f64 / runs_per_cell as f64,
                diverged_frac: diverged as f64 / runs_per_cell as f64,
            })
        })
        .collect::<Result<Vec<_>, PsoError>>()?;
    Ok(PhaseDiagram {
        m_grid: m_grid.to_vec(),
        sigma_grid: sigma_grid.to_vec(),
        cells,
        runs_per_cell,
    })
}
