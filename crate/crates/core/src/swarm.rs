//! Swarm parameters, state and initialization.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::PsoError;
use crate::objective::ObjectiveFunction;
use crate::rng::{Channel, Stream};

/// How the diffusion matrix D(z) acts on a noise vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionType {
    /// `D(z) B = |z|_2 B`.
    Isotropic,
    /// `D(z) B = diag(z) B`, componentwise.
    Anisotropic,
}

/// Local-best memory handling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    /// No memory: drift and noise toward the consensus of current positions.
    Off,
    /// Memory relaxes toward the position at rate kappa, gated by a smooth
    /// objective-comparison switch.
    Soft,
    /// Memory jumps to the position exactly when the objective strictly
    /// improves (the soft update's kappa = 1/(2 dt), theta = 0, beta = inf
    /// limit).
    Hard,
}

/// All coefficients of the particle dynamics plus ensemble shape.
#[derive(Clone, Debug, Serialize)]
pub struct SwarmParams {
    /// Inertial mass m.
    pub mass: f64,
    /// Friction gamma.
    pub friction: f64,
    /// Drift strength toward the local best.
    pub lambda1: f64,
    /// Drift strength toward the consensus point.
    pub lambda2: f64,
    /// Noise strength on the local-best direction.
    pub sigma1: f64,
    /// Noise strength on the consensus direction.
    pub sigma2: f64,
    /// Weight sharpness of the consensus.
    pub alpha: f64,
    /// Memory relaxation rate (soft mode).
    pub kappa: f64,
    /// Memory switch offset (soft mode).
    pub theta: f64,
    /// Memory switch steepness (soft mode); may be `f64::INFINITY`.
    pub beta: f64,
    /// Time step.
    pub dt: f64,
    pub diffusion: DiffusionType,
    pub memory: MemoryMode,
    /// Particle count N.
    pub particles: usize,
    /// Search space dimension d.
    pub dim: usize,
}

impl SwarmParams {
    /// Benchmark-flavored defaults; memory off.
    pub fn defaults(dim: usize, particles: usize) -> SwarmParams {
        let dt = 0.01;
        SwarmParams {
            mass: 0.2,
            friction: 0.8,
            lambda1: 0.0,
            lambda2: 1.0,
            sigma1: 0.0,
            sigma2: 2.0,
            alpha: 100.0,
            kappa: 1.0 / (2.0 * dt),
            theta: 0.0,
            beta: f64::INFINITY,
            dt,
            diffusion: DiffusionType::Anisotropic,
            memory: MemoryMode::Off,
            particles,
            dim,
        }
    }

    /// Check all parameter constraints; in hard memory mode the soft-switch
    /// triple is overwritten with its canonical values kappa = 1/(2 dt),
    /// theta = 0, beta = inf.
    pub fn validated(mut self) -> Result<SwarmParams, PsoError> {
        fn req(ok: bool, msg: &str) -> Result<(), PsoError> {
            if ok { Ok(()) } else { Err(PsoError::invalid(msg)) }
        }
        req(self.mass > 0.0 && self.mass.is_finite(), "mass must be positive")?;
        req(self.friction >= 0.0 && self.friction.is_finite(), "friction must be nonnegative")?;
        req(self.lambda1 >= 0.0 && self.lambda1.is_finite(), "lambda1 must be nonnegative")?;
        req(self.lambda2 > 0.0 && self.lambda2.is_finite(), "lambda2 must be positive")?;
        req(self.sigma1 >= 0.0 && self.sigma1.is_finite(), "sigma1 must be nonnegative")?;
        req(self.sigma2 >= 0.0 && self.sigma2.is_finite(), "sigma2 must be nonnegative")?;
        req(self.alpha > 0.0 && self.alpha.is_finite(), "alpha must be positive and finite")?;
        req(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive")?;
        req(self.particles >= 1, "need at least one particle")?;
        req(self.dim >= 1, "dimension must be at least 1")?;
        if self.memory == MemoryMode::Off {
            req(
                self.lambda1 == 0.0 && self.sigma1 == 0.0,
                "memory off requires lambda1 = 0 and sigma1 = 0",
            )?;
        }
        if self.memory == MemoryMode::Hard {
            self.kappa = 1.0 / (2.0 * self.dt);
            self.theta = 0.0;
            self.beta = f64::INFINITY;
        }
        req(self.kappa > 0.0 && self.kappa.is_finite(), "kappa must be positive and finite")?;
        req(self.theta >= 0.0 && self.theta.is_finite(), "theta must be nonnegative")?;
        req(self.beta > 0.0, "beta must be positive (possibly infinite)")?;
        Ok(self)
    }

    /// Denominator of the semi-implicit velocity update.
    pub fn denom(&self) -> f64 {
        self.mass + self.dt * self.friction
    }
}

/// A sampling distribution for one block of state (positions or velocities).
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Independent Gaussian per coordinate with diagonal covariance.
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    /// Uniform on an axis-aligned box.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

impl Distribution {
    /// Isotropic Gaussian with scalar mean and variance broadcast to `dim`.
    pub fn gaussian_iso(dim: usize, mean: f64, var: f64) -> Distribution {
        Distribution::Gaussian { mean: vec![mean; dim], var: vec![var; dim] }
    }

    fn validate(&self, dim: usize) -> Result<(), PsoError> {
        match self {
            Distribution::Gaussian { mean, var } => {
                if mean.len() != dim || var.len() != dim {
                    return Err(PsoError::invalid("init distribution dimension mismatch"));
                }
                if var.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(PsoError::invalid("init variances must be nonnegative"));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(PsoError::invalid("init distribution dimension mismatch"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(PsoError::invalid("init box must have lo <= hi"));
                }
            }
        }
        Ok(())
    }

    fn sample_into(&self, row: &mut [f64], stream: &mut Stream) {
        match self {
            Distribution::Gaussian { mean, var } => {
                stream.fill_normal(row);
                for (k, x) in row.iter_mut().enumerate() {
                    *x = mean[k] + var[k].sqrt() * *x;
                }
            }
            Distribution::Uniform { lo, hi } => {
                for (k, x) in row.iter_mut().enumerate() {
                    *x = stream.uniform_in(lo[k], hi[k]);
                }
            }
        }
    }
}

/// Initial distributions for positions and velocities plus the base seed.
#[derive(Clone, Debug, Serialize)]
pub struct InitSpec {
    pub position: Distribution,
    pub velocity: Distribution,
    pub seed: u64,
}

/// Full swarm state. `local_bests`/`best_values` are present exactly when the
/// memory mode is not `Off`; `best_values[i]` caches the objective value of
/// local best i so consensus weights never re-evaluate the objective.
#[derive(Clone, Debug)]
pub struct SwarmState {
    pub positions: Array2<f64>,
    pub velocities: Array2<f64>,
    pub local_bests: Option<Array2<f64>>,
    pub best_values: Option<Array1<f64>>,
    /// Step counter k; the physical time is `k * dt`.
    pub step: u64,
    /// Base seed of all counter-derived random streams.
    pub seed: u64,
}

impl SwarmState {
    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }
}

/// Sample a fresh swarm. Local bests start at the positions with their cached
/// values evaluated by the full objective (a batched driver re-records the
/// caches against its first active batch before stepping).
pub fn init_swarm(
    params: &SwarmParams,
    init: &InitSpec,
    obj: &ObjectiveFunction,
) -> Result<SwarmState, PsoError> {
    if obj.dim() != params.dim {
        return Err(PsoError::invalid(format!(
            "objective dimension {} does not match swarm dimension {}",
            obj.dim(),
            params.dim
        )));
    }
    init.position.validate(params.dim)?;
    init.velocity.validate(params.dim)?;

    let n = params.particles;
    let d = params.dim;
    let mut positions = Array2::zeros((n, d));
    let mut velocities = Array2::zeros((n, d));
    for i in 0..n {
        let mut ps = Stream::for_particle(init.seed, Channel::PositionInit, i as u64, 0);
        init.position.sample_into(positions.row_mut(i).as_slice_mut().unwrap(), &mut ps);
        let mut vs = Stream::for_particle(init.seed, Channel::VelocityInit, i as u64, 0);
        init.velocity.sample_into(velocities.row_mut(i).as_slice_mut().unwrap(), &mut vs);
    }

    let (local_bests, best_values) = if params.memory == MemoryMode::Off {
        (None, None)
    } else {
        let mut vals = Array1::zeros(n);
        for i in 0..n {
            vals[i] = obj.eval_full(positions.row(i).as_slice().unwrap())?;
        }
        (Some(positions.clone()), Some(vals))
    };

    Ok(SwarmState {
        positions,
        velocities,
        local_bests,
        best_values,
        step: 0,
        seed: init.seed,
    })
}

/// Apply the diffusion matrix to a noise vector: `|z| B` (isotropic) or
/// `diag(z) B` (anisotropic).
pub fn apply_diffusion_into(
    diffusion: DiffusionType,
    z: &[f64],
    noise: &[f64],
    out: &mut [f64],
) {
    debug_assert!(z.len() == noise.len() && z.len() == out.len());
    match diffusion {
        DiffusionType::Isotropic => {
            let norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
            for k in 0..out.len() {
                out[k] = norm * noise[k];
            }
        }
        DiffusionType::Anisotropic => {
            for k in 0..out.len() {
                out[k] = z[k] * noise[k];
            }
        }
    }
}

pub fn apply_diffusion(diffusion: DiffusionType, z: &[f64], noise: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    apply_diffusion_into(diffusion, z, noise, &mut out);
    out
}
