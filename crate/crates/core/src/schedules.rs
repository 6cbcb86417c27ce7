//! Epoch-level parameter schedules: weight cooling, particle decay, and
//! stagnation kicks.

use serde::Serialize;

use crate::rng::{Channel, Stream};
use crate::swarm::{SwarmParams, SwarmState};

/// Where a stagnation kick injects its noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KickTarget {
    Positions,
    Velocities,
}

/// Mutable schedule bookkeeping carried across epochs.
#[derive(Clone, Debug)]
pub struct ScheduleState {
    /// Current epoch, starting at 1.
    pub epoch: u32,
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Current particle count.
    pub particles: usize,
    /// Decay strength in [0, 1]; 0 disables decay.
    pub mu: f64,
    /// Consensus point of the previous partition step.
    pub prev_consensus: Option<Vec<f64>>,
    /// Stagnation tolerance tau; 0 never triggers a kick.
    pub stagnation_tol: f64,
    pub kick_magnitude: f64,
    pub kick_target: KickTarget,
    pub cooling_enabled: bool,
    /// Decay never shrinks the swarm below this.
    pub min_particles: usize,
}

impl ScheduleState {
    /// Schedule with everything disabled, seeded from the swarm parameters.
    /// The default stagnation tolerance scales with the space diagonal,
    /// `1e-4 sqrt(d)`.
    pub fn from_params(params: &SwarmParams) -> ScheduleState {
        ScheduleState {
            epoch: 1,
            alpha: params.alpha,
            sigma1: params.sigma1,
            sigma2: params.sigma2,
            particles: params.particles,
            mu: 0.0,
            prev_consensus: None,
            stagnation_tol: 1e-4 * (params.dim as f64).sqrt(),
            kick_magnitude: 0.0,
            kick_target: KickTarget::Velocities,
            cooling_enabled: false,
            min_particles: 2,
        }
    }

    /// End-of-epoch cooling: double alpha, divide both noise strengths by
    /// `log(epoch + 2)` of the epoch just completed (the first cooling divides
    /// by log 3), then advance the epoch counter. With cooling disabled only
    /// the counter advances.
    pub fn cooling_step(&mut self) {
        if self.cooling_enabled {
            self.alpha *= 2.0;
            let f = f64::from(self.epoch + 2).ln();
            self.sigma1 /= f;
            self.sigma2 /= f;
        }
        self.epoch += 1;
    }
}

/// Next epoch's particle count from the variance contraction over the epoch:
/// `ceil(N ((1 - mu) + mu varEnd/varStart))`, floored by the minimum count and
/// never exceeding the current count. A degenerate start variance keeps N.
pub fn particle_decay(
    n_epoch: usize,
    mu: f64,
    var_start: f64,
    var_end: f64,
    min_particles: usize,
) -> usize {
    if var_start == 0.0 {
        return n_epoch;
    }
    let target = (n_epoch as f64) * ((1.0 - mu) + mu * var_end / var_start);
    (target.ceil() as usize).max(min_particles).min(n_epoch)
}

/// Compare the new consensus with the previous one; if it moved less than the
/// stagnation tolerance, add `kick_magnitude * sqrt(dt)` Gaussian noise to all
/// particles' positions or velocities. The previous consensus is recorded
/// either way. Returns whether a kick fired.
pub fn stagnation_kick(
    state: &mut SwarmState,
    sched: &mut ScheduleState,
    new_consensus: &[f64],
    dt: f64,
) -> bool {
    let stagnant = match &sched.prev_consensus {
        Some(prev) if sched.stagnation_tol > 0.0 => {
            let dist2: f64 = prev
                .iter()
                .zip(new_consensus)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist2.sqrt() < sched.stagnation_tol
        }
        _ => false,
    };
    if stagnant && sched.kick_magnitude > 0.0 {
        let scale = sched.kick_magnitude * dt.sqrt();
        let target = match sched.kick_target {
            KickTarget::Positions => &mut state.positions,
            KickTarget::Velocities => &mut state.velocities,
        };
        let mut noise = vec![0.0; target.ncols()];
        for i in 0..target.nrows() {
            let mut s = Stream::for_particle(state.seed, Channel::Kick, i as u64, state.step);
            s.fill_normal(&mut noise);
            let mut row = target.row_mut(i);
            for k in 0..noise.len() {
                row[k] += scale * noise[k];
            }
        }
    }
    sched.prev_consensus = Some(new_consensus.to_vec());
    stagnant
}
