//! Semi-implicit Euler-Maruyama step kernels.
//!
//! One kernel invocation advances the active particles by one time step:
//!
//! ```text
//! V_{k+1} = m/(m + dt g) V_k
//!         + dt/(m + dt g) [l1 (Y_k - X_k) + l2 (c - X_k)]
//!         + sqrt(dt)/(m + dt g) [s1 D(Y_k - X_k) B1 + s2 D(c - X_k) B2]
//! X_{k+1} = X_k + dt V_{k+1}
//! ```
//!
//! (friction handled implicitly, everything else explicitly), followed in
//! memory mode by the local-best update. The memoryless kernel is the same
//! map with the memory direction zeroed, sharing the identical inner
//! expression tree, so switching modes with lambda1 = sigma1 = 0 reproduces
//! trajectories bit for bit. Both kernels advance the step counter exactly
//! once per invocation; noise is drawn only for active particles, keyed by
//! (seed, channel, particle, step).

use crate::error::PsoError;
use crate::objective::ObjectiveFunction;
use crate::rng::{Channel, Stream};
use crate::swarm::{apply_diffusion_into, MemoryMode, SwarmParams, SwarmState};

/// Coordinates beyond this magnitude (or non-finite) count as divergence.
pub const BLOWUP_BOUND: f64 = 1e100;

/// The objective restricted to the currently active data batch, or the full
/// objective when no batching is in effect.
#[derive(Clone, Copy)]
pub enum ActiveObjective<'a> {
    Full(&'a ObjectiveFunction),
    Batch(&'a ObjectiveFunction, &'a [usize]),
}

impl ActiveObjective<'_> {
    pub fn value(&self, x: &[f64]) -> Result<f64, PsoError> {
        match self {
            ActiveObjective::Full(obj) => obj.eval_full(x),
            ActiveObjective::Batch(obj, batch) => obj.eval_batch(x, batch),
        }
    }
}

/// Which particles a kernel invocation moves.
#[derive(Clone, Copy)]
pub enum Active<'a> {
    All,
    Subset(&'a [usize]),
}

impl Active<'_> {
    pub fn for_each(&self, n: usize, mut f: impl FnMut(usize)) {
        match self {
            Active::All => (0..n).for_each(&mut f),
            Active::Subset(s) => s.iter().copied().for_each(&mut f),
        }
    }

    pub fn try_for_each(
        &self,
        n: usize,
        mut f: impl FnMut(usize) -> Result<(), PsoError>,
    ) -> Result<(), PsoError> {
        match self {
            Active::All => (0..n).try_for_each(&mut f),
            Active::Subset(s) => s.iter().copied().try_for_each(&mut f),
        }
    }
}

/// Everything a step needs besides the state: the consensus point the active
/// particles are attracted to, the evaluator for local-best bookkeeping, and
/// the active particle set.
pub struct StepContext<'a> {
    pub consensus: &'a [f64],
    pub objective: ActiveObjective<'a>,
    pub active: Active<'a>,
}

struct Scratch {
    zy: Vec<f64>,
    zc: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Scratch {
        Scratch {
            zy: vec![0.0; d],
            zc: vec![0.0; d],
            b1: vec![0.0; d],
            b2: vec![0.0; d],
            d1: vec![0.0; d],
            d2: vec![0.0; d],
        }
    }
}

#[inline]
fn advance_one(
    x: &mut [f64],
    v: &mut [f64],
    y: Option<&[f64]>,
    consensus: &[f64],
    p: &SwarmParams,
    s: &mut Scratch,
) {
    let d = x.len();
    for k in 0..d {
        s.zc[k] = consensus[k] - x[k];
    }
    match y {
        Some(yr) => {
            for k in 0..d {
                s.zy[k] = yr[k] - x[k];
            }
        }
        None => s.zy.fill(0.0),
    }
    apply_diffusion_into(p.diffusion, &s.zy, &s.b1, &mut s.d1);
    apply_diffusion_into(p.diffusion, &s.zc, &s.b2, &mut s.d2);
    let denom = p.denom();
    let inert = p.mass / denom;
    let drift = p.dt / denom;
    let noise = p.dt.sqrt() / denom;
    for k in 0..d {
        v[k] = inert * v[k]
            + drift * (p.lambda1 * s.zy[k] + p.lambda2 * s.zc[k])
            + noise * (p.sigma1 * s.d1[k] + p.sigma2 * s.d2[k]);
        x[k] += p.dt * v[k];
    }
}

fn check_consensus(consensus: &[f64], d: usize) -> Result<(), PsoError> {
    if consensus.len() != d {
        return Err(PsoError::invalid(format!(
            "consensus has dimension {}, state has {}",
            consensus.len(),
            d
        )));
    }
    Ok(())
}

fn divergence_check(state: &SwarmState) -> Result<(), PsoError> {
    let bad = |a: &ndarray::Array2<f64>| a.iter().any(|&c| !c.is_finite() || c.abs() > BLOWUP_BOUND);
    if bad(&state.positions)
        || bad(&state.velocities)
        || state.local_bests.as_ref().is_some_and(bad)
    {
        return Err(PsoError::Diverged { step: state.step });
    }
    Ok(())
}

/// One memoryless step toward the consensus of current positions. On
/// divergence the step counter is left unincremented and the error carries
/// the index of the failed step.
pub fn step_memoryless(
    state: &mut SwarmState,
    params: &SwarmParams,
    ctx: &StepContext,
) -> Result<(), PsoError> {
    let d = state.dim();
    check_consensus(ctx.consensus, d)?;
    let n = state.n();
    let seed = state.seed;
    let step = state.step;
    let mut scratch = Scratch::new(d);
    let positions = &mut state.positions;
    let velocities = &mut state.velocities;
    ctx.active.for_each(n, |i| {
        let mut ns = Stream::for_particle(seed, Channel::NoiseConsensus, i as u64, step);
        ns.fill_normal(&mut scratch.b2);
        advance_one(
            positions.row_mut(i).as_slice_mut().unwrap(),
            velocities.row_mut(i).as_slice_mut().unwrap(),
            None,
            ctx.consensus,
            params,
            &mut scratch,
        );
    });
    divergence_check(state)?;
    state.step += 1;
    Ok(())
}

/// One step with local-best drift and noise, then the local-best update for
/// the active particles.
pub fn step_memory(
    state: &mut SwarmState,
    params: &SwarmParams,
    ctx: &StepContext,
) -> Result<(), PsoError> {
    let d = state.dim();
    check_consensus(ctx.consensus, d)?;
    if state.local_bests.is_none() || state.best_values.is_none() {
        return Err(PsoError::invalid("memory step on a state without local bests"));
    }
    let n = state.n();
    let seed = state.seed;
    let step = state.step;
    let mut scratch = Scratch::new(d);
    {
        let bests = state.local_bests.as_ref().unwrap();
        let positions = &mut state.positions;
        let velocities = &mut state.velocities;
        ctx.active.for_each(n, |i| {
            let mut m1 = Stream::for_particle(seed, Channel::NoiseMemory, i as u64, step);
            m1.fill_normal(&mut scratch.b1);
            let mut m2 = Stream::for_particle(seed, Channel::NoiseConsensus, i as u64, step);
            m2.fill_normal(&mut scratch.b2);
            advance_one(
                positions.row_mut(i).as_slice_mut().unwrap(),
                velocities.row_mut(i).as_slice_mut().unwrap(),
                Some(bests.row(i).as_slice().unwrap()),
                ctx.consensus,
                params,
                &mut scratch,
            );
        });
    }
    update_local_best(state, params, ctx.objective, &ctx.active)?;
    divergence_check(state)?;
    state.step += 1;
    Ok(())
}

/// Objective-comparison switch `1 + theta + tanh(beta (eAtY - eAtX))`,
/// valued in (theta, 2 + theta). Well defined for beta = inf (the hard
/// limit): equal arguments give the midpoint 1 + theta.
pub fn smoothed_switch(e_at_x: f64, e_at_y: f64, beta: f64, theta: f64) -> f64 {
    let diff = e_at_y - e_at_x;
    if diff == 0.0 {
        return 1.0 + theta;
    }
    1.0 + theta + (beta * diff).tanh()
}

/// Refresh the local bests of the active particles from current positions.
///
/// Hard mode replaces best i exactly when the objective strictly improves
/// (ties keep the incumbent) and refreshes the cached value. Soft mode relaxes
/// the best toward the position by an explicit Euler step of rate
/// `kappa * smoothed_switch` and re-caches the objective at the moved best.
pub fn update_local_best(
    state: &mut SwarmState,
    params: &SwarmParams,
    objective: ActiveObjective,
    active: &Active,
) -> Result<(), PsoError> {
    let n = state.n();
    let positions = &state.positions;
    let bests = state
        .local_bests
        .as_mut()
        .ok_or_else(|| PsoError::invalid("local-best update on a memoryless state"))?;
    let values = state.best_values.as_mut().unwrap();
    match params.memory {
        MemoryMode::Off => Err(PsoError::invalid("local-best update with memory off")),
        MemoryMode::Hard => active.try_for_each(n, |i| {
            let xr = positions.row(i);
            let e_new = objective.value(xr.as_slice().unwrap())?;
            if e_new < values[i] {
                bests.row_mut(i).assign(&xr);
                values[i] = e_new;
            }
            Ok(())
        }),
        MemoryMode::Soft => active.try_for_each(n, |i| {
            let xr = positions.row(i);
            let x = xr.as_slice().unwrap();
            let e_x = objective.value(x)?;
            let gain = params.dt * params.kappa * smoothed_switch(e_x, values[i], params.beta, params.theta);
            let mut br = bests.row_mut(i);
            let b = br.as_slice_mut().unwrap();
            for k in 0..b.len() {
                b[k] += gain * (x[k] - b[k]);
            }
            values[i] = objective.value(b)?;
            Ok(())
        }),
    }
}
