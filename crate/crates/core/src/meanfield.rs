//! Empirical measurement of the mean-field approximation error.
//!
//! The interacting N-particle system and its mean-field limit can be coupled
//! by sharing initial data and Brownian paths; the mean squared coupling
//! distance then shrinks like 1/N. This module measures that rate: a large
//! reference ensemble (N_ref >> N) stands in for the limit law and its
//! consensus trajectory is frozen; for each N an interacting system and a
//! proxy system driven by the frozen trajectory are advanced in lock step
//! with identical initial data and identical Gaussian increments, and the
//! worst coupling distance over particles and steps is recorded.
//!
//! The counter-based noise keying makes the sharing exact: particle i of the
//! N-system, of the proxy system, and of the reference system consume the
//! same draws at every step, so the only difference between the interacting
//! and proxy trajectories is which consensus point they see.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::consensus_point_subset;
use crate::dynamics::{step_memoryless, Active, ActiveObjective, StepContext};
use crate::error::PsoError;
use crate::objective::ObjectiveFunction;
use crate::rng::{mix, Channel, Stream};
use crate::swarm::{init_swarm, InitSpec, Distribution, MemoryMode, SwarmParams, SwarmState};

/// One ensemble size of the error curve.
#[derive(Clone, Debug, Serialize)]
pub struct MfaPoint {
    pub particles: usize,
    /// Mean over retained repetitions of the worst squared coupling distance.
    pub mean_error: f64,
    /// Standard error of that mean (NaN with fewer than two retained reps).
    pub stderr: f64,
    pub retained: usize,
}

/// The measured error curve with its fitted log-log slope.
#[derive(Clone, Debug, Serialize)]
pub struct MfaCurve {
    pub points: Vec<MfaPoint>,
    pub reps: usize,
    /// Least-squares slope of log error against log N; NaN when fewer than
    /// two ensemble sizes have a positive mean error.
    pub slope: f64,
    /// Approximate 95% half-width of the slope estimate.
    pub slope_half_width: f64,
    /// Fraction of (N, repetition) cells dropped because a run diverged.
    pub exclusion_fraction: f64,
}

/// Evaluate the objective on every row and form the consensus point.
fn ensemble_consensus(
    obj: &ObjectiveFunction,
    positions: ArrayView2<f64>,
    alpha: f64,
) -> Result<Vec<f64>, PsoError> {
    let mut values = Vec::with_capacity(positions.nrows());
    for i in 0..positions.nrows() {
        values.push(obj.eval_full(positions.row(i).as_slice().unwrap())?);
    }
    let all: Vec<usize> = (0..positions.nrows()).collect();
    consensus_point_subset(positions, &values, &all, alpha)
}

/// Order-dependent digest of the Gaussian draws one system consumes at one
/// step. Recomputes the draws from their keys, so two systems digest equal
/// checksums exactly when their (seed, step) keying stays aligned.
fn draw_checksum(acc: u64, seed: u64, step: u64, n: usize, d: usize) -> u64 {
    let mut acc = acc;
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let mut s = Stream::for_particle(seed, Channel::NoiseConsensus, i as u64, step);
        s.fill_normal(&mut buf);
        for b in &buf {
            acc = mix(&[acc, b.to_bits()]);
        }
    }
    acc
}

/// Reference run: advance `n_ref` particles for `steps` steps and record the
/// consensus trajectory that drove each step.
fn frozen_consensus_trajectory(
    obj: &ObjectiveFunction,
    params: &SwarmParams,
    init: &InitSpec,
    steps: u64,
) -> Result<Vec<Vec<f64>>, PsoError> {
    let mut state = init_swarm(params, init, obj)?;
    let mut frozen = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let cons = ensemble_consensus(obj, state.positions.view(), params.alpha)?;
        let ctx = StepContext {
            consensus: &cons,
            objective: ActiveObjective::Full(obj),
            active: Active::All,
        };
        step_memoryless(&mut state, params, &ctx)?;
        frozen.push(cons);
    }
    Ok(frozen)
}

fn coupling_distance(a: &SwarmState, b: &SwarmState) -> f64 {
    let n = a.n();
    let d = a.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut dist = 0.0;
        for k in 0..d {
            let dx = a.positions[(i, k)] - b.positions[(i, k)];
            let dv = a.velocities[(i, k)] - b.velocities[(i, k)];
            dist += dx * dx + dv * dv;
        }
        worst = worst.max(dist);
    }
    worst
}

/// Run the interacting system and the frozen-trajectory proxy in lock step;
/// returns the sup over steps and particles of the squared coupling distance.
fn coupling_error(
    obj: &ObjectiveFunction,
    params: &SwarmParams,
    init: &InitSpec,
    frozen: &[Vec<f64>],
) -> Result<f64, PsoError> {
    let mut sys = init_swarm(params, init, obj)?;
    let mut proxy = sys.clone();
    let n = sys.n();
    let d = sys.dim();
    let mut worst = 0.0f64;
    let mut digest_sys = 0u64;
    let mut digest_proxy = 0u64;
    for cons_frozen in frozen {
        let cons_own = ensemble_consensus(obj, sys.positions.view(), params.alpha)?;
        digest_sys = draw_checksum(digest_sys, sys.seed, sys.step, n, d);
        let ctx = StepContext {
            consensus: &cons_own,
            objective: ActiveObjective::Full(obj),
            active: Active::All,
        };
        step_memoryless(&mut sys, params, &ctx)?;

        digest_proxy = draw_checksum(digest_proxy, proxy.seed, proxy.step, n, d);
        let ctx = StepContext {
            consensus: cons_frozen,
            objective: ActiveObjective::Full(obj),
            active: Active::All,
        };
        step_memoryless(&mut proxy, params, &ctx)?;

        worst = worst.max(coupling_distance(&sys, &proxy));
    }
    assert_eq!(
        digest_sys, digest_proxy,
        "coupled systems consumed different Gaussian draws"
    );
    Ok(worst)
}

/// Unweighted least squares of ln(err) on ln(N); returns the slope and an
/// approximate 95% half-width. NaN when fewer than two positive errors exist.
fn fit_log_slope(points: &[MfaPoint]) -> (f64, f64) {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_error > 0.0 && p.mean_error.is_finite())
        .map(|p| ((p.particles as f64).ln(), p.mean_error.ln()))
        .collect();
    let n = data.len();
    if n < 2 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mx = data.iter().map(|(x, _)| x).sum::<f64>() / nf;
    let my = data.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let sxx: f64 = data.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = data.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if n == 2 {
        return (slope, f64::NAN);
    }
    let ss_res: f64 = data
        .iter()
        .map(|(x, y)| {
            let fit = my + slope * (x - mx);
            (y - fit) * (y - fit)
        })
        .sum();
    let se = (ss_res / ((nf - 2.0) * sxx)).sqrt();
    (slope, 1.96 * se)
}

fn validate_inputs(
    params: &SwarmParams,
    ns: &[usize],
    n_ref: usize,
    steps: u64,
    reps: usize,
) -> Result<(), PsoError> {
    if params.memory != MemoryMode::Off {
        return Err(PsoError::unsupported(
            "mean-field error curve supports only the memoryless dynamics",
        ));
    }
    if ns.is_empty() || reps == 0 {
        return Err(PsoError::invalid("need at least one ensemble size and one repetition"));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(PsoError::invalid("ensemble sizes must be positive and strictly increasing"));
    }
    let max_n = *ns.last().unwrap();
    if n_ref < 8 * max_n {
        return Err(PsoError::invalid(format!(
            "reference ensemble of {n_ref} is too small for N up to {max_n}; need at least {}",
            8 * max_n
        )));
    }
    if steps == 0 {
        return Err(PsoError::invalid("time horizon is shorter than one step"));
    }
    Ok(())
}

/// Measure the coupling error curve over the given ensemble sizes.
///
/// For each repetition a fresh reference system of `n_ref` particles freezes
/// a consensus trajectory over `t_final` (at the step size in `params`); each
/// N in `ns` then couples an interacting system against a proxy driven by
/// that trajectory, both built from the first N particles of the reference
/// key space. Divergent cells are excluded and counted. Results are
/// bit-identical for a fixed seed regardless of thread count.
pub fn mfa_error_curve(
    obj: &ObjectiveFunction,
    params: &SwarmParams,
    position: &Distribution,
    velocity: &Distribution,
    ns: &[usize],
    n_ref: usize,
    t_final: f64,
    reps: usize,
    seed: u64,
) -> Result<MfaCurve, PsoError> {
    let steps = (t_final / params.dt).round() as u64;
    validate_inputs(params, ns, n_ref, steps, reps)?;

    // One entry per repetition: per-N error, or None for an excluded cell.
    let per_rep: Vec<Vec<Option<f64>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = mix(&[seed, rep]);
            let init = InitSpec {
                position: position.clone(),
                velocity: velocity.clone(),
                seed: rep_seed,
            };
            let ref_params = SwarmParams { particles: n_ref, ..params.clone() };
            let frozen = match frozen_consensus_trajectory(obj, &ref_params, &init, steps) {
                Ok(f) => f,
                Err(PsoError::Diverged { .. }) => return Ok(vec![None; ns.len()]),
                Err(e) => return Err(e),
            };
            let mut row = Vec::with_capacity(ns.len());
            for &n in ns {
                let n_params = SwarmParams { particles: n, ..params.clone() };
                match coupling_error(obj, &n_params, &init, &frozen) {
                    Ok(err) => row.push(Some(err)),
                    Err(PsoError::Diverged { .. }) => row.push(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(row)
        })
        .collect::<Result<_, PsoError>>()?;

    let mut points = Vec::with_capacity(ns.len());
    let mut excluded = 0usize;
    for (j, &n) in ns.iter().enumerate() {
        let samples: Vec<f64> = per_rep.iter().filter_map(|row| row[j]).collect();
        excluded += reps - samples.len();
        if samples.is_empty() {
            return Err(PsoError::invalid(format!(
                "every repetition diverged for ensemble size {n}"
            )));
        }
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count as f64;
        let stderr = if count >= 2 {
            let var =
                samples.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            f64::NAN
        };
        points.push(MfaPoint { particles: n, mean_error: mean, stderr, retained: count });
    }

    let (slope, slope_half_width) = fit_log_slope(&points);
    Ok(MfaCurve {
        points,
        reps,
        slope,
        slope_half_width,
        exclusion_fraction: excluded as f64 / (reps * ns.len()) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::make_sphere;

    fn mfa_params(particles: usize, dim: usize) -> SwarmParams {
        SwarmParams {
            mass: 0.2,
            friction: 0.8,
            lambda2: 1.0,
            sigma2: 0.4,
            alpha: 10.0,
            dt: 0.02,
            ..SwarmParams::defaults(dim, particles)
        }
    }

    fn unit_init(seed: u64, dim: usize) -> InitSpec {
        InitSpec {
            position: Distribution::gaussian_iso(dim, 1.0, 1.0),
            velocity: Distribution::gaussian_iso(dim, 0.0, 0.25),
            seed,
        }
    }

    #[test]
    fn decoupled_dynamics_have_zero_error() {
        // With lambda2 = sigma2 = 0 the particles never look at the consensus,
        // so the interacting and proxy systems coincide exactly.
        let obj = make_sphere(2).unwrap();
        let params = SwarmParams { lambda2: 0.0, sigma2: 0.0, ..mfa_params(0, 2) };
        let curve = mfa_error_curve(
            &obj,
            &params,
            &Distribution::gaussian_iso(2, 1.0, 1.0),
            &Distribution::gaussian_iso(2, 0.0, 0.25),
            &[4, 8],
            64,
            0.2,
            2,
            9,
        )
        .unwrap();
        for p in &curve.points {
            assert_eq!(p.mean_error, 0.0);
            assert_eq!(p.retained, 2);
        }
        assert!(curve.slope.is_nan(), "no positive errors to fit");
        assert_eq!(curve.exclusion_fraction, 0.0);
    }

    #[test]
    fn self_coupling_is_exact() {
        // The interacting system of the same size, seed and particle keys as
        // the reference recomputes the identical consensus at every step, so
        // the proxy trajectory is bitwise the interacting one.
        let obj = make_sphere(3).unwrap();
        let params = SwarmParams { particles: 32, ..mfa_params(32, 3) };
        let init = unit_init(5, 3);
        let frozen = frozen_consensus_trajectory(&obj, &params, &init, 25).unwrap();
        let err = coupling_error(&obj, &params, &init, &frozen).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn smaller_systems_feel_the_finite_size_gap() {
        let obj = make_sphere(3).unwrap();
        let params = mfa_params(0, 3);
        let init = unit_init(11, 3);
        let big = SwarmParams { particles: 256, ..params.clone() };
        let frozen = frozen_consensus_trajectory(&obj, &big, &init, 25).unwrap();
        let small = SwarmParams { particles: 8, ..params };
        let err = coupling_error(&obj, &small, &init, &frozen).unwrap();
        assert!(err > 0.0 && err.is_finite(), "finite-N error should be positive, got {err}");
    }

    #[test]
    fn curve_is_reproducible_bit_for_bit() {
        let obj = make_sphere(2).unwrap();
        let params = mfa_params(0, 2);
        let run = || {
            mfa_error_curve(
                &obj,
                &params,
                &Distribution::gaussian_iso(2, 1.0, 1.0),
                &Distribution::gaussian_iso(2, 0.0, 0.25),
                &[4, 8, 16],
                128,
                0.3,
                3,
                77,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.mean_error.to_bits(), pb.mean_error.to_bits());
            assert_eq!(pa.stderr.to_bits(), pb.stderr.to_bits());
        }
        assert_eq!(a.slope.to_bits(), b.slope.to_bits());
        assert!(a.points.iter().all(|p| p.mean_error >= 0.0 && p.mean_error.is_finite()));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let obj = make_sphere(2).unwrap();
        let params = mfa_params(0, 2);
        let pos = Distribution::gaussian_iso(2, 1.0, 1.0);
        let vel = Distribution::gaussian_iso(2, 0.0, 0.25);
        let call = |params: &SwarmParams, ns: &[usize], n_ref: usize, t: f64, reps: usize| {
            mfa_error_curve(&obj, params, &pos, &vel, ns, n_ref, t, reps, 1)
        };
        assert!(call(&params, &[8, 4], 128, 0.2, 2).is_err(), "non-increasing sizes");
        assert!(call(&params, &[4, 8], 32, 0.2, 2).is_err(), "reference too small");
        assert!(call(&params, &[], 128, 0.2, 2).is_err(), "no sizes");
        assert!(call(&params, &[4], 128, 0.2, 0).is_err(), "no reps");
        assert!(call(&params, &[4], 128, 0.0, 2).is_err(), "no steps");
        let memory = SwarmParams { memory: MemoryMode::Hard, ..params.clone() };
        match call(&memory, &[4], 128, 0.2, 2) {
            Err(PsoError::Unsupported(_)) => {}
            other => panic!("memory mode should be unsupported, got {other:?}"),
        }
    }

    #[test]
    fn slope_fit_recovers_an_exact_power_law() {
        let points: Vec<MfaPoint> = [(50usize, 2.0f64), (100, 1.0), (200, 0.5), (400, 0.25)]
            .iter()
            .map(|&(n, e)| MfaPoint { particles: n, mean_error: e, stderr: 0.0, retained: 1 })
            .collect();
        let (slope, hw) = fit_log_slope(&points);
        assert!((slope - (-1.0)).abs() < 1e-12, "slope {slope}");
        assert!(hw < 1e-9, "exact fit should have negligible half-width, got {hw}");
    }
}
