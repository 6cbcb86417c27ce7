//! Convergence diagnostics: Lyapunov-style energy functionals, success
//! classification, and a priori well-preparedness checks on the parameters
//! and the initial ensemble.
//!
//! The energy of a memoryless swarm is the ensemble mean of
//!
//! ```text
//! H_i = (g/2m)^2 |X_i - xbar|^2 + |V_i|^2 + (g/2m) <X_i - xbar, V_i>
//! ```
//!
//! and with memory
//!
//! ```text
//! H_i = (g/2m)^2 |X_i - xbar|^2 + 3/2 |V_i|^2
//!     + 1/2 (3 l1/m + g^2/m^2) |X_i - Y_i|^2
//!     + (g/2m) <X_i - xbar, V_i> + (g/m) <X_i - Y_i, V_i>
//! ```
//!
//! (g = friction, m = mass, l1 = lambda1). Completing squares shows each H_i
//! is pinched between multiples of the plain quadratic quantities, which is
//! what the equivalence property tests assert.
//!
//! The well-preparedness checks evaluate the sufficient conditions for
//! exponential decay of the mean energy at rate chi: a decay margin mu (mu1,
//! mu2 with memory) built from the parameters and the concentration of the
//! initial values, plus the parameter bounds that guarantee the margin can be
//! positive. The concentration enters through
//!
//! ```text
//! D0  =  2 exp(-alpha min E) / mean_i exp(-alpha v_i)      (memoryless)
//! D0Y = 12 exp(-alpha min E) / mean_i exp(-alpha v_i)      (with memory)
//! ```
//!
//! computed stably via log-sum-exp. Initial-datum conditions that need
//! gradients are a separate check, available only for objectives carrying an
//! analytic gradient oracle.

use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::PsoError;
use crate::objective::ObjectiveFunction;
use crate::swarm::{SwarmParams, SwarmState};

/// Default infinity-norm tolerance for calling a run successful.
pub const DEFAULT_SUCCESS_TOL: f64 = 0.25;

/// Mean squared deviation of the positions from their mean,
/// `mean_i |X_i - xbar|^2` (two-pass).
pub fn empirical_variance(positions: ArrayView2<f64>) -> f64 {
    let n = positions.nrows();
    let d = positions.ncols();
    assert!(n > 0, "variance of an empty ensemble");
    let mut mean = vec![0.0; d];
    for i in 0..n {
        let row = positions.row(i);
        for k in 0..d {
            mean[k] += row[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let row = positions.row(i);
        for k in 0..d {
            let dxk = row[k] - mean[k];
            acc += dxk * dxk;
        }
    }
    acc / n as f64
}

fn position_mean(positions: ArrayView2<f64>) -> Vec<f64> {
    let n = positions.nrows();
    let d = positions.ncols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        let row = positions.row(i);
        for k in 0..d {
            mean[k] += row[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    mean
}

/// Mean energy of a memoryless swarm.
pub fn h_memoryless(state: &SwarmState, params: &SwarmParams) -> f64 {
    let c = params.friction / (2.0 * params.mass);
    let n = state.n();
    let d = state.dim();
    let mean = position_mean(state.positions.view());
    let mut acc = 0.0;
    for i in 0..n {
        let x = state.positions.row(i);
        let v = state.velocities.row(i);
        let mut dx2 = 0.0;
        let mut v2 = 0.0;
        let mut cross = 0.0;
        for k in 0..d {
            let dxk = x[k] - mean[k];
            dx2 += dxk * dxk;
            v2 += v[k] * v[k];
            cross += dxk * v[k];
        }
        acc += c * c * dx2 + v2 + c * cross;
    }
    acc / n as f64
}

/// Mean energy of a swarm with local-best memory.
pub fn h_memory(state: &SwarmState, params: &SwarmParams) -> Result<f64, PsoError> {
    let bests = state
        .local_bests
        .as_ref()
        .ok_or_else(|| PsoError::invalid("memory energy needs local bests"))?;
    let m = params.mass;
    let g = params.friction;
    let c = g / (2.0 * m);
    let q = 0.5 * (3.0 * params.lambda1 / m + (g / m) * (g / m));
    let n = state.n();
    let d = state.dim();
    let mean = position_mean(state.positions.view());
    let mut acc = 0.0;
    for i in 0..n {
        let x = state.positions.row(i);
        let v = state.velocities.row(i);
        let y = bests.row(i);
        let mut dx2 = 0.0;
        let mut v2 = 0.0;
        let mut xy2 = 0.0;
        let mut cross_xv = 0.0;
        let mut cross_yv = 0.0;
        for k in 0..d {
            let dxk = x[k] - mean[k];
            let dyk = x[k] - y[k];
            dx2 += dxk * dxk;
            v2 += v[k] * v[k];
            xy2 += dyk * dyk;
            cross_xv += dxk * v[k];
            cross_yv += dyk * v[k];
        }
        acc += c * c * dx2 + 1.5 * v2 + q * xy2 + c * cross_xv + (g / m) * cross_yv;
    }
    Ok(acc / n as f64)
}

/// Success iff every consensus coordinate is strictly within `tol` of the
/// minimizer; a diverged run never counts as success.
pub fn classify_success(consensus: &[f64], minimizer: &[f64], tol: f64, diverged: bool) -> bool {
    if diverged || consensus.len() != minimizer.len() {
        return false;
    }
    consensus.iter().zip(minimizer).all(|(c, m)| (c - m).abs() < tol)
}

/// `scale / mean_i exp(-alpha (v_i - min_value))` via log-sum-exp.
fn concentration(values: &[f64], alpha: f64, min_value: f64, scale: f64) -> Result<f64, PsoError> {
    if values.is_empty() {
        return Err(PsoError::invalid("empty value sample"));
    }
    if values.iter().any(|v| !v.is_finite()) || !min_value.is_finite() {
        return Err(PsoError::invalid("non-finite objective values"));
    }
    let args: Vec<f64> = values.iter().map(|&v| -alpha * (v - min_value)).collect();
    let max = args.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + args.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
    let n = values.len() as f64;
    Ok(scale * (n.ln() - lse).exp())
}

fn check_positive_friction(params: &SwarmParams) -> Result<(), PsoError> {
    if params.friction <= 0.0 {
        return Err(PsoError::invalid("well-preparedness checks need positive friction"));
    }
    Ok(())
}

/// Decay margin for the memoryless dynamics (lambda = lambda2,
/// sigma = sigma2), parameterized by the concentration abbreviation D0.
pub fn mu_memoryless_formula(params: &SwarmParams, d0: f64) -> f64 {
    let m = params.mass;
    let g = params.friction;
    let l = params.lambda2;
    let s = params.sigma2;
    l * g / (2.0 * m * m) - (2.0 * l * l / (g * m) + s * s / (m * m)) * (2.0 * d0)
}

/// Decay rate from the margin: `(2/3) min(g/m, mu) / ((g/2m)^2 + 1)`.
pub fn chi_memoryless_formula(params: &SwarmParams, mu: f64) -> f64 {
    let ratio = params.friction / params.mass;
    (2.0 / 3.0) * ratio.min(mu) / ((ratio / 2.0) * (ratio / 2.0) + 1.0)
}

/// Smallest admissible drift strength, `4 D0 sigma^2 / gamma`.
pub fn lambda_min_formula(d0: f64, sigma: f64, gamma: f64) -> f64 {
    4.0 * d0 * sigma * sigma / gamma
}

/// Largest admissible mass, `gamma^2 / (8 D0 lambda)`.
pub fn mass_max_formula(d0: f64, lambda: f64, gamma: f64) -> f64 {
    gamma * gamma / (8.0 * d0 * lambda)
}

/// Verdict of the a priori parameter check for the memoryless dynamics.
#[derive(Clone, Debug, Serialize)]
pub struct WellPreparedReport {
    /// Concentration of the initial values, `2 / mean exp(-alpha (v - min))`.
    pub d0: f64,
    pub mu: f64,
    /// Guaranteed exponential decay rate of the mean energy when all flags hold.
    pub chi: f64,
    pub mu_positive: bool,
    /// lambda2 exceeds `4 D0 sigma2^2 / gamma`.
    pub lambda_ok: bool,
    /// mass is below `gamma^2 / (8 D0 lambda2)`.
    pub mass_ok: bool,
    /// Gradient-based initial-datum condition; `None` means not evaluated
    /// (see [`check_initial_datum_memoryless`]).
    pub initial_datum: Option<bool>,
}

/// Evaluate the memoryless decay conditions on the initial position values.
pub fn check_well_prepared_memoryless(
    params: &SwarmParams,
    initial_values: &[f64],
    min_value: f64,
) -> Result<WellPreparedReport, PsoError> {
    check_positive_friction(params)?;
    let d0 = concentration(initial_values, params.alpha, min_value, 2.0)?;
    let mu = mu_memoryless_formula(params, d0);
    let chi = chi_memoryless_formula(params, mu);
    Ok(WellPreparedReport {
        d0,
        mu,
        chi,
        mu_positive: mu > 0.0,
        lambda_ok: params.lambda2 > lambda_min_formula(d0, params.sigma2, params.friction),
        mass_ok: params.mass < mass_max_formula(d0, params.lambda2, params.friction),
        initial_datum: None,
    })
}

/// First decay margin of the memory dynamics, parameterized by D0Y.
pub fn mu1_memory_formula(params: &SwarmParams, d0y: f64) -> f64 {
    let m = params.mass;
    let g = params.friction;
    let l1 = params.lambda1;
    let l2 = params.lambda2;
    let s2 = params.sigma2;
    (l1 + 2.0 * l2) * g / (4.0 * m * m)
        - (9.0 * l2 * l2 / (g * m) + 3.0 * s2 * s2 / (m * m) + 3.0 * l1 * g / (4.0 * m * m)) * d0y
}

/// Second decay margin of the memory dynamics, parameterized by D0Y.
pub fn mu2_memory_formula(params: &SwarmParams, d0y: f64) -> f64 {
    let m = params.mass;
    let g = params.friction;
    let l1 = params.lambda1;
    let l2 = params.lambda2;
    let s1 = params.sigma1;
    let s2 = params.sigma2;
    let k = params.kappa;
    let th = params.theta;
    let shared = 9.0 * l2 * l2 / (g * m) + 3.0 * s2 * s2 / (m * m);
    (l1 + l2) * g / (m * m) + k * th * (3.0 * l1 / m + g * g / (m * m))
        - 8.0 * k * k * g / m
        - l2 * l2 * g / (2.0 * m * m * l1)
        - 1.5 * s1 * s1 / (m * m)
        - shared
        - (shared + 3.0 * l1 * g / (4.0 * m * m)) * (2.0 * d0y)
}

/// Decay rate from both margins.
pub fn chi_memory_formula(params: &SwarmParams, mu1: f64, mu2: f64) -> f64 {
    let m = params.mass;
    let g = params.friction;
    let half_ratio = g / (2.0 * m);
    let num = (g / (2.0 * m)).min(mu1).min(mu2);
    (2.0 / 5.0) * num
        / (half_ratio * half_ratio + 1.0 + 3.0 * params.lambda1 / m + 2.0 * (g / m) * (g / m))
}

/// Smallest admissible memory drift, `3 sigma1^2 / (2 gamma)`.
pub fn lambda1_min_formula(sigma1: f64, gamma: f64) -> f64 {
    1.5 * sigma1 * sigma1 / gamma
}

/// Smallest admissible consensus drift with memory,
/// `6 max(D0Y lambda1 / 4, (1 + D0Y) sigma2^2 / gamma)`.
pub fn lambda2_min_formula(d0y: f64, lambda1: f64, sigma2: f64, gamma: f64) -> f64 {
    6.0 * (d0y * lambda1 / 4.0).max((1.0 + d0y) * sigma2 * sigma2 / gamma)
}

/// Smallest admissible memory rate, `3 lambda2^2 (1 + D0Y) / (gamma theta lambda1)`.
pub fn kappa_min_formula(d0y: f64, lambda1: f64, lambda2: f64, gamma: f64, theta: f64) -> f64 {
    3.0 * lambda2 * lambda2 * (1.0 + d0y) / (gamma * theta * lambda1)
}

/// Largest admissible mass with memory,
/// `min(gamma theta / (16 kappa), lambda1 gamma^2 / (18 D0Y lambda2^2))`.
pub fn mass_max_memory_formula(
    d0y: f64,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    theta: f64,
    kappa: f64,
) -> f64 {
    (gamma * theta / (16.0 * kappa))
        .min(lambda1 * gamma * gamma / (18.0 * d0y * lambda2 * lambda2))
}

/// Verdict of the a priori parameter check for the memory dynamics.
#[derive(Clone, Debug, Serialize)]
pub struct WellPreparedMemoryReport {
    /// Concentration of the initial local-best values,
    /// `12 / mean exp(-alpha (v - min))`.
    pub d0y: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub chi: f64,
    pub mu1_positive: bool,
    pub mu2_positive: bool,
    pub lambda1_ok: bool,
    pub lambda2_ok: bool,
    pub kappa_ok: bool,
    pub mass_ok: bool,
    /// Gradient-based initial-datum condition; `None` means not evaluated.
    pub initial_datum: Option<bool>,
}

/// Evaluate the memory-dynamics decay conditions on the initial local-best
/// values.
pub fn check_well_prepared_memory(
    params: &SwarmParams,
    initial_best_values: &[f64],
    min_value: f64,
) -> Result<WellPreparedMemoryReport, PsoError> {
    check_positive_friction(params)?;
    let d0y = concentration(initial_best_values, params.alpha, min_value, 12.0)?;
    let mu1 = mu1_memory_formula(params, d0y);
    let mu2 = mu2_memory_formula(params, d0y);
    let chi = chi_memory_formula(params, mu1, mu2);
    Ok(WellPreparedMemoryReport {
        d0y,
        mu1,
        mu2,
        chi,
        mu1_positive: mu1 > 0.0,
        mu2_positive: mu2 > 0.0,
        lambda1_ok: params.lambda1 > lambda1_min_formula(params.sigma1, params.friction),
        lambda2_ok: params.lambda2
            > lambda2_min_formula(d0y, params.lambda1, params.sigma2, params.friction),
        kappa_ok: params.kappa
            > kappa_min_formula(d0y, params.lambda1, params.lambda2, params.friction, params.theta),
        mass_ok: params.mass
            < mass_max_memory_formula(
                d0y,
                params.lambda1,
                params.lambda2,
                params.friction,
                params.theta,
                params.kappa,
            ),
        initial_datum: None,
    })
}

/// Result of a gradient-based initial-datum check.
#[derive(Clone, Debug, Serialize)]
pub struct InitialDatumReport {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
}

fn shifted_weights(values: &[f64], alpha: f64, min_value: f64) -> Vec<f64> {
    values.iter().map(|&v| (-alpha * (v - min_value)).exp()).collect()
}

/// Initial-datum smallness condition for the memoryless dynamics. Returns
/// `None` when the objective has no gradient oracle or Hessian bound; the
/// condition is then "not evaluated".
pub fn check_initial_datum_memoryless(
    params: &SwarmParams,
    state: &SwarmState,
    obj: &ObjectiveFunction,
    min_value: f64,
) -> Option<InitialDatumReport> {
    let c_e = obj.hessian_bound()?;
    let m = params.mass;
    let g = params.friction;
    let l = params.lambda2;
    let alpha = params.alpha;
    let n = state.n();

    let mut values = Vec::with_capacity(n);
    let mut grad_dot_v = Vec::with_capacity(n);
    for i in 0..n {
        let x = state.positions.row(i);
        let xs = x.as_slice().unwrap();
        values.push(obj.eval_full(xs).ok()?);
        let grad = obj.gradient_at(xs)?;
        let v = state.velocities.row(i);
        grad_dot_v.push(grad.iter().zip(v.iter()).map(|(gk, vk)| gk * vk).sum::<f64>());
    }
    let w = shifted_weights(&values, alpha, min_value);
    let mean_w = w.iter().sum::<f64>() / n as f64;
    let mean_wgv = w.iter().zip(&grad_dot_v).map(|(wi, gv)| wi * gv).sum::<f64>() / n as f64;

    let report = check_well_prepared_memoryless(params, &values, min_value).ok()?;
    let chi = report.chi;
    let bound = 3.0 / 16.0;
    if !(chi > 0.0) {
        return Some(InitialDatumReport { lhs: f64::INFINITY, bound, ok: false });
    }
    let h0 = h_memoryless(state, params);
    let lhs = (m * alpha / (2.0 * g)) * mean_wgv.max(0.0) / mean_w
        + (alpha * c_e / (chi * (g / m - chi)))
            * (1.0 + 8.0 * m * l / (g * g))
            * h0
            / (mean_w * mean_w);
    Some(InitialDatumReport { lhs, bound, ok: lhs < bound })
}

/// Initial-datum smallness condition for the memory dynamics. `None` when the
/// objective has no gradient oracle.
pub fn check_initial_datum_memory(
    params: &SwarmParams,
    state: &SwarmState,
    obj: &ObjectiveFunction,
    min_value: f64,
) -> Option<InitialDatumReport> {
    let c_e = obj.hessian_bound()?;
    let bests = state.local_bests.as_ref()?;
    let m = params.mass;
    let alpha = params.alpha;
    let kappa = params.kappa;
    let l1 = params.lambda1;
    let n = state.n();

    let mut best_values = Vec::with_capacity(n);
    let mut grad_norm2 = Vec::with_capacity(n);
    for i in 0..n {
        best_values.push(obj.eval_full(bests.row(i).as_slice().unwrap()).ok()?);
        let grad = obj.gradient_at(state.positions.row(i).as_slice().unwrap())?;
        grad_norm2.push(grad.iter().map(|gk| gk * gk).sum::<f64>());
    }
    let w = shifted_weights(&best_values, alpha, min_value);
    let mean_w = w.iter().sum::<f64>() / n as f64;
    let mean_grad2 = grad_norm2.iter().sum::<f64>() / n as f64;

    let report = check_well_prepared_memory(params, &best_values, min_value).ok()?;
    let chi = report.chi;
    let bound = 3.0 / 32.0;
    if !(chi > 0.0) || l1 <= 0.0 {
        return Some(InitialDatumReport { lhs: f64::INFINITY, bound, ok: false });
    }
    let h0 = h_memory(state, params).ok()?;
    let lhs = ((alpha * kappa * m / (l1 * chi)) * (c_e + 2.0 * alpha * alpha)
        + 24.0 * c_e * c_e * kappa / (alpha * chi * chi * chi))
        * h0
        / mean_w
        + (6.0 * kappa / (alpha * chi)) * mean_grad2 / mean_w;
    Some(InitialDatumReport { lhs, bound, ok: lhs < bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{make_sphere, ObjectiveFunction};
    use crate::rng::Stream;
    use crate::swarm::{init_swarm, Distribution, InitSpec, MemoryMode};
    use ndarray::{arr1, arr2, Array1, Array2};
    use std::sync::Arc;

    fn params_with(mass: f64, friction: f64) -> SwarmParams {
        SwarmParams { mass, friction, ..SwarmParams::defaults(1, 2) }
    }

    #[test]
    fn memoryless_energy_hand_value() {
        // Two particles in 1-d at 0 and 2 with zero velocity and g/2m = 1:
        // each deviates by 1 from the mean, so H = 1.
        let params = params_with(0.5, 1.0);
        let state = SwarmState {
            positions: arr2(&[[0.0], [2.0]]),
            velocities: arr2(&[[0.0], [0.0]]),
            local_bests: None,
            best_values: None,
            step: 0,
            seed: 0,
        };
        assert_eq!(h_memoryless(&state, &params), 1.0);
    }

    #[test]
    fn memory_energy_hand_value() {
        // Single particle, X=0, Y=1, V=0, m=gamma=lambda1=1:
        // only the memory gap term survives: 1/2 (3 + 1) * 1 = 2.
        let params = SwarmParams {
            memory: MemoryMode::Hard,
            lambda1: 1.0,
            ..params_with(1.0, 1.0)
        };
        let state = SwarmState {
            positions: arr2(&[[0.0]]),
            velocities: arr2(&[[0.0]]),
            local_bests: Some(arr2(&[[1.0]])),
            best_values: Some(arr1(&[1.0])),
            step: 0,
            seed: 0,
        };
        assert_eq!(h_memory(&state, &params).unwrap(), 2.0);
    }

    #[test]
    fn energy_trivial_cases() {
        let params = SwarmParams {
            memory: MemoryMode::Hard,
            lambda1: 0.7,
            ..params_with(0.4, 1.3)
        };
        // Collapsed swarm: every term of both functionals vanishes.
        let collapsed = SwarmState {
            positions: arr2(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]),
            velocities: arr2(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
            local_bests: Some(arr2(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])),
            best_values: Some(arr1(&[0.0, 0.0, 0.0])),
            step: 0,
            seed: 0,
        };
        assert_eq!(h_memoryless(&collapsed, &params), 0.0);
        assert_eq!(h_memory(&collapsed, &params).unwrap(), 0.0);
        assert_eq!(empirical_variance(collapsed.positions.view()), 0.0);

        // Single particle: only the velocity term survives.
        let lone = SwarmState {
            positions: arr2(&[[5.0, -3.0]]),
            velocities: arr2(&[[2.0, -1.0]]),
            local_bests: None,
            best_values: None,
            step: 0,
            seed: 0,
        };
        assert_eq!(h_memoryless(&lone, &params), 5.0);

        // With Y = X the memory functional is the memoryless one plus an
        // extra half of the mean squared velocity.
        let st = random_state(9, 6, 3, false);
        let with_best = SwarmState {
            local_bests: Some(st.positions.clone()),
            best_values: Some(Array1::from_elem(6, 0.0)),
            ..st.clone()
        };
        let v2 = st.velocities.iter().map(|v| v * v).sum::<f64>() / 6.0;
        let got = h_memory(&with_best, &params).unwrap();
        let want = h_memoryless(&st, &params) + 0.5 * v2;
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));

        // Two particles at -1 and 1 deviate by 1 each.
        assert_eq!(empirical_variance(arr2(&[[-1.0], [1.0]]).view()), 1.0);
        // Exact hit is a success at any positive tolerance.
        assert!(classify_success(&[0.0, 0.0], &[0.0, 0.0], 1e-300, false));
    }

    fn random_state(seed: u64, n: usize, d: usize, with_memory: bool) -> SwarmState {
        let mut s = Stream::new(&[seed, 101]);
        let positions = Array2::from_shape_fn((n, d), |_| s.uniform_in(-5.0, 5.0));
        let velocities = Array2::from_shape_fn((n, d), |_| s.uniform_in(-3.0, 3.0));
        let local_bests = with_memory
            .then(|| Array2::from_shape_fn((n, d), |_| s.uniform_in(-5.0, 5.0)));
        let best_values = with_memory.then(|| Array1::from_elem(n, 0.0));
        SwarmState { positions, velocities, local_bests, best_values, step: 0, seed }
    }

    #[test]
    fn memoryless_energy_equivalence_bounds() {
        for seed in 0..1000u64 {
            let mut ps = Stream::new(&[seed, 55]);
            let params = params_with(ps.uniform_in(0.05, 2.0), ps.uniform_in(0.1, 3.0));
            let n = 2 + ps.below(12) as usize;
            let d = 1 + ps.below(4) as usize;
            let st = random_state(seed, n, d, false);
            let h = h_memoryless(&st, &params);
            let c = params.friction / (2.0 * params.mass);
            let var = empirical_variance(st.positions.view());
            let v2 = st.velocities.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let lower = 0.5 * c * c * var + 0.5 * v2;
            let upper = 1.5 * (c * c + 1.0) * (var + v2);
            assert!(h >= lower, "seed {seed}: H {h} below {lower}");
            assert!(h <= upper, "seed {seed}: H {h} above {upper}");
        }
    }

    #[test]
    fn memory_energy_equivalence_bounds() {
        for seed in 0..1000u64 {
            let mut ps = Stream::new(&[seed, 56]);
            let params = SwarmParams {
                memory: MemoryMode::Hard,
                lambda1: ps.uniform_in(0.0, 2.0),
                ..params_with(ps.uniform_in(0.05, 2.0), ps.uniform_in(0.1, 3.0))
            };
            let n = 2 + ps.below(12) as usize;
            let d = 1 + ps.below(4) as usize;
            let st = random_state(seed, n, d, true);
            let h = h_memory(&st, &params).unwrap();
            let m = params.mass;
            let g = params.friction;
            let c = g / (2.0 * m);
            let var = empirical_variance(st.positions.view());
            let v2 = st.velocities.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let xy2 = {
                let b = st.local_bests.as_ref().unwrap();
                st.positions
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / n as f64
            };
            let lower = 0.5 * c * c * var + 0.5 * v2 + 1.5 * params.lambda1 / m * xy2;
            let upper = 2.5
                * (c * c + 1.0 + 3.0 * params.lambda1 / m + 2.0 * (g / m) * (g / m))
                * (var + v2 + xy2);
            assert!(h >= lower, "seed {seed}: H {h} below {lower}");
            assert!(h <= upper, "seed {seed}: H {h} above {upper}");
        }
    }

    #[test]
    fn variance_matches_streaming_reference() {
        for seed in 0..1000u64 {
            let mut ps = Stream::new(&[seed, 77]);
            let n = 1 + ps.below(40) as usize;
            let d = 1 + ps.below(6) as usize;
            let st = random_state(seed, n, d, false);
            let got = empirical_variance(st.positions.view());

            // Welford's algorithm, per coordinate, summed.
            let mut mean = vec![0.0; d];
            let mut m2 = vec![0.0; d];
            for i in 0..n {
                let row = st.positions.row(i);
                for k in 0..d {
                    let delta = row[k] - mean[k];
                    mean[k] += delta / (i + 1) as f64;
                    m2[k] += delta * (row[k] - mean[k]);
                }
            }
            let want: f64 = m2.iter().sum::<f64>() / n as f64;
            assert!(
                (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                "variance mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn success_classification() {
        assert!(classify_success(&[0.1, -0.2], &[0.0, 0.0], 0.25, false));
        assert!(!classify_success(&[0.1, -0.3], &[0.0, 0.0], 0.25, false));
        assert!(!classify_success(&[0.25, 0.0], &[0.0, 0.0], 0.25, false), "boundary is a miss");
        assert!(!classify_success(&[0.1, 0.0], &[0.0, 0.0], 0.25, true), "divergence is never success");
        assert!(!classify_success(&[f64::NAN, 0.0], &[0.0, 0.0], 0.25, false));
    }

    #[test]
    fn concentration_is_exact_when_all_values_sit_at_the_minimum() {
        let params = SwarmParams { alpha: 100.0, ..params_with(0.2, 0.8) };
        let report = check_well_prepared_memoryless(&params, &[1.5; 32], 1.5).unwrap();
        assert_eq!(report.d0, 2.0);

        let memp = SwarmParams {
            memory: MemoryMode::Hard,
            lambda1: 0.4,
            sigma1: 0.1,
            alpha: 100.0,
            ..params_with(0.2, 0.8)
        };
        let report = check_well_prepared_memory(&memp, &[1.5; 32], 1.5).unwrap();
        assert_eq!(report.d0y, 12.0);
    }

    #[test]
    fn bound_formulas_match_pinned_examples() {
        assert_eq!(lambda_min_formula(1.0, 1.0, 1.0), 4.0);
        assert_eq!(mass_max_formula(1.0, 5.0, 1.0), 1.0 / 40.0);
        assert_eq!(lambda1_min_formula(2.0, 1.0), 6.0);
        // With all noise and concentration terms absent only the drift part
        // of the first margin survives.
        let p = SwarmParams {
            memory: MemoryMode::Hard,
            lambda1: 0.5,
            lambda2: 2.0,
            sigma1: 0.0,
            sigma2: 0.0,
            ..params_with(0.5, 1.0)
        };
        let surviving = (0.5 + 4.0) * 1.0 / (4.0 * 0.25);
        assert_eq!(mu1_memory_formula(&p, 0.0), surviving);
    }

    #[test]
    fn memoryless_report_against_duplicate_formulas() {
        let params = SwarmParams {
            mass: 0.03,
            friction: 1.0,
            lambda2: 1.0,
            sigma2: 0.1,
            alpha: 1.0,
            ..SwarmParams::defaults(4, 50)
        };
        let mut s = Stream::new(&[4242]);
        let values: Vec<f64> = (0..50).map(|_| s.uniform_in(0.0, 0.02)).collect();
        let report = check_well_prepared_memoryless(&params, &values, 0.0).unwrap();

        // Independent re-derivation, plain formulas, no shared helpers.
        let n = values.len() as f64;
        let mean_exp: f64 =
            values.iter().map(|&v| (-params.alpha * v).exp()).sum::<f64>() / n;
        let d0 = 2.0 / mean_exp;
        assert!((report.d0 - d0).abs() < 1e-12 * d0);
        let (m, g, l, s2) = (params.mass, params.friction, params.lambda2, params.sigma2);
        let mu = l * g / (2.0 * m * m) - (2.0 * l * l / (g * m) + s2 * s2 / (m * m)) * 2.0 * d0;
        assert!((report.mu - mu).abs() < 1e-9 * mu.abs().max(1.0));
        let chi = (2.0 / 3.0) * (g / m).min(mu) / ((g / (2.0 * m)).powi(2) + 1.0);
        assert!((report.chi - chi).abs() < 1e-9 * chi.abs().max(1.0));
        assert_eq!(report.mu_positive, mu > 0.0);
        assert_eq!(report.lambda_ok, l > 4.0 * d0 * s2 * s2 / g);
        assert_eq!(report.mass_ok, m < g * g / (8.0 * d0 * l));
        assert!(report.mu_positive && report.lambda_ok && report.mass_ok);
        assert!(report.initial_datum.is_none());
    }

    #[test]
    fn memory_report_against_duplicate_formulas() {
        let params = SwarmParams {
            memory: MemoryMode::Soft,
            mass: 0.2,
            friction: 0.8,
            lambda1: 0.4,
            lambda2: 1.0,
            sigma1: 0.8,
            sigma2: 2.0,
            alpha: 100.0,
            kappa: 50.0,
            theta: 0.5,
            beta: 30.0,
            ..SwarmParams::defaults(20, 100)
        };
        let mut s = Stream::new(&[777]);
        let values: Vec<f64> = (0..100).map(|_| s.uniform_in(0.0, 5.0)).collect();
        let report = check_well_prepared_memory(&params, &values, 0.0).unwrap();

        let n = values.len() as f64;
        let mean_exp: f64 =
            values.iter().map(|&v| (-params.alpha * v).exp()).sum::<f64>() / n;
        let d0y = 12.0 / mean_exp;
        assert!((report.d0y - d0y).abs() < 1e-9 * d0y);
        let (m, g) = (params.mass, params.friction);
        let (l1, l2, s1, s2) = (params.lambda1, params.lambda2, params.sigma1, params.sigma2);
        let (k, th) = (params.kappa, params.theta);
        let mu1 = (l1 + 2.0 * l2) * g / (2.0 * m).powi(2)
            - (9.0 * l2 * l2 / (g * m) + 3.0 * s2 * s2 / (m * m) + 3.0 * l1 * g / (2.0 * m).powi(2))
                * d0y;
        assert!((report.mu1 - mu1).abs() < 1e-9 * mu1.abs().max(1.0), "{} vs {mu1}", report.mu1);
        let mu2 = (l1 + l2) * g / (m * m) + k * th * (3.0 * l1 / m + g * g / (m * m))
            - 8.0 * k * k * g / m
            - l2 * l2 * g / (2.0 * m * m * l1)
            - 3.0 * s1 * s1 / (2.0 * m * m)
            - (9.0 * l2 * l2 / (g * m) + 3.0 * s2 * s2 / (m * m))
            - (9.0 * l2 * l2 / (g * m)
                + 3.0 * s2 * s2 / (m * m)
                + 3.0 * l1 * g / (2.0 * m).powi(2))
                * 2.0
                * d0y;
        assert!((report.mu2 - mu2).abs() < 1e-9 * mu2.abs().max(1.0), "{} vs {mu2}", report.mu2);
        let chi = (2.0 / 5.0) * (g / (2.0 * m)).min(mu1).min(mu2)
            / ((g / (2.0 * m)).powi(2) + 1.0 + 3.0 * l1 / m + 2.0 * (g / m).powi(2));
        assert!((report.chi - chi).abs() < 1e-9 * chi.abs().max(1.0));
        assert_eq!(report.lambda1_ok, l1 > 3.0 * s1 * s1 / (2.0 * g));
        assert_eq!(
            report.lambda2_ok,
            l2 > 6.0 * (d0y * l1 / 4.0).max((1.0 + d0y) * s2 * s2 / g)
        );
        assert_eq!(report.kappa_ok, k > 3.0 * l2 * l2 * (1.0 + d0y) / (g * th * l1));
        assert_eq!(
            report.mass_ok,
            m < (g * th / (16.0 * k)).min(l1 * g * g / (18.0 * d0y * l2 * l2))
        );
    }

    #[test]
    fn initial_datum_checks_gate_on_gradient_oracle() {
        let params = SwarmParams {
            mass: 0.03,
            friction: 1.0,
            lambda2: 1.0,
            sigma2: 0.1,
            alpha: 1.0,
            ..SwarmParams::defaults(4, 64)
        }
        .validated()
        .unwrap();
        let obj = make_sphere(4).unwrap();
        let init = InitSpec {
            position: Distribution::gaussian_iso(4, 0.0, 1e-4),
            velocity: Distribution::gaussian_iso(4, 0.0, 1e-6),
            seed: 31,
        };
        let st = init_swarm(&params, &init, &obj).unwrap();
        let report = check_initial_datum_memoryless(&params, &st, &obj, 0.0).unwrap();
        assert_eq!(report.bound, 3.0 / 16.0);
        assert!(report.ok, "tight sphere init should satisfy the condition, lhs {}", report.lhs);

        // Wide initial data must blow the left-hand side up.
        let wide = InitSpec {
            position: Distribution::gaussian_iso(4, 2.0, 25.0),
            velocity: Distribution::gaussian_iso(4, 0.0, 25.0),
            seed: 32,
        };
        let st_wide = init_swarm(&params, &wide, &obj).unwrap();
        let loose = check_initial_datum_memoryless(&params, &st_wide, &obj, 0.0).unwrap();
        assert!(loose.lhs > report.lhs);

        // No gradient oracle: not evaluated.
        let plain = ObjectiveFunction::new(4, Arc::new(|x: &[f64]| x.iter().sum())).unwrap();
        assert!(check_initial_datum_memoryless(&params, &st, &plain, 0.0).is_none());
    }

    #[test]
    fn memory_initial_datum_check_runs_with_gradients() {
        let params = SwarmParams {
            memory: MemoryMode::Soft,
            mass: 0.001,
            friction: 1.0,
            lambda1: 0.5,
            lambda2: 1.0,
            sigma1: 0.0,
            sigma2: 0.0,
            alpha: 0.1,
            kappa: 10.0,
            theta: 0.5,
            beta: 10.0,
            ..SwarmParams::defaults(2, 32)
        }
        .validated()
        .unwrap();
        let obj = make_sphere(2).unwrap();
        let init = InitSpec {
            position: Distribution::gaussian_iso(2, 0.0, 1e-6),
            velocity: Distribution::gaussian_iso(2, 0.0, 1e-8),
            seed: 3,
        };
        let st = init_swarm(&params, &init, &obj).unwrap();
        let report = check_initial_datum_memory(&params, &st, &obj, 0.0).unwrap();
        assert_eq!(report.bound, 3.0 / 32.0);
        assert!(report.lhs.is_finite() || !report.ok);

        let plain = ObjectiveFunction::new(2, Arc::new(|x: &[f64]| x.iter().sum())).unwrap();
        assert!(check_initial_datum_memory(&params, &st, &plain, 0.0).is_none());
    }
}
