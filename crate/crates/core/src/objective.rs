//! Objective functions, optionally sum-structured for mini-batch evaluation.
//!
//! A sum-structured objective is the arithmetic mean of M term functions;
//! batch evaluation averages any subset of terms. Evaluators are immutable
//! after construction and callable concurrently.

use std::sync::Arc;

use crate::error::PsoError;
use crate::rng::Stream;

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ObjectiveFunction {
    dim: usize,
    full: EvalFn,
    terms: Vec<EvalFn>,
    minimizer: Option<Vec<f64>>,
    min_value: Option<f64>,
    gradient: Option<GradFn>,
    hessian_bound: Option<f64>,
}

impl ObjectiveFunction {
    pub fn new(dim: usize, full: EvalFn) -> Result<Self, PsoError> {
        if dim == 0 {
            return Err(PsoError::invalid("objective dimension must be at least 1"));
        }
        Ok(ObjectiveFunction {
            dim,
            full,
            terms: Vec::new(),
            minimizer: None,
            min_value: None,
            gradient: None,
            hessian_bound: None,
        })
    }

    /// Objective defined as the arithmetic mean of `terms`.
    pub fn sum_structured(dim: usize, terms: Vec<EvalFn>) -> Result<Self, PsoError> {
        if dim == 0 {
            return Err(PsoError::invalid("objective dimension must be at least 1"));
        }
        if terms.is_empty() {
            return Err(PsoError::invalid("sum-structured objective needs at least one term"));
        }
        let shared = terms.clone();
        let full: EvalFn = Arc::new(move |x: &[f64]| {
            shared.iter().map(|t| t(x)).sum::<f64>() / shared.len() as f64
        });
        Ok(ObjectiveFunction { terms, ..ObjectiveFunction::new(dim, full)? })
    }

    pub fn with_minimizer(mut self, minimizer: Vec<f64>, min_value: f64) -> Self {
        assert_eq!(minimizer.len(), self.dim);
        self.minimizer = Some(minimizer);
        self.min_value = Some(min_value);
        self
    }

    /// Attach an analytic gradient and a sup-norm bound on the Hessian.
    pub fn with_gradient(mut self, gradient: GradFn, hessian_bound: f64) -> Self {
        self.gradient = Some(gradient);
        self.hessian_bound = Some(hessian_bound);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of terms, or None for an objective without sum structure.
    pub fn term_count(&self) -> Option<usize> {
        if self.terms.is_empty() { None } else { Some(self.terms.len()) }
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }

    pub fn eval_full(&self, x: &[f64]) -> Result<f64, PsoError> {
        if x.len() != self.dim {
            return Err(PsoError::invalid(format!(
                "point has dimension {}, objective expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok((self.full)(x))
    }

    /// Mean of the given terms. Requires sum structure and in-range indices.
    pub fn eval_batch(&self, x: &[f64], batch: &[usize]) -> Result<f64, PsoError> {
        if self.terms.is_empty() {
            return Err(PsoError::unsupported(
                "batch evaluation on an objective without sum structure",
            ));
        }
        if x.len() != self.dim {
            return Err(PsoError::invalid(format!(
                "point has dimension {}, objective expects {}",
                x.len(),
                self.dim
            )));
        }
        if batch.is_empty() {
            return Err(PsoError::invalid("batch is empty"));
        }
        let mut sum = 0.0;
        for &idx in batch {
            let term = self.terms.get(idx).ok_or_else(|| {
                PsoError::invalid(format!(
                    "batch index {idx} out of range for {} terms",
                    self.terms.len()
                ))
            })?;
            sum += term(x);
        }
        Ok(sum / batch.len() as f64)
    }

    /// Benchmark registry: "rastrigin" or "sphere" with the given dimension.
    pub fn by_name(name: &str, dim: usize) -> Result<Self, PsoError> {
        match name {
            "rastrigin" => make_rastrigin(dim),
            "sphere" => make_sphere(dim),
            other => Err(PsoError::invalid(format!("unknown objective '{other}'"))),
        }
    }
}

/// Rastrigin-type benchmark `E(v) = sum_k v_k^2 + (5/2)(1 - cos(2 pi v_k))`,
/// global minimum 0 at the origin.
pub fn make_rastrigin(dim: usize) -> Result<ObjectiveFunction, PsoError> {
    const TAU: f64 = std::f64::consts::TAU;
    let full: EvalFn = Arc::new(move |x: &[f64]| {
        x.iter().map(|&v| v * v + 2.5 * (1.0 - (TAU * v).cos())).sum()
    });
    let grad: GradFn = Arc::new(move |x: &[f64]| {
        x.iter().map(|&v| 2.0 * v + 5.0 * std::f64::consts::PI * (TAU * v).sin()).collect()
    });
    Ok(ObjectiveFunction::new(dim, full)?
        .with_minimizer(vec![0.0; dim], 0.0)
        .with_gradient(grad, 2.0 + 10.0 * std::f64::consts::PI * std::f64::consts::PI))
}

/// `E(x) = |x|^2`, global minimum 0 at the origin.
pub fn make_sphere(dim: usize) -> Result<ObjectiveFunction, PsoError> {
    let full: EvalFn = Arc::new(move |x: &[f64]| x.iter().map(|&v| v * v).sum());
    let grad: GradFn = Arc::new(move |x: &[f64]| x.iter().map(|&v| 2.0 * v).collect());
    Ok(ObjectiveFunction::new(dim, full)?
        .with_minimizer(vec![0.0; dim], 0.0)
        .with_gradient(grad, 2.0))
}

/// Disjoint batches of term indices covering 0..m, re-randomized per epoch by
/// drawing a fresh permutation from the given stream.
#[derive(Clone, Debug)]
pub struct DataBatchPlan {
    batch_size: usize,
    batches: Vec<Vec<usize>>,
}

impl DataBatchPlan {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }
}

/// Random permutation of 0..m chopped into consecutive blocks of size n_e.
pub fn make_data_batches(
    m: usize,
    n_e: usize,
    stream: &mut Stream,
) -> Result<DataBatchPlan, PsoError> {
    if m == 0 || n_e == 0 {
        return Err(PsoError::invalid("term and batch counts must be positive"));
    }
    if m % n_e != 0 {
        return Err(PsoError::invalid(format!(
            "batch size {n_e} does not divide term count {m}"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    stream.shuffle(&mut perm);
    let batches = perm.chunks(n_e).map(|c| c.to_vec()).collect();
    Ok(DataBatchPlan { batch_size: n_e, batches })
}
