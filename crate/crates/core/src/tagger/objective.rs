//! Conditional log-likelihood of a labelled sequence and its gradient.
//!
//! The gradient with respect to an emission weight `(feature, label)` is the
//! observed count minus the model-expected count; transitions likewise use
//! pairwise marginals from forward-backward.

use super::inference::{ForwardBackward, Potentials};

/// Dense CRF parameters over a fixed set of feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub num_labels: usize,
    /// `rows x num_labels`, row-major.
    pub emission: Vec<f64>,
    /// `num_labels x num_labels`; `-inf` marks a forbidden transition.
    pub transition: Vec<f64>,
}

/// One training sequence: active feature rows per token and the gold path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub rows: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            num_labels: self.num_labels,
            emission: vec![0.0; self.emission.len()],
            transition: vec![0.0; self.transition.len()],
        }
    }

    pub fn potentials(&self, rows: &[Vec<usize>], start: &[f64]) -> Potentials {
        let l = self.num_labels;
        let mut emission = vec![0.0; rows.len() * l];
        for (t, active) in rows.iter().enumerate() {
            let out = &mut emission[t * l..(t + 1) * l];
            for &r in active {
                for (o, w) in out.iter_mut().zip(&self.emission[r * l..(r + 1) * l]) {
                    *o += w;
                }
            }
        }
        Potentials::new(l, emission, self.transition.clone(), start.to_vec())
    }

    /// Squared L2 norm over trainable (finite) entries.
    pub fn squared_norm(&self) -> f64 {
        self.emission.iter().chain(&self.transition).filter(|w| w.is_finite()).map(|w| w * w).sum()
    }
}

/// `log p(gold | x)`.
pub fn log_likelihood(params: &Params, start: &[f64], instance: &Instance) -> f64 {
    let p = params.potentials(&instance.rows, start);
    p.path_score(&instance.gold) - ForwardBackward::compute(&p).log_z
}

/// `log p(gold | x) - l2/2 * ||w||^2`; the function the gradient check targets.
pub fn regularized_log_likelihood(params: &Params, start: &[f64], instance: &Instance, l2: f64) -> f64 {
    log_likelihood(params, start, instance) - 0.5 * l2 * params.squared_norm()
}

/// Adds `scale * d log p(gold | x) / d params` into `grad` and returns the
/// log-likelihood. Forbidden transitions receive no gradient.
pub fn accumulate_gradient(params: &Params, start: &[f64], instance: &Instance, grad: &mut Params, scale: f64) -> f64 {
    let l = params.num_labels;
    let p = params.potentials(&instance.rows, start);
    let fb = ForwardBackward::compute(&p);
    let ll = p.path_score(&instance.gold) - fb.log_z;

    let mut expected = vec![0.0; l];
    for (t, active) in instance.rows.iter().enumerate() {
        for (y, e) in expected.iter_mut().enumerate() {
            *e = fb.log_marginal(t, y).exp();
        }
        expected[instance.gold[t]] -= 1.0;
        for &r in active {
            for (g, e) in grad.emission[r * l..(r + 1) * l].iter_mut().zip(&expected) {
                *g -= scale * e;
            }
        }
    }
    for t in 1..instance.gold.len() {
        grad.transition[instance.gold[t - 1] * l + instance.gold[t]] += scale;
        for from in 0..l {
            for to in 0..l {
                let lp = fb.log_pair_marginal(&p, t, from, to);
                if lp > f64::NEG_INFINITY {
                    grad.transition[from * l + to] -= scale * lp.exp();
                }
            }
        }
    }
    ll
}

/// Gradient of [`regularized_log_likelihood`] as a fresh parameter vector.
pub fn regularized_gradient(params: &Params, start: &[f64], instance: &Instance, l2: f64) -> Params {
    let mut grad = params.zeros_like();
    accumulate_gradient(params, start, instance, &mut grad, 1.0);
    for (g, w) in grad.emission.iter_mut().zip(&params.emission) {
        *g -= l2 * w;
    }
    for (g, w) in grad.transition.iter_mut().zip(&params.transition) {
        if w.is_finite() {
            *g -= l2 * w;
        }
    }
    grad
}
