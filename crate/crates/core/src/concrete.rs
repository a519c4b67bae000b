//! Concrete (Gumbel-softmax) relaxation of a categorical variable.
//!
//! A sample is `softmax((logits + g) / tau)` with Gumbel noise
//! `g = -ln(-ln(u))`, `u ~ Uniform(0, 1)`. Callers supply `u`, which keeps
//! every function here pure and makes the sample a differentiable function
//! of the logits for fixed noise.

use crate::error::{Error, Result};

const NOISE_LO: f64 = 1e-10;
const NOISE_HI: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteParams {
    pub logits: Vec<f64>,
    pub temperature: f64,
}

impl ConcreteParams {
    pub fn new(logits: Vec<f64>, temperature: f64) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidArgument("concrete logits must be nonempty".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("concrete logits must be finite".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            logits,
            temperature,
        })
    }

    pub fn dim(&self) -> usize {
        self.logits.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteSample {
    pub value: Vec<f64>,
    pub params: ConcreteParams,
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| v - lse).collect()
}

/// Backward pass of `y = softmax(x / tau)`: returns dL/dx given y and dL/dy.
pub fn softmax_backward(y: &[f64], grad_y: &[f64], tau: f64) -> Vec<f64> {
    let dot: f64 = y.iter().zip(grad_y).map(|(a, b)| a * b).sum();
    y.iter()
        .zip(grad_y)
        .map(|(&yi, &gi)| yi * (gi - dot) / tau)
        .collect()
}

/// Standard Gumbel draw from a uniform in (0, 1).
pub fn gumbel(u: f64) -> f64 {
    let u = u.clamp(NOISE_LO, NOISE_HI);
    -(-u.ln()).ln()
}

/// Relaxed one-hot sample for fixed uniform noise.
pub fn sample(params: &ConcreteParams, noise: &[f64]) -> Result<ConcreteSample> {
    if noise.len() != params.dim() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} components, expected {}",
            noise.len(),
            params.dim()
        )));
    }
    if let Some(u) = noise.iter().find(|&&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "uniform noise must lie strictly in (0, 1), got {u}"
        )));
    }
    let perturbed: Vec<f64> = params
        .logits
        .iter()
        .zip(noise)
        .map(|(&o, &u)| (o + gumbel(u)) / params.temperature)
        .collect();
    Ok(ConcreteSample {
        value: softmax(&perturbed),
        params: params.clone(),
    })
}

/// Gradient with respect to the logits, given the upstream gradient on the
/// sample value. The Gumbel offsets are constant in the logits.
pub fn sample_backward(sample: &ConcreteSample, grad_value: &[f64]) -> Vec<f64> {
    softmax_backward(&sample.value, grad_value, sample.params.temperature)
}

/// KL(softmax(logits) || uniform) in nats.
pub fn kl_to_uniform(logits: &[f64]) -> f64 {
    if logits.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let d = logits.len() as f64;
    let logp = log_softmax(logits);
    let kl: f64 = logp.iter().map(|&lp| lp.exp() * lp).sum::<f64>() + d.ln();
    kl.max(0.0)
}

/// Gradient of [`kl_to_uniform`] with respect to the logits:
/// `p * (log p - sum_j p_j log p_j)`.
pub fn kl_to_uniform_grad(logits: &[f64]) -> Vec<f64> {
    let logp = log_softmax(logits);
    let neg_entropy: f64 = logp.iter().map(|&lp| lp.exp() * lp).sum();
    logp.iter().map(|&lp| lp.exp() * (lp - neg_entropy)).collect()
}

/// Shannon entropy in nats; zero-probability components contribute 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Index of the largest component; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
