//! Scaled-logistic bijection between R^d and an open box.

use crate::abc::PriorSpec;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxTransform {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxTransform {
    pub fn from_prior(prior: &PriorSpec) -> Self {
        BoxTransform {
            lower: prior.lower.to_vec(),
            upper: prior.upper.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn constrain(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &x)| self.lower[j] + (self.upper[j] - self.lower[j]) * logistic(x))
            .collect()
    }

    pub fn unconstrain(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let p = (t - self.lower[j]) / (self.upper[j] - self.lower[j]);
                p.ln() - (-p).ln_1p()
            })
            .collect()
    }

    /// `log |dθ/du|`.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(j, &x)| (self.upper[j] - self.lower[j]).ln() - softplus(-x) - softplus(x))
            .sum()
    }

    /// `dθ_j/du_j`.
    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &x)| {
                let s = logistic(x);
                (self.upper[j] - self.lower[j]) * s * (1.0 - s)
            })
            .collect()
    }

    /// `∂ log|dθ/du| / ∂u_j`.
    pub fn log_jacobian_gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&x| 1.0 - 2.0 * logistic(x)).collect()
    }
}
