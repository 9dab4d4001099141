//! Kozachenko–Leonenko style k-nearest-neighbour entropy estimate.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::ode::ParameterVector;

/// Floor applied to k-th neighbour distances of duplicated points.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    /// Some k-th neighbour distance was zero and got floored.
    pub floored: bool,
}

/// `log(π^{p/2} / Γ(p/2 + 1)) − ψ(k) + log n + (p/n) Σ log R_{i,k}` where
/// `R_{i,k}` is the distance from point `i` to its k-th nearest other point.
pub fn knn_entropy<P: AsRef<[f64]>>(sample: &[P], k: usize) -> Result<EntropyEstimate> {
    let n = sample.len();
    if k == 0 {
        return Err(Error::param("neighbour order k must be >= 1"));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "k-NN entropy needs more than k = {k} points, got {n}"
        )));
    }
    let p = sample[0].as_ref().len();
    if p == 0 || sample.iter().any(|x| x.as_ref().len() != p) {
        return Err(Error::Shape("sample points must share a non-zero dimension".into()));
    }

    let mut nearest = vec![f64::INFINITY; k];
    let mut log_sum = 0.0;
    let mut floored = false;
    for (i, xi) in sample.iter().enumerate() {
        let xi = xi.as_ref();
        nearest.fill(f64::INFINITY);
        for (j, xj) in sample.iter().enumerate() {
            if i == j {
                continue;
            }
            let d2: f64 = xi.iter().zip(xj.as_ref()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < nearest[k - 1] {
                // insertion into the sorted k-buffer
                let mut pos = k - 1;
                while pos > 0 && nearest[pos - 1] > d2 {
                    nearest[pos] = nearest[pos - 1];
                    pos -= 1;
                }
                nearest[pos] = d2;
            }
        }
        let mut r = nearest[k - 1].sqrt();
        if r < DISTANCE_FLOOR {
            r = DISTANCE_FLOOR;
            floored = true;
        }
        log_sum += r.ln();
    }

    let pf = p as f64;
    let nf = n as f64;
    let log_unit_ball = 0.5 * pf * std::f64::consts::PI.ln() - ln_gamma(0.5 * pf + 1.0);
    let value = log_unit_ball - digamma(k as f64) + nf.ln() + pf / nf * log_sum;
    Ok(EntropyEstimate { value, floored })
}

pub fn knn_entropy_params(sample: &[ParameterVector], k: usize) -> Result<EntropyEstimate> {
    let points: Vec<[f64; 3]> = sample.iter().map(ParameterVector::to_array).collect();
    knn_entropy(&points, k)
}
