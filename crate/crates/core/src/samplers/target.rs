use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use super::transform::BoxTransform;
use super::TargetDensity;
use crate::abc::PriorSpec;
use crate::error::{Error, Result};
use crate::ode::ParameterVector;
use crate::seed::StreamRng;
use crate::synlik::{estimate_moments, grad_loglik, synthetic_loglik, SynLikTarget};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub theta: [f64; 3],
    pub mu_hat: Vec<f64>,
    pub log_det: f64,
    pub jitter: f64,
}

/// Collects one row per synthetic-likelihood evaluation.
#[derive(Debug, Default)]
pub struct EvaluationTrace {
    rows: Mutex<Vec<TraceRow>>,
}

impl EvaluationTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.rows.lock().expect("trace lock").clone()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self.rows();
        let d = rows.first().map_or(0, |r| r.mu_hat.len());
        let mut out = String::from("beta,sigma,gamma");
        for j in 0..d {
            out.push_str(&format!(",mu_hat_{j}"));
        }
        out.push_str(",log_det,jitter\n");
        for r in &rows {
            out.push_str(&format!("{},{},{}", r.theta[0], r.theta[1], r.theta[2]));
            for m in &r.mu_hat {
                out.push_str(&format!(",{m}"));
            }
            out.push_str(&format!(",{},{}\n", r.log_det, r.jitter));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Synthetic log-likelihood plus the log-Jacobian of the logistic map from
/// R³ onto the prior box. The uniform prior density is constant and omitted.
#[derive(Debug)]
pub struct SeirTarget {
    pub synlik: SynLikTarget,
    pub transform: BoxTransform,
    pub h_rel: f64,
    pub trace: Option<EvaluationTrace>,
}

pub fn make_target(prior: &PriorSpec, synlik: SynLikTarget) -> Result<SeirTarget> {
    prior.validate()?;
    Ok(SeirTarget {
        transform: BoxTransform::from_prior(prior),
        synlik: SynLikTarget {
            prior: *prior,
            ..synlik
        },
        h_rel: crate::synlik::DEFAULT_H_REL,
        trace: None,
    })
}

impl SeirTarget {
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(EvaluationTrace::default());
        self
    }

    pub fn theta(&self, u: &[f64]) -> ParameterVector {
        ParameterVector::from_slice(&self.transform.constrain(u)).expect("3-dimensional")
    }
}

impl TargetDensity for SeirTarget {
    fn dim(&self) -> usize {
        3
    }

    fn log_density(&self, u: &[f64], eval_seed: u64) -> f64 {
        let theta = self.theta(u);
        let ll = estimate_moments(&theta, &self.synlik, eval_seed).and_then(|m| {
            if let Some(trace) = &self.trace {
                trace.rows.lock().expect("trace lock").push(TraceRow {
                    theta: theta.to_array(),
                    mu_hat: m.mu_hat.clone(),
                    log_det: m.log_det(),
                    jitter: m.jitter_applied,
                });
            }
            synthetic_loglik(&m, &self.synlik.observation())
        });
        match ll {
            Ok(v) if v.is_finite() => v + self.transform.log_jacobian(u),
            _ => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, u: &[f64], eval_seed: u64) -> Option<Vec<f64>> {
        let theta = self.theta(u);
        let g = grad_loglik(&theta, &self.synlik, eval_seed, self.h_rel).ok()?;
        let dtheta = self.transform.derivative(u);
        let dlogj = self.transform.log_jacobian_gradient(u);
        let out: Vec<f64> = (0..3).map(|j| g[j] * dtheta[j] + dlogj[j]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.transform.constrain(u)
    }

    fn param_names(&self) -> Vec<String> {
        ParameterVector::NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn initial_point(&self, rng: &mut StreamRng) -> Vec<f64> {
        let theta = self.synlik.prior.sample(rng);
        self.transform.unconstrain(&theta.to_array())
    }
}
