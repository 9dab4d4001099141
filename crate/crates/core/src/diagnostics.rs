//! Convergence and efficiency diagnostics over chain collections.

use std::fmt::Write as _;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::Chain;
use crate::selection::extended_f64;
use crate::summaries::{mean, sample_variance};

/// Shortest post-burn-in segment the estimators accept.
pub const MIN_SEGMENT: usize = 4;

/// A diagnostic value plus whether it hit a degenerate case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub value: f64,
    pub degenerate: bool,
}

fn check_segments(chains: &[Vec<f64>]) -> Result<usize> {
    let n = chains
        .first()
        .ok_or_else(|| Error::InsufficientData("need at least one chain".into()))?
        .len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("chains have different post-burn-in lengths".into()));
    }
    if n < MIN_SEGMENT {
        return Err(Error::InsufficientData(format!(
            "post-burn-in segments need at least {MIN_SEGMENT} draws, got {n}"
        )));
    }
    Ok(n)
}

/// Post-burn-in draws of parameter `param`, one vector per chain.
pub fn kept_draws(chains: &[Chain], param: usize) -> Vec<Vec<f64>> {
    chains.iter().map(|c| c.kept(param)).collect()
}

/// Split R-hat: each chain is cut into two halves (dropping the middle draw
/// of odd-length chains) and the halves are compared as separate chains.
///
/// The between-half variance of the means uses divisor `m`, so a collection
/// and the same collection listed twice give identical values.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let n = check_segments(chains)?;
    let half = n / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| sample_variance(h)).sum::<f64>() / halves.len() as f64;
    let grand = mean(&means);
    let between = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / means.len() as f64;
    if !(w > 0.0) {
        return Ok(Diagnostic {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    let nh = half as f64;
    Ok(Diagnostic {
        value: ((nh - 1.0) / nh + between / w).sqrt(),
        degenerate: false,
    })
}

/// Biased (divisor n) autocovariance at all lags via zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|z| z.re * scale).collect()
}

/// Combined-chain effective sample size from within-chain autocovariances
/// averaged across chains, truncated by Geyer's initial positive and
/// initial monotone sequence rules. Capped at 1.5 times the draw count.
pub fn ess(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let n = check_segments(chains)?;
    let m = chains.len();
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let acov_mean: Vec<f64> = (0..n)
        .map(|t| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64)
        .collect();
    let mean_var = acov_mean[0] * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += sample_variance(&means);
    }
    let total = (m * n) as f64;
    if !(mean_var > 0.0) || !(var_plus > 0.0) {
        return Ok(Diagnostic {
            value: 0.0,
            degenerate: true,
        });
    }

    let rho = |t: usize| 1.0 - (mean_var - acov_mean[t]) / var_plus;
    let mut rho_hat = vec![0.0; n];
    let mut t = 0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[0] = even;
    rho_hat[1] = odd;
    while t + 5 < n && (even + odd).is_finite() && even + odd > 0.0 {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_hat[t] = even;
            rho_hat[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t] = even;
    }
    let mut t = 1;
    while t + 3 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let tau = (-1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t]).max(1.0 / total.log10());
    Ok(Diagnostic {
        value: (total / tau).min(1.5 * total),
        degenerate: false,
    })
}

/// Fraction of post-burn-in iterations that accepted their proposal.
pub fn acceptance_rate(chain: &Chain) -> f64 {
    let kept = &chain.accepted[chain.burn_in.min(chain.accepted.len())..];
    if kept.is_empty() {
        return 0.0;
    }
    kept.iter().filter(|a| **a).count() as f64 / kept.len() as f64
}

/// Linear interpolation between order statistics (`p` in [0, 1]).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub ess: f64,
    pub ess_degenerate: bool,
    /// `null` in JSON when degenerate (+∞).
    #[serde(with = "extended_f64")]
    pub rhat: f64,
    pub rhat_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterSummary>,
    pub chains: Vec<ChainSummary>,
}

/// Posterior summary over the post-burn-in draws of all chains.
pub fn summarize(chains: &[Chain], true_values: Option<&[f64]>) -> Result<PosteriorSummary> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InsufficientData("need at least one chain".into()))?;
    let d = first.dim();
    if chains
        .iter()
        .any(|c| c.dim() != d || c.param_names != first.param_names)
    {
        return Err(Error::Shape("chains disagree on parameters".into()));
    }
    if let Some(t) = true_values {
        if t.len() != d {
            return Err(Error::Shape(format!("{} true values for {d} parameters", t.len())));
        }
    }
    let mut parameters = Vec::with_capacity(d);
    for j in 0..d {
        let draws = kept_draws(chains, j);
        let rhat = split_rhat(&draws)?;
        let ess = ess(&draws)?;
        let mut pooled: Vec<f64> = draws.concat();
        let mu = mean(&pooled);
        let sd = if pooled.len() > 1 {
            sample_variance(&pooled).sqrt()
        } else {
            0.0
        };
        pooled.sort_by(f64::total_cmp);
        let true_value = true_values.map(|t| t[j]);
        parameters.push(ParameterSummary {
            name: first.param_names[j].clone(),
            true_value,
            abs_error: true_value.map(|t| (mu - t).abs()),
            mean: mu,
            sd,
            q05: quantile(&pooled, 0.05),
            q50: quantile(&pooled, 0.5),
            q95: quantile(&pooled, 0.95),
            ess: ess.value,
            ess_degenerate: ess.degenerate,
            rhat: rhat.value,
            rhat_degenerate: rhat.degenerate,
        });
    }
    let chains_out = chains
        .iter()
        .enumerate()
        .map(|(c, ch)| ChainSummary {
            chain: c,
            acceptance_rate: acceptance_rate(ch),
        })
        .collect();
    Ok(PosteriorSummary {
        n_chains: chains.len(),
        draws_per_chain: first.len() - first.burn_in,
        parameters,
        chains: chains_out,
    })
}

impl PosteriorSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Aligned text table: Parameter, True Value, Mean, Number of EFF, Rhat.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>12} {:>12} {:>14} {:>8}\n",
            "Parameter", "True Value", "Mean", "Number of EFF", "Rhat"
        );
        for p in &self.parameters {
            let truth = p.true_value.map_or("-".to_string(), |t| format!("{t:.4}"));
            let rhat = if p.rhat.is_finite() {
                format!("{:.3}", p.rhat)
            } else {
                "inf".into()
            };
            let _ = writeln!(
                out,
                "{:<10} {:>12} {:>12.4} {:>14.0} {:>8}",
                p.name, truth, p.mean, p.ess, rhat
            );
        }
        out
    }
}
