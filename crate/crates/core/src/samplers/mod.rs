//! Posterior samplers working on an unconstrained parameterization.

mod hmc;
mod runner;
mod rwmh;
mod target;
pub mod transform;

use serde::{Deserialize, Serialize};

pub use hmc::{hmc, leapfrog, DualAveraging, LeapfrogOutcome};
pub use runner::{run_chains, InitStrategy};
pub use rwmh::rwmh;
pub use target::{make_target, EvaluationTrace, SeirTarget, TraceRow};
pub use transform::BoxTransform;

use crate::seed::StreamRng;

/// Energy error beyond which an HMC trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Log density over unconstrained vectors.
///
/// `eval_seed` keys any simulation noise inside the density; evaluations
/// that share a seed see the same surface.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    /// `-∞` when the density cannot be evaluated.
    fn log_density(&self, u: &[f64], eval_seed: u64) -> f64;

    /// `None` when no gradient is available at `u`.
    fn gradient(&self, u: &[f64], eval_seed: u64) -> Option<Vec<f64>>;

    fn has_gradient(&self) -> bool {
        true
    }

    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("x{j}")).collect()
    }

    /// Starting point drawn from the prior (standard normal by default).
    fn initial_point(&self, rng: &mut StreamRng) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Rwmh,
    Hmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwmhConfig {
    /// Proposal sd on the unconstrained scale (identity covariance).
    pub scale: f64,
}

impl Default for RwmhConfig {
    fn default() -> Self {
        RwmhConfig { scale: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub adapt: bool,
    pub target_accept: f64,
    /// Each trajectory scales the step size by a uniform factor in
    /// `[1 − jitter, 1 + jitter]`, which breaks periodic trajectories.
    pub jitter: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.1,
            n_leapfrog: 10,
            adapt: true,
            target_accept: 0.8,
            jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub rwmh: RwmhConfig,
    pub hmc: HmcConfig,
}

impl ChainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(Error::param(format!(
                "need 0 <= burn_in < n_iter, got burn_in = {}, n_iter = {}",
                self.burn_in, self.n_iter
            )));
        }
        if !(self.rwmh.scale > 0.0) || !(self.hmc.step_size > 0.0) {
            return Err(Error::param("proposal scale and step size must be > 0"));
        }
        if self.hmc.n_leapfrog == 0 {
            return Err(Error::param("n_leapfrog must be >= 1"));
        }
        if !(self.hmc.target_accept > 0.0 && self.hmc.target_accept < 1.0) {
            return Err(Error::param("target_accept must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.hmc.jitter) {
            return Err(Error::param("jitter must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Wall-clock phases of one chain, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub warmup: f64,
    pub sampling: f64,
    pub total: f64,
    /// Mean time of one gradient evaluation (HMC only).
    pub mean_gradient: Option<f64>,
}

/// All `n_iter` iterations of one chain, burn-in included.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub sampler: SamplerKind,
    pub param_names: Vec<String>,
    /// Constrained draws, one row per iteration.
    pub draws: Vec<Vec<f64>>,
    /// Unconstrained draws; empty when loaded from a chain file.
    pub unconstrained: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Per-iteration acceptance probability; empty when loaded from a file.
    pub accept_stat: Vec<f64>,
    pub burn_in: usize,
    pub seed: u64,
    pub divergences: usize,
    /// Step size used after warm-up (HMC).
    pub step_size: Option<f64>,
    pub timings: PhaseTimings,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    /// Post-burn-in values of one parameter.
    pub fn kept(&self, param: usize) -> Vec<f64> {
        self.draws[self.burn_in..].iter().map(|d| d[param]).collect()
    }
}

pub(crate) fn standard_normal_vec(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}
