use rayon::prelude::*;

use super::{hmc, rwmh, Chain, ChainConfig, SamplerKind, TargetDensity};
use crate::error::{Error, Result};
use crate::seed;

/// How each chain picks its starting point.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Draw from the prior until the log target is finite.
    Prior { max_attempts: usize },
    /// The same unconstrained point for every chain.
    Fixed(Vec<f64>),
    /// Each chain picks one unconstrained point uniformly from the pool,
    /// e.g. ABC-accepted parameters mapped through the transform.
    Pool(Vec<Vec<f64>>),
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Prior { max_attempts: 100 }
    }
}

fn initial_point<T: TargetDensity + ?Sized>(
    target: &T,
    config: &ChainConfig,
    init: &InitStrategy,
    chain: usize,
) -> Result<Vec<f64>> {
    match init {
        InitStrategy::Fixed(u) => Ok(u.clone()),
        InitStrategy::Pool(points) => {
            if points.is_empty() {
                return Err(Error::Initialization {
                    chain,
                    reason: "empty initialization pool".into(),
                });
            }
            let mut rng = seed::child_stream(config.seed, seed::TAG_CHAINS, 0);
            Ok(points[rand::Rng::random_range(&mut rng, 0..points.len())].clone())
        }
        InitStrategy::Prior { max_attempts } => {
            let mut rng = seed::child_stream(config.seed, seed::TAG_CHAINS, 0);
            for _ in 0..(*max_attempts).max(1) {
                let u = target.initial_point(&mut rng);
                if target.log_density(&u, rand::RngCore::next_u64(&mut rng)).is_finite() {
                    return Ok(u);
                }
            }
            Err(Error::Initialization {
                chain,
                reason: format!("no finite log target in {max_attempts} prior draws"),
            })
        }
    }
}

/// Runs one chain per config in parallel; results come back in config order.
pub fn run_chains<T: TargetDensity + ?Sized>(
    target: &T,
    configs: &[ChainConfig],
    kind: SamplerKind,
    init: &InitStrategy,
) -> Result<Vec<Chain>> {
    configs
        .par_iter()
        .enumerate()
        .map(|(c, config)| {
            let u0 = initial_point(target, config, init, c)?;
            let run = match kind {
                SamplerKind::Rwmh => rwmh(target, &u0, config),
                SamplerKind::Hmc => hmc(target, &u0, config),
            };
            run.map_err(|e| match e {
                Error::Initialization { reason, .. } => Error::Initialization { chain: c, reason },
                other => other,
            })
        })
        .collect()
}
