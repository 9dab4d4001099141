use std::time::Instant;

use rand::{Rng, RngCore};

use super::{standard_normal_vec, Chain, ChainConfig, PhaseTimings, SamplerKind, TargetDensity};
use crate::error::{Error, Result};
use crate::seed;

/// Random-walk Metropolis with an isotropic Gaussian proposal.
///
/// Every proposal is evaluated under a fresh seed from the chain stream; the
/// current state's log density is carried forward, not re-estimated.
pub fn rwmh<T: TargetDensity + ?Sized>(target: &T, init: &[f64], config: &ChainConfig) -> Result<Chain> {
    config.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Shape(format!("init has {} entries, target {d}", init.len())));
    }
    let mut rng = seed::child_stream(config.seed, seed::TAG_CHAINS, 1);
    let mut u = init.to_vec();
    let mut logp = target.log_density(&u, rng.next_u64());
    if !logp.is_finite() {
        return Err(Error::Initialization {
            chain: 0,
            reason: format!("non-finite log target {logp} at initial point"),
        });
    }

    let n = config.n_iter;
    let mut chain = Chain {
        sampler: SamplerKind::Rwmh,
        param_names: target.param_names(),
        draws: Vec::with_capacity(n),
        unconstrained: Vec::with_capacity(n),
        log_target: Vec::with_capacity(n),
        accepted: Vec::with_capacity(n),
        accept_stat: Vec::with_capacity(n),
        burn_in: config.burn_in,
        seed: config.seed,
        divergences: 0,
        step_size: None,
        timings: PhaseTimings::default(),
    };

    let start = Instant::now();
    let mut warmup_end = start;
    for iter in 0..n {
        if iter == config.burn_in {
            warmup_end = Instant::now();
        }
        let z = standard_normal_vec(&mut rng, d);
        let proposal: Vec<f64> = u.iter().zip(&z).map(|(x, e)| x + config.rwmh.scale * e).collect();
        let eval_seed = rng.next_u64();
        let logp_new = target.log_density(&proposal, eval_seed);
        let alpha = if logp_new.is_finite() {
            (logp_new - logp).exp().min(1.0)
        } else {
            0.0
        };
        let accept = rng.random::<f64>() < alpha;
        if accept {
            u = proposal;
            logp = logp_new;
        }
        chain.draws.push(target.constrain(&u));
        chain.unconstrained.push(u.clone());
        chain.log_target.push(logp);
        chain.accepted.push(accept);
        chain.accept_stat.push(alpha);
    }
    let end = Instant::now();
    chain.timings = PhaseTimings {
        warmup: (warmup_end - start).as_secs_f64(),
        sampling: (end - warmup_end).as_secs_f64(),
        total: (end - start).as_secs_f64(),
        mean_gradient: None,
    };
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat;
    impl TargetDensity for Flat {
        fn dim(&self) -> usize {
            3
        }
        fn log_density(&self, _: &[f64], _: u64) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], _: u64) -> Option<Vec<f64>> {
            Some(vec![0.0; 3])
        }
    }

    struct StdNormal1;
    impl TargetDensity for StdNormal1 {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, u: &[f64], _: u64) -> f64 {
            -0.5 * u[0] * u[0]
        }
        fn gradient(&self, u: &[f64], _: u64) -> Option<Vec<f64>> {
            Some(vec![-u[0]])
        }
    }

    fn config(n_iter: usize, burn_in: usize, scale: f64) -> ChainConfig {
        ChainConfig {
            n_iter,
            burn_in,
            seed: 21,
            rwmh: super::super::RwmhConfig { scale },
            hmc: Default::default(),
        }
    }

    #[test]
    fn flat_target_accepts_everything() {
        let c = rwmh(&Flat, &[0.0; 3], &config(500, 100, 0.5)).unwrap();
        assert!(c.accepted.iter().all(|a| *a));
        assert_eq!(c.len(), 500);
    }

    #[test]
    fn recovers_standard_normal() {
        let c = rwmh(&StdNormal1, &[0.0], &config(51_000, 1_000, 2.4)).unwrap();
        let x = c.kept(0);
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
        assert!(m.abs() < 0.03, "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = config(300, 50, 1.0);
        assert_eq!(
            rwmh(&StdNormal1, &[0.3], &cfg).unwrap().draws,
            rwmh(&StdNormal1, &[0.3], &cfg).unwrap().draws
        );
    }

    #[test]
    fn non_finite_start_fails() {
        struct Nowhere;
        impl TargetDensity for Nowhere {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, _: &[f64], _: u64) -> f64 {
                f64::NEG_INFINITY
            }
            fn gradient(&self, _: &[f64], _: u64) -> Option<Vec<f64>> {
                None
            }
        }
        assert!(matches!(
            rwmh(&Nowhere, &[0.0], &config(10, 1, 1.0)),
            Err(Error::Initialization { .. })
        ));
    }
}
