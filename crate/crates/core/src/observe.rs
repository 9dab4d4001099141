//! Observation layer on top of the deterministic trajectory.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    #[default]
    None,
    /// Additive N(0, sd²) noise, clamped at zero.
    Gaussian { sd: f64 },
    /// Independent Poisson counts with the deterministic value as mean.
    Poisson,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { sd } if !(*sd >= 0.0) || !sd.is_finite() => {
                Err(Error::param(format!("gaussian noise sd must be >= 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            NoiseModel::None => false,
            NoiseModel::Gaussian { sd } => *sd > 0.0,
            NoiseModel::Poisson => true,
        }
    }
}

/// Daily observed compartment counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSeries {
    pub times: Vec<f64>,
    pub observed: Vec<[f64; 4]>,
    pub noise_model: NoiseModel,
}

impl ObservedSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn compartment(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.observed.iter().map(move |s| s[c])
    }

    /// Noise-free view of a trajectory.
    pub fn exact(traj: &Trajectory) -> Self {
        ObservedSeries {
            times: traj.times.clone(),
            observed: traj.states.clone(),
            noise_model: NoiseModel::None,
        }
    }
}

/// Draws an observed series from `traj`; bit-identical for identical inputs.
pub fn observe(traj: &Trajectory, noise_model: NoiseModel, seed: u64) -> Result<ObservedSeries> {
    noise_model.validate()?;
    let mut rng = seed::stream(seed);
    let observed = traj
        .states
        .iter()
        .map(|state| state.map(|x| noisy_value(x, &noise_model, &mut rng)))
        .collect();
    Ok(ObservedSeries {
        times: traj.times.clone(),
        observed,
        noise_model,
    })
}

pub(crate) fn noisy_value<R: RngCore>(x: f64, noise_model: &NoiseModel, rng: &mut R) -> f64 {
    match *noise_model {
        NoiseModel::None => x,
        NoiseModel::Gaussian { sd } => {
            let z: f64 = StandardNormal.sample(rng);
            (x + sd * z).max(0.0)
        }
        NoiseModel::Poisson => poisson(x, rng),
    }
}

#[inline]
fn unit_open(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Poisson draw with a fixed stream footprint of three words.
///
/// Means below 10 use inversion, larger means use Hörmann's transformed
/// rejection (PTRS). Either way the first candidate is a monotone function of
/// the mean for fixed uniforms, so evaluations that share a seed at nearby
/// means stay coupled. Rejected PTRS candidates continue on a private
/// stream seeded by the third word, which keeps the caller's stream aligned.
pub fn poisson<R: RngCore>(lambda: f64, rng: &mut R) -> f64 {
    let w1 = rng.next_u64();
    let w2 = rng.next_u64();
    let w3 = rng.next_u64();
    if !(lambda > 0.0) {
        return 0.0;
    }
    if lambda < 10.0 {
        return poisson_inversion(lambda, unit_open(w1));
    }
    let ptrs = Ptrs::new(lambda);
    if let Some(k) = ptrs.attempt(unit_open(w1) - 0.5, unit_open(w2)) {
        return k;
    }
    let mut fallback = seed::stream(w3);
    loop {
        let u = unit_open(fallback.next_u64()) - 0.5;
        let v = unit_open(fallback.next_u64());
        if let Some(k) = ptrs.attempt(u, v) {
            return k;
        }
    }
}

fn poisson_inversion(lambda: f64, u: f64) -> f64 {
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k as f64
}

/// Inverse-CDF Poisson sampler for many draws at one mean.
///
/// The CDF is tabulated over the mean ± 12 sd (plus a margin) once; each draw
/// is then a binary search on a single uniform. For a shared uniform the draw
/// is non-decreasing in the mean and moves in unit steps, which keeps
/// finite-difference gradients under common random numbers smooth.
#[derive(Debug, Clone)]
pub struct PoissonTable {
    lambda: f64,
    lo: u64,
    cdf: Vec<f64>,
}

impl PoissonTable {
    pub fn new(lambda: f64) -> Self {
        if !(lambda > 0.0) {
            return PoissonTable {
                lambda: 0.0,
                lo: 0,
                cdf: vec![1.0],
            };
        }
        let spread = 12.0 * lambda.sqrt() + 10.0;
        let lo = (lambda - spread).floor().max(0.0) as u64;
        let hi = (lambda + spread).ceil() as u64;
        let mode = (lambda.floor() as u64).clamp(lo, hi);
        let log_pmf = |k: u64| k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0);

        let len = (hi - lo + 1) as usize;
        let mut pmf = vec![0.0; len];
        let m = (mode - lo) as usize;
        pmf[m] = log_pmf(mode).exp();
        for i in (0..m).rev() {
            let k = lo + i as u64;
            pmf[i] = pmf[i + 1] * (k + 1) as f64 / lambda;
        }
        for i in m + 1..len {
            let k = lo + i as u64;
            pmf[i] = pmf[i - 1] * lambda / k as f64;
        }
        // P(X < lo), negligible but kept so the table is a true CDF.
        let below = if lo == 0 { 0.0 } else { gamma_ur(lo as f64, lambda) };
        let mut acc = below;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        PoissonTable { lambda, lo, cdf }
    }

    /// Smallest `k` with `F(k) ≥ u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u);
        if i < self.cdf.len() {
            return (self.lo + i as u64) as f64;
        }
        // Beyond the table (probability below 1e-30): walk the pmf upward.
        let mut k = self.lo + self.cdf.len() as u64 - 1;
        let mut p = (k as f64 * self.lambda.ln() - self.lambda - ln_gamma(k as f64 + 1.0)).exp();
        let mut f = self.cdf[self.cdf.len() - 1];
        while f < u && p > 0.0 {
            k += 1;
            p *= self.lambda / k as f64;
            f += p;
        }
        k as f64
    }

    /// One draw consuming exactly one word of `rng`.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        self.quantile(unit_open(rng.next_u64()))
    }
}

struct Ptrs {
    lambda: f64,
    log_lambda: f64,
    a: f64,
    b: f64,
    inv_alpha: f64,
    v_r: f64,
}

impl Ptrs {
    fn new(lambda: f64) -> Self {
        let slam = lambda.sqrt();
        let b = 0.931 + 2.53 * slam;
        Ptrs {
            lambda,
            log_lambda: lambda.ln(),
            a: -0.059 + 0.02483 * b,
            b,
            inv_alpha: 1.1239 + 1.1328 / (b - 3.4),
            v_r: 0.9277 - 3.6224 / (b - 2.0),
        }
    }

    /// `u` in (-1/2, 1/2), `v` in (0, 1).
    fn attempt(&self, u: f64, v: f64) -> Option<f64> {
        let us = 0.5 - u.abs();
        let k = ((2.0 * self.a / us + self.b) * u + self.lambda + 0.43).floor();
        if us >= 0.07 && v <= self.v_r {
            return Some(k);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            return None;
        }
        let lhs = v.ln() + self.inv_alpha.ln() - (self.a / (us * us) + self.b).ln();
        let rhs = -self.lambda + k * self.log_lambda - ln_gamma(k + 1.0);
        (lhs <= rhs).then_some(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_seir, InitialState, ParameterVector, TimeGrid};

    fn traj() -> Trajectory {
        integrate_seir(
            &ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap(),
            &InitialState::new(999.0, 0.0, 1.0, 0.0).unwrap(),
            &TimeGrid::default(),
        )
        .unwrap()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn none_is_identity() {
        let t = traj();
        let obs = observe(&t, NoiseModel::None, 7).unwrap();
        assert_eq!(obs.observed, t.states);
    }

    #[test]
    fn zero_sd_gaussian_is_clamped_identity() {
        let mut t = traj();
        t.states[3][1] = -1e-12;
        let obs = observe(&t, NoiseModel::Gaussian { sd: 0.0 }, 3).unwrap();
        for (o, s) in obs.observed.iter().zip(&t.states) {
            assert_eq!(*o, s.map(|x| x.max(0.0)));
        }
    }

    #[test]
    fn negative_sd_is_rejected() {
        assert!(observe(&traj(), NoiseModel::Gaussian { sd: -1.0 }, 0).is_err());
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let t = traj();
        for noise in [NoiseModel::Poisson, NoiseModel::Gaussian { sd: 3.0 }] {
            assert_eq!(observe(&t, noise, 11).unwrap(), observe(&t, noise, 11).unwrap());
            assert_ne!(observe(&t, noise, 11).unwrap(), observe(&t, noise, 12).unwrap());
        }
    }

    #[test]
    fn poisson_moments_over_seeds() {
        let constant = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![[100.0; 4]; 2],
            population: 400.0,
        };
        let draws: Vec<f64> = (0..10_000)
            .map(|s| observe(&constant, NoiseModel::Poisson, s).unwrap().observed[1][2])
            .collect();
        let (m, v) = moments(&draws);
        assert!((99.0..=101.0).contains(&m), "mean {m}");
        assert!((90.0..=110.0).contains(&v), "var {v}");
    }

    #[test]
    fn poisson_small_and_large_means() {
        let mut rng = seed::stream(5);
        for lambda in [0.3, 4.0, 9.99, 10.0, 57.0, 2500.0] {
            let draws: Vec<f64> = (0..40_000).map(|_| poisson(lambda, &mut rng)).collect();
            let (m, v) = moments(&draws);
            let se = (lambda / 40_000.0).sqrt();
            assert!((m - lambda).abs() < 5.0 * se, "lambda {lambda}: mean {m}");
            assert!((v / lambda - 1.0).abs() < 0.05, "lambda {lambda}: var {v}");
            assert!(draws.iter().all(|k| *k >= 0.0 && k.fract() == 0.0));
        }
        assert_eq!(poisson(0.0, &mut rng), 0.0);
    }

    #[test]
    fn poisson_is_monotone_in_mean_for_shared_words() {
        let mut monotone = 0;
        let trials = 2000;
        for s in 0..trials {
            let lo = poisson(500.0, &mut seed::stream(s));
            let hi = poisson(500.5, &mut seed::stream(s));
            if hi >= lo && hi - lo <= 1.0 {
                monotone += 1;
            }
        }
        assert!(monotone as f64 > 0.95 * trials as f64);
    }

    #[test]
    fn table_cdf_matches_independent_poisson_cdf() {
        use statrs::distribution::{DiscreteCDF, Poisson};
        for lambda in [0.7, 9.5, 150.0, 16_000.0] {
            let table = PoissonTable::new(lambda);
            let oracle = Poisson::new(lambda).unwrap();
            let sd = lambda.sqrt();
            for z in [-3.0, -1.0, 0.0, 0.5, 2.0, 4.0] {
                let k = (lambda + z * sd).floor().max(0.0) as u64;
                let i = (k - table.lo) as usize;
                assert!((table.cdf[i] - oracle.cdf(k)).abs() < 1e-9, "lambda {lambda} k {k}");
            }
        }
    }

    #[test]
    fn table_draws_have_poisson_moments() {
        for lambda in [3.0, 150.0, 16_000.0] {
            let table = PoissonTable::new(lambda);
            let mut rng = seed::stream(21);
            let draws: Vec<f64> = (0..40_000).map(|_| table.sample(&mut rng)).collect();
            let n = draws.len() as f64;
            let m = draws.iter().sum::<f64>() / n;
            let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((m - lambda).abs() < 4.0 * (lambda / n).sqrt(), "mean {m} at {lambda}");
            assert!((v / lambda - 1.0).abs() < 0.05, "var {v} at {lambda}");
        }
    }

    #[test]
    fn table_draws_step_by_at_most_one_per_small_shift() {
        let mut rng = seed::stream(22);
        for _ in 0..2000 {
            let u = unit_open(rng.next_u64());
            let a = PoissonTable::new(5000.0).quantile(u);
            let b = PoissonTable::new(5000.5).quantile(u);
            assert!(b >= a && b - a <= 1.0, "{a} -> {b}");
        }
        assert_eq!(PoissonTable::new(0.0).sample(&mut rng), 0.0);
    }
}
