//! Gaussian synthetic likelihood: per-θ Monte Carlo moments of the selected
//! summaries and the resulting log-likelihood.

use serde::{Deserialize, Serialize};

use crate::abc::{PriorSpec, Scenario};
use crate::error::{Error, Result};
use crate::observe::{observe, NoiseModel, ObservedSeries, PoissonTable};
use crate::ode::{integrate_seir, ParameterVector, Trajectory};
use crate::seed;
use crate::summaries::{compute_vector, SubsetMask, SummaryId, SummaryVector};

/// Relative size of the first diagonal jitter, `λ = 1e-8·trace/d`.
pub const JITTER_START: f64 = 1e-8;
pub const JITTER_DOUBLINGS: usize = 10;
pub const DEFAULT_N_REPS: usize = 200;
pub const DEFAULT_H_REL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynLikModel {
    pub mask: SubsetMask,
    pub mu_hat: Vec<f64>,
    /// Regularized covariance, row-major `d×d`.
    pub sigma_hat: Vec<f64>,
    /// Lower Cholesky factor of `sigma_hat`, row-major.
    pub cholesky: Vec<f64>,
    pub n_reps: usize,
    pub jitter_applied: f64,
}

impl SynLikModel {
    pub fn dim(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn log_det(&self) -> f64 {
        let d = self.dim();
        2.0 * (0..d).map(|i| self.cholesky[i * d + i].ln()).sum::<f64>()
    }
}

/// Lower Cholesky factor of a row-major SPD matrix, or `None`.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Sample mean and covariance (divisor `n−1`) of replicate summaries, with
/// diagonal jitter doubled up to ten times if the factorization fails.
pub fn moments_from_replicates(reps: &[Vec<f64>], mask: SubsetMask) -> Result<SynLikModel> {
    let d = mask.len();
    let n = reps.len();
    if n < d + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} replicates for {d} statistics; need at least {}",
            d + 2
        )));
    }
    if reps.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!("replicates must have {d} entries")));
    }
    // Accumulate around the first replicate so identical replicates give an
    // exactly zero covariance.
    let origin = &reps[0];
    let mut mu = vec![0.0; d];
    for r in reps {
        for ((m, x), o) in mu.iter_mut().zip(r).zip(origin) {
            *m += x - o;
        }
    }
    for (m, o) in mu.iter_mut().zip(origin) {
        *m = o + *m / n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for r in reps {
        for i in 0..d {
            let di = r[i] - mu[i];
            for j in 0..=i {
                cov[i * d + j] += di * (r[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / (n as f64 - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    if let Some(l) = cholesky(&cov, d) {
        return Ok(SynLikModel {
            mask,
            mu_hat: mu,
            sigma_hat: cov,
            cholesky: l,
            n_reps: n,
            jitter_applied: 0.0,
        });
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let mut lambda = JITTER_START * trace / d as f64;
    if lambda > 0.0 && lambda.is_finite() {
        for _ in 0..=JITTER_DOUBLINGS {
            let mut reg = cov.clone();
            for i in 0..d {
                reg[i * d + i] += lambda;
            }
            if let Some(l) = cholesky(&reg, d) {
                return Ok(SynLikModel {
                    mask,
                    mu_hat: mu,
                    sigma_hat: reg,
                    cholesky: l,
                    n_reps: n,
                    jitter_applied: lambda,
                });
            }
            lambda *= 2.0;
        }
    }
    Err(Error::DegenerateCovariance {
        attempts: JITTER_DOUBLINGS + 1,
        trace,
    })
}

/// `−½ (s−μ̂)ᵀ Σ̂⁻¹ (s−μ̂) − ½ log|Σ̂|` through the Cholesky factor.
pub fn synthetic_loglik(model: &SynLikModel, s_obs: &SummaryVector) -> Result<f64> {
    let d = model.dim();
    if s_obs.mask != model.mask || s_obs.values.len() != d {
        return Err(Error::Shape(format!(
            "observation over {} but model over {}",
            s_obs.mask, model.mask
        )));
    }
    // forward substitution L z = s − μ̂
    let l = &model.cholesky;
    let mut z = vec![0.0; d];
    for i in 0..d {
        let mut s = s_obs.values[i] - model.mu_hat[i];
        for k in 0..i {
            s -= l[i * d + k] * z[k];
        }
        z[i] = s / l[i * d + i];
    }
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * quad - 0.5 * model.log_det())
}

/// Everything needed to evaluate the synthetic likelihood at a θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynLikTarget {
    pub mask: SubsetMask,
    pub s_obs: Vec<f64>,
    pub scenario: Scenario,
    pub n_reps: usize,
    pub base_seed: u64,
    pub prior: PriorSpec,
}

impl SynLikTarget {
    pub fn new(
        s_obs: SummaryVector,
        scenario: Scenario,
        n_reps: usize,
        base_seed: u64,
        prior: PriorSpec,
    ) -> Result<Self> {
        prior.validate()?;
        scenario.noise_model.validate()?;
        if n_reps < s_obs.mask.len() + 2 {
            return Err(Error::param(format!(
                "n_reps = {n_reps} must be at least popcount(mask) + 2 = {}",
                s_obs.mask.len() + 2
            )));
        }
        Ok(SynLikTarget {
            mask: s_obs.mask,
            s_obs: s_obs.values,
            scenario,
            n_reps,
            base_seed,
            prior,
        })
    }

    pub fn observation(&self) -> SummaryVector {
        SummaryVector {
            values: self.s_obs.clone(),
            mask: self.mask,
        }
    }

    /// True when replicates can be drawn as compartment totals and final
    /// values instead of full series. Sums of independent Poisson counts are
    /// Poisson with the summed mean, so the replicate law is unchanged.
    pub fn uses_aggregate_draws(&self) -> bool {
        let aggregate =
            SubsetMask::from_ids(&[SummaryId::MeanE, SummaryId::MeanI, SummaryId::FinalSizeR]).expect("non-empty");
        self.scenario.noise_model == NoiseModel::Poisson && self.mask.is_subset_of(aggregate)
    }
}

/// Poisson tables for the aggregate statistics of `mask`, in catalog order.
fn aggregate_tables(traj: &Trajectory, mask: SubsetMask) -> Vec<(SummaryId, PoissonTable)> {
    mask.ids()
        .map(|id| {
            let lambda = match id {
                SummaryId::MeanE => traj.states.iter().map(|s| s[1]).sum(),
                SummaryId::MeanI => traj.states.iter().map(|s| s[2]).sum(),
                SummaryId::FinalSizeR => traj.states[traj.len() - 1][3],
                other => unreachable!("{other} has no aggregate form"),
            };
            (id, PoissonTable::new(lambda))
        })
        .collect()
}

fn aggregate_replicate(tables: &[(SummaryId, PoissonTable)], t: f64, rep_seed: u64) -> Vec<f64> {
    let mut rng = seed::stream(rep_seed);
    tables
        .iter()
        .map(|(id, table)| match id {
            SummaryId::FinalSizeR => table.sample(&mut rng),
            _ => table.sample(&mut rng) / t,
        })
        .collect()
}

/// Replicate summaries at θ; replicate `r` uses `derive_seed(eval_seed, TAG_REPLICATE, r)`.
pub fn simulate_replicates(theta: &ParameterVector, target: &SynLikTarget, eval_seed: u64) -> Result<Vec<Vec<f64>>> {
    let traj = integrate_seir(theta, &target.scenario.init, &target.scenario.grid)?;
    let tables = target
        .uses_aggregate_draws()
        .then(|| aggregate_tables(&traj, target.mask));
    let t = traj.len() as f64;
    (0..target.n_reps)
        .map(|r| {
            let rep_seed = seed::derive_seed(eval_seed, seed::TAG_REPLICATE, r as u64);
            if let Some(tables) = &tables {
                Ok(aggregate_replicate(tables, t, rep_seed))
            } else {
                let series: ObservedSeries = observe(&traj, target.scenario.noise_model, rep_seed)?;
                Ok(compute_vector(&series, target.mask)?.values)
            }
        })
        .collect()
}

pub fn estimate_moments(theta: &ParameterVector, target: &SynLikTarget, eval_seed: u64) -> Result<SynLikModel> {
    let reps = simulate_replicates(theta, target, eval_seed)?;
    moments_from_replicates(&reps, target.mask)
}

/// Synthetic log-likelihood of the target's observation at θ.
pub fn loglik_at(theta: &ParameterVector, target: &SynLikTarget, eval_seed: u64) -> Result<f64> {
    let model = estimate_moments(theta, target, eval_seed)?;
    synthetic_loglik(&model, &target.observation())
}

/// Central differences with per-coordinate step `h_rel·|x_j|` (or `h_rel`
/// when `x_j = 0`).
pub fn central_difference<F>(mut f: F, x: &[f64], h_rel: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h_rel > 0.0) {
        return Err(Error::param(format!("h_rel must be > 0, got {h_rel}")));
    }
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = step_size(x[j], h_rel);
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

fn step_size(x: f64, h_rel: f64) -> f64 {
    if x == 0.0 {
        h_rel
    } else {
        h_rel * x.abs()
    }
}

/// Gradient of the synthetic log-likelihood in θ with common random numbers:
/// every stencil point reuses `eval_seed`.
pub fn grad_loglik(theta: &ParameterVector, target: &SynLikTarget, eval_seed: u64, h_rel: f64) -> Result<[f64; 3]> {
    let x = theta.to_array();
    for (j, v) in x.iter().enumerate() {
        let h = step_size(*v, h_rel);
        if v - h < target.prior.lower[j] || v + h > target.prior.upper[j] {
            return Err(Error::Boundary { coordinate: j });
        }
    }
    let g = central_difference(
        |p| loglik_at(&ParameterVector::from_slice(p)?, target, eval_seed),
        &x,
        h_rel,
    )?;
    Ok([g[0], g[1], g[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::compute_vector;
    use rand_distr::{Distribution, Normal};

    fn baseline_target(mask: SubsetMask, noise: NoiseModel, n_reps: usize) -> SynLikTarget {
        let scenario = Scenario::baseline(noise);
        let truth = ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap();
        let traj = integrate_seir(&truth, &scenario.init, &scenario.grid).unwrap();
        let s_obs = compute_vector(&ObservedSeries::exact(&traj), mask).unwrap();
        SynLikTarget::new(s_obs, scenario, n_reps, 0, PriorSpec::default()).unwrap()
    }

    fn baseline_mask() -> SubsetMask {
        SubsetMask::from_names(&["mean_E", "mean_I", "final_size_R"]).unwrap()
    }

    #[test]
    fn noise_free_replicates_are_degenerate() {
        let target = baseline_target(baseline_mask(), NoiseModel::None, 50);
        let theta = ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap();
        assert!(matches!(
            estimate_moments(&theta, &target, 1),
            Err(Error::DegenerateCovariance { .. })
        ));
    }

    #[test]
    fn gaussian_toy_moments() {
        let mut rng = crate::seed::stream(3);
        let theta = 0.7;
        let dist = Normal::new(theta, 1.0).unwrap();
        let reps: Vec<Vec<f64>> = (0..10_000).map(|_| vec![dist.sample(&mut rng)]).collect();
        let mask = SubsetMask::from_bits(1).unwrap();
        let m = moments_from_replicates(&reps, mask).unwrap();
        assert!((m.mu_hat[0] - theta).abs() < 0.03);
        assert!((m.sigma_hat[0] - 1.0).abs() < 0.05);
        assert_eq!(m.jitter_applied, 0.0);
    }

    #[test]
    fn loglik_examples() {
        let mask = SubsetMask::from_bits(1).unwrap();
        let model = SynLikModel {
            mask,
            mu_hat: vec![0.0],
            sigma_hat: vec![1.0],
            cholesky: vec![1.0],
            n_reps: 10,
            jitter_applied: 0.0,
        };
        let s = SummaryVector::new(vec![1.0], mask).unwrap();
        assert_eq!(synthetic_loglik(&model, &s).unwrap(), -0.5);
        let two = SummaryVector::new(vec![1.0, 2.0], SubsetMask::from_bits(3).unwrap()).unwrap();
        assert!(matches!(synthetic_loglik(&model, &two), Err(Error::Shape(_))));
    }

    #[test]
    fn at_mean_only_log_det_remains() {
        let target = baseline_target(baseline_mask(), NoiseModel::Poisson, 200);
        let theta = ParameterVector::new(0.35, 0.25, 0.07).unwrap();
        let model = estimate_moments(&theta, &target, 5).unwrap();
        let s = SummaryVector::new(model.mu_hat.clone(), model.mask).unwrap();
        assert_eq!(synthetic_loglik(&model, &s).unwrap(), -0.5 * model.log_det());
    }

    #[test]
    fn rank_deficient_covariance_gets_jitter() {
        // second coordinate is an exact copy of the first
        let reps: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let m = moments_from_replicates(&reps, SubsetMask::from_bits(3).unwrap()).unwrap();
        assert!(m.jitter_applied > 0.0);
        let d = 2;
        let trace: f64 = m.sigma_hat[0] + m.sigma_hat[3];
        for i in 0..d {
            for j in 0..d {
                let llt: f64 = (0..d).map(|k| m.cholesky[i * d + k] * m.cholesky[j * d + k]).sum();
                assert!((llt - m.sigma_hat[i * d + j]).abs() <= 1e-10 * trace);
            }
        }
    }

    #[test]
    fn replicates_are_reproducible() {
        let target = baseline_target(baseline_mask(), NoiseModel::Poisson, 200);
        let theta = ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap();
        assert_eq!(
            estimate_moments(&theta, &target, 9).unwrap(),
            estimate_moments(&theta, &target, 9).unwrap()
        );
        assert_eq!(
            grad_loglik(&theta, &target, 9, 1e-3).unwrap(),
            grad_loglik(&theta, &target, 9, 1e-3).unwrap()
        );
    }

    #[test]
    fn quadratic_gradient() {
        let g = central_difference(|x| Ok(-0.5 * x[0] * x[0]), &[1.0], 1e-3).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-6);
        let g = central_difference(
            |x| Ok(-(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.1).powi(2)),
            &[0.3, -0.1],
            1e-3,
        )
        .unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn stencil_outside_prior_is_a_boundary_error() {
        let target = baseline_target(baseline_mask(), NoiseModel::Poisson, 50);
        let theta = ParameterVector::new(0.9995, 0.2, 0.1).unwrap();
        assert!(matches!(
            grad_loglik(&theta, &target, 0, 1e-3),
            Err(Error::Boundary { coordinate: 0 })
        ));
    }

    /// Gaussian observation noise is a smooth map of θ for a fixed seed, so
    /// the difference quotient settles as the step shrinks.
    #[test]
    fn gradient_is_stable_under_step_halving() {
        let target = baseline_target(baseline_mask(), NoiseModel::Gaussian { sd: 2.0 }, 200);
        let theta = ParameterVector::new(0.35, 0.25, 0.07).unwrap();
        for eval_seed in 0..3 {
            let g1 = grad_loglik(&theta, &target, eval_seed, 1e-3).unwrap();
            let g2 = grad_loglik(&theta, &target, eval_seed, 5e-4).unwrap();
            for j in 0..3 {
                let rel = (g1[j] - g2[j]).abs() / g2[j].abs();
                assert!(rel < 0.01, "seed {eval_seed} coordinate {j}: {} vs {}", g1[j], g2[j]);
            }
        }
    }
}
