use std::time::Instant;

use rand::{Rng, RngCore};

use super::{standard_normal_vec, Chain, ChainConfig, PhaseTimings, SamplerKind, TargetDensity, DIVERGENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogOutcome {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    /// A gradient was unavailable or non-finite along the path.
    pub diverged: bool,
    pub gradient_evals: usize,
}

/// Leapfrog integration with unit mass matrix; `grad` is `∇ log p`.
pub fn leapfrog<G>(u: &[f64], r: &[f64], eps: f64, steps: usize, mut grad: G) -> LeapfrogOutcome
where
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let mut u = u.to_vec();
    let mut r = r.to_vec();
    let mut evals = 0;
    let diverged = |u: Vec<f64>, r: Vec<f64>, evals| LeapfrogOutcome {
        u,
        r,
        diverged: true,
        gradient_evals: evals,
    };

    evals += 1;
    let Some(mut g) = grad(&u) else {
        return diverged(u, r, evals);
    };
    for (ri, gi) in r.iter_mut().zip(&g) {
        *ri += 0.5 * eps * gi;
    }
    for step in 0..steps {
        for (ui, ri) in u.iter_mut().zip(&r) {
            *ui += eps * ri;
        }
        evals += 1;
        match grad(&u) {
            Some(next) if next.iter().all(|v| v.is_finite()) => g = next,
            _ => return diverged(u, r, evals),
        }
        let kick = if step + 1 == steps { 0.5 * eps } else { eps };
        for (ri, gi) in r.iter_mut().zip(&g) {
            *ri += kick * gi;
        }
    }
    LeapfrogOutcome {
        u,
        r,
        diverged: false,
        gradient_evals: evals,
    }
}

/// Nesterov dual averaging of `log ε` toward a target acceptance rate.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    m: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target: f64) -> Self {
        DualAveraging {
            target,
            mu: (10.0 * initial_step).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            m: 0.0,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
        }
    }

    /// Feeds one acceptance probability and returns the next step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.m.sqrt() / self.gamma * self.h_bar;
        let eta = self.m.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size used after adaptation ends.
    pub fn final_step(&self) -> f64 {
        if self.m == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

fn kinetic(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

/// Doubles or halves `eps` until a single leapfrog step crosses an
/// acceptance probability of one half.
fn reasonable_step<T: TargetDensity + ?Sized>(target: &T, u: &[f64], eps: f64, rng: &mut seed::StreamRng) -> f64 {
    let eval_seed = rng.next_u64();
    let r = standard_normal_vec(rng, u.len());
    let logp0 = target.log_density(u, eval_seed);
    let h0 = -logp0 + kinetic(&r);
    let log_ratio = |eps: f64| {
        let out = leapfrog(u, &r, eps, 1, |x| target.gradient(x, eval_seed));
        if out.diverged {
            return f64::NEG_INFINITY;
        }
        let h1 = -target.log_density(&out.u, eval_seed) + kinetic(&out.r);
        let lr = h0 - h1;
        if lr.is_nan() {
            f64::NEG_INFINITY
        } else {
            lr
        }
    };
    let mut eps = eps;
    let direction = if log_ratio(eps) > 0.5f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..50 {
        let lr = log_ratio(eps);
        if direction * lr <= -direction * 2f64.ln() {
            break;
        }
        eps *= 2f64.powf(direction);
    }
    eps
}

/// Fixed-length HMC. Each iteration draws a fresh evaluation seed that stays
/// frozen for the whole trajectory, including both energy evaluations.
/// Divergences are counted after burn-in only.
pub fn hmc<T: TargetDensity + ?Sized>(target: &T, init: &[f64], config: &ChainConfig) -> Result<Chain> {
    config.validate()?;
    if !target.has_gradient() {
        return Err(Error::param("HMC needs a target with a gradient"));
    }
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Shape(format!("init has {} entries, target {d}", init.len())));
    }
    let mut rng = seed::child_stream(config.seed, seed::TAG_CHAINS, 1);
    let mut u = init.to_vec();
    let init_logp = target.log_density(&u, rng.next_u64());
    if !init_logp.is_finite() {
        return Err(Error::Initialization {
            chain: 0,
            reason: format!("non-finite log target {init_logp} at initial point"),
        });
    }

    let hc = config.hmc;
    let mut eps = hc.step_size;
    let adapt = hc.adapt && config.burn_in > 0;
    if adapt {
        eps = reasonable_step(target, &u, eps, &mut rng);
    }
    let mut dual = DualAveraging::new(eps, hc.target_accept);

    let n = config.n_iter;
    let mut chain = Chain {
        sampler: SamplerKind::Hmc,
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
    let mut gradient_time = 0.0;
    let mut gradient_evals = 0usize;
    for iter in 0..n {
        if iter == config.burn_in {
            warmup_end = Instant::now();
            if adapt {
                eps = dual.final_step();
            }
        }
        let eval_seed = rng.next_u64();
        let r = standard_normal_vec(&mut rng, d);
        let step = eps * (1.0 + hc.jitter * (2.0 * rng.random::<f64>() - 1.0));
        let logp0 = target.log_density(&u, eval_seed);

        let t = Instant::now();
        let out = leapfrog(&u, &r, step, hc.n_leapfrog, |x| target.gradient(x, eval_seed));
        gradient_time += t.elapsed().as_secs_f64();
        gradient_evals += out.gradient_evals;

        let logp1 = if out.diverged {
            f64::NEG_INFINITY
        } else {
            target.log_density(&out.u, eval_seed)
        };
        let delta_h = (-logp1 + kinetic(&out.r)) - (-logp0 + kinetic(&r));
        let divergent = out.diverged || !delta_h.is_finite() || delta_h.abs() > DIVERGENCE_THRESHOLD;
        let alpha = if divergent { 0.0 } else { (-delta_h).exp().min(1.0) };
        if divergent && iter >= config.burn_in {
            chain.divergences += 1;
        }
        let accept = rng.random::<f64>() < alpha;
        let logp = if accept {
            u = out.u;
            logp1
        } else {
            logp0
        };

        if adapt && iter < config.burn_in {
            eps = dual.update(alpha);
        }

        chain.draws.push(target.constrain(&u));
        chain.unconstrained.push(u.clone());
        chain.log_target.push(logp);
        chain.accepted.push(accept);
        chain.accept_stat.push(alpha);
    }
    let end = Instant::now();
    chain.step_size = Some(eps);
    chain.timings = PhaseTimings {
        warmup: (warmup_end - start).as_secs_f64(),
        sampling: (end - warmup_end).as_secs_f64(),
        total: (end - start).as_secs_f64(),
        mean_gradient: (gradient_evals > 0).then(|| gradient_time / gradient_evals as f64),
    };
    Ok(chain)
}
