//! Deterministic SEIR dynamics integrated with fixed-step classical RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of compartments (S, E, I, R).
pub const COMPARTMENTS: usize = 4;

/// Components below this are treated as integrator roundoff and clamped to 0.
pub const NEGATIVE_TOLERANCE: f64 = -1e-9;

/// SEIR rate triple: transmission, progression E→I and recovery (all per day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl ParameterVector {
    pub const DIM: usize = 3;
    pub const NAMES: [&'static str; 3] = ["beta", "sigma", "gamma"];

    /// Checked constructor; all rates must be finite and strictly positive.
    pub fn new(beta: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = ParameterVector { beta, sigma, gamma };
        if p.to_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(p)
        } else {
            Err(Error::param(format!(
                "rates must be finite and > 0, got {:?}",
                p.to_array()
            )))
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ParameterVector {
            beta: a[0],
            sigma: a[1],
            gamma: a[2],
        }
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        match s {
            [b, sg, g] => Ok(ParameterVector::from_array([*b, *sg, *g])),
            _ => Err(Error::Shape(format!(
                "parameter vector needs 3 entries, got {}",
                s.len()
            ))),
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.beta, self.sigma, self.gamma]
    }
}

/// Compartment counts at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl InitialState {
    pub fn new(s: f64, e: f64, i: f64, r: f64) -> Result<Self> {
        let init = InitialState { s, e, i, r };
        init.validate()?;
        Ok(init)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::param(format!("compartments must be >= 0, got {v:?}")));
        }
        if self.population() <= 0.0 {
            return Err(Error::param("total population must be > 0"));
        }
        Ok(())
    }

    pub fn population(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.s, self.e, self.i, self.r]
    }
}

/// Compartment paths on an equally spaced output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 4]>,
    pub population: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Path of a single compartment (0 = S, 1 = E, 2 = I, 3 = R).
    pub fn compartment(&self, c: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[c]).collect()
    }

    /// Largest deviation of S+E+I+R from the population size.
    pub fn max_conservation_error(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.iter().sum::<f64>() - self.population).abs())
            .fold(0.0, f64::max)
    }
}

/// Grid specification shared by everything that simulates the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt_out: f64,
    pub substeps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            t_end: 100.0,
            dt_out: 1.0,
            substeps: 10,
        }
    }
}

impl TimeGrid {
    /// Number of output intervals.
    pub fn intervals(&self) -> Result<usize> {
        if !(self.dt_out > 0.0) || !self.dt_out.is_finite() {
            return Err(Error::param(format!("dt_out must be > 0, got {}", self.dt_out)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::param(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps must be >= 1"));
        }
        let n = (self.t_end / self.dt_out).round();
        if (n * self.dt_out - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::param(format!(
                "t_end = {} is not a multiple of dt_out = {}",
                self.t_end, self.dt_out
            )));
        }
        Ok(n as usize)
    }
}

#[inline]
fn seir_rhs(p: &ParameterVector, n: f64, y: &[f64; 4]) -> [f64; 4] {
    let infection = p.beta * y[2] * y[0] / n;
    let onset = p.sigma * y[1];
    let recovery = p.gamma * y[2];
    [-infection, infection - onset, onset - recovery, recovery]
}

#[inline]
fn axpy(y: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
}

fn rk4_step(p: &ParameterVector, n: f64, y: &[f64; 4], h: f64) -> [f64; 4] {
    let k1 = seir_rhs(p, n, y);
    let k2 = seir_rhs(p, n, &axpy(y, 0.5 * h, &k1));
    let k3 = seir_rhs(p, n, &axpy(y, 0.5 * h, &k2));
    let k4 = seir_rhs(p, n, &axpy(y, h, &k3));
    let mut out = *y;
    for c in 0..COMPARTMENTS {
        out[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    out
}

/// Integrates the SEIR equations, returning states at `0, dt_out, ..., t_end`.
///
/// Rates only need to be finite and non-negative here (a zero transmission
/// rate is a valid degenerate case). Each output interval is covered by
/// `substeps` RK4 steps.
pub fn integrate_seir(params: &ParameterVector, init: &InitialState, grid: &TimeGrid) -> Result<Trajectory> {
    if params.to_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param(format!(
            "rates must be finite and >= 0, got {:?}",
            params.to_array()
        )));
    }
    init.validate()?;
    let intervals = grid.intervals()?;
    let n = init.population();
    let h = grid.dt_out / grid.substeps as f64;

    let mut times = Vec::with_capacity(intervals + 1);
    let mut states = Vec::with_capacity(intervals + 1);
    let mut y = init.to_array();
    times.push(0.0);
    states.push(y);
    for k in 1..=intervals {
        for j in 0..grid.substeps {
            y = rk4_step(params, n, &y, h);
            let t = (k - 1) as f64 * grid.dt_out + (j + 1) as f64 * h;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "non-finite state".into(),
                });
            }
            if let Some(v) = y.iter().find(|v| **v < NEGATIVE_TOLERANCE) {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: format!("negative compartment {v:e}"),
                });
            }
        }
        for v in y.iter_mut() {
            *v = v.max(0.0);
        }
        times.push(k as f64 * grid.dt_out);
        states.push(y);
    }
    Ok(Trajectory {
        times,
        states,
        population: n,
    })
}
