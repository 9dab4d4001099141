//! Rejection ABC over a reusable reference table.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observe::{observe, NoiseModel};
use crate::ode::{integrate_seir, InitialState, ParameterVector, TimeGrid};
use crate::seed;
use crate::summaries::{compute_vector, robust_scale, ScaleVector, SubsetMask, SummaryVector, CATALOG_SIZE};

/// Independent uniform priors on each rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            lower: [0.0; 3],
            upper: [1.0; 3],
        }
    }
}

impl PriorSpec {
    pub fn new(lower: [f64; 3], upper: [f64; 3]) -> Result<Self> {
        let p = PriorSpec { lower, upper };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..3 {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::param(format!(
                    "prior bounds for {} must satisfy lower < upper, got [{lo}, {hi}]",
                    ParameterVector::NAMES[j]
                )));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut a = [0.0; 3];
        for (j, v) in a.iter_mut().enumerate() {
            *v = self.lower[j] + (self.upper[j] - self.lower[j]) * rng.random::<f64>();
        }
        ParameterVector::from_array(a)
    }

    pub fn contains(&self, theta: &ParameterVector) -> bool {
        theta
            .to_array()
            .iter()
            .enumerate()
            .all(|(j, v)| *v >= self.lower[j] && *v <= self.upper[j])
    }
}

/// What the simulator needs besides the rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub init: InitialState,
    pub grid: TimeGrid,
    pub noise_model: NoiseModel,
}

impl Scenario {
    /// S(0)=999, E(0)=0, I(0)=1, R(0)=0 over 100 days.
    pub fn baseline(noise_model: NoiseModel) -> Self {
        Scenario {
            init: InitialState {
                s: 999.0,
                e: 0.0,
                i: 1.0,
                r: 0.0,
            },
            grid: TimeGrid::default(),
            noise_model,
        }
    }
}

/// `(θ, full-catalog summaries)` rows simulated from the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub params: Vec<ParameterVector>,
    pub summaries: Vec<[f64; CATALOG_SIZE]>,
    pub seed: u64,
    pub noise_model: NoiseModel,
    /// Full-catalog scales; masked scales are restrictions of these.
    pub scales: ScaleVector,
}

impl ReferenceTable {
    pub fn from_rows(
        params: Vec<ParameterVector>,
        summaries: Vec<[f64; CATALOG_SIZE]>,
        seed: u64,
        noise_model: NoiseModel,
    ) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::param("reference table needs at least one row"));
        }
        if params.len() != summaries.len() {
            return Err(Error::Shape(format!(
                "{} parameter rows but {} summary rows",
                params.len(),
                summaries.len()
            )));
        }
        let values = (0..CATALOG_SIZE)
            .map(|j| {
                let column: Vec<f64> = summaries.iter().map(|s| s[j]).collect();
                robust_scale(&column)
            })
            .collect();
        Ok(ReferenceTable {
            params,
            summaries,
            seed,
            noise_model,
            scales: ScaleVector {
                values,
                mask: SubsetMask::full(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn row_summary(&self, row: usize) -> SummaryVector {
        SummaryVector {
            values: self.summaries[row].to_vec(),
            mask: SubsetMask::full(),
        }
    }
}

fn simulate_row(
    prior: &PriorSpec,
    scenario: &Scenario,
    row_seed: u64,
    max_attempts: usize,
) -> Result<(ParameterVector, [f64; CATALOG_SIZE], usize)> {
    let mut last_err = None;
    for attempt in 0..max_attempts {
        let mut rng = seed::child_stream(row_seed, seed::TAG_PRIOR_ROW, attempt as u64);
        let theta = prior.sample(&mut rng);
        let outcome = integrate_seir(&theta, &scenario.init, &scenario.grid)
            .and_then(|traj| observe(&traj, scenario.noise_model, rng.random()))
            .and_then(|series| compute_vector(&series, SubsetMask::full()));
        match outcome {
            Ok(v) => {
                let mut row = [0.0; CATALOG_SIZE];
                row.copy_from_slice(&v.values);
                return Ok((theta, row, attempt + 1));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::param("no simulation attempts allowed")))
}

/// Simulates `n` rows in parallel; row `i` only depends on `(seed, i)`.
///
/// Failed simulations are redrawn; more than `10·n` draws in total aborts.
pub fn simulate_reference(prior: &PriorSpec, n: usize, scenario: &Scenario, seed: u64) -> Result<ReferenceTable> {
    if n == 0 {
        return Err(Error::param("reference table size must be >= 1"));
    }
    prior.validate()?;
    scenario.noise_model.validate()?;
    let cap = 10 * n;
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let row_seed = seed::derive_seed(seed, seed::TAG_REFERENCE, i as u64);
            simulate_row(prior, scenario, row_seed, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    let draws: usize = rows.iter().map(|r| r.2).sum();
    if draws > cap {
        return Err(Error::param(format!(
            "reference simulation needed {draws} draws for {n} rows (cap {cap})"
        )));
    }
    let (params, summaries) = rows.into_iter().map(|(p, s, _)| (p, s)).unzip();
    ReferenceTable::from_rows(params, summaries, seed, scenario.noise_model)
}

/// Euclidean norm of the coordinatewise scaled difference.
pub fn distance(a: &SummaryVector, b: &SummaryVector, scales: &ScaleVector) -> Result<f64> {
    if a.mask != b.mask || a.mask != scales.mask {
        return Err(Error::Shape(format!(
            "distance between {} and {} with scales over {}",
            a.mask, b.mask, scales.mask
        )));
    }
    Ok(scaled_distance(&a.values, &b.values, &scales.values))
}

#[inline]
fn scaled_distance(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scales)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rows of the reference table kept by rejection ABC.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedSample {
    pub indices: Vec<usize>,
    pub params: Vec<ParameterVector>,
    pub distances: Vec<f64>,
    pub epsilon: f64,
}

impl AcceptedSample {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Distances of every table row to `s_obs` under `mask`.
pub fn table_distances(table: &ReferenceTable, s_obs: &SummaryVector, mask: SubsetMask) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::param("reference table is empty"));
    }
    let obs = s_obs.restrict(mask)?;
    let scales = table.scales.restrict(mask)?;
    let cols: Vec<usize> = mask.indices().collect();
    Ok(table
        .summaries
        .iter()
        .map(|row| {
            cols.iter()
                .zip(&obs.values)
                .zip(&scales.values)
                .map(|((&c, o), s)| ((row[c] - o) / s).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Number of rows accepted at quantile `q` of `n` distances.
pub fn accepted_count(n: usize, q: f64) -> usize {
    (((q * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// Indicator-kernel rejection ABC with the tolerance set to the
/// `accept_quantile` empirical quantile of the distances. Ties at the
/// boundary keep the lowest row indices.
pub fn rejection_abc(
    table: &ReferenceTable,
    s_obs: &SummaryVector,
    mask: SubsetMask,
    accept_quantile: f64,
) -> Result<AcceptedSample> {
    if !(accept_quantile > 0.0 && accept_quantile <= 1.0) {
        return Err(Error::param(format!(
            "accept_quantile must lie in (0, 1], got {accept_quantile}"
        )));
    }
    let dists = table_distances(table, s_obs, mask)?;
    let m = accepted_count(dists.len(), accept_quantile);
    let mut order: Vec<usize> = (0..dists.len()).collect();
    let by_distance = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
    if m < order.len() {
        order.select_nth_unstable_by(m - 1, by_distance);
        order.truncate(m);
    }
    let epsilon = order.iter().map(|&i| dists[i]).fold(0.0, f64::max);
    order.sort_unstable();
    Ok(AcceptedSample {
        params: order.iter().map(|&i| table.params[i]).collect(),
        distances: order.iter().map(|&i| dists[i]).collect(),
        indices: order,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::SummaryId;

    /// Table whose `mean_E` slot equals β and whose other slots are constants.
    fn toy_table(n: usize, seed: u64) -> ReferenceTable {
        let mut rng = seed::stream(seed);
        let prior = PriorSpec::default();
        let params: Vec<_> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        let summaries = params
            .iter()
            .map(|p| {
                let mut s = [1.0; CATALOG_SIZE];
                s[0] = p.beta;
                s
            })
            .collect();
        ReferenceTable::from_rows(params, summaries, seed, NoiseModel::None).unwrap()
    }

    fn obs(v: f64) -> SummaryVector {
        let mut s = vec![1.0; CATALOG_SIZE];
        s[0] = v;
        SummaryVector::new(s, SubsetMask::full()).unwrap()
    }

    fn mean_e() -> SubsetMask {
        SubsetMask::from_ids(&[SummaryId::MeanE]).unwrap()
    }

    #[test]
    fn distance_examples() {
        let m = SubsetMask::from_bits(0b11).unwrap();
        let a = SummaryVector::new(vec![1.0, 1.0], m).unwrap();
        let b = SummaryVector::new(vec![0.0, 0.0], m).unwrap();
        let unit = ScaleVector {
            values: vec![1.0, 1.0],
            mask: m,
        };
        assert_eq!(distance(&a, &a, &unit).unwrap(), 0.0);
        assert!((distance(&a, &b, &unit).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(distance(&a, &b, &unit).unwrap(), distance(&b, &a, &unit).unwrap());
        let m1 = mean_e();
        let two = ScaleVector {
            values: vec![2.0],
            mask: m1,
        };
        let c = SummaryVector::new(vec![2.0], m1).unwrap();
        let d = SummaryVector::new(vec![0.0], m1).unwrap();
        assert_eq!(distance(&c, &d, &two).unwrap(), 1.0);
        assert!(matches!(distance(&a, &c, &unit), Err(Error::Shape(_))));
    }

    #[test]
    fn full_quantile_returns_prior_multiset() {
        let table = toy_table(500, 1);
        let acc = rejection_abc(&table, &obs(0.5), mean_e(), 1.0).unwrap();
        assert_eq!(acc.count(), 500);
        assert_eq!(acc.params, table.params);
    }

    #[test]
    fn quantile_gives_exact_count_and_nesting() {
        let table = toy_table(10_000, 2);
        let small = rejection_abc(&table, &obs(0.3), mean_e(), 0.01).unwrap();
        assert_eq!(small.count(), 100);
        assert!(small.distances.iter().all(|d| *d <= small.epsilon));
        let big = rejection_abc(&table, &obs(0.3), mean_e(), 0.05).unwrap();
        assert!(small.indices.iter().all(|i| big.indices.contains(i)));
        assert!(rejection_abc(&table, &obs(0.3), mean_e(), 0.0).is_err());
        assert!(rejection_abc(&table, &obs(0.3), mean_e(), 1.5).is_err());
    }

    #[test]
    fn ties_keep_earliest_rows() {
        let params = vec![ParameterVector::from_array([0.5; 3]); 10];
        let summaries = vec![[2.0; CATALOG_SIZE]; 10];
        let table = ReferenceTable::from_rows(params, summaries, 0, NoiseModel::None).unwrap();
        let acc = rejection_abc(&table, &obs(2.0), mean_e(), 0.3).unwrap();
        assert_eq!(acc.indices, vec![0, 1, 2]);
    }

    #[test]
    fn one_dimensional_toy_posterior() {
        let table = toy_table(50_000, 3);
        let acc = rejection_abc(&table, &obs(0.5), mean_e(), 0.02).unwrap();
        let betas: Vec<f64> = acc.params.iter().map(|p| p.beta).collect();
        let mean = betas.iter().sum::<f64>() / betas.len() as f64;
        let lo = betas.iter().cloned().fold(f64::MAX, f64::min);
        let hi = betas.iter().cloned().fold(f64::MIN, f64::max);
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        assert!((0.015..=0.025).contains(&(hi - lo)), "width {}", hi - lo);
    }

    #[test]
    fn reference_simulation_is_deterministic() {
        let scen = Scenario::baseline(NoiseModel::None);
        let a = simulate_reference(&PriorSpec::default(), 100, &scen, 9).unwrap();
        let b = simulate_reference(&PriorSpec::default(), 100, &scen, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(simulate_reference(&PriorSpec::default(), 0, &scen, 9).is_err());
    }

    #[test]
    fn degenerate_prior_gives_constant_summaries() {
        let prior = PriorSpec::new([0.4, 0.2, 0.05], [0.4 + 1e-12, 0.2 + 1e-12, 0.05 + 1e-12]).unwrap();
        let table = simulate_reference(&prior, 50, &Scenario::baseline(NoiseModel::None), 4).unwrap();
        for row in &table.summaries {
            for (x, y) in row.iter().zip(&table.summaries[0]) {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
