//! Run configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seirsl_core::abc::{PriorSpec, Scenario};
use seirsl_core::samplers::{ChainConfig, HmcConfig, RwmhConfig, SamplerKind};
use seirsl_core::seed;
use seirsl_core::{InitialState, NoiseModel, ParameterVector, SelectionConfig, SubsetMask, TimeGrid};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20_240_601;

/// True parameters, initial state, horizon and the noise applied to the
/// observed series and to reference-table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub s0: f64,
    pub e0: f64,
    pub i0: f64,
    pub r0: f64,
    pub t_end: f64,
    pub dt_out: f64,
    pub substeps: usize,
    pub noise_model: NoiseModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            beta: 0.4,
            sigma: 0.2,
            gamma: 1.0 / 17.0,
            s0: 999.0,
            e0: 0.0,
            i0: 1.0,
            r0: 0.0,
            t_end: 100.0,
            dt_out: 1.0,
            substeps: 10,
            noise_model: NoiseModel::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lower: [0.0; 3],
            upper: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub n_rows: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { n_rows: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynlikConfig {
    pub n_reps: usize,
    pub h_rel: f64,
    /// Noise replicated at each θ; must be stochastic.
    pub noise_model: NoiseModel,
    /// Statistic names; overrides the selection artifact when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<String>>,
}

impl Default for SynlikConfig {
    fn default() -> Self {
        SynlikConfig {
            n_reps: seirsl_core::synlik::DEFAULT_N_REPS,
            h_rel: seirsl_core::synlik::DEFAULT_H_REL,
            noise_model: NoiseModel::Poisson,
            mask: None,
        }
    }
}

/// Where chains start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Parameters accepted by rejection ABC under the inference mask.
    #[default]
    Abc,
    /// Draws from the prior.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub init: InitKind,
    pub rwmh: RwmhConfig,
    pub hmc: HmcConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Hmc,
            n_chains: 4,
            n_iter: 2000,
            burn_in: 1000,
            init: InitKind::Abc,
            // Tuned by hand for the baseline epidemic: acceptance near 0.35.
            rwmh: RwmhConfig { scale: 0.02 },
            hmc: HmcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub prior: PriorConfig,
    pub reference: ReferenceConfig,
    pub selection: SelectionConfig,
    pub synlik: SynlikConfig,
    pub sampler: SamplerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            output_dir: None,
            scenario: ScenarioConfig::default(),
            prior: PriorConfig::default(),
            reference: ReferenceConfig::default(),
            selection: SelectionConfig::default(),
            synlik: SynlikConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| seirsl_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.truth()?;
        self.initial_state()?;
        let prior = self.prior_spec()?;
        if !prior.contains(&self.truth()?) {
            return Err(CliError::Usage("true parameters lie outside the prior box".into()));
        }
        self.time_grid()?;
        self.scenario.noise_model.validate()?;
        self.synlik.noise_model.validate()?;
        if self.reference.n_rows == 0 {
            return Err(CliError::Usage("reference.n_rows must be >= 1".into()));
        }
        let q = self.selection.accept_quantile;
        if !(q > 0.0 && q <= 1.0) {
            return Err(CliError::Usage(format!(
                "selection.accept_quantile must lie in (0, 1], got {q}"
            )));
        }
        if self.selection.k == 0 || self.selection.n_pseudo == 0 {
            return Err(CliError::Usage(
                "selection.k and selection.n_pseudo must be >= 1".into(),
            ));
        }
        if !(1..=8).contains(&self.selection.max_size) {
            return Err(CliError::Usage("selection.max_size must lie in 1..=8".into()));
        }
        if !self.synlik.h_rel.is_finite() || self.synlik.h_rel <= 0.0 {
            return Err(CliError::Usage("synlik.h_rel must be > 0".into()));
        }
        if let Some(names) = &self.synlik.mask {
            SubsetMask::from_names(names)?;
        }
        if self.sampler.n_chains == 0 {
            return Err(CliError::Usage("sampler.n_chains must be >= 1".into()));
        }
        self.chain_config(0).validate()?;
        Ok(())
    }

    pub fn truth(&self) -> Result<ParameterVector, CliError> {
        let s = &self.scenario;
        Ok(ParameterVector::new(s.beta, s.sigma, s.gamma)?)
    }

    pub fn initial_state(&self) -> Result<InitialState, CliError> {
        let s = &self.scenario;
        Ok(InitialState::new(s.s0, s.e0, s.i0, s.r0)?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let s = &self.scenario;
        let grid = TimeGrid {
            t_end: s.t_end,
            dt_out: s.dt_out,
            substeps: s.substeps,
        };
        grid.intervals()?;
        Ok(grid)
    }

    pub fn prior_spec(&self) -> Result<PriorSpec, CliError> {
        Ok(PriorSpec::new(self.prior.lower, self.prior.upper)?)
    }

    /// Scenario used for the observed series and the reference table.
    pub fn data_scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario {
            init: self.initial_state()?,
            grid: self.time_grid()?,
            noise_model: self.scenario.noise_model,
        })
    }

    /// Scenario replicated inside the synthetic likelihood.
    pub fn synlik_scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario {
            noise_model: self.synlik.noise_model,
            ..self.data_scenario()?
        })
    }

    pub fn chain_config(&self, chain: usize) -> ChainConfig {
        ChainConfig {
            n_iter: self.sampler.n_iter,
            burn_in: self.sampler.burn_in,
            seed: self.stage_seeds().chain(chain),
            rwmh: self.sampler.rwmh,
            hmc: self.sampler.hmc,
        }
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds { master: self.seed }
    }
}

/// Stage seeds derived from the master seed as `derive_seed(master, tag, index)`.
#[derive(Debug, Clone, Copy)]
pub struct StageSeeds {
    pub master: u64,
}

impl StageSeeds {
    pub fn observe(&self) -> u64 {
        seed::derive_seed(self.master, seed::TAG_OBSERVE, 0)
    }

    pub fn reference(&self) -> u64 {
        seed::derive_seed(self.master, seed::TAG_REFERENCE, 0)
    }

    pub fn synlik(&self) -> u64 {
        seed::derive_seed(self.master, seed::TAG_SYNLIK, 0)
    }

    pub fn chain(&self, chain: usize) -> u64 {
        seed::derive_seed(self.master, seed::TAG_CHAINS, chain as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
        assert_eq!(RunConfig::from_toml("").unwrap(), config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[sampler]\nn_iters = 10").is_err());
        assert!(RunConfig::from_toml("[sampler.hmc]\nstep = 0.1").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::from_toml(
            "seed = 7\n[sampler]\nkind = \"rwmh\"\n[scenario]\nnoise_model = { kind = \"gaussian\", sd = 2.0 }\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.sampler.kind, SamplerKind::Rwmh);
        assert_eq!(c.sampler.n_iter, 2000);
        assert_eq!(c.scenario.noise_model, NoiseModel::Gaussian { sd: 2.0 });
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for text in [
            "[sampler]\nburn_in = 5000",
            "[selection]\naccept_quantile = 0.0",
            "[synlik]\nmask = [\"mean_X\"]",
            "[scenario]\nbeta = -1.0",
            "[prior]\nupper = [0.3, 1.0, 1.0]",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn stage_seeds_differ() {
        let s = RunConfig::default().stage_seeds();
        let all = [s.observe(), s.reference(), s.synlik(), s.chain(0), s.chain(1)];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
