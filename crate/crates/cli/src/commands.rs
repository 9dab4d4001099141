//! The four pipeline stages. Each consumes persisted artifacts plus the
//! config and writes its own artifacts and manifest into the output
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use seirsl_core::abc::{rejection_abc, simulate_reference, ReferenceTable};
use seirsl_core::diagnostics::{summarize, PosteriorSummary};
use seirsl_core::io;

use seirsl_core::samplers::{make_target, run_chains, Chain, InitStrategy, SamplerKind, TargetDensity};
use seirsl_core::selection::{select_subset, SelectionReport};
use seirsl_core::synlik::{estimate_moments, SynLikTarget};
use seirsl_core::{
    compute_vector, integrate_seir, observe, Error, NoiseModel, ObservedSeries, SubsetMask, SummaryVector,
};

use crate::config::{InitKind, RunConfig};
use crate::manifest::{config_name, manifest_name, sha256_hex, ChainRecord, RunManifest};
use crate::CliError;

pub const OBSERVED_FILE: &str = "observed.csv";
pub const TABLE_FILE: &str = "reference_table.csv";
pub const TABLE_META_FILE: &str = "reference_table.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_TABLE_FILE: &str = "summary.txt";
pub const DIAGNOSIS_FILE: &str = "diagnosis.json";
pub const DIAGNOSIS_TABLE_FILE: &str = "diagnosis.txt";
pub const TRACE_FILE: &str = "trace.csv";

pub fn chain_file(chain: usize) -> String {
    format!("chain_{chain}.csv")
}

/// Effective config and output directory of one command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Context {
            config,
            out: out.into(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Persists the config, then the manifest that references it.
    fn finish(
        &self,
        command: &str,
        seeds: BTreeMap<String, u64>,
        timings: BTreeMap<String, f64>,
        chains: Vec<ChainRecord>,
        mut artifacts: Vec<String>,
    ) -> Result<RunManifest, CliError> {
        let config_file = config_name(command);
        let text = self.config.to_toml();
        io::write_text(&self.path(&config_file), &text)?;
        artifacts.push(config_file.clone());
        let manifest = RunManifest {
            command: command.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_file,
            config_hash: sha256_hex(text.as_bytes()),
            config: self.config.clone(),
            seeds,
            timings,
            chains,
            artifacts,
        };
        io::write_json(&self.path(&manifest_name(command)), &manifest)?;
        Ok(manifest)
    }
}

fn require_file(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} not found; {hint}", path.display())))
    }
}

fn secs(since: Instant) -> f64 {
    since.elapsed().as_secs_f64()
}

/// Integrates the scenario at the true parameters and writes the observed series.
pub fn simulate(ctx: &Context) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let config = &ctx.config;
    let seeds = config.stage_seeds();
    let traj = integrate_seir(&config.truth()?, &config.initial_state()?, &config.time_grid()?)?;
    let series = match config.scenario.noise_model {
        NoiseModel::None => ObservedSeries::exact(&traj),
        noise => observe(&traj, noise, seeds.observe())?,
    };
    io::write_observed(&ctx.path(OBSERVED_FILE), &series)?;
    ctx.finish(
        "simulate",
        BTreeMap::from([("observe".to_string(), seeds.observe())]),
        BTreeMap::from([("total".to_string(), secs(start))]),
        Vec::new(),
        vec![OBSERVED_FILE.to_string()],
    )
}

fn load_observed(ctx: &Context, path: Option<&Path>) -> Result<ObservedSeries, CliError> {
    let path = path.map_or_else(|| ctx.path(OBSERVED_FILE), Path::to_path_buf);
    require_file(&path, "run `seirsl simulate` first or pass --observed")?;
    Ok(io::read_observed(&path, ctx.config.scenario.noise_model)?)
}

fn full_summaries(series: &ObservedSeries) -> Result<SummaryVector, CliError> {
    Ok(compute_vector(series, SubsetMask::full())?)
}

fn build_table(ctx: &Context) -> Result<ReferenceTable, CliError> {
    let config = &ctx.config;
    Ok(simulate_reference(
        &config.prior_spec()?,
        config.reference.n_rows,
        &config.data_scenario()?,
        config.stage_seeds().reference(),
    )?)
}

/// Reuses the persisted reference table when it matches the config,
/// otherwise simulates it again (same seed, same rows).
fn load_or_build_table(ctx: &Context) -> Result<ReferenceTable, CliError> {
    let (csv, meta) = (ctx.path(TABLE_FILE), ctx.path(TABLE_META_FILE));
    if csv.is_file() && meta.is_file() {
        let table = io::read_reference_table(&csv, &meta)?;
        if table.seed == ctx.config.stage_seeds().reference()
            && table.len() == ctx.config.reference.n_rows
            && table.noise_model == ctx.config.scenario.noise_model
        {
            return Ok(table);
        }
    }
    build_table(ctx)
}

#[derive(Debug, Clone, Default)]
pub struct SelectOptions {
    pub observed: Option<PathBuf>,
}

/// Builds the reference table and runs both selection stages.
pub fn select(ctx: &Context, opts: &SelectOptions) -> Result<SelectionReport, CliError> {
    let start = Instant::now();
    let series = load_observed(ctx, opts.observed.as_deref())?;
    let s_obs = full_summaries(&series)?;

    let table = build_table(ctx)?;
    let table_time = secs(start);
    io::write_reference_table(&ctx.path(TABLE_FILE), &ctx.path(TABLE_META_FILE), &table)?;

    let select_start = Instant::now();
    let report = select_subset(&table, &s_obs, &ctx.config.selection)?;
    io::write_json(&ctx.path(SELECTION_FILE), &report)?;

    ctx.finish(
        "select",
        BTreeMap::from([("reference".to_string(), ctx.config.stage_seeds().reference())]),
        BTreeMap::from([
            ("reference_table".to_string(), table_time),
            ("selection".to_string(), secs(select_start)),
            ("total".to_string(), secs(start)),
        ]),
        Vec::new(),
        vec![
            TABLE_FILE.to_string(),
            TABLE_META_FILE.to_string(),
            SELECTION_FILE.to_string(),
        ],
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub observed: Option<PathBuf>,
    pub selection: Option<PathBuf>,
    /// Takes precedence over the config mask and the selection artifact.
    pub mask: Option<SubsetMask>,
    /// Overrides the configured sampler.
    pub sampler: Option<SamplerKind>,
    /// Write one row per likelihood evaluation to `trace.csv`.
    pub trace: bool,
}

/// Keeps the best quarter of the pool (at least `n_chains` points) by log
/// target under one shared seed. ABC acceptance alone can leave points far
/// in the tails of the much narrower synthetic-likelihood posterior, where
/// step-size adaptation collapses.
fn screen_pool<T: TargetDensity>(target: &T, pool: Vec<Vec<f64>>, n_chains: usize, seed: u64) -> Vec<Vec<f64>> {
    let keep = (pool.len() / 4).max(n_chains).min(pool.len());
    let mut scored: Vec<(f64, usize)> = pool
        .par_iter()
        .enumerate()
        .map(|(i, u)| (target.log_density(u, seed), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(keep);
    scored.sort_by_key(|&(_, i)| i);
    scored.into_iter().map(|(_, i)| pool[i].clone()).collect()
}

#[derive(Debug, Clone)]
pub struct InferOutput {
    pub mask: SubsetMask,
    pub chains: Vec<Chain>,
    pub summary: PosteriorSummary,
    pub manifest: RunManifest,
}

fn resolve_mask(ctx: &Context, opts: &InferOptions) -> Result<SubsetMask, CliError> {
    if let Some(mask) = opts.mask {
        return Ok(mask);
    }
    if let Some(names) = &ctx.config.synlik.mask {
        return Ok(SubsetMask::from_names(names)?);
    }
    let path = opts.selection.clone().unwrap_or_else(|| ctx.path(SELECTION_FILE));
    require_file(&path, "run `seirsl select` first or pass --mask")?;
    let report: SelectionReport = io::read_json(&path)?;
    Ok(report.chosen)
}

fn degenerate_hint(err: Error, noise: NoiseModel) -> CliError {
    match err {
        Error::DegenerateCovariance { .. } if noise == NoiseModel::None => CliError::Numerical(format!(
            "{err}: replicates are identical under synlik.noise_model = none; \
             use a stochastic noise model such as {{ kind = \"poisson\" }}"
        )),
        other => other.into(),
    }
}

/// Samples the synthetic-likelihood posterior and writes chains and summary.
pub fn infer(ctx: &Context, opts: &InferOptions) -> Result<InferOutput, CliError> {
    let start = Instant::now();
    let config = &ctx.config;
    let seeds = config.stage_seeds();
    let prior = config.prior_spec()?;
    let series = load_observed(ctx, opts.observed.as_deref())?;
    let s_obs = full_summaries(&series)?;
    let mask = resolve_mask(ctx, opts)?;

    let synlik = SynLikTarget::new(
        s_obs.restrict(mask)?,
        config.synlik_scenario()?,
        config.synlik.n_reps,
        seeds.synlik(),
        prior,
    )?;
    // Fail fast on a degenerate likelihood before any chain starts.
    estimate_moments(&config.truth()?, &synlik, seeds.synlik())
        .map_err(|e| degenerate_hint(e, config.synlik.noise_model))?;
    let mut target = make_target(&prior, synlik)?;
    target.h_rel = config.synlik.h_rel;
    if opts.trace {
        target = target.with_trace();
    }

    let init = match config.sampler.init {
        InitKind::Prior => InitStrategy::default(),
        InitKind::Abc => {
            let table = load_or_build_table(ctx)?;
            let accepted = rejection_abc(&table, &s_obs, mask, config.selection.accept_quantile)?;
            let pool: Vec<Vec<f64>> = accepted
                .params
                .iter()
                .map(|p| target.transform.unconstrain(&p.to_array()))
                .filter(|u| u.iter().all(|x| x.is_finite()))
                .collect();
            InitStrategy::Pool(screen_pool(&target, pool, config.sampler.n_chains, seeds.synlik()))
        }
    };

    let kind = opts.sampler.unwrap_or(config.sampler.kind);
    let configs: Vec<_> = (0..config.sampler.n_chains).map(|c| config.chain_config(c)).collect();
    let chains = run_chains(&target, &configs, kind, &init)?;

    let mut artifacts = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        io::write_chain(&ctx.path(&chain_file(c)), chain)?;
        artifacts.push(chain_file(c));
    }
    let summary = summarize(&chains, Some(&config.truth()?.to_array()))?;
    io::write_json(&ctx.path(SUMMARY_FILE), &summary)?;
    io::write_text(&ctx.path(SUMMARY_TABLE_FILE), &summary.to_table())?;
    artifacts.extend([SUMMARY_FILE.to_string(), SUMMARY_TABLE_FILE.to_string()]);
    if let Some(trace) = &target.trace {
        trace.write_csv(&ctx.path(TRACE_FILE))?;
        artifacts.push(TRACE_FILE.to_string());
    }

    let mut stage_seeds = BTreeMap::from([("synlik".to_string(), seeds.synlik())]);
    if config.sampler.init == InitKind::Abc {
        stage_seeds.insert("reference".to_string(), seeds.reference());
    }
    for c in 0..chains.len() {
        stage_seeds.insert(format!("chain_{c}"), seeds.chain(c));
    }
    let records = chains
        .iter()
        .enumerate()
        .map(|(c, ch)| ChainRecord::from_chain(c, ch))
        .collect();
    let manifest = ctx.finish(
        "infer",
        stage_seeds,
        BTreeMap::from([("total".to_string(), secs(start))]),
        records,
        artifacts,
    )?;
    Ok(InferOutput {
        mask,
        chains,
        summary,
        manifest,
    })
}

#[derive(Debug, Clone, Default)]
pub struct DiagnoseOptions {
    /// Chain CSVs; defaults to `chain_0.csv, chain_1.csv, …` in the output directory.
    pub chains: Vec<PathBuf>,
    pub burn_in: Option<usize>,
}

fn default_chain_files(out: &Path) -> Vec<PathBuf> {
    (0..)
        .map(|c| out.join(chain_file(c)))
        .take_while(|p| p.is_file())
        .collect()
}

/// Recomputes the posterior summary from persisted chain CSVs alone.
pub fn diagnose(ctx: &Context, opts: &DiagnoseOptions) -> Result<PosteriorSummary, CliError> {
    let start = Instant::now();
    let config = &ctx.config;
    let files = if opts.chains.is_empty() {
        default_chain_files(&ctx.out)
    } else {
        opts.chains.clone()
    };
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no chain files in {}; run `seirsl infer` first or pass --chains",
            ctx.out.display()
        )));
    }
    let burn_in = opts.burn_in.unwrap_or(config.sampler.burn_in);
    let chains = files
        .iter()
        .enumerate()
        .map(|(c, path)| {
            require_file(path, "pass existing chain CSVs")?;
            Ok(io::read_chain(
                path,
                burn_in,
                config.sampler.kind,
                config.stage_seeds().chain(c),
            )?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = summarize(&chains, Some(&config.truth()?.to_array()))?;
    io::write_json(&ctx.path(DIAGNOSIS_FILE), &summary)?;
    io::write_text(&ctx.path(DIAGNOSIS_TABLE_FILE), &summary.to_table())?;
    ctx.finish(
        "diagnose",
        BTreeMap::new(),
        BTreeMap::from([("total".to_string(), secs(start))]),
        Vec::new(),
        vec![DIAGNOSIS_FILE.to_string(), DIAGNOSIS_TABLE_FILE.to_string()],
    )?;
    Ok(summary)
}
