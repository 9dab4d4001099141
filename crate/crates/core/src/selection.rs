//! Two-stage summary-statistic subset selection: minimum ABC-posterior
//! entropy, then minimum RMSE on pseudo-observed rows of the table.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::abc::{rejection_abc, table_distances, ReferenceTable};
use crate::entropy::knn_entropy_params;
use crate::error::{Error, Result};
use crate::ode::ParameterVector;
use crate::summaries::{SubsetMask, SummaryId, SummaryVector, CATALOG_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    Exhaustive,
    GreedyForward,
}

/// Which RMSE formula stage 2 uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RmseForm {
    /// `sqrt(mean ‖θ_i − θ‖²)`
    #[default]
    Standard,
    /// `sqrt(mean ‖θ_i − θ‖)`, averaging unsquared norms.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub strategy: SearchStrategy,
    pub max_size: usize,
    pub accept_quantile: f64,
    pub k: usize,
    pub n_pseudo: usize,
    pub rmse_form: RmseForm,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            strategy: SearchStrategy::Exhaustive,
            max_size: 3,
            accept_quantile: 0.01,
            k: 4,
            n_pseudo: 20,
            rmse_form: RmseForm::Standard,
        }
    }
}

pub(crate) mod extended_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub rank: usize,
    pub mask: SubsetMask,
    /// `null` in JSON when the mask accepted too few rows (scored +∞).
    #[serde(with = "extended_f64")]
    pub entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub stage1: Vec<SubsetScore>,
    pub pseudo_indices: Vec<usize>,
    pub stage2: Vec<SubsetScore>,
    pub chosen: SubsetMask,
}

impl SelectionReport {
    pub fn stage1_rank_of(&self, mask: SubsetMask) -> Option<usize> {
        self.stage1.iter().find(|s| s.mask == mask).map(|s| s.rank)
    }
}

/// All non-empty masks with at most `max_size` statistics, in tie-break order.
pub fn exhaustive_candidates(max_size: usize) -> Result<Vec<SubsetMask>> {
    check_max_size(max_size)?;
    let mut masks: Vec<SubsetMask> = (1..=255u8)
        .map(|b| SubsetMask::from_bits(b).expect("non-zero"))
        .filter(|m| m.len() <= max_size)
        .collect();
    masks.sort_by(|a, b| a.catalog_cmp(*b));
    Ok(masks)
}

fn check_max_size(max_size: usize) -> Result<()> {
    if (1..=CATALOG_SIZE).contains(&max_size) {
        Ok(())
    } else {
        Err(Error::param(format!("max_size must lie in [1, 8], got {max_size}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPath {
    /// Every mask scored, in evaluation order.
    pub evaluated: Vec<(SubsetMask, f64)>,
    /// Nested masks chosen at each step.
    pub path: Vec<SubsetMask>,
}

/// Forward selection: at each step add the statistic giving the lowest score.
pub fn greedy_forward<F>(max_size: usize, mut score: F) -> Result<GreedyPath>
where
    F: FnMut(SubsetMask) -> Result<f64>,
{
    check_max_size(max_size)?;
    let mut evaluated = Vec::new();
    let mut path: Vec<SubsetMask> = Vec::with_capacity(max_size);
    let mut current: Option<SubsetMask> = None;
    for _ in 0..max_size {
        let mut best: Option<(SubsetMask, f64)> = None;
        for id in SummaryId::ALL {
            if current.is_some_and(|c| c.contains(id)) {
                continue;
            }
            let mask = match current {
                Some(c) => c.with(id),
                None => SubsetMask::from_ids(&[id])?,
            };
            let s = score(mask)?;
            evaluated.push((mask, s));
            // strict improvement keeps the earlier catalog entry on ties
            if best.is_none_or(|(_, b)| s.total_cmp(&b).is_lt()) {
                best = Some((mask, s));
            }
        }
        let (mask, _) = best.expect("at least one statistic left");
        path.push(mask);
        current = Some(mask);
    }
    Ok(GreedyPath { evaluated, path })
}

pub fn rmse(accepted: &[ParameterVector], theta_true: &ParameterVector, form: RmseForm) -> Result<f64> {
    if accepted.is_empty() {
        return Err(Error::InsufficientData("rmse of an empty sample".into()));
    }
    let t = theta_true.to_array();
    let total: f64 = accepted
        .iter()
        .map(|p| {
            let sq: f64 = p.to_array().iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
            match form {
                RmseForm::Standard => sq,
                RmseForm::Literal => sq.sqrt(),
            }
        })
        .sum();
    Ok((total / accepted.len() as f64).sqrt())
}

fn score_entropy(
    table: &ReferenceTable,
    s_obs: &SummaryVector,
    mask: SubsetMask,
    accept_quantile: f64,
    k: usize,
) -> Result<(f64, usize)> {
    let acc = rejection_abc(table, s_obs, mask, accept_quantile)?;
    if acc.count() <= k {
        return Ok((f64::INFINITY, acc.count()));
    }
    Ok((knn_entropy_params(&acc.params, k)?.value, acc.count()))
}

fn rank_by<F: Fn(&SubsetScore) -> f64>(scores: &mut [SubsetScore], key: F) {
    scores.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.mask.catalog_cmp(b.mask)));
    for (r, s) in scores.iter_mut().enumerate() {
        s.rank = r + 1;
    }
}

/// Scores each candidate by the entropy of its ABC posterior and ranks them
/// ascending; masks accepting no more than `k` rows score +∞.
pub fn entropy_stage(
    table: &ReferenceTable,
    s_obs_full: &SummaryVector,
    candidates: &[SubsetMask],
    accept_quantile: f64,
    k: usize,
) -> Result<Vec<SubsetScore>> {
    if candidates.is_empty() {
        return Err(Error::param("no candidate masks"));
    }
    let mut scores = candidates
        .par_iter()
        .map(|&mask| {
            let (entropy, accepted) = score_entropy(table, s_obs_full, mask, accept_quantile, k)?;
            Ok(SubsetScore {
                rank: 0,
                mask,
                entropy,
                rmse: None,
                accepted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_by(&mut scores, |s| s.entropy);
    Ok(scores)
}

/// Stage 1 under either search strategy.
pub fn stage1_search(
    table: &ReferenceTable,
    s_obs_full: &SummaryVector,
    config: &SelectionConfig,
) -> Result<Vec<SubsetScore>> {
    match config.strategy {
        SearchStrategy::Exhaustive => entropy_stage(
            table,
            s_obs_full,
            &exhaustive_candidates(config.max_size)?,
            config.accept_quantile,
            config.k,
        ),
        SearchStrategy::GreedyForward => {
            let greedy = greedy_forward(config.max_size, |m| {
                score_entropy(table, s_obs_full, m, config.accept_quantile, config.k).map(|s| s.0)
            })?;
            let masks: Vec<SubsetMask> = greedy.evaluated.iter().map(|(m, _)| *m).collect();
            entropy_stage(table, s_obs_full, &masks, config.accept_quantile, config.k)
        }
    }
}

/// Re-ranks the stage-1 masks by mean RMSE over the `n_pseudo` table rows
/// closest to the observation under the stage-1 winner.
pub fn rmse_stage(
    table: &ReferenceTable,
    s_obs_full: &SummaryVector,
    stage1: Vec<SubsetScore>,
    n_pseudo: usize,
    accept_quantile: f64,
    form: RmseForm,
) -> Result<SelectionReport> {
    let entropy_best = stage1
        .first()
        .ok_or_else(|| Error::param("stage 1 produced no masks"))?
        .mask;
    if n_pseudo == 0 || n_pseudo > table.len() {
        return Err(Error::param(format!(
            "n_pseudo must lie in [1, {}], got {n_pseudo}",
            table.len()
        )));
    }
    let dists = table_distances(table, s_obs_full, entropy_best)?;
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b)));
    order.truncate(n_pseudo);
    let pseudo_indices = order;

    let mut stage2 = stage1
        .par_iter()
        .map(|s1| {
            let mut total = 0.0;
            for &row in &pseudo_indices {
                let acc = rejection_abc(table, &table.row_summary(row), s1.mask, accept_quantile)?;
                total += rmse(&acc.params, &table.params[row], form)?;
            }
            Ok(SubsetScore {
                rmse: Some(total / n_pseudo as f64),
                ..s1.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_by(&mut stage2, |s| s.rmse.unwrap_or(f64::INFINITY));
    let chosen = stage2[0].mask;
    Ok(SelectionReport {
        stage1,
        pseudo_indices,
        stage2,
        chosen,
    })
}

pub fn select_subset(
    table: &ReferenceTable,
    s_obs_full: &SummaryVector,
    config: &SelectionConfig,
) -> Result<SelectionReport> {
    let stage1 = stage1_search(table, s_obs_full, config)?;
    rmse_stage(
        table,
        s_obs_full,
        stage1,
        config.n_pseudo,
        config.accept_quantile,
        config.rmse_form,
    )
}
