//! Candidate summary statistics and their standardization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::observe::ObservedSeries;

pub const CATALOG_SIZE: usize = 8;

/// MAD consistency factor for normally distributed data.
pub const MAD_TO_SD: f64 = 1.4826;

const E: usize = 1;
const I: usize = 2;
const R: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SummaryId {
    MeanE,
    MeanI,
    PeakI,
    PeakE,
    FinalSizeR,
    TotalInfections,
    MeanDailyInfections,
    VarDailyInfections,
}

impl SummaryId {
    /// Fixed catalog order.
    pub const ALL: [SummaryId; CATALOG_SIZE] = [
        SummaryId::MeanE,
        SummaryId::MeanI,
        SummaryId::PeakI,
        SummaryId::PeakE,
        SummaryId::FinalSizeR,
        SummaryId::TotalInfections,
        SummaryId::MeanDailyInfections,
        SummaryId::VarDailyInfections,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SummaryId::MeanE => "mean_E",
            SummaryId::MeanI => "mean_I",
            SummaryId::PeakI => "peak_I",
            SummaryId::PeakE => "peak_E",
            SummaryId::FinalSizeR => "final_size_R",
            SummaryId::TotalInfections => "total_infections",
            SummaryId::MeanDailyInfections => "mean_daily_infections",
            SummaryId::VarDailyInfections => "var_daily_infections",
        }
    }
}

impl fmt::Display for SummaryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SummaryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SummaryId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::param(format!("unknown summary statistic `{s}`")))
    }
}

impl Serialize for SummaryId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SummaryId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-empty selection over the catalog; bit `i` is `SummaryId::ALL[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubsetMask(u8);

impl SubsetMask {
    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 {
            Err(Error::param("subset mask must select at least one statistic"))
        } else {
            Ok(SubsetMask(bits))
        }
    }

    pub fn full() -> Self {
        SubsetMask(0xFF)
    }

    pub fn from_ids(ids: &[SummaryId]) -> Result<Self> {
        Self::from_bits(ids.iter().fold(0u8, |b, id| b | (1 << id.index())))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let ids = names
            .iter()
            .map(|n| n.as_ref().parse())
            .collect::<Result<Vec<SummaryId>>>()?;
        Self::from_ids(&ids)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, id: SummaryId) -> bool {
        self.0 & (1 << id.index()) != 0
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn with(self, id: SummaryId) -> Self {
        SubsetMask(self.0 | (1 << id.index()))
    }

    /// Members in catalog order.
    pub fn ids(self) -> impl Iterator<Item = SummaryId> {
        SummaryId::ALL.into_iter().filter(move |id| self.contains(*id))
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        self.ids().map(SummaryId::index)
    }

    pub fn names(self) -> Vec<&'static str> {
        self.ids().map(SummaryId::name).collect()
    }

    /// Tie-break order: fewer statistics first, then lexicographic over
    /// catalog positions.
    pub fn catalog_cmp(self, other: SubsetMask) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.indices().cmp(other.indices()))
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names().join(", "))
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        SubsetMask::from_names(&names).map_err(serde::de::Error::custom)
    }
}

/// Summary values ordered as the members of `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub mask: SubsetMask,
}

impl SummaryVector {
    pub fn new(values: Vec<f64>, mask: SubsetMask) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} values for a mask of {} statistics",
                values.len(),
                mask.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("summary values must be finite"));
        }
        Ok(SummaryVector { values, mask })
    }

    pub fn get(&self, id: SummaryId) -> Option<f64> {
        self.mask.ids().position(|m| m == id).map(|p| self.values[p])
    }

    /// Sub-vector at the positions of `mask`, which must be contained in ours.
    pub fn restrict(&self, mask: SubsetMask) -> Result<SummaryVector> {
        if !mask.is_subset_of(self.mask) {
            return Err(Error::Shape(format!("{mask} is not contained in {}", self.mask)));
        }
        let values = self
            .mask
            .ids()
            .zip(&self.values)
            .filter(|(id, _)| mask.contains(*id))
            .map(|(_, v)| *v)
            .collect();
        Ok(SummaryVector { values, mask })
    }
}

/// Positive per-statistic scales, ordered as the members of `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    pub values: Vec<f64>,
    pub mask: SubsetMask,
}

impl ScaleVector {
    pub fn restrict(&self, mask: SubsetMask) -> Result<ScaleVector> {
        let sv = SummaryVector {
            values: self.values.clone(),
            mask: self.mask,
        }
        .restrict(mask)?;
        Ok(ScaleVector {
            values: sv.values,
            mask,
        })
    }
}

fn daily_increments(series: &ObservedSeries) -> Vec<f64> {
    series
        .observed
        .windows(2)
        .map(|w| {
            let before = w[0][E] + w[0][I] + w[0][R];
            let after = w[1][E] + w[1][I] + w[1][R];
            (after - before).max(0.0)
        })
        .collect()
}

pub fn compute_summary(series: &ObservedSeries, id: SummaryId) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let n = series.len() as f64;
    let needs_increments = matches!(
        id,
        SummaryId::TotalInfections | SummaryId::MeanDailyInfections | SummaryId::VarDailyInfections
    );
    if needs_increments && series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{id} needs at least 2 time points, got {}",
            series.len()
        )));
    }
    let value = match id {
        SummaryId::MeanE => series.compartment(E).sum::<f64>() / n,
        SummaryId::MeanI => series.compartment(I).sum::<f64>() / n,
        SummaryId::PeakE => series.compartment(E).fold(f64::MIN, f64::max),
        SummaryId::PeakI => series.compartment(I).fold(f64::MIN, f64::max),
        SummaryId::FinalSizeR => series.observed[series.len() - 1][R],
        SummaryId::TotalInfections => daily_increments(series).iter().sum(),
        SummaryId::MeanDailyInfections => {
            let d = daily_increments(series);
            d.iter().sum::<f64>() / d.len() as f64
        }
        SummaryId::VarDailyInfections => {
            let d = daily_increments(series);
            if d.len() < 2 {
                return Err(Error::InsufficientData(
                    "var_daily_infections needs at least 2 increments".into(),
                ));
            }
            sample_variance(&d)
        }
    };
    Ok(value)
}

pub fn compute_vector(series: &ObservedSeries, mask: SubsetMask) -> Result<SummaryVector> {
    let values = mask
        .ids()
        .map(|id| compute_summary(series, id))
        .collect::<Result<Vec<_>>>()?;
    SummaryVector::new(values, mask)
}

/// Mean computed around the first element, so constant input is returned
/// exactly.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else {
        return f64::NAN;
    };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub(crate) fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    xs.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// MAD·1.4826, falling back to the sample sd and then to 1 when zero.
pub(crate) fn robust_scale(column: &[f64]) -> f64 {
    let mut work = column.to_vec();
    let med = median_in_place(&mut work);
    for (w, x) in work.iter_mut().zip(column) {
        *w = (x - med).abs();
    }
    let mad = median_in_place(&mut work) * MAD_TO_SD;
    if mad > 0.0 {
        return mad;
    }
    if column.len() > 1 {
        let sd = sample_variance(column).sqrt();
        if sd > 0.0 {
            return sd;
        }
    }
    1.0
}

pub fn estimate_scales(table: &[SummaryVector]) -> Result<ScaleVector> {
    let first = table
        .first()
        .ok_or_else(|| Error::param("cannot estimate scales from an empty table"))?;
    let mask = first.mask;
    if table.iter().any(|v| v.mask != mask) {
        return Err(Error::Shape("summary vectors have different masks".into()));
    }
    let values = (0..mask.len())
        .map(|j| {
            let column: Vec<f64> = table.iter().map(|v| v.values[j]).collect();
            robust_scale(&column)
        })
        .collect();
    Ok(ScaleVector { values, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observe::NoiseModel;
    use proptest::prelude::*;

    fn constant_series(c: f64, len: usize) -> ObservedSeries {
        ObservedSeries {
            times: (0..len).map(|t| t as f64).collect(),
            observed: vec![[c; 4]; len],
            noise_model: NoiseModel::None,
        }
    }

    fn mask(names: &[&str]) -> SubsetMask {
        SubsetMask::from_names(names).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for id in SummaryId::ALL {
            assert_eq!(id.name().parse::<SummaryId>().unwrap(), id);
        }
        assert!("mean_e".parse::<SummaryId>().is_err());
        assert!(SubsetMask::from_bits(0).is_err());
    }

    #[test]
    fn constant_series_statistics() {
        let s = constant_series(7.5, 10);
        assert_eq!(compute_summary(&s, SummaryId::MeanI).unwrap(), 7.5);
        assert_eq!(compute_summary(&s, SummaryId::VarDailyInfections).unwrap(), 0.0);
        assert_eq!(compute_summary(&s, SummaryId::TotalInfections).unwrap(), 0.0);
        let v = compute_vector(&s, mask(&["mean_I"])).unwrap();
        assert_eq!(v.values, vec![7.5]);
        assert_eq!(compute_vector(&s, SubsetMask::full()).unwrap().values.len(), 8);
    }

    #[test]
    fn increments_need_two_points() {
        let s = constant_series(1.0, 1);
        assert!(matches!(
            compute_summary(&s, SummaryId::MeanDailyInfections),
            Err(Error::InsufficientData(_))
        ));
        assert!(compute_summary(&s, SummaryId::MeanE).is_ok());
    }

    #[test]
    fn mad_scale_examples() {
        let vecs: Vec<SummaryVector> = (1..=5)
            .map(|x| SummaryVector::new(vec![x as f64, 3.0], mask(&["mean_E", "peak_I"])).unwrap())
            .collect();
        let scales = estimate_scales(&vecs).unwrap();
        assert!((scales.values[0] - 1.4826).abs() < 1e-15);
        assert_eq!(scales.values[1], 1.0);
        assert!(estimate_scales(&[]).is_err());
        // MAD of zero but non-zero spread falls back to the sd.
        let col = [0.0, 0.0, 0.0, 0.0, 10.0];
        assert!((robust_scale(&col) - sample_variance(&col).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_scale_near_one() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::seed::stream(99);
        let m = mask(&["mean_E"]);
        let vecs: Vec<SummaryVector> = (0..10_000)
            .map(|_| SummaryVector::new(vec![StandardNormal.sample(&mut rng)], m).unwrap())
            .collect();
        let s = estimate_scales(&vecs).unwrap().values[0];
        assert!((0.93..=1.07).contains(&s), "scale {s}");
    }

    proptest! {
        #[test]
        fn mask_restriction_is_subvector(bits in 1u8..=255, scale in 0.1f64..10.0) {
            let series = ObservedSeries {
                times: (0..12).map(|t| t as f64).collect(),
                observed: (0..12)
                    .map(|t| {
                        let t = t as f64;
                        [900.0 - 5.0 * t, 3.0 * t, 10.0 + (t * 0.7).sin() * 4.0, 2.0 * t]
                    })
                    .collect(),
                noise_model: NoiseModel::None,
            };
            let m = SubsetMask::from_bits(bits).unwrap();
            let full = compute_vector(&series, SubsetMask::full()).unwrap();
            let part = compute_vector(&series, m).unwrap();
            prop_assert_eq!(&full.restrict(m).unwrap(), &part);

            // Scale equivariance for the level statistics.
            let scaled = ObservedSeries {
                observed: series.observed.iter().map(|s| s.map(|x| x * scale)).collect(),
                ..series.clone()
            };
            for id in [SummaryId::MeanE, SummaryId::MeanI, SummaryId::PeakE, SummaryId::PeakI, SummaryId::FinalSizeR] {
                let a = compute_summary(&series, id).unwrap();
                let b = compute_summary(&scaled, id).unwrap();
                prop_assert!((b - scale * a).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
