//! CSV and JSON artifacts: observed series, reference tables and chains.
//!
//! Floats are written in Rust's shortest round-trip form, so reading an
//! artifact back reproduces the in-memory values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abc::ReferenceTable;
use crate::error::{Error, Result};
use crate::observe::{NoiseModel, ObservedSeries};
use crate::ode::ParameterVector;
use crate::samplers::{Chain, PhaseTimings, SamplerKind};
use crate::summaries::{SummaryId, CATALOG_SIZE};

pub const OBSERVED_HEADER: &str = "day,S,E,I,R";
pub const CHAIN_HEADER: &str = "iter,beta,sigma,gamma,log_target,accepted";

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Numeric CSV rows after a header that must match `header` exactly.
/// Each row comes with its 1-based line number.
fn parse_csv(path: &Path, text: &str, header: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        None => return Err(parse_err(1, "empty file, expected header".into())),
        Some((_, h)) if h.trim() != header => {
            return Err(parse_err(1, format!("expected header `{header}`, found `{h}`")))
        }
        Some(_) => {}
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (line, content) in lines {
        if content.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let values = fields
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(line, format!("not a number: `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

pub fn observed_to_csv(series: &ObservedSeries) -> String {
    let mut out = format!("{OBSERVED_HEADER}\n");
    for (t, x) in series.times.iter().zip(&series.observed) {
        let _ = writeln!(out, "{t},{},{},{},{}", x[0], x[1], x[2], x[3]);
    }
    out
}

pub fn write_observed(path: &Path, series: &ObservedSeries) -> Result<()> {
    write_text(path, &observed_to_csv(series))
}

/// Reads an observed series; the noise model is not stored in the CSV.
pub fn read_observed(path: &Path, noise_model: NoiseModel) -> Result<ObservedSeries> {
    let rows = parse_csv(path, &read_text(path)?, OBSERVED_HEADER)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(ObservedSeries {
        times: rows.iter().map(|(_, r)| r[0]).collect(),
        observed: rows.iter().map(|(_, r)| [r[1], r[2], r[3], r[4]]).collect(),
        noise_model,
    })
}

fn table_header() -> String {
    let mut h = ParameterVector::NAMES.join(",");
    for id in SummaryId::ALL {
        h.push(',');
        h.push_str(id.name());
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub rows: usize,
    pub seed: u64,
    pub noise_model: NoiseModel,
    pub scales: Vec<f64>,
}

/// Writes the table CSV and a JSON sidecar with seed, noise model and scales.
pub fn write_reference_table(csv: &Path, sidecar: &Path, table: &ReferenceTable) -> Result<()> {
    let mut out = table_header();
    out.push('\n');
    for (p, s) in table.params.iter().zip(&table.summaries) {
        let _ = write!(out, "{},{},{}", p.beta, p.sigma, p.gamma);
        for v in s {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_text(csv, &out)?;
    write_json(
        sidecar,
        &TableMetadata {
            rows: table.len(),
            seed: table.seed,
            noise_model: table.noise_model,
            scales: table.scales.values.clone(),
        },
    )
}

pub fn read_reference_table(csv: &Path, sidecar: &Path) -> Result<ReferenceTable> {
    let meta: TableMetadata = read_json(sidecar)?;
    let rows = parse_csv(csv, &read_text(csv)?, &table_header())?;
    if rows.len() != meta.rows {
        return Err(Error::Shape(format!(
            "{} lists {} rows, {} has {}",
            sidecar.display(),
            meta.rows,
            csv.display(),
            rows.len()
        )));
    }
    let mut params = Vec::with_capacity(rows.len());
    let mut summaries = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        params.push(ParameterVector::from_slice(&r[..3]).map_err(|e| Error::Parse {
            path: csv.to_path_buf(),
            line,
            message: e.to_string(),
        })?);
        let mut s = [0.0; CATALOG_SIZE];
        s.copy_from_slice(&r[3..]);
        summaries.push(s);
    }
    ReferenceTable::from_rows(params, summaries, meta.seed, meta.noise_model)
}

pub fn chain_to_csv(chain: &Chain) -> String {
    let mut out = format!("{CHAIN_HEADER}\n");
    for (i, ((d, lp), acc)) in chain
        .draws
        .iter()
        .zip(&chain.log_target)
        .zip(&chain.accepted)
        .enumerate()
    {
        let _ = writeln!(out, "{i},{},{},{},{lp},{}", d[0], d[1], d[2], u8::from(*acc));
    }
    out
}

pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    if chain.dim() != 3 {
        return Err(Error::Shape(format!(
            "chain CSV holds 3 parameters, chain has {}",
            chain.dim()
        )));
    }
    write_text(path, &chain_to_csv(chain))
}

/// Reads a chain CSV. Sampler-internal fields (unconstrained draws,
/// acceptance probabilities, timings) are not stored and come back empty.
pub fn read_chain(path: &Path, burn_in: usize, sampler: SamplerKind, seed: u64) -> Result<Chain> {
    let rows = parse_csv(path, &read_text(path)?, CHAIN_HEADER)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if rows.is_empty() {
        return Err(parse_err(2, "no draws".into()));
    }
    let mut chain = Chain {
        sampler,
        param_names: ParameterVector::NAMES.iter().map(|s| s.to_string()).collect(),
        draws: Vec::with_capacity(rows.len()),
        unconstrained: Vec::new(),
        log_target: Vec::with_capacity(rows.len()),
        accepted: Vec::with_capacity(rows.len()),
        accept_stat: Vec::new(),
        burn_in,
        seed,
        divergences: 0,
        step_size: None,
        timings: PhaseTimings::default(),
    };
    for (expected, (line, r)) in rows.into_iter().enumerate() {
        if r[0] != expected as f64 {
            return Err(parse_err(line, format!("expected iter {expected}, found {}", r[0])));
        }
        let accepted = match r[5] {
            0.0 => false,
            1.0 => true,
            other => return Err(parse_err(line, format!("accepted must be 0 or 1, found {other}"))),
        };
        chain.draws.push(r[1..4].to_vec());
        chain.log_target.push(r[4]);
        chain.accepted.push(accepted);
    }
    if burn_in >= chain.len() {
        return Err(Error::param(format!(
            "burn-in {burn_in} leaves no draws in {} ({} rows)",
            path.display(),
            chain.len()
        )));
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::{simulate_reference, PriorSpec, Scenario};
    use crate::ode::{integrate_seir, InitialState, TimeGrid};

    fn baseline_series() -> ObservedSeries {
        let theta = ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap();
        let init = InitialState {
            s: 999.0,
            e: 0.0,
            i: 1.0,
            r: 0.0,
        };
        ObservedSeries::exact(&integrate_seir(&theta, &init, &TimeGrid::default()).unwrap())
    }

    #[test]
    fn observed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let series = baseline_series();
        write_observed(&path, &series).unwrap();
        let text = read_text(&path).unwrap();
        assert_eq!(text.lines().count(), 102);
        assert_eq!(text.lines().nth(1).unwrap(), "0,999,0,1,0");
        assert_eq!(read_observed(&path, NoiseModel::None).unwrap(), series);
    }

    #[test]
    fn empty_file_names_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        write_text(&path, "").unwrap();
        match read_chain(&path, 0, SamplerKind::Hmc, 0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        write_text(
            &path,
            &format!("{CHAIN_HEADER}\n0,0.4,0.2,0.06,-1.5,1\n1,0.4,x,0.06,-1.5,0\n"),
        )
        .unwrap();
        match read_chain(&path, 0, SamplerKind::Hmc, 0) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains('x'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        let chain = Chain {
            sampler: SamplerKind::Rwmh,
            param_names: ParameterVector::NAMES.iter().map(|s| s.to_string()).collect(),
            draws: vec![vec![0.1, 0.2, 0.3], vec![0.1 + 1e-17, 1.0 / 3.0, 0.7]],
            unconstrained: Vec::new(),
            log_target: vec![-1.25, f64::NEG_INFINITY],
            accepted: vec![true, false],
            accept_stat: Vec::new(),
            burn_in: 1,
            seed: 5,
            divergences: 0,
            step_size: None,
            timings: PhaseTimings::default(),
        };
        write_chain(&path, &chain).unwrap();
        assert_eq!(read_chain(&path, 1, SamplerKind::Rwmh, 5).unwrap(), chain);
    }

    #[test]
    fn reference_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = Scenario::baseline(NoiseModel::None);
        let table = simulate_reference(&PriorSpec::default(), 30, &scenario, 17).unwrap();
        let (csv, meta) = (dir.path().join("t.csv"), dir.path().join("t.json"));
        write_reference_table(&csv, &meta, &table).unwrap();
        assert_eq!(read_reference_table(&csv, &meta).unwrap(), table);
    }
}
