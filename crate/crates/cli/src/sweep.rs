//! Flat per-run sweep rows and their per-α aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ddm_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub d1: u8,
    pub d2: u8,
    pub alpha: f64,
    pub seed: u64,
    pub fd: Option<f64>,
    pub spd: Option<f64>,
    pub frechet: f64,
    pub is_mean: f64,
    pub is_std: f64,
    pub unrecognizable: f64,
    pub pearson_r: Option<f64>,
    pub config_fingerprint: String,
}

impl SweepRow {
    pub fn from_report(r: &MetricsReport) -> Self {
        SweepRow {
            scenario: r.scenario.clone(),
            d1: r.d1,
            d2: r.d2,
            alpha: r.alpha,
            seed: r.seed,
            fd: r.fd,
            spd: r.spd,
            frechet: r.frechet,
            is_mean: r.is_mean,
            is_std: r.is_std,
            unrecognizable: r.unrecognizable,
            pearson_r: r.pearson_r,
            config_fingerprint: r.config_fingerprint.clone(),
        }
    }

    /// The scenario's fairness gap: FD or SPD.
    pub fn gap(&self) -> Option<f64> {
        self.fd.or(self.spd)
    }
}

pub fn encode_rows(rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse_rows(bytes: &[u8]) -> CliResult<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<SweepRow>().enumerate() {
        let row = rec.map_err(|e| CliError::Csv {
            row: i + 1,
            message: e.to_string(),
        })?;
        if row.gap().is_none() {
            return Err(CliError::Csv {
                row: i + 1,
                message: "neither fd nor spd is set".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Csv {
            row: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn read_rows(path: &Path) -> CliResult<Vec<SweepRow>> {
    parse_rows(&fs::read(path).map_err(|e| CliError::io(path, e))?)
}

/// Appends `row` to the CSV at `path`, creating it with a header if needed.
pub fn append_row(path: &Path, row: &SweepRow) -> CliResult<()> {
    let mut rows = if path.exists() {
        read_rows(path)?
    } else {
        Vec::new()
    };
    rows.push(row.clone());
    write_atomic(path, &encode_rows(&rows)?)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub scenario: String,
    pub d1: u8,
    pub d2: u8,
    pub alpha: f64,
    pub runs: usize,
    pub gap_median: f64,
    pub gap_min: f64,
    pub gap_max: f64,
    pub unrecognizable_median: f64,
    pub frechet_median: f64,
    pub is_median: f64,
}

/// One summary per `(scenario, d1, d2, alpha)`, ordered by first appearance
/// of the setting and then by α.
pub fn summarize(rows: &[SweepRow]) -> Vec<AlphaSummary> {
    let mut keys: Vec<(String, u8, u8)> = Vec::new();
    for r in rows {
        let k = (r.scenario.clone(), r.d1, r.d2);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (scenario, d1, d2) in keys {
        let mut alphas: Vec<f64> = rows
            .iter()
            .filter(|r| r.scenario == scenario && r.d1 == d1 && r.d2 == d2)
            .map(|r| r.alpha)
            .collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        for alpha in alphas {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.d1 == d1 && r.d2 == d2 && r.alpha == alpha)
                .collect();
            let gaps: Vec<f64> = group.iter().filter_map(|r| r.gap()).collect();
            let pick =
                |f: fn(&SweepRow) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            out.push(AlphaSummary {
                scenario: scenario.clone(),
                d1,
                d2,
                alpha,
                runs: group.len(),
                gap_median: median(&gaps),
                gap_min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
                gap_max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                unrecognizable_median: pick(|r| r.unrecognizable),
                frechet_median: pick(|r| r.frechet),
                is_median: pick(|r| r.is_mean),
            });
        }
    }
    out
}

/// Markdown tables, one per setting, with α as rows.
pub fn markdown_tables(summaries: &[AlphaSummary]) -> String {
    let mut s = String::new();
    let mut current: Option<(String, u8, u8)> = None;
    for a in summaries {
        let key = (a.scenario.clone(), a.d1, a.d2);
        if current.as_ref() != Some(&key) {
            if current.is_some() {
                s.push('\n');
            }
            let _ = writeln!(s, "### {} (d1, d2) = ({}, {})\n", a.scenario, a.d1, a.d2);
            let _ = writeln!(
                s,
                "| alpha | runs | {} median | min | max | unrecognizable | frechet | IS |",
                a.scenario
            );
            s.push_str("|---|---|---|---|---|---|---|---|\n");
            current = Some(key);
        }
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            a.alpha,
            a.runs,
            a.gap_median,
            a.gap_min,
            a.gap_max,
            a.unrecognizable_median,
            a.frechet_median,
            a.is_median
        );
    }
    s
}
