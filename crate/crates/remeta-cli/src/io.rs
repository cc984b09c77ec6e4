//! Dataset parsing and result emission. All numbers are written in
//! shortest-round-trip decimal so a diagnose pass over stored traces
//! reproduces in-memory results exactly.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use remeta::data::{validate_dataset, RawCovariance, RawRecord};
use remeta::diagnostics::{ScalarTraceMatrix, SummaryRow};
use remeta::study::{CoverageReport, EmpiricalReport, RhatRow};
use remeta::{ChainSet, Dataset, Param};

use crate::options::input_error;

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_field(raw: &str, path: &Path, line: u64, col: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) => Ok(v),
        Err(_) => input_error(format!(
            "{}:{line}: column `{col}`: cannot parse `{raw}` as a number",
            path.display()
        )),
    }
}

/// Read a dataset CSV in either accepted layout:
/// `study,x1,x2,sd1,rho12,sd2` (bivariate, SD/correlation triples) or
/// `study,x1..xp,u11,u21,u22,...` (lower covariance triangle, row-major).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = match csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path) {
        Ok(r) => r,
        Err(e) => return input_error(format!("cannot open {}: {e}", path.display())),
    };
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(|s| s.to_string()).collect(),
        Err(e) => return input_error(format!("{}: bad header: {e}", path.display())),
    };
    if headers.len() < 2 {
        return input_error(format!(
            "{}: expected a study column plus data columns",
            path.display()
        ));
    }
    let body = &headers[1..];

    enum Layout {
        SdCorr,
        Lower { p: usize },
    }
    let layout = if body == ["x1", "x2", "sd1", "rho12", "sd2"] {
        Layout::SdCorr
    } else {
        let p = body.iter().take_while(|h| h.starts_with('x')).count();
        if p == 0 {
            return input_error(format!(
                "{}: unrecognized header; see README for the accepted layouts",
                path.display()
            ));
        }
        let mut expected: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
        for r in 1..=p {
            for c in 1..=r {
                expected.push(format!("u{r}{c}"));
            }
        }
        if body != expected {
            return input_error(format!(
                "{}: header mismatch: expected study,{}",
                path.display(),
                expected.join(",")
            ));
        }
        Layout::Lower { p }
    };

    let mut raw = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default();
                return input_error(format!("{}:{line}: {e}", path.display()));
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or_default();
        if record.len() != headers.len() {
            return input_error(format!(
                "{}:{line}: expected {} fields, got {}",
                path.display(),
                headers.len(),
                record.len()
            ));
        }
        let field = |idx: usize| -> Result<f64> {
            parse_field(&record[idx], path, line, &headers[idx])
        };
        let label = record[0].to_string();
        match layout {
            Layout::SdCorr => raw.push(RawRecord {
                label,
                x: vec![field(1)?, field(2)?],
                cov: RawCovariance::SdCorr {
                    sd1: field(3)?,
                    rho: field(4)?,
                    sd2: field(5)?,
                },
            }),
            Layout::Lower { p } => {
                let x: Result<Vec<f64>> = (1..=p).map(field).collect();
                let tri: Result<Vec<f64>> =
                    (p + 1..headers.len()).map(field).collect();
                raw.push(RawRecord {
                    label,
                    x: x?,
                    cov: RawCovariance::LowerTriangle(tri?),
                });
            }
        }
    }
    match validate_dataset(&raw) {
        Ok(d) => Ok(d),
        Err(e) => input_error(format!("{}: {e}", path.display())),
    }
}

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("create {}", path.display()))
}

/// One row per retained draw: chain, absolute iteration, mean components,
/// then the lower triangle of the covariance.
pub fn write_traces(path: &Path, set: &ChainSet) -> Result<()> {
    let p = set.p();
    let mut w = open_writer(path)?;
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(Param::all(p).iter().map(|prm| prm.name()));
    w.write_record(&header)?;
    let params = Param::all(p);
    for (k, chain) in set.chains.iter().enumerate() {
        for (j, draw) in chain.draws.iter().enumerate() {
            let iter = set.config.burn_in + (j + 1) * set.config.thin;
            let mut row = vec![format!("{}", k + 1), format!("{iter}")];
            row.extend(params.iter().map(|prm| fmt(prm.extract(draw))));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse one or more trace files back into per-parameter trace matrices.
/// Chains from different files are appended; every file must carry the same
/// parameter columns and rectangular chains.
pub fn read_traces(paths: &[PathBuf]) -> Result<(Vec<String>, Vec<ScalarTraceMatrix>)> {
    let mut param_names: Option<Vec<String>> = None;
    // per chain: rows of parameter values
    let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
    for path in paths {
        let mut reader = match csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
        {
            Ok(r) => r,
            Err(e) => return input_error(format!("cannot open {}: {e}", path.display())),
        };
        let headers: Vec<String> = match reader.headers() {
            Ok(h) => h.iter().map(|s| s.to_string()).collect(),
            Err(e) => return input_error(format!("{}: bad header: {e}", path.display())),
        };
        if headers.len() < 3 || headers[0] != "chain" || headers[1] != "iter" {
            return input_error(format!(
                "{}: expected header chain,iter,<parameters>",
                path.display()
            ));
        }
        let names: Vec<String> = headers[2..].to_vec();
        match &param_names {
            None => param_names = Some(names.clone()),
            Some(existing) if *existing != names => {
                return input_error(format!(
                    "{}: parameter columns {:?} do not match {:?}",
                    path.display(),
                    names,
                    existing
                ));
            }
            _ => {}
        }
        let mut file_chains: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for record in reader.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or_default();
                    return input_error(format!("{}:{line}: {e}", path.display()));
                }
            };
            let line = record.position().map(|p| p.line()).unwrap_or_default();
            if record.len() != headers.len() {
                return input_error(format!(
                    "{}:{line}: expected {} fields, got {}",
                    path.display(),
                    headers.len(),
                    record.len()
                ));
            }
            let chain_id = record[0].to_string();
            let values: Result<Vec<f64>> = (2..record.len())
                .map(|i| parse_field(&record[i], path, line, &headers[i]))
                .collect();
            let values = values?;
            match file_chains.iter_mut().find(|(id, _)| *id == chain_id) {
                Some((_, rows)) => rows.push(values),
                None => file_chains.push((chain_id, vec![values])),
            }
        }
        if file_chains.is_empty() {
            return input_error(format!("{}: no draws", path.display()));
        }
        chains.extend(file_chains.into_iter().map(|(_, rows)| rows));
    }
    let names = param_names.expect("at least one file");
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return input_error(format!(
            "trace files hold chains of different lengths ({:?})",
            chains.iter().map(|c| c.len()).collect::<Vec<_>>()
        ));
    }
    let mut traces = Vec::with_capacity(names.len());
    for j in 0..names.len() {
        let per_chain: Vec<Vec<f64>> = chains
            .iter()
            .map(|rows| rows.iter().map(|r| r[j]).collect())
            .collect();
        match ScalarTraceMatrix::new(per_chain) {
            Ok(t) => traces.push(t),
            Err(e) => return input_error(format!("traces for {}: {e}", names[j])),
        }
    }
    Ok((names, traces))
}

pub fn write_summary_csv(path: &Path, names: &[String], rows: &[SummaryRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["parameter", "mean", "median", "sd", "ci_low", "ci_high", "rhat"])?;
    for (name, r) in names.iter().zip(rows) {
        w.write_record([
            name.clone(),
            fmt(r.mean),
            fmt(r.median),
            fmt(r.sd),
            fmt(r.ci_low),
            fmt(r.ci_high),
            fmt(r.rhat),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(serde::Serialize)]
struct SummaryJsonRow<'a> {
    parameter: &'a str,
    mean: f64,
    median: f64,
    sd: f64,
    ci_low: f64,
    ci_high: f64,
    rhat: f64,
}

#[derive(serde::Serialize)]
struct SummaryJson<'a> {
    alpha: f64,
    beta_mu: f64,
    beta_psi: f64,
    parameters: Vec<SummaryJsonRow<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rates: Option<&'a [f64]>,
}

pub fn write_summary_json(
    path: &Path,
    alpha: f64,
    beta_psi: f64,
    names: &[String],
    rows: &[SummaryRow],
    acceptance_rates: Option<&[f64]>,
) -> Result<()> {
    let doc = SummaryJson {
        alpha,
        beta_mu: alpha / 2.0,
        beta_psi,
        parameters: names
            .iter()
            .zip(rows)
            .map(|(n, r)| SummaryJsonRow {
                parameter: n,
                mean: r.mean,
                median: r.median,
                sd: r.sd,
                ci_low: r.ci_low,
                ci_high: r.ci_high,
                rhat: r.rhat,
            })
            .collect(),
        acceptance_rates,
    };
    let text = serde_json::to_string_pretty(&doc).context("serialize summary")?;
    std::fs::write(path, text + "\n").with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

pub fn write_rank_hist(
    path: &Path,
    hists: &[(String, Vec<Vec<usize>>)],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["parameter", "chain", "bin", "count"])?;
    for (name, per_chain) in hists {
        for (c, bins) in per_chain.iter().enumerate() {
            for (b, count) in bins.iter().enumerate() {
                w.write_record([
                    name.clone(),
                    format!("{}", c + 1),
                    format!("{}", b + 1),
                    format!("{count}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_kde(path: &Path, report: &EmpiricalReport) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["parameter", "x", "density"])?;
    for curve in &report.kde {
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            w.write_record([curve.parameter.clone(), fmt(*x), fmt(*d)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format study results: tau2, parameter, metric, value, mc_se.
pub fn write_coverage_results(path: &Path, report: &CoverageReport) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["tau2", "parameter", "metric", "value", "mc_se"])?;
    for row in &report.rows {
        let metric = match row.beta {
            None => "coverage".to_string(),
            Some(b) => format!("coverage[beta={b}]"),
        };
        w.write_record([
            fmt(row.tau2),
            row.parameter.clone(),
            metric,
            fmt(row.coverage),
            fmt(row.mc_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rhat_results(path: &Path, rows: &[RhatRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["tau2", "parameter", "metric", "value", "mc_se"])?;
    for row in rows {
        w.write_record([
            fmt(row.tau2),
            row.parameter.clone(),
            "avg_rank_rhat".to_string(),
            fmt(row.avg_rank_rhat),
            fmt(row.mc_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}
