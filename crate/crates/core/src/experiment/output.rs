//! Raw per-replicate CSV, JSON summary and the cost-versus-c.o.v. table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{ExperimentResults, RawRecord, RunStatus};
use crate::error::Result;

pub const RAW_HEADER: [&str; 8] = ["replicate", "estimator", "benchmark", "tol", "p_hat", "cov_hat", "total_cost", "seed"];

/// One line of the raw CSV. Aborted replicates leave the numeric columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub replicate: usize,
    pub estimator: String,
    pub benchmark: String,
    pub tol: f64,
    pub p_hat: Option<f64>,
    pub cov_hat: Option<f64>,
    pub total_cost: Option<f64>,
    pub seed: u64,
}

impl From<&RawRecord> for RawRow {
    fn from(r: &RawRecord) -> Self {
        Self {
            replicate: r.replicate,
            estimator: r.estimator_label().to_string(),
            benchmark: r.benchmark.name().to_string(),
            tol: r.tol,
            p_hat: r.p_hat(),
            cov_hat: r.cov_hat(),
            total_cost: r.total_cost(),
            seed: r.seed,
        }
    }
}

/// Aggregate over the replicates of one (estimator, tolerance) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub benchmark: String,
    pub tol: f64,
    pub completed: usize,
    pub aborted: usize,
    pub projected: bool,
    pub mean_p_hat: f64,
    pub std_p_hat: f64,
    /// Sample standard deviation over mean.
    pub spread_cov: f64,
    /// Root mean squared relative error against the reference probability.
    pub empirical_cov: Option<f64>,
    pub mean_cov_hat: f64,
    pub mean_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<SummaryDetail>,
}

/// Figures only available from in-memory reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryDetail {
    pub mean_level_counts: BTreeMap<u32, f64>,
    pub mean_level_cost: BTreeMap<u32, f64>,
    /// Mean conditional estimate per subset position.
    pub mean_subset_p_hat: Vec<f64>,
    pub mean_subset_acceptance: Vec<Option<f64>>,
    pub violations: u64,
    pub mean_wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub benchmark: String,
    pub seed: u64,
    pub replicates: usize,
    pub reference_probability: Option<f64>,
    /// Least-squares slope of log mean cost against log TOL, per estimator
    /// with at least two tolerances.
    pub cost_slopes: BTreeMap<String, f64>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Default)]
struct Group<'a> {
    rows: Vec<&'a RawRow>,
    records: Vec<&'a RawRecord>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn aggregate(rows: &[&RawRow], reference: Option<f64>) -> SummaryRow {
    let first = rows[0];
    let done: Vec<&RawRow> = rows.iter().copied().filter(|r| r.p_hat.is_some()).collect();
    let p: Vec<f64> = done.iter().filter_map(|r| r.p_hat).collect();
    let m = mean(&p);
    let std = if p.len() > 1 {
        (p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (p.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let projected = first.estimator == "mc-projected";
    let empirical_cov = match reference {
        Some(r) if !projected && !p.is_empty() => {
            Some((p.iter().map(|x| (x - r).powi(2)).sum::<f64>() / p.len() as f64).sqrt() / r)
        }
        _ => None,
    };
    SummaryRow {
        estimator: first.estimator.clone(),
        benchmark: first.benchmark.clone(),
        tol: first.tol,
        completed: done.len(),
        aborted: rows.len() - done.len(),
        projected,
        mean_p_hat: m,
        std_p_hat: std,
        spread_cov: if m > 0.0 { std / m } else { f64::NAN },
        empirical_cov,
        mean_cov_hat: mean(&done.iter().filter_map(|r| r.cov_hat).collect::<Vec<_>>()),
        mean_cost: mean(&done.iter().filter_map(|r| r.total_cost).collect::<Vec<_>>()),
        detail: None,
    }
}

fn detail(records: &[&RawRecord]) -> SummaryDetail {
    let reports: Vec<_> = records.iter().filter_map(|r| r.report.as_ref()).collect();
    let n = reports.len().max(1) as f64;
    let mut d = SummaryDetail::default();
    let mut subset_p: Vec<Vec<f64>> = Vec::new();
    let mut subset_acc: Vec<Vec<f64>> = Vec::new();
    for rep in &reports {
        for (&l, &c) in rep.ledger.per_level_counts() {
            *d.mean_level_counts.entry(l).or_default() += c as f64 / n;
        }
        for (&l, &c) in rep.ledger.per_level_cost() {
            *d.mean_level_cost.entry(l).or_default() += c / n;
        }
        for (i, s) in rep.per_subset.iter().enumerate() {
            if subset_p.len() <= i {
                subset_p.push(Vec::new());
                subset_acc.push(Vec::new());
            }
            subset_p[i].push(s.p_hat);
            if let Some(a) = s.acceptance {
                subset_acc[i].push(a);
            }
        }
        d.violations += rep.violations;
        d.mean_wall_clock += rep.wall_clock / n;
    }
    d.mean_subset_p_hat = subset_p.iter().map(|v| mean(v)).collect();
    d.mean_subset_acceptance = subset_acc.iter().map(|v| (!v.is_empty()).then(|| mean(v))).collect();
    d
}

/// Summaries grouped by (estimator, tolerance) in order of first appearance.
pub fn summarize_rows(rows: &[RawRow], reference: Option<f64>) -> Vec<SummaryRow> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&RawRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.estimator.clone(), r.tol.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order.iter().map(|k| aggregate(&groups[k], reference)).collect()
}

pub(crate) fn summarize_records(records: &[RawRecord], reference: Option<f64>) -> Vec<SummaryRow> {
    let rows: Vec<RawRow> = records.iter().map(RawRow::from).collect();
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Group> = BTreeMap::new();
    for (row, rec) in rows.iter().zip(records) {
        let key = (row.estimator.clone(), row.tol.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let g = groups.entry(key).or_default();
        g.rows.push(row);
        g.records.push(rec);
    }
    order
        .iter()
        .map(|k| {
            let g = &groups[k];
            let mut s = aggregate(&g.rows, reference);
            if !s.projected {
                s.detail = Some(detail(&g.records));
            }
            s
        })
        .collect()
}

pub fn write_raw_csv<W: std::io::Write>(out: W, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RAW_HEADER {
        return Err(crate::error::Error::InvalidInput(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_cost_table<W: std::io::Write>(out: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "tol", "empirical_cov", "spread_cov", "mean_cost"])?;
    for s in summary {
        let emp = s.empirical_cov.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([s.estimator.clone(), s.tol.to_string(), emp, s.spread_cov.to_string(), s.mean_cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Slope of `ln(mean_cost)` against `ln(tol)` for every estimator that
/// appears at two or more tolerances.
pub fn cost_slopes(summary: &[SummaryRow]) -> BTreeMap<String, f64> {
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summary.iter().filter(|s| s.mean_cost > 0.0 && s.mean_cost.is_finite()) {
        points.entry(s.estimator.clone()).or_default().push((s.tol.ln(), s.mean_cost.ln()));
    }
    points
        .into_iter()
        .filter_map(|(k, p)| {
            let n = p.len() as f64;
            let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
            let my = p.iter().map(|q| q.1).sum::<f64>() / n;
            let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
            let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
            (p.len() >= 2 && sxx > 0.0).then(|| (k, sxy / sxx))
        })
        .collect()
}

pub fn summary_document(cfg: &ExperimentConfig, results: &ExperimentResults) -> SummaryDocument {
    SummaryDocument {
        benchmark: cfg.benchmark.name().into(),
        seed: cfg.seed,
        replicates: cfg.replicates,
        reference_probability: results.reference_probability,
        cost_slopes: cost_slopes(&results.summary),
        rows: results.summary.clone(),
    }
}

/// Writes the raw CSV, the summary JSON and the cost table under
/// `cfg.output.dir`.
pub fn write_outputs(cfg: &ExperimentConfig, results: &ExperimentResults) -> Result<()> {
    fs::create_dir_all(&cfg.output.dir)?;
    let rows: Vec<RawRow> = results.records.iter().map(RawRow::from).collect();
    write_raw_csv(fs::File::create(cfg.raw_csv_path())?, &rows)?;
    let doc = summary_document(cfg, results);
    fs::write(cfg.summary_path(), serde_json::to_string_pretty(&doc)?)?;
    write_cost_table(fs::File::create(cfg.cost_table_path())?, &results.summary)?;
    Ok(())
}

/// Whether any replicate aborted.
pub fn any_aborted(results: &ExperimentResults) -> bool {
    results.records.iter().any(|r| matches!(r.status, RunStatus::Aborted(_)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(est: &str, p: Option<f64>) -> RawRow {
        RawRow {
            replicate: 0,
            estimator: est.into(),
            benchmark: "toy".into(),
            tol: 0.1,
            p_hat: p,
            cov_hat: p.map(|_| 0.1),
            total_cost: p.map(|_| 10.0),
            seed: 1,
        }
    }

    #[test]
    fn csv_round_trip_with_header() {
        let rows = vec![row("sus", Some(1e-4)), row("sus", None)];
        let mut buf = Vec::new();
        write_raw_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("replicate,estimator,benchmark,tol,p_hat,cov_hat,total_cost,seed\n"));
        assert!(text.contains("0,sus,toy,0.1,,,,1"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        fs::write(&path, &text).unwrap();
        assert_eq!(read_raw_csv(&path).unwrap(), rows);
    }

    #[test]
    fn slopes_of_power_laws() {
        let mut rows = Vec::new();
        for (i, tol) in [0.4, 0.2, 0.1].into_iter().enumerate() {
            let mut r = row("mc-projected", Some(1e-4));
            r.tol = tol;
            r.total_cost = Some(3.0 * tol.powi(-4));
            r.replicate = i;
            rows.push(r);
        }
        rows.push(row("sus", Some(1e-4)));
        let slopes = cost_slopes(&summarize_rows(&rows, None));
        assert!((slopes["mc-projected"] + 4.0).abs() < 1e-12);
        assert!(!slopes.contains_key("sus"));
    }

    #[test]
    fn summary_statistics() {
        let rows = vec![row("sus", Some(1.0)), row("sus", Some(3.0)), row("sus", None)];
        let s = &summarize_rows(&rows, Some(2.0))[0];
        assert_eq!(s.completed, 2);
        assert_eq!(s.aborted, 1);
        assert_eq!(s.mean_p_hat, 2.0);
        assert!((s.std_p_hat - 2f64.sqrt()).abs() < 1e-12);
        assert!((s.empirical_cov.unwrap() - 0.5).abs() < 1e-12);
    }
}
