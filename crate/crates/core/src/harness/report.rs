//! Run reports and their text renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bounds::BoundCheck;
use crate::error::{Error, Result};

/// One play.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: usize,
    pub agent: usize,
    /// Norm of the played point.
    pub x_norm: f64,
    pub loss: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub eta: f64,
    pub eta_tilde: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub rho: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Totals {
    pub regret: f64,
    pub effective: Option<f64>,
    pub collective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: &'static str,
    pub seed: u64,
    pub horizon: usize,
    pub rate: String,
    pub comparator: Vec<f64>,
    pub comparator_method: &'static str,
    pub comparator_gap: Option<f64>,
    pub rows: Vec<Row>,
    pub totals: Totals,
    pub checks: Vec<BoundCheck>,
    pub notes: Vec<String>,
}

impl RunReport {
    /// True when every requested bound holds.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(BoundCheck::satisfied)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Plotdata,
    Summary,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "plotdata" => Ok(Format::Plotdata),
            "summary" => Ok(Format::Summary),
            _ => Err(Error::Config(format!("unknown format `{s}`; expected csv, plotdata or summary"))),
        }
    }
}

impl Format {
    pub fn file_name(self, scenario: &str) -> String {
        match self {
            Format::Csv => format!("{scenario}.csv"),
            Format::Plotdata => format!("{scenario}.dat"),
            Format::Summary => format!("{scenario}.summary.txt"),
        }
    }
}

pub const CSV_HEADER: &str = "t,agent,loss,inst_regret,cum_regret,eta,eta_tilde,lambda_hat,rho,bound_id,bound_rhs";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// RHS of `check` after play `k` (0-based): its series value, or the final
/// value on the last play.
fn rhs_at(check: &BoundCheck, k: usize, last: usize) -> Option<f64> {
    match &check.series {
        Some(s) => s.get(k).copied(),
        None => (k == last).then_some(check.rhs),
    }
}

/// One line per play, repeated for each requested bound.
pub fn to_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let last = report.rows.len().saturating_sub(1);
    for (k, r) in report.rows.iter().enumerate() {
        let prefix = format!(
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.agent,
            r.loss,
            r.inst_regret,
            r.cum_regret,
            r.eta,
            opt(r.eta_tilde),
            opt(r.lambda_hat),
            opt(r.rho)
        );
        if report.checks.is_empty() {
            writeln!(out, "{prefix},,").unwrap();
        }
        for c in &report.checks {
            writeln!(out, "{prefix},{},{}", c.id, opt(rhs_at(c, k, last))).unwrap();
        }
    }
    out
}

/// Whitespace-separated `t regret bound` triples, one block per bound
/// (blocks separated by two blank lines).
pub fn to_plotdata(report: &RunReport) -> String {
    let mut out = String::new();
    let last = report.rows.len().saturating_sub(1);
    let blocks: Vec<Option<&BoundCheck>> =
        if report.checks.is_empty() { vec![None] } else { report.checks.iter().map(Some).collect() };
    for (b, check) in blocks.iter().enumerate() {
        if b > 0 {
            out.push_str("\n\n");
        }
        writeln!(out, "# {} bound={}", report.scenario, check.map_or("none".to_string(), |c| c.id.to_string()))
            .unwrap();
        out.push_str("# t regret bound\n");
        for (k, r) in report.rows.iter().enumerate() {
            let bound = check.and_then(|c| rhs_at(c, k, last)).map_or("nan".to_string(), |v| v.to_string());
            writeln!(out, "{} {} {}", r.t, r.cum_regret, bound).unwrap();
        }
    }
    out
}

pub fn to_summary(report: &RunReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
    kv("scenario", report.scenario.clone());
    kv("algorithm", report.algorithm.to_string());
    kv("seed", report.seed.to_string());
    kv("horizon", report.horizon.to_string());
    kv("plays", report.rows.len().to_string());
    kv("rate", report.rate.clone());
    kv("comparator", format!("{:?}", report.comparator));
    kv("comparator_method", report.comparator_method.to_string());
    if let Some(g) = report.comparator_gap {
        kv("comparator_gap", g.to_string());
    }
    kv("regret", report.totals.regret.to_string());
    if let Some(e) = report.totals.effective {
        kv("effective_regret", e.to_string());
    }
    if let Some(c) = report.totals.collective {
        kv("collective_regret", c.to_string());
    }
    for n in &report.notes {
        kv("note", n.clone());
    }
    for c in &report.checks {
        writeln!(
            out,
            "bound {}: measured={} rhs={} tolerance={} slack={} satisfied={}",
            c.id,
            c.measured,
            c.rhs,
            c.tolerance,
            c.slack(),
            c.satisfied()
        )
        .unwrap();
    }
    writeln!(out, "status = {}", if report.passed() { "pass" } else { "fail" }).unwrap();
    out
}

pub fn render(report: &RunReport, format: Format) -> String {
    match format {
        Format::Csv => to_csv(report),
        Format::Plotdata => to_plotdata(report),
        Format::Summary => to_summary(report),
    }
}

/// Writes the rendering into `dir` and returns the file path.
pub fn emit(report: &RunReport, format: Format, dir: &Path) -> Result<PathBuf> {
    let io = |p: &Path, e: std::io::Error| Error::Io { path: p.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(format.file_name(&report.scenario));
    std::fs::write(&path, render(report, format)).map_err(|e| io(&path, e))?;
    Ok(path)
}
