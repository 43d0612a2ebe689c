//! CSV ingestion, JSON reports and result tables for the `mixshrink` binary.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mixshrink_core::evaluation::{CrossValidation, ExperimentResult, Summary};
use mixshrink_core::{Dataset, FitConfig, FitResult};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

/// Metrics emitted by `simulate`, one CSV table each.
pub const METRICS: [&str; 4] = ["sse_beta", "sse_pi", "sse_sigma2", "rmsep"];

/// A parsed CSV: the response, the chosen covariate columns and their names.
#[derive(Debug, Clone)]
pub struct Table {
    pub response: String,
    pub covariates: Vec<String>,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dataset(&self, intercept: bool) -> Result<Dataset> {
        let n = self.n();
        let covs = DMatrix::from_fn(n, self.covariates.len(), |i, c| self.x[i][c]);
        Ok(Dataset::from_covariates(DVector::from_vec(self.y.clone()), &covs, intercept)?)
    }

    /// Column names in design order, including the intercept when present.
    pub fn design_names(&self, intercept: bool) -> Vec<String> {
        let mut names = Vec::with_capacity(self.covariates.len() + 1);
        if intercept {
            names.push("(intercept)".to_string());
        }
        names.extend(self.covariates.iter().cloned());
        names
    }
}

/// Reads a headed, comma-separated file. Every column other than `response`
/// is a covariate unless `covariates` names a subset.
pub fn read_csv(path: &Path, response: &str, covariates: Option<&[String]>) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_csv(&text, response, covariates).with_context(|| format!("in {}", path.display()))
}

pub fn parse_csv(text: &str, response: &str, covariates: Option<&[String]>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().context("line 1: cannot read header")?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        bail!("line 1: empty header row");
    }
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    if index.len() != header.len() {
        bail!("line 1: duplicate column names in header");
    }
    let resp = *index
        .get(response)
        .ok_or_else(|| anyhow!("response column {response:?} not found in header {header:?}"))?;
    let cov_idx: Vec<usize> = match covariates {
        Some(names) => names
            .iter()
            .map(|c| {
                let i = *index.get(c.as_str()).ok_or_else(|| anyhow!("covariate column {c:?} not found in header"))?;
                if i == resp {
                    bail!("column {c:?} is the response and cannot also be a covariate");
                }
                Ok(i)
            })
            .collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&i| i != resp).collect(),
    };

    let mut y = Vec::new();
    let mut x = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(pos) => anyhow!("line {}: {e}", pos.line()),
            None => anyhow!("{e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| anyhow!("line {line}: column {:?} has non-numeric value {raw:?}", header[i]))?;
            if !v.is_finite() {
                bail!("line {line}: column {:?} has non-finite value {raw:?}", header[i]);
            }
            Ok(v)
        };
        y.push(cell(resp)?);
        x.push(cov_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<f64>>>()?);
    }
    if y.is_empty() {
        bail!("no data rows after the header");
    }
    Ok(Table {
        response: response.to_string(),
        covariates: cov_idx.iter().map(|&i| header[i].clone()).collect(),
        y,
        x,
    })
}

/// Serializes a float with 17 significant digits; non-finite values become `null`.
pub fn sig17<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !v.is_finite() {
        return s.serialize_none();
    }
    let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn sig17_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| Sig17(x)))
}

fn sig17_nested<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|row| row.iter().map(|&x| Sig17(x)).collect::<Vec<_>>()))
}

fn sig17_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => sig17(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Copy)]
struct Sig17(f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        sig17(&self.0, s)
    }
}

/// `v` with 6 significant digits, switching to exponent form outside [1e-4, 1e6).
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding can carry into a new leading digit, e.g. 999999.5
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 6 && decimals > 0 {
            let d = decimals - 1;
            return format!("{v:.d$}");
        }
        s
    } else {
        format!("{v:.5e}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    #[serde(serialize_with = "sig17")]
    pub weight: f64,
    #[serde(serialize_with = "sig17_vec")]
    pub coefficients: Vec<f64>,
    #[serde(serialize_with = "sig17")]
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub config: FitConfig,
    pub response: String,
    pub design_columns: Vec<String>,
    pub n: usize,
    pub components: Vec<ComponentReport>,
    #[serde(serialize_with = "sig17")]
    pub objective: f64,
    #[serde(serialize_with = "sig17")]
    pub log_likelihood: f64,
    pub stop_reason: mixshrink_core::StopReason,
    pub converged: bool,
    pub iterations: usize,
    pub ridge_stage_iterations: Option<usize>,
    pub start: usize,
    pub variance_floor_hit: bool,
    #[serde(serialize_with = "sig17_vec")]
    pub objective_trace: Vec<f64>,
    #[serde(serialize_with = "sig17_vec")]
    pub loglik_trace: Vec<f64>,
    #[serde(serialize_with = "sig17_nested")]
    pub k_trace: Vec<Vec<f64>>,
    #[serde(serialize_with = "sig17_nested")]
    pub d_trace: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(table: &Table, intercept: bool, config: &FitConfig, res: &FitResult) -> Self {
        let p = &res.params;
        Self {
            config: config.clone(),
            response: table.response.clone(),
            design_columns: table.design_names(intercept),
            n: table.n(),
            components: (0..p.n_components())
                .map(|j| ComponentReport {
                    weight: p.weights()[j],
                    coefficients: p.coeffs()[j].iter().copied().collect(),
                    variance: p.variances()[j],
                })
                .collect(),
            objective: res.objective,
            log_likelihood: res.loglik,
            stop_reason: res.stop_reason,
            converged: res.converged,
            iterations: res.iterations,
            ridge_stage_iterations: res.ridge_stage_iterations,
            start: res.start,
            variance_floor_hit: res.variance_floor_hit,
            objective_trace: res.objective_trace.clone(),
            loglik_trace: res.loglik_trace.clone(),
            k_trace: res.k_trace.clone(),
            d_trace: res.d_trace.clone(),
            warnings: res.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} / {}  J = {}  n = {}  response = {}",
            self.config.method,
            self.config.engine,
            self.components.len(),
            self.n,
            self.response
        );
        let _ = writeln!(
            out,
            "stop: {:?} after {} iterations  objective {}  log-likelihood {}",
            self.stop_reason,
            self.iterations,
            sig6(self.objective),
            sig6(self.log_likelihood)
        );
        let width = self.design_columns.iter().map(String::len).max().unwrap_or(0).max(8);
        for (j, c) in self.components.iter().enumerate() {
            let _ = writeln!(out, "\ncomponent {}  weight {}  variance {}", j + 1, sig6(c.weight), sig6(c.variance));
            for (name, b) in self.design_columns.iter().zip(&c.coefficients) {
                let _ = writeln!(out, "  {name:<width$}  {:>12}", sig6(*b));
            }
            if let Some(k) = self.k_trace.last() {
                let d = self.d_trace.last().map(|d| d[j]).unwrap_or(0.0);
                let _ = writeln!(out, "  {:<width$}  {:>12}  d {}", "k", sig6(k[j]), sig6(d));
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "\nwarning: {w}");
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValReport {
    pub config: FitConfig,
    pub folds: usize,
    pub n: usize,
    #[serde(serialize_with = "sig17")]
    pub rmsep: f64,
    #[serde(serialize_with = "sig17_vec")]
    pub fold_rmsep: Vec<f64>,
    pub degenerate_folds: Vec<usize>,
}

impl CrossValReport {
    pub fn new(config: &FitConfig, n: usize, cv: &CrossValidation) -> Self {
        Self {
            config: config.clone(),
            folds: cv.fold_rmsep.len(),
            n,
            rmsep: cv.rmsep,
            fold_rmsep: cv.fold_rmsep.clone(),
            degenerate_folds: cv.degenerate_folds.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} / {}  {}-fold  n = {}  seed = {}\nRMSEP {}\n",
            self.config.method,
            self.config.engine,
            self.folds,
            self.n,
            self.config.seed,
            sig6(self.rmsep)
        );
        for (f, r) in self.fold_rmsep.iter().enumerate() {
            let flag = if self.degenerate_folds.contains(&f) { "  (degenerate partition)" } else { "" };
            let _ = writeln!(out, "  fold {}  {:>12}{flag}", f + 1, sig6(*r));
        }
        out
    }
}

/// One line of a `simulate` result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub engine: String,
    pub metric: String,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_length: f64,
    pub n: usize,
    pub rho: Option<f64>,
    pub excluded: usize,
    pub degenerate: usize,
}

fn row(cell: &mixshrink_core::evaluation::CellSummary, metric: &str, s: &Summary, rho: f64) -> TableRow {
    TableRow {
        method: cell.method.to_string(),
        engine: cell.engine.to_string(),
        metric: metric.to_string(),
        median: s.median,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
        ci_length: s.ci_length,
        n: s.n,
        rho: Some(rho),
        excluded: cell.summary.excluded,
        degenerate: cell.summary.degenerate,
    }
}

/// Rows for `metric` across every scenario, in scenario then cell order.
pub fn table_rows(results: &[ExperimentResult], metric: &str) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for res in results {
        for cell in &res.cells {
            let s = &cell.summary;
            let summary = match metric {
                "sse_beta" => Some(&s.sse_beta),
                "sse_pi" => Some(&s.sse_pi),
                "sse_sigma2" => Some(&s.sse_sigma2),
                "rmsep" => s.rmsep.as_ref(),
                _ => None,
            };
            if let Some(summary) = summary {
                rows.push(row(cell, metric, summary, res.rho));
            }
        }
    }
    rows
}

pub fn write_rows(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Human-readable table with 6 significant digits.
pub fn render_rows(rows: &[TableRow]) -> String {
    let mut out = format!(
        "{:<8} {:<6} {:<10} {:>6} {:>12} {:>12} {:>12} {:>12} {:>5} {:>5} {:>5}\n",
        "method", "engine", "metric", "rho", "median", "ci_low", "ci_high", "ci_length", "n", "excl", "degen"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:<6} {:<10} {:>6} {:>12} {:>12} {:>12} {:>12} {:>5} {:>5} {:>5}",
            r.method,
            r.engine,
            r.metric,
            r.rho.map(sig6).unwrap_or_default(),
            sig6(r.median),
            sig6(r.ci_low),
            sig6(r.ci_high),
            sig6(r.ci_length),
            r.n,
            r.excluded,
            r.degenerate
        );
    }
    out
}

#[derive(Serialize)]
struct SimulationDoc<'a> {
    name: Option<&'a str>,
    tables: BTreeMap<&'a str, Vec<RowDoc>>,
}

#[derive(Serialize)]
struct RowDoc {
    method: String,
    engine: String,
    #[serde(serialize_with = "sig17_opt")]
    rho: Option<f64>,
    #[serde(serialize_with = "sig17")]
    median: f64,
    #[serde(serialize_with = "sig17")]
    ci_low: f64,
    #[serde(serialize_with = "sig17")]
    ci_high: f64,
    #[serde(serialize_with = "sig17")]
    ci_length: f64,
    n: usize,
    excluded: usize,
    degenerate: usize,
}

/// Writes one CSV per metric plus `summary.json` into `dir`.
pub fn write_simulation(dir: &Path, name: Option<&str>, results: &[ExperimentResult]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tables = BTreeMap::new();
    for metric in METRICS {
        let rows = table_rows(results, metric);
        if rows.is_empty() {
            continue;
        }
        write_rows(&dir.join(format!("{metric}.csv")), &rows)?;
        tables.insert(
            metric,
            rows.into_iter()
                .map(|r| RowDoc {
                    method: r.method,
                    engine: r.engine,
                    rho: r.rho,
                    median: r.median,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    ci_length: r.ci_length,
                    n: r.n,
                    excluded: r.excluded,
                    degenerate: r.degenerate,
                })
                .collect(),
        );
    }
    let doc = SimulationDoc { name, tables };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
