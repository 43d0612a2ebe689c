//! Monte-Carlo replication of a simulation scenario.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::crossval::{kfold_rmsep_with_folds, make_folds};
use super::generate::{generate_design, generate_mixture_responses};
use super::metrics::{align_components, sse_metrics, MetricsSummary, PredictRule, Summary};
use crate::engine::{fit, Engine, FitConfig, Method, StopReason};
use crate::error::{Error, Result};
use crate::mixture::{Dataset, MixtureParams};
use crate::seed::{derive_seed, stream_rng};

/// Largest tolerated share of failed replicates in any cell.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// One simulation scenario at a single correlation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub rho: f64,
    pub true_params: MixtureParams,
    pub n_covariates: usize,
    pub intercept: bool,
    pub k_folds: usize,
    pub n_replicates: usize,
    pub seed: u64,
    pub fit_configs: Vec<FitConfig>,
    pub predict: PredictRule,
    /// Run cross-validation for every cell.
    pub rmsep: bool,
}

impl ScenarioSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = self.n_covariates + usize::from(self.intercept);
        if p == 0 {
            out.push("design has no columns (n_covariates = 0 and no intercept)".into());
        }
        if self.true_params.n_coeffs() != p {
            out.push(format!(
                "true_params coefficients have length {} but the design has {p} columns",
                self.true_params.n_coeffs()
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            out.push(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.n <= p {
            out.push(format!("n = {} must exceed the number of design columns {p}", self.n));
        }
        if self.rmsep && (self.k_folds < 2 || self.k_folds > self.n) {
            out.push(format!("k_folds must lie in [2, n], got {}", self.k_folds));
        }
        if self.n_replicates < 1 {
            out.push("n_replicates must be >= 1".into());
        }
        if self.fit_configs.is_empty() {
            out.push("at least one fit configuration is required".into());
        }
        for (c, cfg) in self.fit_configs.iter().enumerate() {
            if let Err(e) = cfg.validate() {
                out.push(format!("fit {c} ({}): {e}", cfg.label()));
            }
            if cfg.n_components != self.true_params.n_components() {
                out.push(format!(
                    "fit {c} ({}) uses {} components but true_params has {}",
                    cfg.label(),
                    cfg.n_components,
                    self.true_params.n_components()
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Spec(problems))
        }
    }
}

/// Metrics of one fit on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub sse_beta: f64,
    pub sse_pi: f64,
    pub sse_sigma2: f64,
    pub rmsep: Option<f64>,
    pub stop_reason: StopReason,
    pub degenerate_folds: usize,
}

/// Per-config outcomes of one replicate, in `fit_configs` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub fits: Vec<std::result::Result<ReplicateMetrics, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub engine: Engine,
    pub label: String,
    pub summary: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rho: f64,
    pub n_replicates: usize,
    pub cells: Vec<CellSummary>,
    pub replicates: Vec<ReplicateOutcome>,
}

impl ExperimentResult {
    pub fn cell(&self, method: Method, engine: Engine) -> Option<&MetricsSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.engine == engine)
            .map(|c| &c.summary)
    }
}

fn replicate_data(spec: &ScenarioSpec, seed_r: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed_r, 0);
    let x = generate_design(spec.n, spec.n_covariates, spec.rho, spec.intercept, &mut rng)?;
    let (y, _labels) = generate_mixture_responses(&x, &spec.true_params, &mut rng)?;
    Dataset::new(y, x, spec.intercept)
}

fn evaluate_config(
    spec: &ScenarioSpec,
    data: &Dataset,
    folds: Option<&[Vec<usize>]>,
    cfg: &FitConfig,
) -> Result<ReplicateMetrics> {
    let res = fit(data, cfg)?;
    let aligned = align_components(&res.params, &spec.true_params)?;
    let sse = sse_metrics(&aligned, &spec.true_params)?;
    let (rmsep, degenerate_folds) = match folds {
        Some(folds) => {
            let cv = kfold_rmsep_with_folds(data, cfg, folds, spec.predict)?;
            (Some(cv.rmsep), cv.degenerate_folds.len())
        }
        None => (None, 0),
    };
    Ok(ReplicateMetrics {
        sse_beta: sse.sse_beta,
        sse_pi: sse.sse_pi,
        sse_sigma2: sse.sse_sigma2,
        rmsep,
        stop_reason: res.stop_reason,
        degenerate_folds,
    })
}

/// Replicate `r`: data from stream 0 of its seed, folds from stream 1 (shared
/// by every config), and fit seed `derive_seed(seed_r, 100 + c)` for config `c`.
pub fn run_replicate(spec: &ScenarioSpec, r: usize) -> ReplicateOutcome {
    let seed_r = derive_seed(spec.seed, r as u64);
    let data = match replicate_data(spec, seed_r) {
        Ok(d) => d,
        Err(e) => {
            return ReplicateOutcome {
                index: r,
                fits: vec![Err(format!("data generation: {e}")); spec.fit_configs.len()],
            }
        }
    };
    let folds = if spec.rmsep {
        make_folds(spec.n, spec.k_folds, &mut stream_rng(seed_r, 1)).ok()
    } else {
        None
    };
    let fits = spec
        .fit_configs
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let mut cfg = cfg.clone();
            cfg.seed = derive_seed(seed_r, 100 + c as u64);
            evaluate_config(spec, &data, folds.as_deref(), &cfg).map_err(|e| e.to_string())
        })
        .collect();
    ReplicateOutcome { index: r, fits }
}

/// Deterministic reduction over outcomes sorted by replicate index.
pub fn aggregate(spec: &ScenarioSpec, mut outcomes: Vec<ReplicateOutcome>) -> Result<ExperimentResult> {
    outcomes.sort_by_key(|o| o.index);
    let total = outcomes.len();
    let mut cells = Vec::with_capacity(spec.fit_configs.len());
    for (c, cfg) in spec.fit_configs.iter().enumerate() {
        let ok: Vec<&ReplicateMetrics> = outcomes.iter().filter_map(|o| o.fits[c].as_ref().ok()).collect();
        let failures = total - ok.len();
        if failures as f64 > MAX_FAILURE_RATE * total as f64 || ok.is_empty() {
            return Err(Error::TooManyFailures {
                cell: cfg.label(),
                failures,
                total,
            });
        }
        let col = |f: &dyn Fn(&ReplicateMetrics) -> f64| {
            Summary::from_values(&ok.iter().map(|m| f(m)).collect::<Vec<f64>>()).expect("non-empty")
        };
        let rmsep_values: Vec<f64> = ok.iter().filter_map(|m| m.rmsep).collect();
        cells.push(CellSummary {
            method: cfg.method,
            engine: cfg.engine,
            label: cfg.label(),
            summary: MetricsSummary {
                sse_beta: col(&|m| m.sse_beta),
                sse_pi: col(&|m| m.sse_pi),
                sse_sigma2: col(&|m| m.sse_sigma2),
                rmsep: Summary::from_values(&rmsep_values),
                excluded: failures,
                degenerate: ok
                    .iter()
                    .filter(|m| m.stop_reason == StopReason::DegeneratePartition || m.degenerate_folds > 0)
                    .count(),
            },
        });
    }
    Ok(ExperimentResult {
        rho: spec.rho,
        n_replicates: total,
        cells,
        replicates: outcomes,
    })
}

/// Runs every replicate of `spec` on a pool of `workers` threads.
pub fn run_experiment(spec: &ScenarioSpec, workers: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> =
        pool.install(|| (0..spec.n_replicates).into_par_iter().map(|r| run_replicate(spec, r)).collect());
    aggregate(spec, outcomes)
}

/// A scenario description as stored on disk: `rho` may be a list and fits
/// may be given as a method × engine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: Option<String>,
    pub scenarios: Vec<ScenarioSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: Option<String>,
    n: usize,
    rho: RhoField,
    true_params: Value,
    n_covariates: usize,
    #[serde(default = "default_intercept")]
    intercept: bool,
    #[serde(default = "default_folds")]
    k_folds: usize,
    n_replicates: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    predict: PredictRule,
    #[serde(default = "default_intercept")]
    rmsep: bool,
    fits: Value,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RhoField {
    One(f64),
    Many(Vec<f64>),
}

fn default_intercept() -> bool {
    true
}

fn default_folds() -> usize {
    5
}

fn parse_fits(fits: &Value, n_components: usize, problems: &mut Vec<String>) -> Vec<FitConfig> {
    let from_value = |v: &Value, what: &str, problems: &mut Vec<String>| -> Option<FitConfig> {
        let mut v = v.clone();
        if let Value::Object(map) = &mut v {
            map.entry("n_components").or_insert(Value::from(n_components));
        }
        serde_json::from_value::<FitConfig>(v)
            .map_err(|e| problems.push(format!("{what}: {e}")))
            .ok()
    };
    match fits {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| from_value(v, &format!("fits[{i}]"), problems))
            .collect(),
        Value::Object(map) => {
            for key in map.keys() {
                if !matches!(key.as_str(), "methods" | "engines" | "settings") {
                    problems.push(format!("fits: unknown field {key:?} (expected methods, engines, settings)"));
                }
            }
            let list = |key: &str, problems: &mut Vec<String>| -> Vec<String> {
                match map.get(key) {
                    Some(Value::Array(a)) => a
                        .iter()
                        .filter_map(|v| match v.as_str() {
                            Some(s) => Some(s.to_string()),
                            None => {
                                problems.push(format!("fits.{key}: entries must be strings, got {v}"));
                                None
                            }
                        })
                        .collect(),
                    Some(other) => {
                        problems.push(format!("fits.{key} must be a list, got {other}"));
                        Vec::new()
                    }
                    None => {
                        problems.push(format!("fits.{key} is required"));
                        Vec::new()
                    }
                }
            };
            let methods: Vec<Method> = list("methods", problems)
                .iter()
                .filter_map(|s| s.parse().map_err(|e: Error| problems.push(format!("fits.methods: {e}"))).ok())
                .collect();
            let engines: Vec<Engine> = list("engines", problems)
                .iter()
                .filter_map(|s| s.parse().map_err(|e: Error| problems.push(format!("fits.engines: {e}"))).ok())
                .collect();
            let settings = map.get("settings").cloned().unwrap_or_else(|| Value::Object(Default::default()));
            if let Value::Object(s) = &settings {
                for key in ["method", "engine"] {
                    if s.contains_key(key) {
                        problems.push(format!("fits.settings must not set {key:?}; use fits.{key}s"));
                    }
                }
            }
            let Some(base) = from_value(&settings, "fits.settings", problems) else {
                return Vec::new();
            };
            let mut out = Vec::new();
            for &m in &methods {
                for &e in &engines {
                    out.push(FitConfig {
                        method: m,
                        engine: e,
                        ..base.clone()
                    });
                }
            }
            out
        }
        other => {
            problems.push(format!("fits must be a list or a methods/engines grid, got {other}"));
            Vec::new()
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Spec(vec![e.to_string()]))?;
        let mut problems = Vec::new();
        let true_params: Option<MixtureParams> = serde_json::from_value(raw.true_params)
            .map_err(|e| problems.push(format!("true_params: {e}")))
            .ok();
        let rhos = match raw.rho {
            RhoField::One(r) => vec![r],
            RhoField::Many(v) => v,
        };
        if rhos.is_empty() {
            problems.push("rho must not be empty".into());
        }
        let j = true_params.as_ref().map_or(1, |p| p.n_components());
        let fit_configs = parse_fits(&raw.fits, j, &mut problems);
        let Some(true_params) = true_params else {
            return Err(Error::Spec(problems));
        };
        let scenarios: Vec<ScenarioSpec> = rhos
            .iter()
            .map(|&rho| ScenarioSpec {
                n: raw.n,
                rho,
                true_params: true_params.clone(),
                n_covariates: raw.n_covariates,
                intercept: raw.intercept,
                k_folds: raw.k_folds,
                n_replicates: raw.n_replicates,
                seed: raw.seed,
                fit_configs: fit_configs.clone(),
                predict: raw.predict,
                rmsep: raw.rmsep,
            })
            .collect();
        for s in &scenarios {
            for p in s.problems() {
                let p = if rhos.len() > 1 { format!("rho = {}: {p}", s.rho) } else { p };
                if !problems.contains(&p) {
                    problems.push(p);
                }
            }
        }
        if problems.is_empty() {
            Ok(Self {
                name: raw.name,
                scenarios,
            })
        } else {
            Err(Error::Spec(problems))
        }
    }

    /// Runs each correlation level in turn. Every level reuses the scenario seed,
    /// so levels share their underlying random draws.
    pub fn run(&self, workers: usize) -> Result<Vec<ExperimentResult>> {
        self.scenarios.iter().map(|s| run_experiment(s, workers)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn small_spec() -> ScenarioSpec {
        let truth = MixtureParams::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![2.0, 3.0]), DVector::from_vec(vec![-2.0, -3.0])],
            vec![0.25, 0.25],
        )
        .unwrap();
        let mut cfg = FitConfig::new(Method::Ml, Engine::Em, 2);
        cfg.n_starts = 2;
        let mut ridge = FitConfig::new(Method::Ridge, Engine::Cem, 2);
        ridge.n_starts = 2;
        ScenarioSpec {
            n: 60,
            rho: 0.5,
            true_params: truth,
            n_covariates: 1,
            intercept: true,
            k_folds: 3,
            n_replicates: 6,
            seed: 11,
            fit_configs: vec![cfg, ridge],
            predict: PredictRule::MixtureMean,
            rmsep: true,
        }
    }

    #[test]
    fn single_replicate_summary_is_degenerate_interval() {
        let mut spec = small_spec();
        spec.n_replicates = 1;
        let res = run_experiment(&spec, 1).unwrap();
        let m = res.replicates[0].fits[0].as_ref().unwrap();
        let s = &res.cells[0].summary;
        assert_eq!(s.sse_beta.median, m.sse_beta);
        assert_eq!(s.sse_beta.ci_low, s.sse_beta.ci_high);
        assert_eq!(s.rmsep.unwrap().median, m.rmsep.unwrap());
    }

    #[test]
    fn results_do_not_depend_on_workers_or_order() {
        let spec = small_spec();
        let a = run_experiment(&spec, 1).unwrap();
        let b = run_experiment(&spec, 3).unwrap();
        assert_eq!(a, b);
        let reversed: Vec<ReplicateOutcome> = (0..spec.n_replicates).rev().map(|r| run_replicate(&spec, r)).collect();
        assert_eq!(aggregate(&spec, reversed).unwrap(), a);
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let spec = small_spec();
        let mut outcomes: Vec<ReplicateOutcome> = (0..spec.n_replicates).map(|r| run_replicate(&spec, r)).collect();
        outcomes[0].fits[1] = Err("forced".into());
        assert!(matches!(aggregate(&spec, outcomes), Err(Error::TooManyFailures { failures: 1, total: 6, .. })));
    }

    #[test]
    fn parses_grid_and_list_forms() {
        let grid = r#"{
            "n": 40, "rho": [0.5, 0.9], "n_covariates": 1, "n_replicates": 2, "seed": 3,
            "true_params": {"weights": [0.5, 0.5], "coeffs": [[1, 2], [-1, -2]], "variances": [1, 1]},
            "fits": {"methods": ["ml", "lt-hkp"], "engines": ["em", "cem", "sem"], "settings": {"n_starts": 2}}
        }"#;
        let spec = ExperimentSpec::from_json(grid).unwrap();
        assert_eq!(spec.scenarios.len(), 2);
        assert_eq!(spec.scenarios[1].fit_configs.len(), 6);
        assert!(spec.scenarios[0].fit_configs.iter().all(|c| c.n_starts == 2 && c.n_components == 2));
        let list = r#"{
            "n": 40, "rho": 0.3, "n_covariates": 1, "n_replicates": 2, "rmsep": false,
            "true_params": {"weights": [1.0], "coeffs": [[1, 2]], "variances": [1]},
            "fits": [{"method": "ridge", "engine": "sem"}]
        }"#;
        let spec = ExperimentSpec::from_json(list).unwrap();
        assert_eq!(spec.scenarios[0].fit_configs[0].method, Method::Ridge);
        assert_eq!(spec.scenarios[0].fit_configs[0].n_components, 1);
    }

    #[test]
    fn enumerates_schema_problems() {
        let bad = r#"{
            "n": 3, "rho": 1.5, "n_covariates": 2, "n_replicates": 0,
            "true_params": {"weights": [0.5, 0.5], "coeffs": [[1, 2], [-1, -2]], "variances": [1, 1]},
            "fits": {"methods": ["ml", "lasso"], "engines": ["em"]}
        }"#;
        let Err(Error::Spec(problems)) = ExperimentSpec::from_json(bad) else {
            panic!("expected schema errors");
        };
        let text = problems.join("\n");
        for needle in ["lasso", "rho", "n_replicates", "length 2", "n = 3"] {
            assert!(text.contains(needle), "missing {needle:?} in {text}");
        }
        assert!(matches!(ExperimentSpec::from_json(r#"{"n": 1, "bogus": 2}"#), Err(Error::Spec(_))));
    }
}
