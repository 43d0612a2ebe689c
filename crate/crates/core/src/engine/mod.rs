//! EM, CEM and SEM drivers for every estimator.

mod config;
mod steps;

pub use config::{Engine, FitConfig, Init, Method};
pub use steps::{
    c_step, e_step, m_step_partitioned, m_step_pooled, s_step, sem_select, sem_select_index, MStep, Partition, PenaltySchedule,
    StepOptions, STARVATION_TOL,
};

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{log_likelihood, penalized_log_likelihood_with, Dataset, MixtureParams, Responsibilities};
use crate::seed::stream_rng;
use crate::shrinkage::{ml_component_update, ridge_k_hkp, UpdateOptions};

const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Tolerance,
    MaxIter,
    DegeneratePartition,
}

/// Outcome of a fit. Traces are indexed by iteration: `objective_trace[0]`
/// and `loglik_trace[0]` hold the unpenalized log-likelihood of the starting
/// values, entry `r` the state after iteration `r`. `k_trace[r - 1]` and
/// `d_trace[r - 1]` hold the penalty used in iteration `r`.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Objective (penalized log-likelihood) of `params`.
    pub objective: f64,
    pub loglik: f64,
    pub objective_trace: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    pub k_trace: Vec<Vec<f64>>,
    pub d_trace: Vec<Vec<f64>>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub responsibilities: Responsibilities,
    pub variance_floor_hit: bool,
    /// Index of the winning start.
    pub start: usize,
    /// Iterations spent in the preliminary ridge fit (LT-HKP only).
    pub ridge_stage_iterations: Option<usize>,
    pub warnings: Vec<String>,
}

struct ChainOutput {
    params: MixtureParams,
    objective: f64,
    objective_trace: Vec<f64>,
    loglik_trace: Vec<f64>,
    k_trace: Vec<Vec<f64>>,
    d_trace: Vec<Vec<f64>>,
    stop_reason: StopReason,
    iterations: usize,
    floored: bool,
}

fn is_degenerate_error(e: &Error) -> bool {
    matches!(
        e,
        Error::ZeroResponsibility
            | Error::RankDeficient { .. }
            | Error::Singular { .. }
            | Error::InvalidWeights(_)
            | Error::ZeroCoefficients
            | Error::InvalidParams(_)
            | Error::NonPositiveK { .. }
            | Error::ZeroDenominator
    )
}

fn step_options(data: &Dataset, config: &FitConfig) -> StepOptions {
    StepOptions {
        update: UpdateOptions {
            variance_floor: config.variance_floor,
            free_intercept: !config.penalize_intercept && data.has_intercept(),
        },
        dj_literal: config.dj_literal,
    }
}

/// Runs one engine chain from `start` until the stopping rule fires.
fn run_chain(
    data: &Dataset,
    config: &FitConfig,
    schedule: &PenaltySchedule,
    start: MixtureParams,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    let opts = step_options(data, config);
    let penalized = *schedule != PenaltySchedule::None;
    // penalized objectives are only comparable once two penalized iterates exist
    let first_check = if penalized { 2 } else { 1 };

    let ll0 = log_likelihood(data, &start);
    if !ll0.is_finite() {
        return Err(Error::NonFiniteParameters { iteration: 0 });
    }
    let mut params = start;
    let mut objective = ll0;
    let mut objective_trace = vec![ll0];
    let mut loglik_trace = vec![ll0];
    let mut k_trace: Vec<Vec<f64>> = Vec::new();
    let mut d_trace: Vec<Vec<f64>> = Vec::new();
    let mut floored = false;
    let mut sem_chain: Vec<(MixtureParams, f64)> = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for r in 1..=config.max_iter {
        let tau = e_step(data, &params);
        if tau.matrix().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameters { iteration: r });
        }
        let prev_k = k_trace.last().map(|k| k.as_slice());
        let step = match config.engine {
            Engine::Em => m_step_pooled(data, &tau, schedule, prev_k, &opts),
            Engine::Cem | Engine::Sem => {
                let partition = if config.engine == Engine::Cem {
                    c_step(&tau, rng)
                } else {
                    s_step(&tau, rng)
                };
                if !partition.supports(data.p()) {
                    stop_reason = StopReason::DegeneratePartition;
                    break;
                }
                m_step_partitioned(data, &partition, &tau, schedule, prev_k, &opts)
            }
        };
        let step = match step {
            Ok(s) => s,
            Err(e) if is_degenerate_error(&e) => {
                stop_reason = StopReason::DegeneratePartition;
                break;
            }
            Err(_) => return Err(Error::NonFiniteParameters { iteration: r }),
        };

        let ll = log_likelihood(data, &step.params);
        let obj = if penalized {
            penalized_log_likelihood_with(data, &step.params, &step.penalty(), opts.update.free_intercept)?
        } else {
            ll
        };
        if !obj.is_finite() || !ll.is_finite() {
            return Err(Error::NonFiniteParameters { iteration: r });
        }
        floored |= step.floored;
        objective_trace.push(obj);
        loglik_trace.push(ll);
        k_trace.push(step.k);
        d_trace.push(step.d);
        params = step.params;
        objective = obj;
        if config.engine == Engine::Sem {
            sem_chain.push((params.clone(), obj));
        }
        if r >= first_check && (obj - objective_trace[r - 1]).abs() < config.tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let iterations = objective_trace.len() - 1;
    if config.engine == Engine::Sem {
        if let Some(idx) = sem_select_index(&sem_chain) {
            let (p, o) = sem_chain.swap_remove(idx);
            params = p;
            objective = o;
        }
    }
    Ok(ChainOutput {
        params,
        objective,
        objective_trace,
        loglik_trace,
        k_trace,
        d_trace,
        stop_reason,
        iterations,
        floored,
    })
}

/// One partitioned M-step from a hard assignment; ML first, ridge if the
/// unpenalized blocks are singular.
fn params_from_assignment(data: &Dataset, assignment: Vec<usize>, config: &FitConfig) -> Option<MixtureParams> {
    let j = config.n_components;
    let partition = Partition::from_assignment(assignment, j);
    if !partition.supports(data.p()) {
        return None;
    }
    let tau = Responsibilities::from_assignment(&partition.assignment, j);
    let opts = step_options(data, config);
    [PenaltySchedule::None, PenaltySchedule::RidgeHkp]
        .iter()
        .find_map(|s| m_step_partitioned(data, &partition, &tau, s, None, &opts).ok())
        .map(|m| m.params)
}

fn random_init(data: &Dataset, config: &FitConfig, rng: &mut ChaCha8Rng) -> Result<MixtureParams> {
    let j = config.n_components;
    for _ in 0..INIT_ATTEMPTS {
        let assignment: Vec<usize> = (0..data.n()).map(|_| rng.random_range(0..j)).collect();
        if let Some(p) = params_from_assignment(data, assignment, config) {
            return Ok(p);
        }
    }
    Err(Error::InvalidData(format!(
        "no usable random starting partition after {INIT_ATTEMPTS} attempts"
    )))
}

/// Groups observations by 1-D k-means on the residuals of a pooled
/// least-squares fit.
fn kmeans_init(data: &Dataset, config: &FitConfig, rng: &mut ChaCha8Rng) -> Result<MixtureParams> {
    let j = config.n_components;
    let ones = DVector::from_element(data.n(), 1.0);
    let pooled = ml_component_update(data.x(), data.y(), &ones, &UpdateOptions::default())?;
    let resid = data.y() - data.x() * &pooled.beta;
    let mut sorted: Vec<f64> = resid.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..j)
        .map(|c| sorted[((c as f64 + 0.5) / j as f64 * data.n() as f64) as usize])
        .collect();
    let mut assignment = vec![0; data.n()];
    for _ in 0..100 {
        let next: Vec<usize> = resid
            .iter()
            .map(|r| {
                (0..j)
                    .min_by(|&a, &b| (r - centers[a]).abs().total_cmp(&(r - centers[b]).abs()))
                    .unwrap_or(0)
            })
            .collect();
        let changed = next != assignment;
        assignment = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let (s, m) = resid
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .fold((0.0, 0usize), |(s, m), (r, _)| (s + r, m + 1));
            if m > 0 {
                *center = s / m as f64;
            }
        }
        if !changed {
            break;
        }
    }
    match params_from_assignment(data, assignment, config) {
        Some(p) => Ok(p),
        None => random_init(data, config, rng),
    }
}

fn initial_params(data: &Dataset, config: &FitConfig, rng: &mut ChaCha8Rng) -> Result<MixtureParams> {
    match &config.init {
        Init::RandomPartition => random_init(data, config, rng),
        Init::KMeansLike => kmeans_init(data, config, rng),
        Init::Supplied(p) => {
            if p.n_coeffs() != data.p() {
                return Err(Error::DimensionMismatch {
                    context: "supplied initial coefficients",
                    expected: data.p(),
                    found: p.n_coeffs(),
                });
            }
            Ok(p.clone())
        }
    }
}

fn finish(data: &Dataset, chain: ChainOutput, start: usize, ridge_stage_iterations: Option<usize>) -> FitResult {
    let responsibilities = e_step(data, &chain.params);
    FitResult {
        loglik: log_likelihood(data, &chain.params),
        objective: chain.objective,
        params: chain.params,
        objective_trace: chain.objective_trace,
        loglik_trace: chain.loglik_trace,
        k_trace: chain.k_trace,
        d_trace: chain.d_trace,
        converged: chain.stop_reason == StopReason::Tolerance,
        stop_reason: chain.stop_reason,
        iterations: chain.iterations,
        responsibilities,
        variance_floor_hit: chain.floored,
        start,
        ridge_stage_iterations,
        warnings: Vec::new(),
    }
}

/// Runs start number `start` of `config` and returns its result, including
/// degenerate stops.
pub fn fit_start(data: &Dataset, config: &FitConfig, start: usize) -> Result<FitResult> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, start as u64);
    let first_schedule = match config.method {
        Method::Ml => PenaltySchedule::None,
        Method::Ridge | Method::LtHkp => PenaltySchedule::RidgeHkp,
        Method::LtItr => PenaltySchedule::LiuEigen,
    };
    let mut chain = run_chain(data, config, &first_schedule, initial_params(data, config, &mut rng)?, &mut rng)?;
    // A drawn start whose very first step is already degenerate produced no
    // estimate at all; draw another one.
    let mut attempts = 1;
    while chain.iterations == 0
        && chain.stop_reason == StopReason::DegeneratePartition
        && !matches!(config.init, Init::Supplied(_))
        && attempts < INIT_ATTEMPTS
    {
        attempts += 1;
        let init = random_init(data, config, &mut rng)?;
        chain = run_chain(data, config, &first_schedule, init, &mut rng)?;
    }
    if config.method != Method::LtHkp {
        return Ok(finish(data, chain, start, None));
    }

    let ridge = chain;
    let p = data.p();
    let ks = ridge
        .params
        .coeffs()
        .iter()
        .zip(ridge.params.variances())
        .map(|(b, &s2)| ridge_k_hkp(b, if config.hkp_uses_sd { s2.sqrt() } else { s2 }, p))
        .collect::<Result<Vec<f64>>>();
    let ks = match ks {
        Ok(k) => k,
        Err(e) if is_degenerate_error(&e) => {
            let mut out = finish(data, ridge, start, None);
            out.stop_reason = StopReason::DegeneratePartition;
            out.converged = false;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let ridge_iters = ridge.iterations;
    let lt = run_chain(data, config, &PenaltySchedule::LiuFixedK(ks), ridge.params, &mut rng)?;
    Ok(finish(data, lt, start, Some(ridge_iters)))
}

/// Fits `config` to `data` from `n_starts` starts and keeps the result with
/// the largest final objective, preferring starts that did not stop on a
/// degenerate partition. Fails only when no start got past its initial values.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let mut warnings = Vec::new();
    let free = config.n_components * (data.p() + 1);
    if data.n() <= free {
        warnings.push(format!(
            "n = {} is not larger than J(p+1) = {free}; estimates may be unstable",
            data.n()
        ));
    }

    // ranked tiers: clean stops, then degenerate stops that still returned an
    // iterate, then degenerate stops that never moved off the start
    let mut reasons = Vec::with_capacity(config.n_starts);
    let mut tiers: [Option<FitResult>; 3] = [None, None, None];
    for s in 0..config.n_starts {
        match fit_start(data, config, s) {
            Ok(res) => {
                reasons.push(format!("start {s}: {:?} after {} iterations", res.stop_reason, res.iterations));
                let tier = match (res.stop_reason, res.made_progress()) {
                    (StopReason::DegeneratePartition, true) => 1,
                    (StopReason::DegeneratePartition, false) => 2,
                    _ => 0,
                };
                if tiers[tier].as_ref().is_none_or(|b| res.objective > b.objective) {
                    tiers[tier] = Some(res);
                }
            }
            Err(e) => reasons.push(format!("start {s}: {e}")),
        }
    }
    let [clean, partial, stuck] = tiers;
    match clean.or(partial) {
        Some(mut res) => {
            if res.stop_reason == StopReason::DegeneratePartition {
                warnings.push(format!(
                    "every start stopped on a degenerate partition; returning the last usable iterate of start {}",
                    res.start
                ));
            }
            res.warnings = warnings;
            Ok(res)
        }
        None => Err(Error::AllStartsDegenerate {
            reasons,
            best: stuck.map(|mut r| {
                r.warnings = warnings;
                Box::new(r)
            }),
        }),
    }
}

impl FitResult {
    /// At least one update was applied to the starting values.
    pub fn made_progress(&self) -> bool {
        self.iterations + self.ridge_stage_iterations.unwrap_or(0) > 0
    }
}
