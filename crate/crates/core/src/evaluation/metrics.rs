//! Label alignment, estimation error, prediction and percentile summaries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;

/// Squared errors of an aligned estimate against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SseMetrics {
    pub sse_beta: f64,
    pub sse_pi: f64,
    pub sse_sigma2: f64,
}

/// All permutations of `0..j` in lexicographic order.
fn permutations(j: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..j).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..j).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let pivot = i - 1;
        let succ = (i..j).rev().find(|&k| cur[k] > cur[pivot]).unwrap_or(i);
        cur.swap(pivot, succ);
        cur[i..].reverse();
    }
    out
}

fn check_shapes(estimated: &MixtureParams, reference: &MixtureParams) -> Result<()> {
    if estimated.n_components() != reference.n_components() {
        return Err(Error::ComponentMismatch {
            estimated: estimated.n_components(),
            reference: reference.n_components(),
        });
    }
    if estimated.n_coeffs() != reference.n_coeffs() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length",
            expected: reference.n_coeffs(),
            found: estimated.n_coeffs(),
        });
    }
    Ok(())
}

/// Permutes the estimated components to minimise the total squared
/// coefficient distance to `reference`. Ties keep the lexicographically
/// smallest permutation.
pub fn align_components(estimated: &MixtureParams, reference: &MixtureParams) -> Result<MixtureParams> {
    check_shapes(estimated, reference)?;
    let j = reference.n_components();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(j) {
        let cost: f64 = (0..j)
            .map(|c| (&estimated.coeffs()[perm[c]] - &reference.coeffs()[c]).norm_squared())
            .sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    Ok(estimated.permuted(&perm))
}

/// SSE of coefficients (stacked), of the first `J−1` proportions and of the
/// variances. Inputs must already be aligned.
pub fn sse_metrics(estimated: &MixtureParams, reference: &MixtureParams) -> Result<SseMetrics> {
    check_shapes(estimated, reference)?;
    let j = reference.n_components();
    let sse_beta = (0..j)
        .map(|c| (&estimated.coeffs()[c] - &reference.coeffs()[c]).norm_squared())
        .sum();
    let sse_pi = (0..j.saturating_sub(1))
        .map(|c| (estimated.weights()[c] - reference.weights()[c]).powi(2))
        .sum();
    let sse_sigma2 = (0..j)
        .map(|c| (estimated.variances()[c] - reference.variances()[c]).powi(2))
        .sum();
    Ok(SseMetrics {
        sse_beta,
        sse_pi,
        sse_sigma2,
    })
}

/// How a fitted mixture turns a covariate row into a point prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictRule {
    /// `Σ_j π̂_j xᵀβ̂_j`.
    #[default]
    MixtureMean,
    /// `xᵀβ̂_j` for the component with the largest `π̂_j`.
    MaxComponent,
}

pub fn predict(params: &MixtureParams, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    predict_with(params, x, PredictRule::MixtureMean)
}

pub fn predict_with(params: &MixtureParams, x: &DMatrix<f64>, rule: PredictRule) -> Result<DVector<f64>> {
    if x.ncols() != params.n_coeffs() {
        return Err(Error::DimensionMismatch {
            context: "prediction design",
            expected: params.n_coeffs(),
            found: x.ncols(),
        });
    }
    match rule {
        PredictRule::MixtureMean => {
            let mut beta = DVector::zeros(params.n_coeffs());
            for (w, b) in params.weights().iter().zip(params.coeffs()) {
                beta.axpy(*w, b, 1.0);
            }
            Ok(x * beta)
        }
        PredictRule::MaxComponent => {
            let mut top = 0;
            for (c, w) in params.weights().iter().enumerate() {
                if *w > params.weights()[top] {
                    top = c;
                }
            }
            Ok(x * &params.coeffs()[top])
        }
    }
}

/// Type-7 (linear interpolation) sample quantile; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, q))
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Median with a 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_length: f64,
    pub n: usize,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let ci_low = quantile_sorted(&v, 0.025);
        let ci_high = quantile_sorted(&v, 0.975);
        Some(Self {
            median: quantile_sorted(&v, 0.5),
            ci_low,
            ci_high,
            ci_length: ci_high - ci_low,
            n: v.len(),
        })
    }
}

/// Per-metric summaries for one (method, engine) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub sse_beta: Summary,
    pub sse_pi: Summary,
    pub sse_sigma2: Summary,
    /// Absent when the experiment skipped cross-validation.
    pub rmsep: Option<Summary>,
    /// Replicates left out because the fit failed.
    pub excluded: usize,
    /// Included replicates whose fit, or one of its cross-validation fits,
    /// stopped on a degenerate partition and reported its last usable iterate.
    pub degenerate: usize,
}
