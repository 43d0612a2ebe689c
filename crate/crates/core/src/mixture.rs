//! The mixture-of-regressions model: parameters, data, densities,
//! log-likelihoods and posterior membership weights.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound applied to every fitted component variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const WEIGHT_SUM_TOL: f64 = 1e-10;

/// Mixing proportions, per-component coefficients and per-component variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsRepr", try_from = "ParamsRepr")]
pub struct MixtureParams {
    weights: Vec<f64>,
    coeffs: Vec<DVector<f64>>,
    variances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    weights: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl From<MixtureParams> for ParamsRepr {
    fn from(p: MixtureParams) -> Self {
        ParamsRepr {
            weights: p.weights,
            coeffs: p.coeffs.into_iter().map(|c| c.as_slice().to_vec()).collect(),
            variances: p.variances,
        }
    }
}

impl TryFrom<ParamsRepr> for MixtureParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        MixtureParams::new(
            r.weights,
            r.coeffs.into_iter().map(DVector::from_vec).collect(),
            r.variances,
        )
    }
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, coeffs: Vec<DVector<f64>>, variances: Vec<f64>) -> Result<Self> {
        let j = weights.len();
        if j == 0 {
            return Err(Error::InvalidParams("at least one component is required".into()));
        }
        if coeffs.len() != j || variances.len() != j {
            return Err(Error::InvalidParams(format!(
                "{j} weights but {} coefficient vectors and {} variances",
                coeffs.len(),
                variances.len()
            )));
        }
        let p = coeffs[0].len();
        if p == 0 || coeffs.iter().any(|c| c.len() != p) {
            return Err(Error::InvalidParams("coefficient vectors must share a positive length".into()));
        }
        if coeffs.iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("coefficients must be finite".into()));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams("variances must be finite and positive".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(Error::InvalidParams("mixing proportions must lie in [0, 1]".into()));
        }
        if j >= 2 && weights.iter().any(|w| *w <= 0.0 || *w >= 1.0) {
            return Err(Error::InvalidParams("mixing proportions must lie strictly inside (0, 1)".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParams(format!("mixing proportions sum to {total}, not 1")));
        }
        Ok(Self {
            weights,
            coeffs,
            variances,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coeffs(&self) -> &[DVector<f64>] {
        &self.coeffs
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Component `j` of the result is component `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParams {
        assert_eq!(perm.len(), self.n_components());
        MixtureParams {
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            coeffs: perm.iter().map(|&i| self.coeffs[i].clone()).collect(),
            variances: perm.iter().map(|&i| self.variances[i]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.variances.iter()).all(|v| v.is_finite())
            && self.coeffs.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

/// Response vector and design matrix. When built with an intercept, column 0
/// is the column of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    intercept: bool,
}

impl Dataset {
    /// `x` is used as-is; `intercept` only records whether column 0 is a
    /// column of ones added at ingestion.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, intercept: bool) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("design has no columns".into()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        if x.nrows() <= x.ncols() {
            return Err(Error::InvalidData(format!(
                "need more observations than columns (n = {}, p = {})",
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(Self { y, x, intercept })
    }

    /// Builds the design from raw covariates, prepending a column of ones when
    /// `intercept` is set.
    pub fn from_covariates(y: DVector<f64>, covariates: &DMatrix<f64>, intercept: bool) -> Result<Self> {
        Self::new(y, with_intercept(covariates, intercept), intercept)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            crate::numerics::select_entries(&self.y, idx),
            crate::numerics::select_rows(&self.x, idx),
            self.intercept,
        )
    }
}

pub fn with_intercept(covariates: &DMatrix<f64>, intercept: bool) -> DMatrix<f64> {
    if intercept {
        covariates.clone().insert_column(0, 1.0)
    } else {
        covariates.clone()
    }
}

/// n × J posterior membership weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    tau: DMatrix<f64>,
}

impl Responsibilities {
    /// Wraps a matrix after checking it is row-stochastic.
    pub fn from_matrix(tau: DMatrix<f64>) -> Result<Self> {
        for row in tau.row_iter() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidParams("responsibility rows must be stochastic".into()));
            }
        }
        Ok(Self { tau })
    }

    /// One-hot rows from a hard assignment.
    pub fn from_assignment(assignment: &[usize], n_components: usize) -> Self {
        let mut tau = DMatrix::zeros(assignment.len(), n_components);
        for (i, &a) in assignment.iter().enumerate() {
            tau[(i, a)] = 1.0;
        }
        Self { tau }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.tau
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.tau.column(j).into_owned()
    }

    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.tau.ncols()
    }
}

/// Penalty applied to the log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySpec {
    None,
    /// Subtracts `Σ_j k_j β_jᵀβ_j / 2`.
    Ridge { k: Vec<f64> },
    /// Subtracts `Σ_j ‖(−d_j/√k_j) β̂_j − √k_j β_j‖² / 2` with plug-in `β̂_j`.
    LiuType {
        k: Vec<f64>,
        d: Vec<f64>,
        plugin: Vec<DVector<f64>>,
    },
}

/// Log density of `N(mean, σ²)` at `y`.
#[inline]
pub fn normal_logpdf(y: f64, mean: f64, sigma2: f64) -> f64 {
    let r = y - mean;
    -0.5 * (2.0 * PI * sigma2).ln() - 0.5 * r * r / sigma2
}

pub fn component_logpdf(x_row: &[f64], y: f64, beta: &DVector<f64>, sigma2: f64) -> f64 {
    debug_assert_eq!(x_row.len(), beta.len());
    let mean: f64 = x_row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
    normal_logpdf(y, mean, sigma2)
}

/// `log π_j + log φ_j(y_i)` for every observation and component.
fn joint_log_densities(data: &Dataset, params: &MixtureParams) -> DMatrix<f64> {
    let n = data.n();
    let j = params.n_components();
    let mut out = DMatrix::zeros(n, j);
    for c in 0..j {
        let means = data.x() * &params.coeffs[c];
        let log_pi = params.weights[c].ln();
        let s2 = params.variances[c];
        for i in 0..n {
            out[(i, c)] = log_pi + normal_logpdf(data.y()[i], means[i], s2);
        }
    }
    out
}

#[inline]
fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_dims(data: &Dataset, params: &MixtureParams) {
    assert_eq!(
        data.p(),
        params.n_coeffs(),
        "design has {} columns but coefficients have length {}",
        data.p(),
        params.n_coeffs()
    );
}

/// Observed-data log-likelihood `Σ_i log Σ_j π_j φ_j`.
pub fn log_likelihood(data: &Dataset, params: &MixtureParams) -> f64 {
    check_dims(data, params);
    let joint = joint_log_densities(data, params);
    joint.row_iter().map(|row| log_sum_exp(&row.iter().copied().collect::<Vec<f64>>())).sum()
}

fn penalty_value(params: &MixtureParams, penalty: &PenaltySpec, free: Option<usize>) -> Result<f64> {
    let mask = |m: usize| if Some(m) == free { 0.0 } else { 1.0 };
    let j = params.n_components();
    match penalty {
        PenaltySpec::None => Ok(0.0),
        PenaltySpec::Ridge { k } => {
            if k.len() != j {
                return Err(Error::DimensionMismatch {
                    context: "ridge penalty k",
                    expected: j,
                    found: k.len(),
                });
            }
            Ok(params
                .coeffs
                .iter()
                .zip(k)
                .map(|(b, kj)| kj * b.iter().enumerate().map(|(m, v)| mask(m) * v * v).sum::<f64>() / 2.0)
                .sum())
        }
        PenaltySpec::LiuType { k, d, plugin } => {
            if k.len() != j || d.len() != j || plugin.len() != j {
                return Err(Error::DimensionMismatch {
                    context: "Liu-type penalty",
                    expected: j,
                    found: k.len().min(d.len()).min(plugin.len()),
                });
            }
            let mut total = 0.0;
            for c in 0..j {
                if !(k[c] > 0.0) {
                    return Err(Error::NonPositiveK { component: c, k: k[c] });
                }
                if plugin[c].len() != params.n_coeffs() {
                    return Err(Error::DimensionMismatch {
                        context: "Liu-type plug-in",
                        expected: params.n_coeffs(),
                        found: plugin[c].len(),
                    });
                }
                let sk = k[c].sqrt();
                let sq: f64 = (0..params.n_coeffs())
                    .map(|m| {
                        let r = (-d[c] / sk) * plugin[c][m] - sk * params.coeffs[c][m];
                        mask(m) * r * r
                    })
                    .sum();
                total += sq / 2.0;
            }
            Ok(total)
        }
    }
}

pub fn penalized_log_likelihood(data: &Dataset, params: &MixtureParams, penalty: &PenaltySpec) -> Result<f64> {
    penalized_log_likelihood_with(data, params, penalty, false)
}

/// As [`penalized_log_likelihood`]; with `free_intercept` the intercept
/// coordinate (column 0 of an intercept design) is left out of the penalty.
pub fn penalized_log_likelihood_with(
    data: &Dataset,
    params: &MixtureParams,
    penalty: &PenaltySpec,
    free_intercept: bool,
) -> Result<f64> {
    let free = (free_intercept && data.has_intercept()).then_some(0);
    let pen = penalty_value(params, penalty, free)?;
    Ok(log_likelihood(data, params) - pen)
}

pub fn responsibilities(data: &Dataset, params: &MixtureParams) -> Responsibilities {
    check_dims(data, params);
    let mut tau = joint_log_densities(data, params);
    for mut row in tau.row_iter_mut() {
        let lse = log_sum_exp(&row.iter().copied().collect::<Vec<f64>>());
        row.apply(|v| *v = (*v - lse).exp());
        let s = row.sum();
        row /= s;
    }
    Responsibilities { tau }
}

/// `(Q₁, Q₂) = (ΣΣ τ_ij log π_j, ΣΣ τ_ij log φ_j)`.
pub fn q_decomposition(data: &Dataset, tau: &Responsibilities, params: &MixtureParams) -> (f64, f64) {
    check_dims(data, params);
    assert_eq!(tau.n(), data.n());
    assert_eq!(tau.n_components(), params.n_components());
    let mut q1 = 0.0;
    let mut q2 = 0.0;
    for c in 0..params.n_components() {
        let means = data.x() * &params.coeffs[c];
        let log_pi = params.weights[c].ln();
        for i in 0..data.n() {
            let t = tau.tau[(i, c)];
            if t == 0.0 {
                continue;
            }
            q1 += t * log_pi;
            q2 += t * normal_logpdf(data.y()[i], means[i], params.variances[c]);
        }
    }
    (q1, q2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_data(ys: &[f64]) -> Dataset {
        let x = DMatrix::from_element(ys.len(), 1, 1.0);
        Dataset::new(DVector::from_column_slice(ys), x, true).unwrap()
    }

    #[test]
    fn logpdf_values() {
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert_relative_eq!(component_logpdf(&[1.0, 1.0], 3.0, &b, 1.0), -0.5 * (2.0 * PI).ln());
        assert_relative_eq!(component_logpdf(&[1.0, 1.0], 4.0, &b, 1.0), -0.5 * (2.0 * PI).ln() - 0.5);
        // direct density: (2π·4)^{-1/2} exp(−4/8)
        let direct = ((2.0 * PI * 4.0).sqrt().recip() * (-0.5f64).exp()).ln();
        assert_relative_eq!(component_logpdf(&[1.0, 1.0], 5.0, &b, 4.0), direct, epsilon = 1e-14);
        assert_relative_eq!(direct, -0.5 * (8.0 * PI).ln() - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn single_component_loglik_is_sum_of_logpdfs() {
        let data = scalar_data(&[0.3, -1.2, 2.5]);
        let p = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![0.5])], vec![2.0]).unwrap();
        let direct: f64 = [0.3, -1.2, 2.5].iter().map(|y| normal_logpdf(*y, 0.5, 2.0)).sum();
        assert_relative_eq!(log_likelihood(&data, &p), direct, epsilon = 1e-12);
    }

    #[test]
    fn identical_components_match_single() {
        let data = scalar_data(&[0.3, -1.2, 2.5]);
        let b = DVector::from_vec(vec![0.5]);
        let one = MixtureParams::new(vec![1.0], vec![b.clone()], vec![2.0]).unwrap();
        let two = MixtureParams::new(vec![0.5, 0.5], vec![b.clone(), b], vec![2.0, 2.0]).unwrap();
        assert_relative_eq!(log_likelihood(&data, &one), log_likelihood(&data, &two), epsilon = 1e-12);
    }

    #[test]
    fn two_point_brute_force() {
        let data = scalar_data(&[0.0, 3.0]);
        let p = MixtureParams::new(
            vec![0.3, 0.7],
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])],
            vec![1.0, 0.5],
        )
        .unwrap();
        let dens = |y: f64, m: f64, s2: f64| (-(y - m) * (y - m) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
        let brute: f64 = [0.0, 3.0]
            .iter()
            .map(|&y| (0.3 * dens(y, 0.0, 1.0) + 0.7 * dens(y, 2.0, 0.5)).ln())
            .sum();
        assert_relative_eq!(log_likelihood(&data, &p), brute, epsilon = 1e-12);
    }

    #[test]
    fn ridge_penalty_values() {
        let data = scalar_data(&[0.3, -1.2, 2.5]);
        let p = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![1.0])], vec![1.0]).unwrap();
        let ll = log_likelihood(&data, &p);
        let zero = penalized_log_likelihood(&data, &p, &PenaltySpec::Ridge { k: vec![0.0] }).unwrap();
        assert_relative_eq!(zero, ll);
        let none = penalized_log_likelihood(&data, &p, &PenaltySpec::None).unwrap();
        assert_eq!(none, ll);

        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let data2 = Dataset::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), x, true).unwrap();
        let p2 = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![1.0, 1.0])], vec![1.0]).unwrap();
        let pen = penalized_log_likelihood(&data2, &p2, &PenaltySpec::Ridge { k: vec![2.0] }).unwrap();
        assert_relative_eq!(pen, log_likelihood(&data2, &p2) - 2.0, epsilon = 1e-12);
        let free = penalized_log_likelihood_with(&data2, &p2, &PenaltySpec::Ridge { k: vec![2.0] }, true).unwrap();
        assert_relative_eq!(free, log_likelihood(&data2, &p2) - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn liu_penalty_residual() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let data = Dataset::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), x, true).unwrap();
        let beta = DVector::from_vec(vec![1.0, -2.0]);
        let p = MixtureParams::new(vec![1.0], vec![beta.clone()], vec![1.0]).unwrap();
        let ll = log_likelihood(&data, &p);
        let k = 4.0;
        // d = −k with plugin = β: (k/√k)β − √kβ = 0
        let pen = PenaltySpec::LiuType {
            k: vec![k],
            d: vec![-k],
            plugin: vec![beta.clone()],
        };
        assert_relative_eq!(penalized_log_likelihood(&data, &p, &pen).unwrap(), ll, epsilon = 1e-12);
        // d = 1, plugin = (1,1): residual = (−1/2)(1,1) − 2(1,−2) = (−2.5, 3.5)
        let pen = PenaltySpec::LiuType {
            k: vec![k],
            d: vec![1.0],
            plugin: vec![DVector::from_vec(vec![1.0, 1.0])],
        };
        let expect = ll - (2.5f64 * 2.5 + 3.5 * 3.5) / 2.0;
        assert_relative_eq!(penalized_log_likelihood(&data, &p, &pen).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn liu_penalty_rejects_zero_k() {
        let data = scalar_data(&[0.3, -1.2, 2.5]);
        let p = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![1.0])], vec![1.0]).unwrap();
        let pen = PenaltySpec::LiuType {
            k: vec![0.0],
            d: vec![1.0],
            plugin: vec![DVector::from_vec(vec![1.0])],
        };
        assert!(matches!(
            penalized_log_likelihood(&data, &p, &pen),
            Err(Error::NonPositiveK { .. })
        ));
    }

    #[test]
    fn responsibilities_examples() {
        let data = scalar_data(&[0.5, 0.5, 0.5]);
        let one = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![0.0])], vec![1.0]).unwrap();
        let t = responsibilities(&data, &one);
        assert!(t.matrix().iter().all(|v| *v == 1.0));

        let two = MixtureParams::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])],
            vec![1.0, 1.0],
        )
        .unwrap();
        let t = responsibilities(&data, &two);
        for v in t.matrix().iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn responsibilities_brute_force() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 1.0, -1.0, 1.0, 3.0]);
        let ys = [0.7, -2.0, 4.0];
        let data = Dataset::new(DVector::from_column_slice(&ys), x.clone(), true).unwrap();
        let b1 = DVector::from_vec(vec![0.0, 1.0]);
        let b2 = DVector::from_vec(vec![1.0, -0.5]);
        let p = MixtureParams::new(vec![0.4, 0.6], vec![b1.clone(), b2.clone()], vec![0.8, 2.0]).unwrap();
        let dens = |y: f64, m: f64, s2: f64| (-(y - m) * (y - m) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
        let t = responsibilities(&data, &p);
        for i in 0..3 {
            let m1 = x[(i, 0)] * b1[0] + x[(i, 1)] * b1[1];
            let m2 = x[(i, 0)] * b2[0] + x[(i, 1)] * b2[1];
            let a = 0.4 * dens(ys[i], m1, 0.8);
            let b = 0.6 * dens(ys[i], m2, 2.0);
            assert_relative_eq!(t.matrix()[(i, 0)], a / (a + b), epsilon = 1e-12);
            assert_relative_eq!(t.matrix()[(i, 1)], b / (a + b), epsilon = 1e-12);
        }
    }

    #[test]
    fn responsibilities_survive_underflow() {
        let data = scalar_data(&[1e4, -1e4, 0.0]);
        let p = MixtureParams::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])],
            vec![1e-6, 1e-6],
        )
        .unwrap();
        let t = responsibilities(&data, &p);
        for row in t.matrix().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn q_decomposition_examples() {
        let data = scalar_data(&[0.0, 1.0]);
        let one = MixtureParams::new(vec![1.0], vec![DVector::from_vec(vec![0.0])], vec![1.0]).unwrap();
        let tau = responsibilities(&data, &one);
        let (q1, q2) = q_decomposition(&data, &tau, &one);
        assert_eq!(q1, 0.0);
        assert_relative_eq!(q2, log_likelihood(&data, &one), epsilon = 1e-12);

        let two = MixtureParams::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])],
            vec![1.0, 2.0],
        )
        .unwrap();
        let uniform = Responsibilities::from_matrix(DMatrix::from_element(2, 2, 0.5)).unwrap();
        let (q1, q2) = q_decomposition(&data, &uniform, &two);
        assert_relative_eq!(q1, 2.0 * 0.5f64.ln(), epsilon = 1e-14);
        let brute = 0.5 * (normal_logpdf(0.0, 0.0, 1.0) + normal_logpdf(0.0, 1.0, 2.0))
            + 0.5 * (normal_logpdf(1.0, 0.0, 1.0) + normal_logpdf(1.0, 1.0, 2.0));
        assert_relative_eq!(q2, brute, epsilon = 1e-14);
    }

    #[test]
    fn params_validation() {
        let b = || DVector::from_vec(vec![1.0]);
        assert!(MixtureParams::new(vec![0.5, 0.6], vec![b(), b()], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0, 0.0], vec![b(), b()], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![0.5, 0.5], vec![b(), b()], vec![1.0, 0.0]).is_err());
        assert!(MixtureParams::new(vec![0.5, 0.5], vec![b(), DVector::from_vec(vec![1.0, 2.0])], vec![1.0, 1.0]).is_err());
        let json = r#"{"weights":[0.7,0.3],"coeffs":[[1,2],[3,4]],"variances":[1,2]}"#;
        let p: MixtureParams = serde_json::from_str(json).unwrap();
        assert_eq!(p.coeffs()[1][0], 3.0);
        let bad = r#"{"weights":[0.7,0.4],"coeffs":[[1,2],[3,4]],"variances":[1,2]}"#;
        assert!(serde_json::from_str::<MixtureParams>(bad).is_err());
    }

    #[test]
    fn permutation_invariance_of_loglik() {
        let data = scalar_data(&[0.1, 2.0, -1.0, 0.4]);
        let p = MixtureParams::new(
            vec![0.2, 0.5, 0.3],
            vec![
                DVector::from_vec(vec![0.0]),
                DVector::from_vec(vec![1.5]),
                DVector::from_vec(vec![-1.0]),
            ],
            vec![1.0, 0.3, 2.0],
        )
        .unwrap();
        let q = p.permuted(&[2, 0, 1]);
        assert_relative_eq!(log_likelihood(&data, &p), log_likelihood(&data, &q), epsilon = 1e-12);
    }
}
