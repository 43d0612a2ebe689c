//! Per-component M-step solvers (ML, ridge, Liu-type) and the rules that
//! estimate the shrinkage parameters `k` and `d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{penalized_solve, WeightedDesign};

/// Lower clamp for the eigenvalue-based Liu-type `k`.
pub const LT_K_MIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentUpdate {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub k_used: f64,
    /// 0 unless the update is Liu-type.
    pub d_used: f64,
    /// The raw weighted variance fell below the floor and was clamped.
    pub floored: bool,
}

/// Options shared by the component solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOptions {
    pub variance_floor: f64,
    /// Leave coordinate 0 out of the penalty (intercept designs only).
    pub free_intercept: bool,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            variance_floor: crate::mixture::VARIANCE_FLOOR,
            free_intercept: false,
        }
    }
}

/// Which estimator supplies the plug-in inside the Liu-type correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginKind {
    Ml,
    Ridge,
}

/// Cross-products for one component's weighted least-squares problem.
pub struct WeightedProblem<'a> {
    design: WeightedDesign<'a>,
    y: &'a DVector<f64>,
    pub xtwx: DMatrix<f64>,
    pub xtwy: DVector<f64>,
    total_weight: f64,
}

impl<'a> WeightedProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, tau: &'a DVector<f64>) -> Result<Self> {
        if tau.len() == x.nrows() && tau.iter().all(|t| *t >= 0.0) && tau.sum() <= 0.0 {
            return Err(Error::ZeroResponsibility);
        }
        let design = WeightedDesign::new(x, tau)?;
        let (xtwx, xtwy) = crate::numerics::weighted_cross_products(&design, y)?;
        Ok(Self {
            design,
            y,
            xtwx,
            xtwy,
            total_weight: tau.sum(),
        })
    }

    pub fn p(&self) -> usize {
        self.xtwx.nrows()
    }

    pub fn design(&self) -> &WeightedDesign<'a> {
        &self.design
    }

    fn penalty_vector(&self, k: f64, opts: &UpdateOptions) -> DVector<f64> {
        let mut pen = DVector::from_element(self.p(), k);
        if opts.free_intercept {
            pen[0] = 0.0;
        }
        pen
    }

    fn finish(&self, beta: DVector<f64>, k: f64, d: f64, opts: &UpdateOptions) -> ComponentUpdate {
        let raw = self.design.weighted_rss(self.y, &beta) / self.total_weight;
        let floored = !(raw >= opts.variance_floor);
        ComponentUpdate {
            beta,
            sigma2: if floored { opts.variance_floor } else { raw },
            k_used: k,
            d_used: d,
            floored,
        }
    }

    pub fn ml(&self, opts: &UpdateOptions) -> Result<ComponentUpdate> {
        let beta = penalized_solve(&self.xtwx, &self.xtwy, &DVector::zeros(self.p()))?;
        Ok(self.finish(beta, 0.0, 0.0, opts))
    }

    pub fn ridge(&self, k: f64, opts: &UpdateOptions) -> Result<ComponentUpdate> {
        let beta = penalized_solve(&self.xtwx, &self.xtwy, &self.penalty_vector(k, opts))?;
        Ok(self.finish(beta, k, 0.0, opts))
    }

    pub fn liu(&self, k: f64, d: f64, plugin: &DVector<f64>, opts: &UpdateOptions) -> Result<ComponentUpdate> {
        if plugin.len() != self.p() {
            return Err(Error::DimensionMismatch {
                context: "Liu-type plug-in",
                expected: self.p(),
                found: plugin.len(),
            });
        }
        if !(k > 0.0) {
            return Err(Error::NonPositiveK { component: 0, k });
        }
        let pen = self.penalty_vector(k, opts);
        // the correction −dβ̂ is masked exactly like the penalty
        let rhs = &self.xtwy - (pen.map(|v| if v > 0.0 { d } else { 0.0 })).component_mul(plugin);
        let beta = penalized_solve(&self.xtwx, &rhs, &pen)?;
        Ok(self.finish(beta, k, d, opts))
    }
}

/// Unpenalized weighted least squares.
pub fn ml_component_update(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: &DVector<f64>,
    opts: &UpdateOptions,
) -> Result<ComponentUpdate> {
    let problem = WeightedProblem::new(x, y, tau)?;
    problem.ml(opts).map_err(|e| match e {
        Error::Singular { .. } => rank_error(&problem),
        other => other,
    })
}

fn rank_error(problem: &WeightedProblem<'_>) -> Error {
    let rank = crate::numerics::symmetric_eigen(&problem.xtwx)
        .map(|e| crate::numerics::numerical_rank(&e.eigenvalues))
        .unwrap_or(0);
    Error::RankDeficient {
        rank: rank.min(problem.p().saturating_sub(1)),
        p: problem.p(),
    }
}

pub fn ridge_component_update(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: &DVector<f64>,
    k: f64,
    opts: &UpdateOptions,
) -> Result<ComponentUpdate> {
    WeightedProblem::new(x, y, tau)?.ridge(k, opts)
}

pub fn lt_component_update(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: &DVector<f64>,
    k: f64,
    d: f64,
    plugin_beta: &DVector<f64>,
    opts: &UpdateOptions,
) -> Result<ComponentUpdate> {
    WeightedProblem::new(x, y, tau)?.liu(k, d, plugin_beta, opts)
}

/// `k = p σ̂² / β̂ᵀβ̂`.
pub fn ridge_k_hkp(beta_ml: &DVector<f64>, sigma2_ml: f64, p: usize) -> Result<f64> {
    let bb = beta_ml.norm_squared();
    if !(bb > 0.0) {
        return Err(Error::ZeroCoefficients);
    }
    let k = p as f64 * sigma2_ml / bb;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::NonFinite("HKP ridge parameter"));
    }
    Ok(k)
}

/// `k = max(ε, (λ₁ − 100 λ_p) / 99)`, the smallest `k` bounding the
/// condition number of `XᵀWX + kI` by 100.
pub fn lt_k_eigen(eigenvalues: &DVector<f64>) -> f64 {
    let top = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let k = (top - 100.0 * bottom) / 99.0;
    if k.is_finite() {
        k.max(LT_K_MIN)
    } else {
        LT_K_MIN
    }
}

/// The `d` minimizing the canonical MSE of the Liu-type estimator for fixed
/// `k`, with either the ML or the ridge estimate as plug-in.
pub fn lt_d_optimal(
    eigenvalues: &DVector<f64>,
    alpha: &DVector<f64>,
    sigma2: f64,
    k: f64,
    plugin: PluginKind,
) -> Result<f64> {
    if eigenvalues.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            context: "lt_d_optimal",
            expected: eigenvalues.len(),
            found: alpha.len(),
        });
    }
    if !(k > 0.0) {
        return Err(Error::NonPositiveK { component: 0, k });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&lam, &a) in eigenvalues.iter().zip(alpha.iter()) {
        let lam = lam.max(0.0);
        let a2 = a * a;
        let s = lam + k;
        match plugin {
            PluginKind::Ml => {
                if lam <= 0.0 {
                    return Err(Error::ZeroDenominator);
                }
                num += (sigma2 - k * a2) / (s * s);
                den += (lam * a2 + sigma2) / (lam * s * s);
            }
            PluginKind::Ridge => {
                num += lam * (sigma2 - k * a2) / (s * s * s);
                den += lam * (lam * a2 + sigma2) / (s * s * s * s);
            }
        }
    }
    if !(den.abs() > 0.0) || !den.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    let d = num / den;
    if !d.is_finite() {
        return Err(Error::NonFinite("Liu-type d"));
    }
    Ok(d)
}

/// Data-driven `d̂` from ridge plug-ins: the ridge-plug-in optimum.
pub fn lt_d_practical(eigenvalues: &DVector<f64>, alpha_ridge: &DVector<f64>, sigma2_ridge: f64, k: f64) -> Result<f64> {
    lt_d_optimal(eigenvalues, alpha_ridge, sigma2_ridge, k, PluginKind::Ridge)
}

/// The `d̂` display taken literally: ridge-case numerator over
/// `Σ (λα² + σ⁴) / (λ + k)²`. Kept for comparison runs only.
pub fn lt_d_printed(eigenvalues: &DVector<f64>, alpha_ridge: &DVector<f64>, sigma2_ridge: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::NonPositiveK { component: 0, k });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&lam, &a) in eigenvalues.iter().zip(alpha_ridge.iter()) {
        let lam = lam.max(0.0);
        let s = lam + k;
        num += lam * (sigma2_ridge - k * a * a) / (s * s * s);
        den += (lam * a * a + sigma2_ridge * sigma2_ridge) / (s * s);
    }
    if !(den.abs() > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::canonical_basis;
    use approx::assert_relative_eq;

    fn opts() -> UpdateOptions {
        UpdateOptions::default()
    }

    fn collinear_toy() -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        // two covariates correlated at ~0.999 plus an intercept
        let n = 12;
        let x = DMatrix::from_fn(n, 3, |i, j| {
            let t = i as f64 / n as f64;
            match j {
                0 => 1.0,
                1 => t,
                _ => t + 0.002 * ((i * 7 % 5) as f64 - 2.0),
            }
        });
        let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 1)] - x[(i, 2)] + 0.05 * ((i * 3 % 4) as f64 - 1.5));
        let tau = DVector::from_fn(n, |i, _| 0.2 + 0.8 * ((i * 5 % 7) as f64) / 6.0);
        (x, y, tau)
    }

    #[test]
    fn ml_perfect_fit_hits_floor() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let u = ml_component_update(&x, &y, &DVector::from_element(3, 1.0), &opts()).unwrap();
        assert_relative_eq!(u.beta, y, epsilon = 1e-12);
        assert_eq!(u.sigma2, crate::mixture::VARIANCE_FLOOR);
        assert!(u.floored);
    }

    #[test]
    fn ml_intercept_only() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![0.0, 0.0, 2.0, 2.0]);
        let u = ml_component_update(&x, &y, &DVector::from_element(4, 1.0), &opts()).unwrap();
        assert_relative_eq!(u.beta[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(u.sigma2, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ml_zero_responsibility() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::zeros(4);
        let r = ml_component_update(&x, &y, &DVector::zeros(4), &opts());
        assert!(matches!(r, Err(Error::ZeroResponsibility)));
    }

    #[test]
    fn ml_rank_deficient() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let r = ml_component_update(&x, &DVector::zeros(3), &DVector::from_element(3, 1.0), &opts());
        assert!(matches!(r, Err(Error::RankDeficient { p: 2, .. })));
    }

    #[test]
    fn hkp_examples() {
        assert_relative_eq!(ridge_k_hkp(&DVector::from_vec(vec![1.0, 1.0]), 1.0, 2).unwrap(), 1.0);
        assert_relative_eq!(ridge_k_hkp(&DVector::from_element(4, 1.0), 2.0, 4).unwrap(), 2.0);
        assert!(matches!(ridge_k_hkp(&DVector::zeros(3), 1.0, 3), Err(Error::ZeroCoefficients)));
    }

    #[test]
    fn hkp_from_ml_fit() {
        let (x, y, tau) = collinear_toy();
        let ml = ml_component_update(&x, &y, &tau, &opts()).unwrap();
        let k = ridge_k_hkp(&ml.beta, ml.sigma2, 3).unwrap();
        let oracle = 3.0 * ml.sigma2 / ml.beta.iter().map(|b| b * b).sum::<f64>();
        assert_relative_eq!(k, oracle, epsilon = 1e-15);
    }

    #[test]
    fn ridge_reductions() {
        let (x, y, tau) = collinear_toy();
        let ml = ml_component_update(&x, &y, &tau, &opts()).unwrap();
        let r0 = ridge_component_update(&x, &y, &tau, 0.0, &opts()).unwrap();
        assert_relative_eq!(ml.beta, r0.beta, epsilon = 1e-10);
        assert_relative_eq!(ml.sigma2, r0.sigma2, epsilon = 1e-12);
        let big = ridge_component_update(&x, &y, &tau, 1e12, &opts()).unwrap();
        assert!(big.beta.norm() < 1e-6);
    }

    #[test]
    fn ridge_matches_canonical_route() {
        let (x, y, tau) = collinear_toy();
        let k = 0.5;
        let direct = ridge_component_update(&x, &y, &tau, k, &opts()).unwrap();
        let design = WeightedDesign::new(&x, &tau).unwrap();
        let basis = canonical_basis(&design).unwrap();
        let z = basis.canonical_response(&design, &y);
        let canon = basis.to_coefficients(&basis.ridge_alpha(&z, k));
        assert!((canon - &direct.beta).norm() <= 1e-6 * direct.beta.norm());
    }

    #[test]
    fn lt_k_examples() {
        assert_eq!(lt_k_eigen(&DVector::from_vec(vec![100.0, 1.0])), LT_K_MIN);
        assert_relative_eq!(lt_k_eigen(&DVector::from_vec(vec![1000.0, 1.0])), 900.0 / 99.0, epsilon = 1e-12);
        assert_eq!(lt_k_eigen(&DVector::from_vec(vec![10.0, 5.0])), LT_K_MIN);
    }

    #[test]
    fn lt_d_examples() {
        let one = |v: f64| DVector::from_vec(vec![v]);
        // ML case, k → 0: d → λσ²/(λα² + σ²) = 1/2
        let d = lt_d_optimal(&one(1.0), &one(1.0), 1.0, 1e-12, PluginKind::Ml).unwrap();
        assert_relative_eq!(d, 0.5, epsilon = 1e-9);
        // ridge case with σ² = kα²
        let d = lt_d_optimal(&one(1.0), &one(1.0), 1.0, 1.0, PluginKind::Ridge).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(lt_d_practical(&one(1.0), &one(1.0), 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(lt_d_practical(&one(4.0), &one(0.5), 0.25, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lt_d_brute_force_sums() {
        let lam = DVector::from_vec(vec![7.5, 1.3, 0.02]);
        let alpha = DVector::from_vec(vec![2.0, -0.7, 0.4]);
        let (s2, k): (f64, f64) = (0.8, 0.15);
        let mut n1 = 0.0;
        let mut d1 = 0.0;
        let mut n2 = 0.0;
        let mut d2 = 0.0;
        for m in 0..3 {
            let (l, a) = (lam[m], alpha[m]);
            n1 += (s2 - k * a * a) / (l + k).powi(2);
            d1 += (l * a * a + s2) / (l * (l + k).powi(2));
            n2 += l * (s2 - k * a * a) / (l + k).powi(3);
            d2 += l * (l * a * a + s2) / (l + k).powi(4);
        }
        assert_relative_eq!(lt_d_optimal(&lam, &alpha, s2, k, PluginKind::Ml).unwrap(), n1 / d1, max_relative = 1e-12);
        assert_relative_eq!(
            lt_d_optimal(&lam, &alpha, s2, k, PluginKind::Ridge).unwrap(),
            n2 / d2,
            max_relative = 1e-12
        );
        assert!(lt_d_optimal(&lam, &alpha, s2, 0.0, PluginKind::Ridge).is_err());
    }

    #[test]
    fn lt_d_practical_on_ridge_fit_is_bounded() {
        let (x, y, tau) = collinear_toy();
        let design = WeightedDesign::new(&x, &tau).unwrap();
        let basis = canonical_basis(&design).unwrap();
        let k = lt_k_eigen(&basis.eigen.eigenvalues);
        let ridge = ridge_component_update(&x, &y, &tau, k, &opts()).unwrap();
        let alpha = basis.to_canonical(&ridge.beta);
        let d = lt_d_practical(&basis.eigen.eigenvalues, &alpha, ridge.sigma2, k).unwrap();
        assert!(d.is_finite());
        assert!(d.abs() < basis.eigen.eigenvalues[0]);
    }

    #[test]
    fn liu_reductions() {
        let (x, y, tau) = collinear_toy();
        let plugin = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let k = 0.7;
        let lt = lt_component_update(&x, &y, &tau, k, 0.0, &plugin, &opts()).unwrap();
        let rr = ridge_component_update(&x, &y, &tau, k, &opts()).unwrap();
        assert_relative_eq!(lt.beta, rr.beta, epsilon = 1e-12);

        let ml = ml_component_update(&x, &y, &tau, &opts()).unwrap();
        let tiny = lt_component_update(&x, &y, &tau, 1e-10, 0.0, &plugin, &opts()).unwrap();
        assert!((tiny.beta - &ml.beta).norm() < 1e-4 * ml.beta.norm());
    }

    #[test]
    fn liu_matches_canonical_route() {
        let (x, y, tau) = collinear_toy();
        let design = WeightedDesign::new(&x, &tau).unwrap();
        let basis = canonical_basis(&design).unwrap();
        let k = lt_k_eigen(&basis.eigen.eigenvalues);
        let ridge = ridge_component_update(&x, &y, &tau, k, &opts()).unwrap();
        let alpha_r = basis.to_canonical(&ridge.beta);
        let d = lt_d_practical(&basis.eigen.eigenvalues, &alpha_r, ridge.sigma2, k).unwrap();
        let direct = lt_component_update(&x, &y, &tau, k, d, &ridge.beta, &opts()).unwrap();
        let z = basis.canonical_response(&design, &y);
        let canon = basis.to_coefficients(&basis.liu_alpha(&z, k, d, &alpha_r));
        assert!((canon - &direct.beta).norm() <= 1e-6 * direct.beta.norm());
    }

    #[test]
    fn free_intercept_leaves_intercept_unshrunk() {
        let (x, y, tau) = collinear_toy();
        let o = UpdateOptions {
            free_intercept: true,
            ..opts()
        };
        let big = ridge_component_update(&x, &y, &tau, 1e12, &o).unwrap();
        // with slopes shrunk to zero the intercept is the weighted mean of y
        let wmean = tau.dot(&y) / tau.sum();
        assert_relative_eq!(big.beta[0], wmean, epsilon = 1e-6);
        assert!(big.beta.rows(1, 2).norm() < 1e-6);
    }
}
