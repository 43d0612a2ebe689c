//! Weighted linear-algebra kernels shared by every estimator.
//!
//! Everything here works on the weighted cross-product `XᵀWX` of a design
//! with a diagonal weight matrix `W`. Solves go through a Cholesky factor of
//! the regularized matrix; the canonical (eigenbasis) forms are provided as an
//! independent route used to cross-check the direct solves.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `λ_p ≤ RANK_TOL · λ_1` declares a weighted design rank deficient.
pub const RANK_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// A design matrix paired with the diagonal of a non-negative weight matrix.
#[derive(Debug, Clone, Copy)]
pub struct WeightedDesign<'a> {
    x: &'a DMatrix<f64>,
    w: &'a DVector<f64>,
}

impl<'a> WeightedDesign<'a> {
    pub fn new(x: &'a DMatrix<f64>, w: &'a DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidData("design must have at least one row and column".into()));
        }
        if w.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "weights",
                expected: x.nrows(),
                found: w.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if !w.iter().any(|v| *v > 0.0) {
            return Err(Error::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(Self { x, w })
    }

    pub fn x(&self) -> &'a DMatrix<f64> {
        self.x
    }

    pub fn weights(&self) -> &'a DVector<f64> {
        self.w
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn total_weight(&self) -> f64 {
        self.w.sum()
    }

    /// `XᵀWX` alone.
    pub fn gram(&self) -> DMatrix<f64> {
        let (n, p) = self.x.shape();
        let mut g = DMatrix::zeros(p, p);
        for i in 0..n {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            for a in 0..p {
                let xa = wi * self.x[(i, a)];
                for b in a..p {
                    g[(a, b)] += xa * self.x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    /// Weighted residual sum of squares `(y − Xβ)ᵀW(y − Xβ)`.
    pub fn weighted_rss(&self, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        let fitted = self.x * beta;
        self.w
            .iter()
            .zip(y.iter().zip(fitted.iter()))
            .map(|(w, (yi, fi))| w * (yi - fi) * (yi - fi))
            .sum()
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// The eigen-pair of `XᵀWX` together with `V₁ = W^{1/2} X U Λ^{-1/2}`.
#[derive(Debug, Clone)]
pub struct CanonicalBasis {
    pub eigen: EigenSystem,
    pub v1: DMatrix<f64>,
}

pub fn weighted_cross_products(
    design: &WeightedDesign<'_>,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if y.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            context: "response",
            expected: design.nrows(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let wy = design.w.component_mul(y);
    let xtwy = design.x.tr_mul(&wy);
    Ok((design.gram(), xtwy))
}

pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<EigenSystem> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "symmetric_eigen (square matrix)",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let scale = a.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }

    let eig = SymmetricEigen::new(a.clone());
    let p = a.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Numerical rank of a descending spectrum under [`RANK_TOL`].
pub fn numerical_rank(eigenvalues: &DVector<f64>) -> usize {
    let top = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count()
}

pub fn canonical_basis(design: &WeightedDesign<'_>) -> Result<CanonicalBasis> {
    let p = design.ncols();
    let eigen = symmetric_eigen(&design.gram())?;
    let rank = numerical_rank(&eigen.eigenvalues);
    if rank < p {
        return Err(Error::RankDeficient { rank, p });
    }

    // V₁ = W^{1/2} X U Λ^{-1/2}
    let mut sqrt_w_x = design.x.clone();
    for (i, mut row) in sqrt_w_x.row_iter_mut().enumerate() {
        row *= design.w[i].sqrt();
    }
    let mut v1 = sqrt_w_x * &eigen.eigenvectors;
    for (m, mut col) in v1.column_iter_mut().enumerate() {
        col /= eigen.eigenvalues[m].sqrt();
    }
    Ok(CanonicalBasis { eigen, v1 })
}

impl CanonicalBasis {
    pub fn p(&self) -> usize {
        self.eigen.eigenvalues.len()
    }

    /// `Λ^{1/2} V₁ᵀ W^{1/2} y`, the canonical right-hand side.
    pub fn canonical_response(&self, design: &WeightedDesign<'_>, y: &DVector<f64>) -> DVector<f64> {
        let sqrt_w_y = DVector::from_iterator(
            y.len(),
            design.w.iter().zip(y.iter()).map(|(w, yi)| w.sqrt() * yi),
        );
        let mut z = self.v1.tr_mul(&sqrt_w_y);
        for (m, zm) in z.iter_mut().enumerate() {
            *zm *= self.eigen.eigenvalues[m].sqrt();
        }
        z
    }

    /// Canonical weighted ridge estimate `(Λ + kI)⁻¹ z`.
    pub fn ridge_alpha(&self, z: &DVector<f64>, k: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            z.iter()
                .zip(self.eigen.eigenvalues.iter())
                .map(|(zm, lm)| zm / (lm + k)),
        )
    }

    /// Canonical Liu-type estimate `(Λ + kI)⁻¹ (z − d α̂)`.
    pub fn liu_alpha(&self, z: &DVector<f64>, k: f64, d: f64, plugin_alpha: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            (0..self.p()).map(|m| (z[m] - d * plugin_alpha[m]) / (self.eigen.eigenvalues[m] + k)),
        )
    }

    /// `Uα`.
    pub fn to_coefficients(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.eigen.eigenvectors * alpha
    }

    /// `Uᵀβ`.
    pub fn to_canonical(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.eigen.eigenvectors.tr_mul(beta)
    }
}

/// Solves `(XᵀWX + kI) β = rhs` through a Cholesky factorization.
pub fn ridge_solve(xtwx: &DMatrix<f64>, rhs: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
    let p = xtwx.nrows();
    let penalty = DVector::from_element(p, k);
    penalized_solve(xtwx, rhs, &penalty)
}

/// Solves `(XᵀWX + diag(penalty)) β = rhs`; `penalty` may carry zeros for
/// coordinates left unregularized.
pub fn penalized_solve(xtwx: &DMatrix<f64>, rhs: &DVector<f64>, penalty: &DVector<f64>) -> Result<DVector<f64>> {
    let p = xtwx.nrows();
    if !xtwx.is_square() || rhs.len() != p || penalty.len() != p {
        return Err(Error::DimensionMismatch {
            context: "ridge_solve",
            expected: p,
            found: rhs.len(),
        });
    }
    let k = penalty.max();
    if penalty.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(format!("ridge parameter must be finite and >= 0, got {k}")));
    }
    if rhs.iter().any(|v| !v.is_finite()) || xtwx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge_solve input"));
    }

    let mut a = xtwx.clone();
    for i in 0..p {
        a[(i, i)] += penalty[i];
    }
    let scale = (0..p).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let chol = Cholesky::new(a).ok_or(Error::Singular { k })?;
    let l = chol.l_dirty();
    let min_pivot = (0..p).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || min_pivot <= RANK_TOL * scale {
        return Err(Error::Singular { k });
    }
    Ok(chol.solve(rhs))
}

/// Rows of `x` selected by `idx`, in order.
pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
