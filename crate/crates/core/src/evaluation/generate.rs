//! Synthetic designs with a shared latent factor and mixture responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mixture::{with_intercept, MixtureParams};

/// `x_ij = √(1−ρ²) w_ij + ρ w_i,shared` with independent standard normal `w`;
/// covariates then have unit variance and pairwise correlation `ρ²`.
pub fn generate_collinear_design<R: Rng + ?Sized>(n: usize, n_covariates: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    let own = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, n_covariates);
    let mut w = vec![0.0; n_covariates + 1];
    for i in 0..n {
        for v in w.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let shared = w[n_covariates];
        for c in 0..n_covariates {
            x[(i, c)] = own * w[c] + rho * shared;
        }
    }
    Ok(x)
}

/// Draws a component label from `π` for each row and returns
/// `(y, labels)` with `y_i = x_iᵀβ_label + N(0, σ²_label)`.
pub fn generate_mixture_responses<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    params: &MixtureParams,
    rng: &mut R,
) -> Result<(DVector<f64>, Vec<usize>)> {
    if x.ncols() != params.n_coeffs() {
        return Err(Error::DimensionMismatch {
            context: "design columns vs coefficients",
            expected: params.n_coeffs(),
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    let sds: Vec<f64> = params.variances().iter().map(|s| s.sqrt()).collect();
    let mut y = DVector::zeros(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = draw_label(params.weights(), rng);
        let mean = x.row(i).transpose().dot(&params.coeffs()[label]);
        let e: f64 = StandardNormal.sample(rng);
        y[i] = mean + sds[label] * e;
        labels.push(label);
    }
    Ok((y, labels))
}

/// One categorical draw from `weights` (non-negative, summing to one).
pub fn draw_label<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in weights.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // u fell in the rounding gap: take the last component with positive weight
    weights.iter().rposition(|&p| p > 0.0).unwrap_or(weights.len() - 1)
}

/// Design with an optional leading intercept column followed by collinear covariates.
pub fn generate_design<R: Rng + ?Sized>(
    n: usize,
    n_covariates: usize,
    rho: f64,
    intercept: bool,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    Ok(with_intercept(&generate_collinear_design(n, n_covariates, rho, rng)?, intercept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn col(x: &DMatrix<f64>, c: usize) -> Vec<f64> {
        x.column(c).iter().copied().collect()
    }

    #[test]
    fn independent_columns_at_zero_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 2000;
        let x = generate_collinear_design(n, 4, 0.0, &mut rng).unwrap();
        for a in 0..4 {
            for b in 0..a {
                assert!(corr(&col(&x, a), &col(&x, b)).abs() <= 4.0 / (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn correlation_is_rho_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let x = generate_collinear_design(n, 4, 0.99, &mut rng).unwrap();
        for a in 0..4 {
            for b in 0..a {
                let r = corr(&col(&x, a), &col(&x, b));
                assert!((r - 0.9801).abs() <= 0.01, "{r}");
            }
            let v = col(&x, a);
            let m = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            assert!((var - 1.0).abs() <= 5.0 / (n as f64).sqrt(), "{var}");
        }
    }

    #[test]
    fn rejects_rho_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(generate_collinear_design(5, 2, 1.0, &mut rng).is_err());
        assert!(generate_collinear_design(5, 2, -0.1, &mut rng).is_err());
    }

    #[test]
    fn single_component_near_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = generate_design(50, 2, 0.5, true, &mut rng).unwrap();
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let p = MixtureParams::new(vec![1.0], vec![beta.clone()], vec![1e-8]).unwrap();
        let (y, labels) = generate_mixture_responses(&x, &p, &mut rng).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        assert!((y - &x * beta).amax() < 1e-3);
    }

    #[test]
    fn degenerate_weights_always_pick_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..1000).all(|_| draw_label(&[1.0, 0.0], &mut rng) == 0));
    }

    #[test]
    fn label_frequencies_match_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = generate_design(10_000, 1, 0.0, true, &mut rng).unwrap();
        let p = MixtureParams::new(
            vec![0.3, 0.7],
            vec![DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![1.0, 0.0])],
            vec![1.0, 1.0],
        )
        .unwrap();
        let (_, labels) = generate_mixture_responses(&x, &p, &mut rng).unwrap();
        let f0 = labels.iter().filter(|&&l| l == 0).count() as f64 / 10_000.0;
        assert!((f0 - 0.3).abs() <= 0.02);
    }
}
