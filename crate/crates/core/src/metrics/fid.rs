//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues down to `-NEG_EIGEN_TOL · max(1, λ_max)` are treated as
/// rounding noise and clipped to zero.
pub const NEG_EIGEN_TOL: f64 = 1e-8;

/// Mean and unbiased covariance of row features.
pub fn gaussian_fit(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 feature vectors, got {n}"
        )));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::Dimension(
            "feature vectors must share a non-zero length".into(),
        ));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    if n < d + 1 {
        log::warn!(
            "FID over {n} samples with {d}-dimensional features: covariance is rank-deficient"
        );
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn symmetric_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = NEG_EIGEN_TOL * max.max(1.0);
    if let Some(&worst) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::Numerical(format!(
            "{what} is not positive semi-definite (eigenvalue {worst:e})"
        )));
    }
    Ok(eig)
}

/// Principal square root of a symmetric PSD matrix.
fn sqrt_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m, what)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^½)`.
///
/// The trace of `(ΣaΣb)^½` equals that of `(Σa^½ Σb Σa^½)^½`, which is
/// symmetric, so it is evaluated from the eigenvalues of that product.
pub fn frechet_distance(
    mu_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu_a.len();
    if mu_b.len() != d || cov_a.shape() != (d, d) || cov_b.shape() != (d, d) {
        return Err(Error::Dimension("Gaussian fits differ in dimension".into()));
    }
    let root_a = sqrt_psd(cov_a, "first covariance")?;
    let inner = &root_a * cov_b * &root_a;
    let eig = symmetric_eigen(&inner, "covariance product")?;
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let diff = mu_a - mu_b;
    let value = diff.dot(&diff) + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

/// FID between two sets of feature vectors.
pub fn fid_from_features(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, cov_a) = gaussian_fit(a)?;
    let (mu_b, cov_b) = gaussian_fit(b)?;
    frechet_distance(&mu_a, &cov_a, &mu_b, &cov_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_give_zero() {
        let feats: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                (0..4)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0)
                    .collect()
            })
            .collect();
        assert!(fid_from_features(&feats, &feats).unwrap() <= 1e-8);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let one = vec![vec![0.0, 1.0]];
        assert!(fid_from_features(&one, &one).is_err());
    }

    #[test]
    fn pure_mean_shift() {
        let a: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let b: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + 2.0, v[1]]).collect();
        assert!((fid_from_features(&a, &b).unwrap() - 4.0).abs() < 1e-9);
    }
}
