//! Sample covariance, symmetric eigendecomposition and top-d PCA projection.
//!
//! Covariances use the 1/n normalization. Eigenvalues are returned in
//! descending order and each eigenvector is sign-normalized so that its
//! largest-magnitude component (lowest index on ties) is non-negative, which
//! makes fitted bases deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sample::SampleMatrix;

/// Relative tolerance for the symmetry check on eigensolver input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Sample mean of the columns, accumulated in sample order.
pub fn sample_mean(samples: &SampleMatrix) -> DVector<f64> {
    let mut mean = DVector::zeros(samples.dim());
    for x in samples.samples() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean / samples.count() as f64
}

fn centered(samples: &SampleMatrix, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = samples.matrix().clone();
    for mut col in x.column_iter_mut() {
        col -= mean;
    }
    x
}

/// `(1/n) Σ (X_i − m)(X_i − m)ᵀ`, with `m` the sample mean when `center` is
/// set and zero otherwise. The result is exactly symmetric.
pub fn compute_covariance(samples: &SampleMatrix, center: bool) -> DMatrix<f64> {
    let xc = if center {
        centered(samples, &sample_mean(samples))
    } else {
        samples.matrix().clone()
    };
    let mut cov = &xc * xc.transpose() / samples.count() as f64;
    symmetrize(&mut cov);
    cov
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(self.values.clone()));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidData(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("matrix has non-finite entries".into()));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(Error::InvalidData(format!(
                    "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {diff:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Eigendecomposition `A = V Λ Vᵀ` of a symmetric matrix.
pub fn symmetric_eigendecomposition(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 100 * n.max(1))
        .ok_or_else(|| {
            Error::NumericalFailure(format!(
                "symmetric eigensolver did not converge within {} iterations",
                100 * n
            ))
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep the solver's order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        let lead = v.iter().enumerate().fold(
            0,
            |best, (k, x)| if x.abs() > v[best].abs() { k } else { best },
        );
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Fitted top-d principal subspace and the spectral diagnostics of the
/// covariance it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `D × d`, orthonormal columns: the top-d eigenvectors.
    pub basis: DMatrix<f64>,
    /// All D eigenvalues, descending, negatives from roundoff clamped to 0.
    pub spectrum: Vec<f64>,
    pub ambient_dim: usize,
    pub target_dim: usize,
    /// `½(λ_d − λ_{d+1})`, or `½λ_D` when `d = D`.
    pub eigen_gap: f64,
    /// `Σ_{i>d} λ_i`.
    pub residual: f64,
    /// Centering vector subtracted before projecting (zero when uncentered).
    pub mean: DVector<f64>,
}

impl PcaModel {
    /// Assembles a model from its parts, recomputing gap and residual.
    pub fn from_parts(basis: DMatrix<f64>, spectrum: Vec<f64>, mean: DVector<f64>) -> Result<Self> {
        let ambient_dim = basis.nrows();
        let target_dim = basis.ncols();
        if target_dim == 0 || target_dim > ambient_dim {
            return Err(Error::InvalidConfig(format!(
                "target dimension {target_dim} outside 1..={ambient_dim}"
            )));
        }
        if spectrum.len() != ambient_dim || mean.len() != ambient_dim {
            return Err(Error::InvalidData(format!(
                "spectrum/mean length must equal ambient dimension {ambient_dim}"
            )));
        }
        let spectrum: Vec<f64> = spectrum.into_iter().map(|l| l.max(0.0)).collect();
        let d = target_dim;
        let eigen_gap = if d < ambient_dim {
            0.5 * (spectrum[d - 1] - spectrum[d]).max(0.0)
        } else {
            0.5 * spectrum[d - 1]
        };
        let residual = spectrum[d..].iter().sum();
        Ok(Self {
            basis,
            spectrum,
            ambient_dim,
            target_dim,
            eigen_gap,
            residual,
            mean,
        })
    }

    /// Orthogonal projector `basis · basisᵀ` onto the fitted hyperplane.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `λ_{d+1}`, or 0 when nothing is discarded.
    pub fn first_discarded_eigenvalue(&self) -> f64 {
        self.spectrum.get(self.target_dim).copied().unwrap_or(0.0)
    }
}

/// Fits the top-`d` principal subspace of `compute_covariance(samples, center)`.
pub fn fit_pca(samples: &SampleMatrix, d: usize, center: bool) -> Result<PcaModel> {
    let dim = samples.dim();
    if d == 0 || d > dim {
        return Err(Error::InvalidConfig(format!(
            "target dimension {d} outside 1..={dim}"
        )));
    }
    let mean = if center {
        sample_mean(samples)
    } else {
        DVector::zeros(dim)
    };
    let cov = compute_covariance(samples, center);
    let eig = symmetric_eigendecomposition(&cov)?;
    let basis = eig.vectors.columns(0, d).into_owned();
    PcaModel::from_parts(basis, eig.values, mean)
}

/// `basisᵀ (X_i − mean)` for every sample.
pub fn project(samples: &SampleMatrix, model: &PcaModel) -> Result<SampleMatrix> {
    if samples.dim() != model.ambient_dim {
        return Err(Error::InvalidData(format!(
            "samples have dimension {}, model expects {}",
            samples.dim(),
            model.ambient_dim
        )));
    }
    let xc = centered(samples, &model.mean);
    SampleMatrix::new(model.basis.transpose() * xc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_of_single_sample() {
        let x = SampleMatrix::from_samples(&[[1.0, 0.0]]).unwrap();
        let c = compute_covariance(&x, false);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let c = compute_covariance(&x, true);
        assert_eq!(c, DMatrix::zeros(2, 2));
    }

    #[test]
    fn eigen_of_identity_and_diagonal() {
        let e = symmetric_eigendecomposition(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);

        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 2.0]));
        let e = symmetric_eigendecomposition(&a).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert!((&e.vectors - expected).amax() < 1e-12);
    }

    #[test]
    fn eigen_of_two_by_two() {
        // characteristic polynomial (2-λ)² − 1 = 0 → λ ∈ {3, 1}
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigendecomposition(&a).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(e.vectors[(0, 0)], s, epsilon = 1e-12);
        assert_relative_eq!(e.vectors[(1, 0)], s, epsilon = 1e-12);
        // (1, −1)/√2 up to the sign convention: lowest-index tie is positive
        assert_relative_eq!(e.vectors[(0, 1)], s, epsilon = 1e-12);
        assert_relative_eq!(e.vectors[(1, 1)], -s, epsilon = 1e-12);
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            symmetric_eigendecomposition(&a),
            Err(Error::InvalidData(_))
        ));
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(symmetric_eigendecomposition(&a).is_err());
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(symmetric_eigendecomposition(&a).is_err());
    }

    #[test]
    fn fit_on_rank_d_data_has_zero_residual() {
        let pts: Vec<[f64; 4]> = (0..20)
            .map(|i| {
                let t = i as f64;
                [t.sin(), (0.3 * t).cos() * 2.0, 0.0, 0.0]
            })
            .collect();
        let x = SampleMatrix::from_samples(&pts).unwrap();
        let m = fit_pca(&x, 2, true).unwrap();
        assert!(m.residual.abs() < 1e-10);
        let full = fit_pca(&x, 4, true).unwrap();
        assert_eq!(full.residual, 0.0);
        assert_eq!(full.eigen_gap, 0.5 * full.spectrum[3]);
    }

    #[test]
    fn fit_rejects_bad_target_dim() {
        let x = SampleMatrix::from_samples(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!(matches!(fit_pca(&x, 0, true), Err(Error::InvalidConfig(_))));
        assert!(matches!(fit_pca(&x, 3, true), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn coordinate_projection() {
        let x = SampleMatrix::from_samples(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let basis = DMatrix::identity(3, 2);
        let model = PcaModel::from_parts(basis, vec![2.0, 1.0, 0.0], DVector::zeros(3)).unwrap();
        let p = project(&x, &model).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.sample(0), &[1.0, 2.0]);
        assert_eq!(p.sample(1), &[4.0, 5.0]);

        let wrong = SampleMatrix::from_samples(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            project(&wrong, &model),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn negative_roundoff_is_clamped() {
        let m = PcaModel::from_parts(
            DMatrix::identity(3, 1),
            vec![1.0, -1e-17, -2e-17],
            DVector::zeros(3),
        )
        .unwrap();
        assert_eq!(m.spectrum, vec![1.0, 0.0, 0.0]);
        assert_eq!(m.residual, 0.0);
        assert_eq!(m.eigen_gap, 0.5);
    }
}
