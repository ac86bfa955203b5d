//! The PCA smoothed-entropy estimator.
//!
//! Samples are split in two: the first part fits a top-d principal subspace,
//! the second is projected onto it and its d-dimensional smoothed entropy is
//! estimated with the mixture plug-in. The entropy of the noise in the `D − d`
//! discarded directions, `((D−d)/2) ln(2πeσ²)`, is then added back.
//!
//! [`pca_error_bound`] evaluates the explicit PCA-error part of the known risk
//! bound for this estimator. The remaining finite-sample term has an
//! unspecified constant and is not evaluated, so the result is a partial bound
//! and never a full error guarantee.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mixture::{plugin_entropy_mc, EntropyEstimate, Evaluation, IsotropicMixture};
use crate::pca::{fit_pca, project, symmetric_eigendecomposition, PcaModel};
use crate::rng::{derive_seed, substream};
use crate::sample::SampleMatrix;

const SHUFFLE_TAG: u64 = 0x5348_5546;
const MC_TAG: u64 = 0x4d43;

/// How samples are divided between subspace fitting and entropy estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SplitPolicy {
    /// Seeded shuffle, then the first `⌈n/2⌉` fit the PCA and the rest are
    /// projected. Fitting and estimation samples are independent.
    #[default]
    Half,
    /// All samples are used for both steps (not covered by the bound).
    Reuse,
    /// Caller-chosen disjoint or overlapping index sets.
    ExplicitIndices {
        pca: Vec<usize>,
        entropy: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub sigma: f64,
    pub target_dim: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub split: SplitPolicy,
    pub center: bool,
    pub evaluation: Evaluation,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            target_dim: 3,
            n_mc: 100,
            seed: 0,
            split: SplitPolicy::Half,
            center: true,
            evaluation: Evaluation::Exact,
        }
    }
}

impl EstimatorConfig {
    pub fn new(sigma: f64, target_dim: usize) -> Self {
        Self {
            sigma,
            target_dim,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_mc(mut self, n_mc: usize) -> Self {
        self.n_mc = n_mc;
        self
    }

    pub fn with_split(mut self, split: SplitPolicy) -> Self {
        self.split = split;
        self
    }

    pub fn with_target_dim(mut self, target_dim: usize) -> Self {
        self.target_dim = target_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.target_dim < 1 {
            return Err(Error::InvalidConfig(
                "target dimension must be at least 1".into(),
            ));
        }
        if self.n_mc < 1 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        Ok(())
    }
}

/// `((D−d)/2) ln(2πeσ²)`: entropy of `N(0, σ²I)` in the discarded directions.
pub fn dimension_correction(ambient_dim: usize, target_dim: usize, sigma: f64) -> Result<f64> {
    if target_dim < 1 || target_dim > ambient_dim {
        return Err(Error::InvalidConfig(format!(
            "target dimension {target_dim} outside 1..={ambient_dim}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(0.5 * (ambient_dim - target_dim) as f64 * (2.0 * PI * E * sigma * sigma).ln())
}

/// Lower and upper bounds on the entropy lost by projecting onto a subspace,
/// `((D−d)/2) ln(2πeσ²) ≤ · ≤ ((D−d)/2) ln(2πe(λ_{d+1} + σ²))`. The upper bound
/// holds for the population subspace; fed with a sample `λ̂_{d+1}` it is only
/// a heuristic.
pub fn deleted_entropy_bounds(
    ambient_dim: usize,
    target_dim: usize,
    sigma: f64,
    next_eigenvalue: f64,
) -> Result<(f64, f64)> {
    let lower = dimension_correction(ambient_dim, target_dim, sigma)?;
    let upper = 0.5
        * (ambient_dim - target_dim) as f64
        * (2.0 * PI * E * (next_eigenvalue.max(0.0) + sigma * sigma)).ln();
    Ok((lower, upper))
}

/// Output of [`pca_smoothed_entropy`].
#[derive(Debug, Clone)]
pub struct PcaEntropy {
    /// Total estimate in `D` dimensions: `projected.value + correction`.
    pub estimate: EntropyEstimate,
    /// Plug-in estimate on the projected entropy half, `d` dimensions.
    pub projected: EntropyEstimate,
    pub correction: f64,
    pub pca: PcaModel,
}

impl PcaEntropy {
    pub fn value(&self) -> f64 {
        self.estimate.value
    }

    pub fn mc_std_error(&self) -> f64 {
        self.estimate.mc_std_error
    }
}

/// Splits `samples` per `policy`, returning (PCA part, entropy part).
pub fn split_samples(
    samples: &SampleMatrix,
    policy: &SplitPolicy,
    seed: u64,
) -> Result<(SampleMatrix, SampleMatrix)> {
    match policy {
        SplitPolicy::Half => {
            let n = samples.count();
            if n < 2 {
                return Err(Error::InsufficientData(format!(
                    "half split needs at least 2 samples, got {n}"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut substream(derive_seed(seed, SHUFFLE_TAG), 0));
            let cut = n.div_ceil(2);
            Ok((
                samples.select(&order[..cut])?,
                samples.select(&order[cut..])?,
            ))
        }
        SplitPolicy::Reuse => Ok((samples.clone(), samples.clone())),
        SplitPolicy::ExplicitIndices { pca, entropy } => {
            if pca.is_empty() || entropy.is_empty() {
                return Err(Error::InsufficientData(
                    "explicit split has an empty part".into(),
                ));
            }
            Ok((samples.select(pca)?, samples.select(entropy)?))
        }
    }
}

/// `ĥ_PCA = ĥ_σ(V̂_dᵀ X⁽²⁾) + ((D−d)/2) ln(2πeσ²)`.
pub fn pca_smoothed_entropy(
    samples: &SampleMatrix,
    config: &EstimatorConfig,
) -> Result<PcaEntropy> {
    config.validate()?;
    let ambient = samples.dim();
    let d = config.target_dim;
    if d > ambient {
        return Err(Error::InvalidConfig(format!(
            "target dimension {d} exceeds sample dimension {ambient}"
        )));
    }
    let (fit_part, entropy_part) = split_samples(samples, &config.split, config.seed)?;
    let pca = fit_pca(&fit_part, d, config.center)?;
    let projected = project(&entropy_part, &pca)?;
    let mixture = IsotropicMixture::with_evaluation(projected, config.sigma, config.evaluation)?;
    let projected = plugin_entropy_mc(&mixture, config.n_mc, derive_seed(config.seed, MC_TAG))?;
    let correction = dimension_correction(ambient, d, config.sigma)?;
    let estimate = EntropyEstimate {
        value: projected.value + correction,
        dim: ambient,
        ..projected
    };
    Ok(PcaEntropy {
        estimate,
        projected,
        correction,
        pca,
    })
}

/// `½ ln det(2πe(Σ + σ²I))`: smoothed entropy of `N(0, Σ)`, the closed-form
/// reference for Gaussian data.
pub fn gaussian_smoothed_entropy_oracle(covariance: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let eig = symmetric_eigendecomposition(covariance)?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    if let Some(&neg) = eig.values.iter().find(|&&l| l < -tol) {
        return Err(Error::InvalidData(format!(
            "covariance is not positive semidefinite (eigenvalue {neg:e})"
        )));
    }
    Ok(eig
        .values
        .iter()
        .map(|&l| 0.5 * (2.0 * PI * E * (l.max(0.0) + sigma * sigma)).ln())
        .sum())
}

/// Inputs to [`pca_error_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Sub-Gaussian constant (user supplied, never estimated).
    pub k: f64,
    /// Second-moment bound `E‖X‖² ≤ M`.
    pub m: f64,
    /// Residual eigenvalue sum bound `Σ_{i>d} λ_i ≤ L`.
    pub l: f64,
    /// Eigen-gap `½(λ_d − λ_{d+1})`.
    pub delta_d: f64,
    pub ambient_dim: usize,
    pub target_dim: usize,
    pub sigma: f64,
    pub n: f64,
}

impl BoundInputs {
    /// Plug-in inputs from a fitted model. Sample eigenvalues stand in for the
    /// population ones, so the resulting bound is a heuristic diagnostic.
    pub fn from_pca_model(pca: &PcaModel, k: f64, m: f64, sigma: f64, n: usize) -> Self {
        Self {
            k,
            m,
            l: pca.residual,
            delta_d: pca.eigen_gap,
            ambient_dim: pca.ambient_dim,
            target_dim: pca.target_dim,
            sigma,
            n: n as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("K", self.k),
            ("M", self.m),
            ("sigma", self.sigma),
            ("n", self.n),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.l >= 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "L must be non-negative, got {}",
                self.l
            )));
        }
        if self.delta_d == 0.0 {
            return Err(Error::DegenerateGap);
        }
        if !(self.delta_d > 0.0 && self.delta_d.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eigen-gap must be positive, got {}",
                self.delta_d
            )));
        }
        if self.ambient_dim < 1 || self.target_dim < 1 || self.target_dim > self.ambient_dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= d <= D, got d={} D={}",
                self.target_dim, self.ambient_dim
            )));
        }
        Ok(())
    }
}

/// The evaluated PCA-error term, `prefactor · (residual_term + sample_term)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaErrorBound {
    /// `(3√(Dσ² + M) + 4√M) / σ²`.
    pub prefactor: f64,
    /// `√L`.
    pub residual_term: f64,
    /// `2M^{3/2} / (δ_d √n)`.
    pub sample_term: f64,
    /// Partial bound in nats; excludes the `O(c^d) n^{-1/2}` estimation term.
    pub value: f64,
}

/// `(1/σ²)(3√(Dσ² + M) + 4√M)(√L + 2M^{3/2}/(δ_d √n))`, in nats.
pub fn pca_error_bound(b: &BoundInputs) -> Result<PcaErrorBound> {
    b.validate()?;
    let s2 = b.sigma * b.sigma;
    let prefactor = (3.0 * (b.ambient_dim as f64 * s2 + b.m).sqrt() + 4.0 * b.m.sqrt()) / s2;
    let residual_term = b.l.sqrt();
    let sample_term = 2.0 * b.m.powf(1.5) / b.delta_d / b.n.sqrt();
    Ok(PcaErrorBound {
        prefactor,
        residual_term,
        sample_term,
        value: prefactor * (residual_term + sample_term),
    })
}
