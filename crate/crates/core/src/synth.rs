//! Seeded synthetic datasets with known population parameters.
//!
//! Spirals: `θ ~ Unif[0, θ_span]` with `θ_span = 4π` (two turns) by default
//! and radius `r = 0.5 + 3.5·θ/(4π)`, an Archimedean spiral with `r ∈ [0.5, 4]`
//! over the default span. The cylindrical spiral's height is `z ~ Unif[0, 4]`.
//!
//! The two families parameterize the residual block differently: the embedded
//! Gaussian uses `λ_res` as a *variance*, the spirals as a *standard deviation*
//! (`T ~ N(0, λ_res² I)`).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mi::JointDataset;
use crate::rng::{derive_seed, substream, StreamRng};
use crate::sample::SampleMatrix;

/// Default angular span of the spirals.
pub const SPIRAL_THETA_SPAN: f64 = 4.0 * PI;
const SPIRAL_R_MIN: f64 = 0.5;
const SPIRAL_R_GROWTH: f64 = 3.5 / (4.0 * PI);
const CYLINDER_HEIGHT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpiralKind {
    /// `(r cos θ, r sin θ)`
    Spiral2D,
    /// `(r cos θ, r sin θ, r)`
    Conical,
    /// `(r cos θ, r sin θ, z)`
    Cylindrical,
}

impl SpiralKind {
    pub fn intrinsic_dim(self) -> usize {
        match self {
            SpiralKind::Spiral2D => 2,
            SpiralKind::Conical | SpiralKind::Cylindrical => 3,
        }
    }
}

/// A generator together with its seed.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    EmbeddedGaussian {
        intrinsic_dim: usize,
        ambient_dim: usize,
        lambda_res: f64,
        n: usize,
        seed: u64,
    },
    Spiral {
        kind: SpiralKind,
        ambient_dim: usize,
        lambda_res: f64,
        theta_span: f64,
        n: usize,
        seed: u64,
    },
    CommonSignalPair {
        intrinsic_dim: usize,
        ambient_dim: usize,
        noise_std: f64,
        dependent: bool,
        n: usize,
        seed: u64,
    },
}

/// Output of [`GeneratorSpec::generate`].
#[derive(Debug, Clone)]
pub enum Generated {
    Samples(SampleMatrix),
    Pair(CommonSignalPair),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Generated> {
        match *self {
            GeneratorSpec::EmbeddedGaussian {
                intrinsic_dim,
                ambient_dim,
                lambda_res,
                n,
                seed,
            } => gen_embedded_gaussian(intrinsic_dim, ambient_dim, lambda_res, n, seed)
                .map(|g| Generated::Samples(g.samples)),
            GeneratorSpec::Spiral {
                kind,
                ambient_dim,
                lambda_res,
                theta_span,
                n,
                seed,
            } => gen_spiral_with_span(kind, lambda_res, ambient_dim, n, theta_span, seed)
                .map(Generated::Samples),
            GeneratorSpec::CommonSignalPair {
                intrinsic_dim,
                ambient_dim,
                noise_std,
                dependent,
                n,
                seed,
            } => gen_common_signal_pair(intrinsic_dim, ambient_dim, n, noise_std, dependent, seed)
                .map(Generated::Pair),
        }
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_dims(intrinsic: usize, ambient: usize) -> Result<()> {
    if intrinsic < 1 || intrinsic > ambient {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= d <= D, got d={intrinsic} D={ambient}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn check_count(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Samples plus the population covariance they were drawn from.
#[derive(Debug, Clone)]
pub struct EmbeddedGaussian {
    pub samples: SampleMatrix,
    pub covariance: DMatrix<f64>,
}

/// `n` draws from `N(0, diag(1 × d, λ_res × (D−d)))`. Sample `i` uses stream `i`.
pub fn gen_embedded_gaussian(
    intrinsic_dim: usize,
    ambient_dim: usize,
    lambda_res: f64,
    n: usize,
    seed: u64,
) -> Result<EmbeddedGaussian> {
    check_dims(intrinsic_dim, ambient_dim)?;
    check_positive("lambda_res", lambda_res)?;
    check_count(n)?;
    let variances: Vec<f64> = (0..ambient_dim)
        .map(|k| if k < intrinsic_dim { 1.0 } else { lambda_res })
        .collect();
    let stds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut values = Vec::with_capacity(n * ambient_dim);
    for i in 0..n {
        let mut rng = substream(seed, i as u64);
        values.extend(stds.iter().map(|s| s * normal(&mut rng)));
    }
    Ok(EmbeddedGaussian {
        samples: SampleMatrix::from_columns(ambient_dim, values)?,
        covariance: DMatrix::from_diagonal(&DVector::from_vec(variances)),
    })
}

/// Spiral data embedded in `ambient_dim` dimensions with the default span.
pub fn gen_spiral(
    kind: SpiralKind,
    lambda_res: f64,
    ambient_dim: usize,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    gen_spiral_with_span(kind, lambda_res, ambient_dim, n, SPIRAL_THETA_SPAN, seed)
}

/// Spiral data with angle drawn from `Unif[0, theta_span]`. A zero span puts
/// every sample at the same point of the spiral.
pub fn gen_spiral_with_span(
    kind: SpiralKind,
    lambda_res: f64,
    ambient_dim: usize,
    n: usize,
    theta_span: f64,
    seed: u64,
) -> Result<SampleMatrix> {
    check_dims(kind.intrinsic_dim(), ambient_dim)?;
    check_positive("lambda_res", lambda_res)?;
    check_count(n)?;
    if !(theta_span >= 0.0 && theta_span.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "theta span must be >= 0, got {theta_span}"
        )));
    }
    let mut values = Vec::with_capacity(n * ambient_dim);
    for i in 0..n {
        let mut rng = substream(seed, i as u64);
        let theta = theta_span * rng.random::<f64>();
        let r = SPIRAL_R_MIN + SPIRAL_R_GROWTH * theta;
        values.push(r * theta.cos());
        values.push(r * theta.sin());
        match kind {
            SpiralKind::Spiral2D => {}
            SpiralKind::Conical => values.push(r),
            SpiralKind::Cylindrical => values.push(CYLINDER_HEIGHT * rng.random::<f64>()),
        }
        for _ in kind.intrinsic_dim()..ambient_dim {
            values.push(lambda_res * normal(&mut rng));
        }
    }
    SampleMatrix::from_columns(ambient_dim, values)
}

/// `X = P_X W + N_X`, `Y = P_Y W' + N_Y` with `W' = W` for dependent pairs.
#[derive(Debug, Clone)]
pub struct CommonSignalPair {
    pub data: JointDataset,
    pub dependent: bool,
    pub seed: u64,
    /// `D × d` mixing matrices, drawn once per dataset.
    pub p_x: DMatrix<f64>,
    pub p_y: DMatrix<f64>,
}

/// Draws `P_X, P_Y` with standard-normal entries, then `n` pairs. Null pairs
/// (`dependent = false`) draw a fresh latent for `Y`.
pub fn gen_common_signal_pair(
    intrinsic_dim: usize,
    ambient_dim: usize,
    n: usize,
    noise_std: f64,
    dependent: bool,
    seed: u64,
) -> Result<CommonSignalPair> {
    check_dims(intrinsic_dim, ambient_dim)?;
    check_positive("noise_std", noise_std)?;
    check_count(n)?;
    let (d, big_d) = (intrinsic_dim, ambient_dim);
    let mut mix_rng = substream(derive_seed(seed, 0), 0);
    let p_x = DMatrix::from_fn(big_d, d, |_, _| normal(&mut mix_rng));
    let p_y = DMatrix::from_fn(big_d, d, |_, _| normal(&mut mix_rng));

    let sample_seed = derive_seed(seed, 1);
    let mut xs = Vec::with_capacity(n * big_d);
    let mut ys = Vec::with_capacity(n * big_d);
    for i in 0..n {
        let mut rng = substream(sample_seed, i as u64);
        let w = DVector::from_fn(d, |_, _| normal(&mut rng));
        let w_y = if dependent {
            w.clone()
        } else {
            DVector::from_fn(d, |_, _| normal(&mut rng))
        };
        let x = &p_x * &w;
        let y = &p_y * &w_y;
        xs.extend(x.iter().map(|v| v + noise_std * normal(&mut rng)));
        ys.extend(y.iter().map(|v| v + noise_std * normal(&mut rng)));
    }
    let data = JointDataset::new(
        SampleMatrix::from_columns(big_d, xs)?,
        SampleMatrix::from_columns(big_d, ys)?,
    )?;
    Ok(CommonSignalPair {
        data,
        dependent,
        seed,
        p_x,
        p_y,
    })
}
