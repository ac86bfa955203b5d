//! Smoothed differential entropy `h(X + Z)`, `Z ~ N(0, σ²I)`, of high-dimensional
//! samples, estimated by projecting onto the top principal components and adding
//! back the exact entropy of the noise in the discarded directions.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`pca`] | covariance, symmetric eigendecomposition, top-d projection |
//! | [`mixture`] | Gaussian-mixture log-density and Monte-Carlo plug-in entropy |
//! | [`estimator`] | the PCA smoothed-entropy estimator and its error bound |
//! | [`mi`] | mutual information from conditional or joint samples |
//! | [`synth`] | seeded synthetic data with known population parameters |
//! | [`harness`] | sweeps, independence-test AUC, activation-dump trajectories |
//! | [`io`] | CSV formats for samples, PCA models and activation dumps |
//!
//! All entropies are in nats.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
mod kdtree;
pub mod mi;
pub mod mixture;
pub mod pca;
pub mod rng;
pub mod sample;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{
    dimension_correction, gaussian_smoothed_entropy_oracle, pca_error_bound, pca_smoothed_entropy,
    BoundInputs, EstimatorConfig, PcaEntropy, PcaErrorBound, SplitPolicy,
};
pub use harness::{
    auc, run_activation_mi, run_indep_auc, run_sweep, ActivationEntry, ActivationRecord, AucRecord,
    AucReport, DataKind, Reference, SweepRecord, SweepSpec,
};
pub use mi::{
    conditional_mi, conditional_mi_pooled, ingest_activation_dump, joint_mi, joint_mi_with_targets,
    ConditionalDataset, JointDataset, JointTargets, MiEstimate, MiKind,
};
pub use mixture::{
    gaussian_noise_entropy, mixture_log_density, plugin_entropy_mc, plugin_entropy_quadrature,
    EntropyEstimate, Evaluation, IsotropicMixture,
};
pub use pca::{compute_covariance, fit_pca, project, symmetric_eigendecomposition, PcaModel};
pub use sample::SampleMatrix;
pub use synth::{
    gen_common_signal_pair, gen_embedded_gaussian, gen_spiral, GeneratorSpec, SpiralKind,
};
