//! Mutual information from smoothed entropies.
//!
//! Conditional sampling: `I(X; Y+Z) = h(Y+Z) − E_x h(Y+Z | X=x)`, with the
//! expectation replaced by the mean over the `m` sampled conditions.
//!
//! Joint sampling: `I(X+Z₁; Y+Z₂) = h(X+Z₁) + h(Y+Z₂) − h([X; Y] + Z)`, the
//! last term estimated in the stacked `D_x + D_y` dimensional space with
//! target dimension `d_x + d_y`. `x` is always stacked on top.
//!
//! Each entropy term gets its own seed derived from the configuration seed
//! (marginal tag 0, condition `i` tag `i + 1`; joint terms tags 0, 1, 2), so
//! adding a condition leaves the other terms' draws unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{pca_smoothed_entropy, EstimatorConfig, PcaEntropy};
use crate::rng::derive_seed;
use crate::sample::SampleMatrix;

/// Samples of `Y | X = x_i` for each sampled condition `x_i`.
#[derive(Debug, Clone)]
pub struct ConditionalDataset {
    pub conditions: Vec<i64>,
    pub samples: Vec<SampleMatrix>,
}

impl ConditionalDataset {
    pub fn new(conditions: Vec<i64>, samples: Vec<SampleMatrix>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidData(
                "conditional dataset has no conditions".into(),
            ));
        }
        if conditions.len() != samples.len() {
            return Err(Error::InvalidData(format!(
                "{} condition ids for {} sample sets",
                conditions.len(),
                samples.len()
            )));
        }
        let dim = samples[0].dim();
        if let Some(bad) = samples.iter().position(|s| s.dim() != dim) {
            return Err(Error::InvalidData(format!(
                "condition {} has dimension {}, expected {dim}",
                conditions[bad],
                samples[bad].dim()
            )));
        }
        Ok(Self {
            conditions,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// All conditional samples in one matrix, conditions in order.
    pub fn pooled(&self) -> Result<SampleMatrix> {
        let parts: Vec<&SampleMatrix> = self.samples.iter().collect();
        SampleMatrix::concat(&parts)
    }
}

/// Column-paired samples of `X` and `Y`.
#[derive(Debug, Clone)]
pub struct JointDataset {
    pub x: SampleMatrix,
    pub y: SampleMatrix,
}

impl JointDataset {
    pub fn new(x: SampleMatrix, y: SampleMatrix) -> Result<Self> {
        if x.count() != y.count() {
            return Err(Error::InvalidData(format!(
                "x has {} samples but y has {}",
                x.count(),
                y.count()
            )));
        }
        Ok(Self { x, y })
    }

    /// `[x; y]` for every pair.
    pub fn stacked(&self) -> Result<SampleMatrix> {
        self.x.stack(&self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiKind {
    /// `value = marginal − mean(conditions)`
    Conditional,
    /// `value = x + y − joint`
    Joint,
}

/// One entropy term of an MI estimate.
#[derive(Debug, Clone)]
pub struct EntropyComponent {
    pub label: String,
    pub entropy: PcaEntropy,
}

#[derive(Debug, Clone)]
pub struct MiEstimate {
    pub value: f64,
    pub kind: MiKind,
    /// Conditional: marginal first, then one per condition.
    /// Joint: `x`, `y`, then the stacked joint term.
    pub components: Vec<EntropyComponent>,
    pub config: EstimatorConfig,
}

impl MiEstimate {
    fn new(kind: MiKind, components: Vec<EntropyComponent>, config: EstimatorConfig) -> Self {
        let value = combine(kind, &components);
        Self {
            value,
            kind,
            components,
            config,
        }
    }

    /// Recomputes the value from the stored components.
    pub fn recombine(&self) -> f64 {
        combine(self.kind, &self.components)
    }

    /// Std error of the combination, treating terms as independent.
    pub fn combined_std_error(&self) -> f64 {
        let se = |c: &EntropyComponent| c.entropy.mc_std_error();
        match self.kind {
            MiKind::Conditional => {
                let m = (self.components.len() - 1) as f64;
                let cond: f64 = self.components[1..].iter().map(|c| se(c).powi(2)).sum();
                (se(&self.components[0]).powi(2) + cond / (m * m)).sqrt()
            }
            MiKind::Joint => self
                .components
                .iter()
                .map(|c| se(c).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// The marginal (or `x`) entropy term.
    pub fn marginal_entropy(&self) -> f64 {
        self.components[0].entropy.value()
    }

    /// Conditional: mean conditional entropy. Joint: joint entropy.
    pub fn subtracted_entropy(&self) -> f64 {
        match self.kind {
            MiKind::Conditional => conditional_mean(&self.components),
            MiKind::Joint => self.components[2].entropy.value(),
        }
    }
}

fn conditional_mean(components: &[EntropyComponent]) -> f64 {
    let conds = &components[1..];
    conds.iter().map(|c| c.entropy.value()).sum::<f64>() / conds.len() as f64
}

fn combine(kind: MiKind, components: &[EntropyComponent]) -> f64 {
    match kind {
        MiKind::Conditional => components[0].entropy.value() - conditional_mean(components),
        MiKind::Joint => {
            components[0].entropy.value() + components[1].entropy.value()
                - components[2].entropy.value()
        }
    }
}

fn term(
    samples: &SampleMatrix,
    config: &EstimatorConfig,
    target_dim: usize,
    tag: u64,
    label: String,
) -> Result<EntropyComponent> {
    let cfg = EstimatorConfig {
        target_dim,
        seed: derive_seed(config.seed, tag),
        ..config.clone()
    };
    Ok(EntropyComponent {
        label,
        entropy: pca_smoothed_entropy(samples, &cfg)?,
    })
}

/// `ĥ_PCA(marginal) − (1/m) Σ_i ĥ_PCA(samples | x_i)`.
pub fn conditional_mi(
    data: &ConditionalDataset,
    marginal: &SampleMatrix,
    config: &EstimatorConfig,
) -> Result<MiEstimate> {
    config.validate()?;
    if marginal.dim() != data.dim() {
        return Err(Error::InvalidData(format!(
            "marginal has dimension {}, conditionals have {}",
            marginal.dim(),
            data.dim()
        )));
    }
    let d = config.target_dim;
    let mut components = Vec::with_capacity(data.len() + 1);
    components.push(term(marginal, config, d, 0, "marginal".into())?);
    for (i, (id, s)) in data.conditions.iter().zip(&data.samples).enumerate() {
        components.push(term(s, config, d, i as u64 + 1, format!("cond={id}"))?);
    }
    Ok(MiEstimate::new(
        MiKind::Conditional,
        components,
        config.clone(),
    ))
}

/// [`conditional_mi`] with the marginal pooled from all conditions.
pub fn conditional_mi_pooled(
    data: &ConditionalDataset,
    config: &EstimatorConfig,
) -> Result<MiEstimate> {
    conditional_mi(data, &data.pooled()?, config)
}

/// Target dimensions for the three joint-sampling terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointTargets {
    pub x: usize,
    pub y: usize,
    pub joint: usize,
}

impl JointTargets {
    /// `d` for each marginal, `2d` for the joint.
    pub fn uniform(d: usize) -> Self {
        Self {
            x: d,
            y: d,
            joint: 2 * d,
        }
    }

    /// No reduction: every term keeps its ambient dimension.
    pub fn ambient(data: &JointDataset) -> Self {
        Self {
            x: data.x.dim(),
            y: data.y.dim(),
            joint: data.x.dim() + data.y.dim(),
        }
    }
}

/// `ĥ_PCA(x; d) + ĥ_PCA(y; d) − ĥ_PCA([x; y]; 2d)`.
pub fn joint_mi(data: &JointDataset, config: &EstimatorConfig) -> Result<MiEstimate> {
    joint_mi_with_targets(data, config, JointTargets::uniform(config.target_dim))
}

pub fn joint_mi_with_targets(
    data: &JointDataset,
    config: &EstimatorConfig,
    targets: JointTargets,
) -> Result<MiEstimate> {
    config.validate()?;
    if data.x.count() != data.y.count() {
        return Err(Error::InvalidData("x and y are not paired".into()));
    }
    let stacked = data.stacked()?;
    let components = vec![
        term(&data.x, config, targets.x, 0, "x".into())?,
        term(&data.y, config, targets.y, 1, "y".into())?,
        term(&stacked, config, targets.joint, 2, "joint".into())?,
    ];
    Ok(MiEstimate::new(MiKind::Joint, components, config.clone()))
}

/// Reads an activation dump (`cond,f0,f1,...`) and groups rows by condition
/// id in ascending order. Returns the dataset and the pooled marginal.
pub fn ingest_activation_dump(
    path: impl AsRef<Path>,
) -> Result<(ConditionalDataset, SampleMatrix)> {
    let dump = crate::io::read_activation_dump(path)?;
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (cond, row) in dump.conditions.iter().zip(dump.features.samples()) {
        groups.entry(*cond).or_default().extend_from_slice(row);
    }
    let dim = dump.features.dim();
    let mut conditions = Vec::with_capacity(groups.len());
    let mut samples = Vec::with_capacity(groups.len());
    for (cond, values) in groups {
        conditions.push(cond);
        samples.push(SampleMatrix::from_columns(dim, values)?);
    }
    Ok((ConditionalDataset::new(conditions, samples)?, dump.features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SplitPolicy;

    fn line(n: usize, offset: f64) -> SampleMatrix {
        SampleMatrix::from_samples(
            &(0..n)
                .map(|i| [offset + 0.01 * i as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(ConditionalDataset::new(vec![], vec![]).is_err());
        let two_d = SampleMatrix::from_samples(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(ConditionalDataset::new(vec![0, 1], vec![line(3, 0.0), two_d]).is_err());
        assert!(JointDataset::new(line(3, 0.0), line(4, 0.0)).is_err());
    }

    #[test]
    fn components_recombine_exactly() {
        let data = ConditionalDataset::new(vec![0, 1], vec![line(40, 0.0), line(40, 3.0)]).unwrap();
        let cfg = EstimatorConfig::new(0.5, 1).with_n_mc(20).with_seed(4);
        let mi = conditional_mi_pooled(&data, &cfg).unwrap();
        assert_eq!(mi.value, mi.recombine());
        assert_eq!(mi.components.len(), 3);
        assert_eq!(mi.value, mi.marginal_entropy() - mi.subtracted_entropy());

        let joint = JointDataset::new(line(40, 0.0), line(40, 1.0)).unwrap();
        let mi = joint_mi(&joint, &cfg).unwrap();
        assert_eq!(mi.kind, MiKind::Joint);
        assert_eq!(mi.value, mi.recombine());
        assert_eq!(mi.components[2].entropy.pca.ambient_dim, 2);
        assert_eq!(mi.components[2].entropy.pca.target_dim, 2);
    }

    #[test]
    fn adding_a_condition_keeps_other_terms() {
        let cfg = EstimatorConfig::new(0.5, 1).with_n_mc(10).with_seed(8);
        let a = ConditionalDataset::new(vec![0, 1], vec![line(20, 0.0), line(20, 2.0)]).unwrap();
        let b = ConditionalDataset::new(
            vec![0, 1, 2],
            vec![line(20, 0.0), line(20, 2.0), line(20, 5.0)],
        )
        .unwrap();
        let marginal = line(30, 1.0);
        let ma = conditional_mi(&a, &marginal, &cfg).unwrap();
        let mb = conditional_mi(&b, &marginal, &cfg).unwrap();
        for k in 0..3 {
            assert_eq!(
                ma.components[k].entropy.value(),
                mb.components[k].entropy.value()
            );
        }
    }

    #[test]
    fn too_few_conditional_samples() {
        let data = ConditionalDataset::new(vec![0], vec![line(1, 0.0)]).unwrap();
        let cfg = EstimatorConfig::new(0.5, 1);
        assert!(matches!(
            conditional_mi(&data, &line(10, 0.0), &cfg),
            Err(Error::InsufficientData(_))
        ));
        let reuse = cfg.with_split(SplitPolicy::Reuse);
        assert!(conditional_mi(&data, &line(10, 0.0), &reuse).is_ok());
    }
}
