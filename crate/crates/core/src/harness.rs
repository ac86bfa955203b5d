//! Experiment drivers: parameter sweeps against reference values, the
//! independence-test AUC, and MI trajectories over activation dumps.
//!
//! Every driver is deterministic given its master seed. Jobs run on the rayon
//! pool and results are emitted in a canonical order, so the CSV output is
//! byte-identical across runs and thread counts (unless wall times are
//! requested).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    dimension_correction, gaussian_smoothed_entropy_oracle, pca_smoothed_entropy, EstimatorConfig,
    PcaEntropy, SplitPolicy,
};
use crate::mi::{conditional_mi, ingest_activation_dump, joint_mi_with_targets, JointTargets};
use crate::rng::{derive_seed, derive_seed_path};
use crate::sample::SampleMatrix;
use crate::synth::{gen_common_signal_pair, gen_embedded_gaussian, gen_spiral, SpiralKind};

const DATA_TAG: u64 = 0;
const ESTIMATE_TAG: u64 = 1;
const REFERENCE_TAG: u64 = 0x5245_4645_5245_4e43;
const AUC_TAG: u64 = 0x41_5543;

/// Distribution family of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataKind {
    /// `N(0, diag(1×d, λ_res×(D−d)))`
    Gaussian,
    Spiral(SpiralKind),
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Gaussian => "gaussian",
            DataKind::Spiral(SpiralKind::Spiral2D) => "spiral2d",
            DataKind::Spiral(SpiralKind::Conical) => "conical",
            DataKind::Spiral(SpiralKind::Cylindrical) => "cylindrical",
        }
    }

    fn tag(self) -> u64 {
        match self {
            DataKind::Gaussian => 0,
            DataKind::Spiral(SpiralKind::Spiral2D) => 1,
            DataKind::Spiral(SpiralKind::Conical) => 2,
            DataKind::Spiral(SpiralKind::Cylindrical) => 3,
        }
    }

    /// Intrinsic dimension of the data for a cell with target dimension `d`.
    fn intrinsic_dim(self, d: usize) -> usize {
        match self {
            DataKind::Gaussian => d,
            DataKind::Spiral(kind) => kind.intrinsic_dim(),
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DataKind::Gaussian),
            "spiral2d" => Ok(DataKind::Spiral(SpiralKind::Spiral2D)),
            "conical" => Ok(DataKind::Spiral(SpiralKind::Conical)),
            "cylindrical" => Ok(DataKind::Spiral(SpiralKind::Cylindrical)),
            other => Err(Error::InvalidConfig(format!(
                "unknown data kind {other:?} (expected gaussian, spiral2d, conical or cylindrical)"
            ))),
        }
    }
}

/// Where a sweep's reference values come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Gaussian oracle on the population projection plus the dimension
    /// correction. Only available for Gaussian cells.
    ClosedForm,
    /// One large run of the estimator per `(kind, d, σ, λ_res)`, shared along
    /// the `n` axis.
    SelfConsistency {
        n: usize,
        n_mc: usize,
    },
    None,
}

impl Reference {
    /// Self-consistency at desk scale.
    pub const DESK_SELF_CONSISTENCY: Reference = Reference::SelfConsistency {
        n: 10_000,
        n_mc: 100,
    };
    /// Self-consistency at full scale.
    pub const FULL_SELF_CONSISTENCY: Reference = Reference::SelfConsistency {
        n: 100_000,
        n_mc: 1_000,
    };
}

/// A grid of estimator runs.
///
/// `n` counts samples per half: under [`SplitPolicy::Half`] each cell draws
/// `2n` samples so that both the PCA fit and the entropy estimate see `n`.
/// For Gaussian cells `d` is both the intrinsic and the target dimension; for
/// spirals the intrinsic dimension is fixed by the kind and `d` is the target.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub sigma: Vec<f64>,
    pub lambda_res: Vec<f64>,
    pub kind: Vec<DataKind>,
    pub ambient_dim: usize,
    pub repeats: usize,
    /// Split, centering, `n_mc`, evaluation mode and master seed for every
    /// cell. Its `sigma` and `target_dim` are replaced per cell.
    pub template: EstimatorConfig,
    pub reference: Reference,
    /// Record per-row wall time. Off by default so output is reproducible.
    pub timing: bool,
}

impl SweepSpec {
    /// A single Gaussian cell with the given template.
    pub fn single(
        n: usize,
        ambient_dim: usize,
        lambda_res: f64,
        template: EstimatorConfig,
    ) -> Self {
        SweepSpec {
            n: vec![n],
            d: vec![template.target_dim],
            sigma: vec![template.sigma],
            lambda_res: vec![lambda_res],
            kind: vec![DataKind::Gaussian],
            ambient_dim,
            repeats: 10,
            template,
            reference: Reference::ClosedForm,
            timing: false,
        }
    }

    /// Desk-scale version of the convergence grid over `n` and `d`.
    pub fn desk_dimension_grid(seed: u64) -> Self {
        SweepSpec {
            n: vec![100, 1_000, 10_000],
            d: (2..=10).collect(),
            sigma: vec![0.1],
            lambda_res: vec![0.01],
            kind: vec![DataKind::Gaussian],
            ambient_dim: 100,
            repeats: 10,
            template: EstimatorConfig::default().with_seed(seed),
            reference: Reference::ClosedForm,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        if self.repeats < 1 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        for (name, empty) in [
            ("n", self.n.is_empty()),
            ("d", self.d.is_empty()),
            ("sigma", self.sigma.is_empty()),
            ("lambda_res", self.lambda_res.is_empty()),
            ("kind", self.kind.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidConfig(format!("sweep axis {name} is empty")));
            }
        }
        if matches!(self.template.split, SplitPolicy::ExplicitIndices { .. }) {
            return Err(Error::InvalidConfig(
                "sweeps support only the half and reuse splits".into(),
            ));
        }
        let min_n = match self.template.split {
            SplitPolicy::Reuse => 2,
            _ => 1,
        };
        if let Some(&n) = self.n.iter().find(|&&n| n < min_n) {
            return Err(Error::InvalidConfig(format!(
                "sample count {n} is too small"
            )));
        }
        for &d in &self.d {
            if d < 1 || d > self.ambient_dim {
                return Err(Error::InvalidConfig(format!(
                    "target dimension {d} outside 1..={}",
                    self.ambient_dim
                )));
            }
        }
        for &kind in &self.kind {
            if kind.intrinsic_dim(1) > self.ambient_dim {
                return Err(Error::InvalidConfig(format!(
                    "{kind} needs ambient dimension at least {}",
                    kind.intrinsic_dim(1)
                )));
            }
        }
        for (name, values) in [("sigma", &self.sigma), ("lambda_res", &self.lambda_res)] {
            if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        match self.reference {
            Reference::ClosedForm => {
                if let Some(kind) = self.kind.iter().find(|k| **k != DataKind::Gaussian) {
                    return Err(Error::InvalidConfig(format!(
                        "no closed-form reference for {kind}"
                    )));
                }
            }
            Reference::SelfConsistency { n, n_mc } => {
                if n < 2 || n_mc < 1 {
                    return Err(Error::InvalidConfig(
                        "self-consistency reference needs n >= 2 and n_mc >= 1".into(),
                    ));
                }
            }
            Reference::None => {}
        }
        Ok(())
    }

    /// Cells in canonical order: lexicographic in `(kind, d, sigma,
    /// lambda_res, n)` with duplicates removed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut kind = self.kind.clone();
        kind.sort();
        kind.dedup();
        let mut d = self.d.clone();
        d.sort_unstable();
        d.dedup();
        let mut n = self.n.clone();
        n.sort_unstable();
        n.dedup();
        let sigma = sorted_floats(&self.sigma);
        let lambda = sorted_floats(&self.lambda_res);

        let mut cells = Vec::new();
        for &kind in &kind {
            for &d in &d {
                for &sigma in &sigma {
                    for &lambda_res in &lambda {
                        for &n in &n {
                            cells.push(Cell {
                                kind,
                                d,
                                sigma,
                                lambda_res,
                                n,
                                ambient_dim: self.ambient_dim,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

fn sorted_floats(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: DataKind,
    pub d: usize,
    pub sigma: f64,
    pub lambda_res: f64,
    pub n: usize,
    pub ambient_dim: usize,
}

impl Cell {
    fn seed(&self, master: u64, repeat: usize) -> u64 {
        derive_seed_path(
            master,
            &[
                self.kind.tag(),
                self.d as u64,
                self.sigma.to_bits(),
                self.lambda_res.to_bits(),
                self.n as u64,
                repeat as u64,
            ],
        )
    }

    fn reference_key(&self) -> (DataKind, usize, u64, u64) {
        (
            self.kind,
            self.d,
            self.sigma.to_bits(),
            self.lambda_res.to_bits(),
        )
    }

    fn reference_seed(&self, master: u64) -> u64 {
        derive_seed_path(
            master,
            &[
                REFERENCE_TAG,
                self.kind.tag(),
                self.d as u64,
                self.sigma.to_bits(),
                self.lambda_res.to_bits(),
            ],
        )
    }

    fn generate(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        match self.kind {
            DataKind::Gaussian => {
                gen_embedded_gaussian(self.d, self.ambient_dim, self.lambda_res, count, seed)
                    .map(|g| g.samples)
            }
            DataKind::Spiral(kind) => {
                gen_spiral(kind, self.lambda_res, self.ambient_dim, count, seed)
            }
        }
    }

    fn config(&self, template: &EstimatorConfig, seed: u64, n_mc: usize) -> EstimatorConfig {
        let mut cfg = template.clone();
        cfg.sigma = self.sigma;
        cfg.target_dim = self.d;
        cfg.seed = seed;
        cfg.n_mc = n_mc;
        cfg
    }

    /// Runs the estimator on `n` samples per half.
    fn estimate(
        &self,
        n: usize,
        template: &EstimatorConfig,
        n_mc: usize,
        seed: u64,
    ) -> Result<PcaEntropy> {
        let count = match template.split {
            SplitPolicy::Half => 2 * n,
            _ => n,
        };
        let samples = self.generate(count, derive_seed(seed, DATA_TAG))?;
        let cfg = self.config(template, derive_seed(seed, ESTIMATE_TAG), n_mc);
        pca_smoothed_entropy(&samples, &cfg)
    }

    fn closed_form_reference(&self) -> Result<f64> {
        if self.kind != DataKind::Gaussian {
            return Err(Error::Unsupported(format!(
                "no closed-form reference for {}",
                self.kind
            )));
        }
        let projected =
            gaussian_smoothed_entropy_oracle(&DMatrix::identity(self.d, self.d), self.sigma)?;
        Ok(projected + dimension_correction(self.ambient_dim, self.d, self.sigma)?)
    }
}

/// Reference value for a Gaussian cell: the oracle entropy of the population
/// projected onto its top `d` directions plus the dimension correction.
pub fn gaussian_cell_reference(d: usize, ambient_dim: usize, sigma: f64) -> Result<f64> {
    Cell {
        kind: DataKind::Gaussian,
        d,
        sigma,
        lambda_res: 1.0,
        n: 1,
        ambient_dim,
    }
    .closed_form_reference()
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub ambient_dim: usize,
    pub sigma: f64,
    pub lambda_res: f64,
    pub repeat: usize,
    pub seed: u64,
    pub unit: String,
    pub estimate: Option<f64>,
    pub reference: Option<f64>,
    pub abs_error: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub eigen_gap: Option<f64>,
    pub residual: Option<f64>,
    /// `d`-th fitted eigenvalue.
    pub lambda_d: Option<f64>,
    /// `(d+1)`-th fitted eigenvalue, empty when `d = D`.
    pub lambda_d1: Option<f64>,
    pub wall_time: Option<f64>,
    pub error: Option<String>,
}

impl SweepRecord {
    fn new(cell: &Cell, repeat: usize, seed: u64) -> Self {
        SweepRecord {
            kind: cell.kind.name().to_string(),
            n: cell.n,
            d: cell.d,
            ambient_dim: cell.ambient_dim,
            sigma: cell.sigma,
            lambda_res: cell.lambda_res,
            repeat,
            seed,
            unit: "nats".into(),
            estimate: None,
            reference: None,
            abs_error: None,
            mc_std_error: None,
            eigen_gap: None,
            residual: None,
            lambda_d: None,
            lambda_d1: None,
            wall_time: None,
            error: None,
        }
    }

    /// The same record with entropy-valued fields converted to bits.
    pub fn in_bits(&self) -> Self {
        if self.unit == "bits" {
            return self.clone();
        }
        let bits = |v: Option<f64>| v.map(|x| x / std::f64::consts::LN_2);
        SweepRecord {
            unit: "bits".into(),
            estimate: bits(self.estimate),
            reference: bits(self.reference),
            abs_error: bits(self.abs_error),
            mc_std_error: bits(self.mc_std_error),
            ..self.clone()
        }
    }
}

/// Runs every `(cell, repeat)` of the sweep. Cells that fail produce rows
/// with the `error` column set; the run itself fails only on an invalid spec.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let master = spec.template.seed;
    let cells = spec.cells();

    let references: BTreeMap<_, std::result::Result<f64, String>> = match spec.reference {
        Reference::SelfConsistency { n, n_mc } => {
            let mut keyed: BTreeMap<_, Cell> = BTreeMap::new();
            for cell in &cells {
                keyed.entry(cell.reference_key()).or_insert(*cell);
            }
            let keyed: Vec<_> = keyed.into_iter().collect();
            keyed
                .into_par_iter()
                .map(|(key, cell)| {
                    let value = cell
                        .estimate(n, &spec.template, n_mc, cell.reference_seed(master))
                        .map(|e| e.value())
                        .map_err(|e| format!("reference: {e}"));
                    (key, value)
                })
                .collect()
        }
        _ => BTreeMap::new(),
    };

    let jobs: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.repeats).map(move |r| (*c, r)))
        .collect();
    let records = jobs
        .into_par_iter()
        .map(|(cell, repeat)| {
            let reference = match spec.reference {
                Reference::SelfConsistency { .. } => {
                    Some(references[&cell.reference_key()].clone())
                }
                _ => None,
            };
            run_job(spec, &cell, repeat, reference)
        })
        .collect();
    Ok(records)
}

type Precomputed = Option<std::result::Result<f64, String>>;

/// One `(cell, repeat)` row. `precomputed` holds the self-consistency
/// reference when that mode is active.
fn run_job(spec: &SweepSpec, cell: &Cell, repeat: usize, precomputed: Precomputed) -> SweepRecord {
    let seed = cell.seed(spec.template.seed, repeat);
    let mut rec = SweepRecord::new(cell, repeat, seed);
    let start = Instant::now();
    let reference = match (spec.reference, precomputed) {
        (_, Some(r)) => r.map(Some),
        (Reference::ClosedForm, None) => cell
            .closed_form_reference()
            .map(Some)
            .map_err(|e| e.to_string()),
        _ => Ok(None),
    };
    let result = reference.and_then(|reference| {
        cell.estimate(cell.n, &spec.template, spec.template.n_mc, seed)
            .map(|e| (e, reference))
            .map_err(|e| e.to_string())
    });
    match result {
        Ok((est, reference)) => {
            let spectrum = &est.pca.spectrum;
            rec.estimate = Some(est.value());
            rec.reference = reference;
            rec.abs_error = reference.map(|r| (est.value() - r).abs());
            rec.mc_std_error = Some(est.mc_std_error());
            rec.eigen_gap = Some(est.pca.eigen_gap);
            rec.residual = Some(est.pca.residual);
            rec.lambda_d = Some(spectrum[cell.d - 1]);
            rec.lambda_d1 = spectrum.get(cell.d).copied();
        }
        Err(msg) => rec.error = Some(msg),
    }
    if spec.timing {
        rec.wall_time = Some(start.elapsed().as_secs_f64());
    }
    rec
}

/// Median of the values, `None` when empty. NaNs sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Summary of the repeats of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub lambda_res: f64,
    pub repeats: usize,
    pub failures: usize,
    pub median_estimate: Option<f64>,
    pub median_abs_error: Option<f64>,
}

/// Per-cell medians over repeats, in the order the cells first appear.
pub fn summarize(records: &[SweepRecord]) -> Vec<CellSummary> {
    let mut out: Vec<(CellSummary, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in records {
        let idx = out.iter().position(|(s, _, _)| {
            s.kind == r.kind
                && s.n == r.n
                && s.d == r.d
                && s.sigma.to_bits() == r.sigma.to_bits()
                && s.lambda_res.to_bits() == r.lambda_res.to_bits()
        });
        let idx = idx.unwrap_or_else(|| {
            out.push((
                CellSummary {
                    kind: r.kind.clone(),
                    n: r.n,
                    d: r.d,
                    sigma: r.sigma,
                    lambda_res: r.lambda_res,
                    repeats: 0,
                    failures: 0,
                    median_estimate: None,
                    median_abs_error: None,
                },
                Vec::new(),
                Vec::new(),
            ));
            out.len() - 1
        });
        let (s, est, err) = &mut out[idx];
        s.repeats += 1;
        if r.error.is_some() {
            s.failures += 1;
        }
        est.extend(r.estimate);
        err.extend(r.abs_error);
    }
    out.into_iter()
        .map(|(mut s, est, err)| {
            s.median_estimate = median(&est);
            s.median_abs_error = median(&err);
            s
        })
        .collect()
}

/// Writes records as CSV, converting entropies to bits if asked.
pub fn write_records<W: Write, T: Serialize + Clone>(
    w: W,
    records: &[T],
    convert: impl Fn(&T) -> T,
) -> Result<()> {
    let mut wr = crate::io::writer(w);
    for r in records {
        wr.serialize(convert(r))?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a header-only CSV for record type `T` when `records` is empty,
/// otherwise the records.
fn write_with_header<W: Write, T: Serialize + Clone>(
    mut w: W,
    records: &[T],
    header: &[&str],
    convert: impl Fn(&T) -> T,
) -> Result<()> {
    if records.is_empty() {
        writeln!(w, "{}", header.join(","))?;
        return Ok(());
    }
    write_records(w, records, convert)
}

const SWEEP_HEADER: &[&str] = &[
    "kind",
    "n",
    "d",
    "ambient_dim",
    "sigma",
    "lambda_res",
    "repeat",
    "seed",
    "unit",
    "estimate",
    "reference",
    "abs_error",
    "mc_std_error",
    "eigen_gap",
    "residual",
    "lambda_d",
    "lambda_d1",
    "wall_time",
    "error",
];

pub fn write_sweep_csv<W: Write>(w: W, records: &[SweepRecord], bits: bool) -> Result<()> {
    write_with_header(w, records, SWEEP_HEADER, |r| {
        if bits {
            r.in_bits()
        } else {
            r.clone()
        }
    })
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    read_records(r)
}

fn read_records<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Area under the ROC curve of thresholding scores, by the Mann–Whitney
/// statistic with ties counted as one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::InvalidData(
            "AUC needs scores in both classes".into(),
        ));
    }
    if positive.iter().chain(negative).any(|v| v.is_nan()) {
        return Err(Error::InvalidData("AUC scores contain NaN".into()));
    }
    let mut wins = 0.0;
    for &p in positive {
        for &q in negative {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (positive.len() as f64 * negative.len() as f64))
}

/// Scores of one dataset in an independence-test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRecord {
    pub dataset: usize,
    pub dependent: bool,
    pub seed: u64,
    pub unit: String,
    pub pca_mi: f64,
    pub pca_std_error: f64,
    pub ambient_mi: f64,
    pub ambient_std_error: f64,
}

impl AucRecord {
    pub fn in_bits(&self) -> Self {
        if self.unit == "bits" {
            return self.clone();
        }
        let b = std::f64::consts::LN_2;
        AucRecord {
            unit: "bits".into(),
            pca_mi: self.pca_mi / b,
            pca_std_error: self.pca_std_error / b,
            ambient_mi: self.ambient_mi / b,
            ambient_std_error: self.ambient_std_error / b,
            ..self.clone()
        }
    }
}

/// Per-dataset scores plus the AUC of each scoring rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AucReport {
    pub pca_auc: f64,
    pub ambient_auc: f64,
    pub datasets: Vec<AucRecord>,
}

/// Independence test on common-signal pairs. Even-indexed datasets are
/// dependent and odd-indexed ones are null. Each is scored by `joint_mi` with
/// PCA targets `(d, d, 2d)` and with ambient targets `(D, D, 2D)`.
pub fn run_indep_auc(
    n_datasets: usize,
    n: usize,
    d: usize,
    ambient_dim: usize,
    noise_std: f64,
    config: &EstimatorConfig,
) -> Result<AucReport> {
    config.validate()?;
    if n_datasets < 10 || !n_datasets.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "need an even number of datasets, at least 10, got {n_datasets}"
        )));
    }
    let pca_targets = JointTargets {
        x: d,
        y: d,
        joint: 2 * d,
    };
    let datasets: Vec<AucRecord> = (0..n_datasets)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed_path(config.seed, &[AUC_TAG, k as u64]);
            let dependent = k % 2 == 0;
            let pair = gen_common_signal_pair(
                d,
                ambient_dim,
                n,
                noise_std,
                dependent,
                derive_seed(seed, DATA_TAG),
            )?;
            let cfg = EstimatorConfig {
                seed: derive_seed(seed, ESTIMATE_TAG),
                target_dim: d,
                ..config.clone()
            };
            let pca = joint_mi_with_targets(&pair.data, &cfg, pca_targets)?;
            let ambient =
                joint_mi_with_targets(&pair.data, &cfg, JointTargets::ambient(&pair.data))?;
            Ok(AucRecord {
                dataset: k,
                dependent,
                seed,
                unit: "nats".into(),
                pca_mi: pca.value,
                pca_std_error: pca.combined_std_error(),
                ambient_mi: ambient.value,
                ambient_std_error: ambient.combined_std_error(),
            })
        })
        .collect::<Result<_>>()?;

    let split = |score: fn(&AucRecord) -> f64| {
        let pos: Vec<f64> = datasets.iter().filter(|r| r.dependent).map(score).collect();
        let neg: Vec<f64> = datasets
            .iter()
            .filter(|r| !r.dependent)
            .map(score)
            .collect();
        auc(&pos, &neg)
    };
    Ok(AucReport {
        pca_auc: split(|r| r.pca_mi)?,
        ambient_auc: split(|r| r.ambient_mi)?,
        datasets,
    })
}

const AUC_HEADER: &[&str] = &[
    "dataset",
    "dependent",
    "seed",
    "unit",
    "pca_mi",
    "pca_std_error",
    "ambient_mi",
    "ambient_std_error",
];

pub fn write_auc_csv<W: Write>(w: W, records: &[AucRecord], bits: bool) -> Result<()> {
    write_with_header(w, records, AUC_HEADER, |r| {
        if bits {
            r.in_bits()
        } else {
            r.clone()
        }
    })
}

pub fn read_auc_csv<R: Read>(r: R) -> Result<Vec<AucRecord>> {
    read_records(r)
}

/// One activation dump to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationEntry {
    pub layer: String,
    pub epoch: u64,
    pub path: PathBuf,
}

/// Reads a manifest with header `layer,epoch,path`. Relative paths are
/// resolved against the manifest's directory.
pub fn read_activation_manifest(path: impl AsRef<Path>) -> Result<Vec<ActivationEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let mut entry: ActivationEntry =
            rec.map_err(|e| Error::InvalidData(format!("bad manifest row: {e}")))?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        out.push(entry);
    }
    Ok(out)
}

/// Conditional MI between the input and one recorded layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub layer: String,
    pub epoch: u64,
    pub path: String,
    pub seed: u64,
    pub unit: String,
    pub mi: Option<f64>,
    pub marginal_entropy: Option<f64>,
    pub conditional_entropy: Option<f64>,
    pub combined_std_error: Option<f64>,
    pub n_conditions: Option<usize>,
    pub n_samples: Option<usize>,
    pub dim: Option<usize>,
    pub error: Option<String>,
}

impl ActivationRecord {
    pub fn in_bits(&self) -> Self {
        if self.unit == "bits" {
            return self.clone();
        }
        let bits = |v: Option<f64>| v.map(|x| x / std::f64::consts::LN_2);
        ActivationRecord {
            unit: "bits".into(),
            mi: bits(self.mi),
            marginal_entropy: bits(self.marginal_entropy),
            conditional_entropy: bits(self.conditional_entropy),
            combined_std_error: bits(self.combined_std_error),
            ..self.clone()
        }
    }
}

/// Scores each dump with `conditional_mi` against its pooled marginal, one
/// row per entry in the given order. Entry `i` uses seed
/// `derive_seed(config.seed, i)`. Unreadable or unusable dumps become error
/// rows.
pub fn run_activation_mi(
    entries: &[ActivationEntry],
    config: &EstimatorConfig,
) -> Result<Vec<ActivationRecord>> {
    config.validate()?;
    Ok(entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let seed = derive_seed(config.seed, i as u64);
            let mut rec = ActivationRecord {
                layer: entry.layer.clone(),
                epoch: entry.epoch,
                path: entry.path.display().to_string(),
                seed,
                unit: "nats".into(),
                mi: None,
                marginal_entropy: None,
                conditional_entropy: None,
                combined_std_error: None,
                n_conditions: None,
                n_samples: None,
                dim: None,
                error: None,
            };
            let cfg = EstimatorConfig {
                seed,
                ..config.clone()
            };
            let result = ingest_activation_dump(&entry.path).and_then(|(data, pooled)| {
                let mi = conditional_mi(&data, &pooled, &cfg)?;
                Ok((mi, data.len(), pooled.count(), pooled.dim()))
            });
            match result {
                Ok((mi, m, count, dim)) => {
                    rec.mi = Some(mi.value);
                    rec.marginal_entropy = Some(mi.marginal_entropy());
                    rec.conditional_entropy = Some(mi.subtracted_entropy());
                    rec.combined_std_error = Some(mi.combined_std_error());
                    rec.n_conditions = Some(m);
                    rec.n_samples = Some(count);
                    rec.dim = Some(dim);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect())
}

const ACTIVATION_HEADER: &[&str] = &[
    "layer",
    "epoch",
    "path",
    "seed",
    "unit",
    "mi",
    "marginal_entropy",
    "conditional_entropy",
    "combined_std_error",
    "n_conditions",
    "n_samples",
    "dim",
    "error",
];

pub fn write_activation_csv<W: Write>(
    w: W,
    records: &[ActivationRecord],
    bits: bool,
) -> Result<()> {
    write_with_header(w, records, ACTIVATION_HEADER, |r| {
        if bits {
            r.in_bits()
        } else {
            r.clone()
        }
    })
}

pub fn read_activation_csv<R: Read>(r: R) -> Result<Vec<ActivationRecord>> {
    read_records(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            n: vec![40, 20],
            d: vec![2],
            sigma: vec![0.5],
            lambda_res: vec![0.01],
            kind: vec![DataKind::Gaussian],
            ambient_dim: 5,
            repeats: 3,
            template: EstimatorConfig::new(0.5, 2).with_n_mc(10).with_seed(9),
            reference: Reference::ClosedForm,
            timing: false,
        }
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(auc(&[1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[1.0, 3.0], &[2.0]).unwrap(), 0.5);
        assert!(auc(&[], &[1.0]).is_err());
        assert!(auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            DataKind::Gaussian,
            DataKind::Spiral(SpiralKind::Spiral2D),
            DataKind::Spiral(SpiralKind::Conical),
            DataKind::Spiral(SpiralKind::Cylindrical),
        ] {
            assert_eq!(kind.name().parse::<DataKind>().unwrap(), kind);
        }
        assert!("torus".parse::<DataKind>().is_err());
    }

    #[test]
    fn cells_are_canonical() {
        let spec = tiny_spec();
        let ns: Vec<usize> = spec.cells().iter().map(|c| c.n).collect();
        assert_eq!(ns, vec![20, 40]);
    }

    #[test]
    fn single_cell_gives_repeats_rows() {
        let mut spec = tiny_spec();
        spec.n = vec![30];
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.repeat, r);
            assert!(row.error.is_none());
            let abs = (row.estimate.unwrap() - row.reference.unwrap()).abs();
            assert_eq!(row.abs_error.unwrap(), abs);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = tiny_spec();
        spec.repeats = 0;
        assert!(spec.validate().unwrap_err().is_config_error());
        let mut spec = tiny_spec();
        spec.d = vec![6];
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec();
        spec.kind = vec![DataKind::Spiral(SpiralKind::Conical)];
        assert!(spec.validate().is_err());
        spec.reference = Reference::None;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn failing_cells_become_error_rows() {
        let spec = tiny_spec();
        let mut cell = spec.cells()[0];
        cell.kind = DataKind::Spiral(SpiralKind::Conical);
        let row = run_job(&spec, &cell, 0, None);
        assert!(row.error.unwrap().contains("closed-form"));
        assert!(row.estimate.is_none());
        let row = run_job(
            &spec,
            &spec.cells()[0],
            0,
            Some(Err("reference: boom".into())),
        );
        assert_eq!(row.error.as_deref(), Some("reference: boom"));
    }

    #[test]
    fn sweep_csv_round_trip() {
        let rows = run_sweep(&tiny_spec()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows, false).unwrap();
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), rows);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    }

    #[test]
    fn bits_only_rescale_entropies() {
        let rows = run_sweep(&tiny_spec()).unwrap();
        let b = rows[0].in_bits();
        assert_eq!(b.unit, "bits");
        assert_eq!(
            b.estimate.unwrap(),
            rows[0].estimate.unwrap() / std::f64::consts::LN_2
        );
        assert_eq!(b.eigen_gap, rows[0].eigen_gap);
        assert_eq!(b.in_bits(), b);
    }

    #[test]
    fn empty_outputs_have_headers() {
        let mut buf = Vec::new();
        write_activation_csv(&mut buf, &[], false).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            ACTIVATION_HEADER.join(",") + "\n"
        );
        let rows = run_activation_mi(&[], &EstimatorConfig::default()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn unbalanced_auc_rejected() {
        let cfg = EstimatorConfig::new(1.0, 1);
        assert!(run_indep_auc(9, 10, 1, 2, 0.1, &cfg)
            .unwrap_err()
            .is_config_error());
        assert!(run_indep_auc(11, 10, 1, 2, 0.1, &cfg)
            .unwrap_err()
            .is_config_error());
    }

    #[test]
    fn missing_dump_gives_error_row() {
        let entries = vec![ActivationEntry {
            layer: "t1".into(),
            epoch: 0,
            path: PathBuf::from("/nonexistent/dump.csv"),
        }];
        let rows = run_activation_mi(&entries, &EstimatorConfig::new(0.5, 1)).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.is_some());
        assert!(rows[0].mi.is_none());
    }
}
