//! `smoothent`: generate synthetic data, estimate smoothed entropies and
//! mutual information, and run the sweep and independence-test harnesses.
//!
//! Every subcommand writes CSV to `--out` (stdout when absent). Exit status is
//! 0 on success, 2 for invalid configuration and 3 for data errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smoothent::harness::{
    read_activation_manifest, write_activation_csv, write_auc_csv, write_sweep_csv, DataKind,
    Reference, SweepSpec,
};
use smoothent::io::{
    fmt_f64, read_samples, write_activation_dump_to, write_pca_model, write_samples_to,
};
use smoothent::synth::gen_spiral;
use smoothent::{
    conditional_mi, gen_common_signal_pair, gen_embedded_gaussian, ingest_activation_dump,
    joint_mi_with_targets, pca_smoothed_entropy, run_activation_mi, run_indep_auc, run_sweep,
    Error, EstimatorConfig, JointDataset, JointTargets, SpiralKind, SplitPolicy,
};

#[derive(Parser, Debug)]
#[command(
    name = "smoothent",
    version,
    about = "Smoothed differential entropy and mutual information via PCA"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Standard deviation of the smoothing noise.
    #[arg(long, global = true, default_value_t = 0.1)]
    sigma: f64,

    /// Target (projection) dimension d.
    #[arg(long, global = true, default_value_t = 3)]
    dim: usize,

    /// Monte-Carlo draws per mixture center.
    #[arg(long, global = true, default_value_t = 100)]
    n_mc: usize,

    /// How samples are divided between the PCA fit and the entropy estimate.
    #[arg(long, global = true, value_enum, default_value_t = Split::Half)]
    split: Split,

    /// Fit PCA to the uncentered second-moment matrix.
    #[arg(long, global = true)]
    no_center: bool,

    /// Report entropies in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,

    /// Output file (stdout when absent). For `gen pair`, the output prefix.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Half,
    Reuse,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GenKind {
    Gaussian,
    Spiral2d,
    Conical,
    Cylindrical,
    Pair,
    /// Two conditions, one a shifted copy of the other, as an activation dump.
    TwoCondition,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReferenceMode {
    /// Closed form for Gaussian-only grids, self-consistency otherwise.
    Auto,
    ClosedForm,
    SelfConsistency,
    None,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
        /// Number of samples.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Ambient dimension D.
        #[arg(long, default_value_t = 100)]
        ambient_dim: usize,
        /// Residual intensity (variance for gaussian, std for spirals).
        #[arg(long, default_value_t = 0.01)]
        lambda_res: f64,
        /// Observation noise std for pairs; separation for two-condition dumps.
        #[arg(long, default_value_t = 0.01)]
        noise_std: f64,
        /// Generate an independent (null) pair instead of a dependent one.
        #[arg(long)]
        null: bool,
    },
    /// Estimate the smoothed entropy of a sample CSV.
    Entropy {
        input: PathBuf,
        /// Also write the fitted PCA model to this file.
        #[arg(long)]
        save_pca: Option<PathBuf>,
    },
    /// Conditional-sampling MI from an activation dump.
    MiCond {
        dump: PathBuf,
        /// Marginal samples; pooled from the dump when absent.
        #[arg(long)]
        marginal: Option<PathBuf>,
    },
    /// Joint-sampling MI from paired sample files.
    MiJoint {
        x: PathBuf,
        y: PathBuf,
        /// Target dimension for x (defaults to --dim).
        #[arg(long)]
        dim_x: Option<usize>,
        /// Target dimension for y (defaults to --dim).
        #[arg(long)]
        dim_y: Option<usize>,
        /// Target dimension for the stacked pair (defaults to dim_x + dim_y).
        #[arg(long)]
        dim_joint: Option<usize>,
    },
    /// Sweep the estimator over a parameter grid.
    Sweep(SweepArgs),
    /// Independence-test AUC on common-signal pairs.
    IndepAuc {
        /// Total datasets, half dependent and half null.
        #[arg(long, default_value_t = 40)]
        n_datasets: usize,
        /// Samples per dataset.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        ambient_dim: usize,
        #[arg(long, default_value_t = 0.01)]
        noise_std: f64,
    },
    /// Conditional MI for each dump listed in a `layer,epoch,path` manifest.
    ActivationMi { manifest: PathBuf },
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Samples per half (comma-separated).
    #[arg(long, value_delimiter = ',')]
    ns: Vec<usize>,
    /// Target dimensions (defaults to --dim).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Noise levels (defaults to --sigma).
    #[arg(long, value_delimiter = ',')]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    lambdas: Vec<f64>,
    /// gaussian, spiral2d, conical or cylindrical.
    #[arg(long, value_delimiter = ',', default_value = "gaussian")]
    kinds: Vec<String>,
    #[arg(long, default_value_t = 100)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = ReferenceMode::Auto)]
    reference: ReferenceMode,
    /// Full-scale grids: n up to 10^5 and the large self-consistency run.
    #[arg(long)]
    full: bool,
    /// Record wall time per row (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

impl GlobalOpts {
    fn config(&self) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(self.sigma, self.dim)
            .with_seed(self.seed)
            .with_n_mc(self.n_mc)
            .with_split(match self.split {
                Split::Half => SplitPolicy::Half,
                Split::Reuse => SplitPolicy::Reuse,
            });
        cfg.center = !self.no_center;
        cfg
    }

    fn output(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn unit(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    fn scale(&self, nats: f64) -> f64 {
        if self.bits {
            nats / std::f64::consts::LN_2
        } else {
            nats
        }
    }
}

fn create(path: &Path) -> Result<File, Error> {
    File::create(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot create {}: {e}", path.display())))
}

/// Writes a header line and one data row.
fn write_row(g: &GlobalOpts, header: &[&str], row: &[String]) -> Result<(), Error> {
    let mut w = g.output()?;
    writeln!(w, "{}", header.join(","))?;
    writeln!(w, "{}", row.join(","))?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen {
            kind,
            n,
            ambient_dim,
            lambda_res,
            noise_std,
            null,
        } => generate(g, *kind, *n, *ambient_dim, *lambda_res, *noise_std, *null),
        Command::Entropy { input, save_pca } => entropy(g, input, save_pca.as_deref()),
        Command::MiCond { dump, marginal } => mi_cond(g, dump, marginal.as_deref()),
        Command::MiJoint {
            x,
            y,
            dim_x,
            dim_y,
            dim_joint,
        } => {
            let dx = dim_x.unwrap_or(g.dim);
            let dy = dim_y.unwrap_or(g.dim);
            let targets = JointTargets {
                x: dx,
                y: dy,
                joint: dim_joint.unwrap_or(dx + dy),
            };
            mi_joint(g, x, y, targets)
        }
        Command::Sweep(args) => sweep(g, args),
        Command::IndepAuc {
            n_datasets,
            n,
            ambient_dim,
            noise_std,
        } => {
            let report = run_indep_auc(
                *n_datasets,
                *n,
                g.dim,
                *ambient_dim,
                *noise_std,
                &g.config(),
            )?;
            write_auc_csv(g.output()?, &report.datasets, g.bits)?;
            eprintln!(
                "pca_auc={} ambient_auc={}",
                report.pca_auc, report.ambient_auc
            );
            Ok(())
        }
        Command::ActivationMi { manifest } => {
            let entries = read_activation_manifest(manifest)?;
            let rows = run_activation_mi(&entries, &g.config())?;
            write_activation_csv(g.output()?, &rows, g.bits)
        }
    }
}

fn generate(
    g: &GlobalOpts,
    kind: GenKind,
    n: usize,
    ambient_dim: usize,
    lambda_res: f64,
    noise_std: f64,
    null: bool,
) -> Result<(), Error> {
    let samples = match kind {
        GenKind::Gaussian => {
            gen_embedded_gaussian(g.dim, ambient_dim, lambda_res, n, g.seed)?.samples
        }
        GenKind::Spiral2d => gen_spiral(SpiralKind::Spiral2D, lambda_res, ambient_dim, n, g.seed)?,
        GenKind::Conical => gen_spiral(SpiralKind::Conical, lambda_res, ambient_dim, n, g.seed)?,
        GenKind::Cylindrical => {
            gen_spiral(SpiralKind::Cylindrical, lambda_res, ambient_dim, n, g.seed)?
        }
        GenKind::Pair => return generate_pair(g, n, ambient_dim, noise_std, !null),
        GenKind::TwoCondition => {
            let base =
                gen_embedded_gaussian(g.dim, ambient_dim, lambda_res, 2 * n, g.seed)?.samples;
            let mut values = base.as_slice().to_vec();
            let mut conditions = vec![0i64; n];
            conditions.extend(std::iter::repeat_n(1, n));
            for v in values[n * ambient_dim..].iter_mut().step_by(ambient_dim) {
                *v += noise_std;
            }
            let features = smoothent::SampleMatrix::from_columns(ambient_dim, values)?;
            let mut w = g.output()?;
            write_activation_dump_to(&mut w, &conditions, &features)?;
            w.flush()?;
            return Ok(());
        }
    };
    let mut w = g.output()?;
    write_samples_to(&mut w, &samples)?;
    w.flush()?;
    Ok(())
}

fn generate_pair(
    g: &GlobalOpts,
    n: usize,
    ambient_dim: usize,
    noise_std: f64,
    dependent: bool,
) -> Result<(), Error> {
    let prefix = g
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("gen pair needs --out <prefix>".into()))?;
    let pair = gen_common_signal_pair(g.dim, ambient_dim, n, noise_std, dependent, g.seed)?;
    let with_suffix = |suffix: &str| {
        let mut s = prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let (x_path, y_path) = (with_suffix(".x.csv"), with_suffix(".y.csv"));
    for (path, samples) in [(&x_path, &pair.data.x), (&y_path, &pair.data.y)] {
        let mut w = BufWriter::new(create(path)?);
        write_samples_to(&mut w, samples)?;
        w.flush()?;
    }
    let file_name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let mut w = BufWriter::new(create(&with_suffix(".manifest.csv"))?);
    writeln!(
        w,
        "x,y,dependent,seed,intrinsic_dim,ambient_dim,n,noise_std"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        file_name(&x_path),
        file_name(&y_path),
        pair.dependent,
        pair.seed,
        g.dim,
        ambient_dim,
        n,
        fmt_f64(noise_std)
    )?;
    w.flush()?;
    Ok(())
}

fn entropy(g: &GlobalOpts, input: &Path, save_pca: Option<&Path>) -> Result<(), Error> {
    let samples = read_samples(input)?;
    let cfg = g.config();
    let est = pca_smoothed_entropy(&samples, &cfg)?;
    if let Some(path) = save_pca {
        write_pca_model(path, &est.pca)?;
    }
    write_row(
        g,
        &[
            "unit",
            "estimate",
            "projected",
            "correction",
            "mc_std_error",
            "n",
            "ambient_dim",
            "target_dim",
            "sigma",
            "n_mc",
            "seed",
            "eigen_gap",
            "residual",
        ],
        &[
            g.unit().to_string(),
            fmt_f64(g.scale(est.value())),
            fmt_f64(g.scale(est.projected.value)),
            fmt_f64(g.scale(est.correction)),
            fmt_f64(g.scale(est.mc_std_error())),
            samples.count().to_string(),
            samples.dim().to_string(),
            cfg.target_dim.to_string(),
            fmt_f64(cfg.sigma),
            cfg.n_mc.to_string(),
            cfg.seed.to_string(),
            fmt_f64(est.pca.eigen_gap),
            fmt_f64(est.pca.residual),
        ],
    )
}

fn mi_cond(g: &GlobalOpts, dump: &Path, marginal: Option<&Path>) -> Result<(), Error> {
    let (data, pooled) = ingest_activation_dump(dump)?;
    let marginal = match marginal {
        Some(path) => read_samples(path)?,
        None => pooled,
    };
    let mi = conditional_mi(&data, &marginal, &g.config())?;
    write_row(
        g,
        &[
            "unit",
            "mi",
            "marginal_entropy",
            "conditional_entropy",
            "combined_std_error",
            "n_conditions",
            "dim",
        ],
        &[
            g.unit().to_string(),
            fmt_f64(g.scale(mi.value)),
            fmt_f64(g.scale(mi.marginal_entropy())),
            fmt_f64(g.scale(mi.subtracted_entropy())),
            fmt_f64(g.scale(mi.combined_std_error())),
            data.len().to_string(),
            data.dim().to_string(),
        ],
    )
}

fn mi_joint(g: &GlobalOpts, x: &Path, y: &Path, targets: JointTargets) -> Result<(), Error> {
    let data = JointDataset::new(read_samples(x)?, read_samples(y)?)?;
    let mi = joint_mi_with_targets(&data, &g.config(), targets)?;
    let h = |i: usize| fmt_f64(g.scale(mi.components[i].entropy.value()));
    write_row(
        g,
        &[
            "unit",
            "mi",
            "h_x",
            "h_y",
            "h_joint",
            "combined_std_error",
            "n",
        ],
        &[
            g.unit().to_string(),
            fmt_f64(g.scale(mi.value)),
            h(0),
            h(1),
            h(2),
            fmt_f64(g.scale(mi.combined_std_error())),
            data.x.count().to_string(),
        ],
    )
}

fn sweep(g: &GlobalOpts, args: &SweepArgs) -> Result<(), Error> {
    let kind = args
        .kinds
        .iter()
        .map(|k| k.parse::<DataKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let n = if !args.ns.is_empty() {
        args.ns.clone()
    } else if args.full {
        vec![100, 1_000, 10_000, 100_000]
    } else {
        vec![100, 1_000, 10_000]
    };
    let self_consistency = if args.full {
        Reference::FULL_SELF_CONSISTENCY
    } else {
        Reference::DESK_SELF_CONSISTENCY
    };
    let reference = match args.reference {
        ReferenceMode::Auto if kind.iter().all(|k| *k == DataKind::Gaussian) => {
            Reference::ClosedForm
        }
        ReferenceMode::Auto | ReferenceMode::SelfConsistency => self_consistency,
        ReferenceMode::ClosedForm => Reference::ClosedForm,
        ReferenceMode::None => Reference::None,
    };
    let spec = SweepSpec {
        n,
        d: if args.dims.is_empty() {
            vec![g.dim]
        } else {
            args.dims.clone()
        },
        sigma: if args.sigmas.is_empty() {
            vec![g.sigma]
        } else {
            args.sigmas.clone()
        },
        lambda_res: args.lambdas.clone(),
        kind,
        ambient_dim: args.ambient_dim,
        repeats: args.repeats,
        template: g.config(),
        reference,
        timing: args.timing,
    };
    let rows = run_sweep(&spec)?;
    write_sweep_csv(g.output()?, &rows, g.bits)
}
