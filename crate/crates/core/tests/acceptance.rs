//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Built with `harness = false` so the report is always shown.
//!
//! Reference constants were evaluated in 40-digit arithmetic (mpmath).

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use smoothent::harness::{
    gaussian_cell_reference, median, summarize, write_sweep_csv, ActivationEntry, CellSummary,
};
use smoothent::io::write_activation_dump;
use smoothent::rng::{derive_seed, substream};
use smoothent::{
    conditional_mi, dimension_correction, fit_pca, joint_mi, pca_error_bound, plugin_entropy_mc,
    plugin_entropy_quadrature, run_activation_mi, run_indep_auc, run_sweep, BoundInputs,
    ConditionalDataset, DataKind, EstimatorConfig, IsotropicMixture, JointDataset, Reference,
    SampleMatrix, SweepSpec,
};

const MASTER_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("single-Gaussian calibration", single_gaussian_calibration),
        ("quadrature agreement", quadrature_agreement),
        ("embedded Gaussian end to end", embedded_gaussian_end_to_end),
        ("parameter sweep trends", parameter_sweep_trends),
        ("independence-test AUC", independence_auc),
        ("MI oracles", mi_oracles),
        ("data processing", data_processing),
        ("invariant suites", invariant_suites),
        ("error bound vs high-precision evaluation", bound_precision),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {status} {name} [{:.1}s] {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn origin(dim: usize) -> SampleMatrix {
    SampleMatrix::from_columns(dim, vec![0.0; dim]).unwrap()
}

fn single_gaussian_calibration() -> Outcome {
    // (d/2) ln(2πeσ²)
    let expected = [
        (1, 0.1, -0.883_646_559_789_372_9),
        (1, 0.5, 0.725_791_352_644_727_4),
        (1, 1.0, 1.418_938_533_204_672_7),
        (2, 0.1, -1.767_293_119_578_745_9),
        (2, 0.5, 1.451_582_705_289_454_8),
        (2, 1.0, 2.837_877_066_409_345_5),
        (3, 0.1, -2.650_939_679_368_119),
        (3, 0.5, 2.177_374_057_934_182_3),
        (3, 1.0, 4.256_815_599_614_018_2),
    ];
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut pass = true;
    for (k, &(d, sigma, h)) in expected.iter().enumerate() {
        let mix = IsotropicMixture::new(origin(d), sigma).unwrap();
        let est = plugin_entropy_mc(&mix, 100_000, derive_seed(MASTER_SEED, k as u64)).unwrap();
        let tol = (3.0 * est.mc_std_error).max(0.01);
        let err = (est.value - h).abs();
        worst = worst.max(err / tol);
        pass &= err <= tol;
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    Outcome::new(
        pass,
        format!(
            "worst |error|/tolerance {worst:.3}, {:.2}s of 10s",
            elapsed.as_secs_f64()
        ),
    )
}

fn quadrature_agreement() -> Outcome {
    let mut rng = substream(MASTER_SEED, 2);
    let mut worst = 0.0f64;
    let mut pass = true;
    for k in 0..20 {
        let d = 1 + (k % 2);
        let n = rng.random_range(1..=50);
        let sigma = rng.random_range(0.3..1.5);
        let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mix =
            IsotropicMixture::new(SampleMatrix::from_columns(d, values).unwrap(), sigma).unwrap();
        let quad = plugin_entropy_quadrature(&mix).unwrap();
        let mc =
            plugin_entropy_mc(&mix, 100_000, derive_seed(MASTER_SEED, 100 + k as u64)).unwrap();
        let tol = 4.0 * mc.mc_std_error + 1e-4;
        let err = (mc.value - quad).abs();
        worst = worst.max(err / tol);
        pass &= err <= tol;
    }
    Outcome::new(
        pass,
        format!("20 mixtures, worst |MC - quadrature|/tolerance {worst:.3}"),
    )
}

fn cell_medians(rows: &[CellSummary]) -> Vec<f64> {
    rows.iter()
        .map(|c| c.median_abs_error.unwrap_or(f64::NAN))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn gaussian_sweep(
    n: Vec<usize>,
    d: Vec<usize>,
    sigma: Vec<f64>,
    lambda_res: Vec<f64>,
) -> SweepSpec {
    SweepSpec {
        n,
        d,
        sigma,
        lambda_res,
        kind: vec![DataKind::Gaussian],
        ambient_dim: 100,
        repeats: 10,
        template: EstimatorConfig::default()
            .with_n_mc(100)
            .with_seed(MASTER_SEED),
        reference: Reference::ClosedForm,
        timing: false,
    }
}

fn embedded_gaussian_end_to_end() -> Outcome {
    let start = Instant::now();
    let reference = gaussian_cell_reference(3, 100, 0.1).unwrap();
    let expected_reference = -81.441_975_203_675_41;
    let spec = gaussian_sweep(vec![100, 1_000, 10_000], vec![3], vec![0.1], vec![0.01]);
    let rows = run_sweep(&spec).unwrap();
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    let medians = cell_medians(&summarize(&rows));
    let elapsed = start.elapsed();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let pass = failures == 0
        && (reference - expected_reference).abs() < 1e-10
        && decreasing
        && medians[2] <= 0.5
        && elapsed < Duration::from_secs(300);
    Outcome::new(
        pass,
        format!(
            "reference {reference:.4}, median |error| for n = 1e2, 1e3, 1e4: {}, {:.0}s of 300s",
            fmt_list(&medians),
            elapsed.as_secs_f64()
        ),
    )
}

fn parameter_sweep_trends() -> Outcome {
    let by_d = cell_medians(&summarize(
        &run_sweep(&gaussian_sweep(
            vec![1_000],
            (2..=10).collect(),
            vec![0.1],
            vec![0.01],
        ))
        .unwrap(),
    ));
    let sigmas = vec![0.025, 0.05, 0.1, 0.2, 0.4, 0.8];
    let by_sigma = cell_medians(&summarize(
        &run_sweep(&gaussian_sweep(vec![1_000], vec![3], sigmas, vec![0.01])).unwrap(),
    ));
    let by_lambda = cell_medians(&summarize(
        &run_sweep(&gaussian_sweep(
            vec![1_000],
            vec![3],
            vec![0.1],
            vec![0.01, 0.03, 0.1, 0.3],
        ))
        .unwrap(),
    ));
    let d_ok = by_d.windows(2).all(|w| w[1] >= w[0]);
    let sigma_ok = by_sigma.windows(2).all(|w| w[1] <= w[0]);
    let hi = by_lambda.iter().copied().fold(f64::MIN, f64::max);
    let lo = by_lambda.iter().copied().fold(f64::MAX, f64::min);
    let lambda_ok = hi < 2.0 * lo;
    Outcome::new(
        d_ok && sigma_ok && lambda_ok,
        format!(
            "(a) d=2..10 {} {}; (b) sigma=0.025..0.8 {} {}; (c) lambda ratio {:.3} {}",
            fmt_list(&by_d),
            ok(d_ok),
            fmt_list(&by_sigma),
            ok(sigma_ok),
            hi / lo,
            ok(lambda_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn independence_auc() -> Outcome {
    let start = Instant::now();
    let cfg = EstimatorConfig::new(1.0, 3)
        .with_n_mc(100)
        .with_seed(MASTER_SEED);
    let report = run_indep_auc(40, 500, 3, 100, 0.01, &cfg).unwrap();
    let elapsed = start.elapsed();
    let pass = report.pca_auc >= 0.9
        && report.pca_auc > report.ambient_auc
        && elapsed < Duration::from_secs(600);
    Outcome::new(
        pass,
        format!(
            "PCA AUC {:.3}, ambient AUC {:.3}, {:.0}s of 600s",
            report.pca_auc,
            report.ambient_auc,
            elapsed.as_secs_f64()
        ),
    )
}

fn mi_oracles() -> Outcome {
    // (1/2) ln(4/3): Gaussian oracle for I(X+Z1; X+Z2) with unit variances.
    let joint_expected = 0.143_841_036_225_890_46;
    let x: Vec<f64> = {
        let mut rng = substream(MASTER_SEED, 6);
        (0..10_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let x = SampleMatrix::from_columns(1, x).unwrap();
    let cfg = EstimatorConfig::new(1.0, 1)
        .with_n_mc(100)
        .with_seed(MASTER_SEED);
    let joint = joint_mi(&JointDataset::new(x.clone(), x).unwrap(), &cfg).unwrap();
    let joint_tol = (3.0 * joint.combined_std_error()).max(0.05);
    let joint_ok = (joint.value - joint_expected).abs() <= joint_tol;

    // Two equiprobable point masses 20σ apart: quadrature of the two-mode
    // mixture entropy minus the noise entropy equals ln 2 to 40 digits.
    let masses = |at: f64| SampleMatrix::from_columns(1, vec![at; 1_000]).unwrap();
    let data = ConditionalDataset::new(vec![0, 1], vec![masses(-10.0), masses(10.0)]).unwrap();
    let cond = conditional_mi(&data, &data.pooled().unwrap(), &cfg).unwrap();
    let cond_tol = (3.0 * cond.combined_std_error()).max(0.01);
    let cond_ok = (cond.value - std::f64::consts::LN_2).abs() <= cond_tol;
    Outcome::new(
        joint_ok && cond_ok,
        format!(
            "joint {:.4} vs 0.1438 (tol {joint_tol:.3}) {}; conditional {:.4} vs ln 2 (tol {cond_tol:.3}) {}",
            joint.value,
            ok(joint_ok),
            cond.value,
            ok(cond_ok)
        ),
    )
}

/// Writes dumps for the chain `X → T1 → T2`: `X` picks one of eight points on
/// a circle, `T1` adds isotropic noise in a 10-dim layer and `T2` adds more.
fn write_chain_dumps(dir: &Path, seed: u64) -> Vec<ActivationEntry> {
    let (m, per, dim) = (8usize, 200usize, 10usize);
    let mut rng = substream(seed, 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut conditions = Vec::new();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for c in 0..m {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / m as f64;
        for _ in 0..per {
            conditions.push(c as i64);
            for k in 0..dim {
                let mean = match k {
                    0 => 2.0 * angle.cos(),
                    1 => 2.0 * angle.sin(),
                    _ => 0.0,
                };
                let scale = if k < 2 { 0.3 } else { 0.05 };
                let a = mean + scale * normal();
                t1.push(a);
                t2.push(a + if k < 2 { 1.0 } else { 0.05 } * normal());
            }
        }
    }
    let mut entries = Vec::new();
    for (layer, values) in [("t1", t1), ("t2", t2)] {
        let path = dir.join(format!("{layer}-{seed}.csv"));
        let features = SampleMatrix::from_columns(dim, values).unwrap();
        write_activation_dump(&path, &conditions, &features).unwrap();
        entries.push(ActivationEntry {
            layer: layer.into(),
            epoch: seed,
            path,
        });
    }
    entries
}

fn data_processing() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<ActivationEntry> = (0..10)
        .flat_map(|s| write_chain_dumps(dir.path(), MASTER_SEED + s))
        .collect();
    let cfg = EstimatorConfig::new(0.5, 2)
        .with_n_mc(50)
        .with_seed(MASTER_SEED);
    let rows = run_activation_mi(&entries, &cfg).unwrap();
    let layer = |name: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.layer == name)
            .filter_map(|r| r.mi)
            .collect()
    };
    let (m1, m2) = (median(&layer("t1")).unwrap(), median(&layer("t2")).unwrap());
    let complete = rows.iter().all(|r| r.error.is_none());
    Outcome::new(
        complete && m1 >= m2,
        format!("median MI(X;T1) {m1:.4} >= median MI(X;T2) {m2:.4} over 10 seeds"),
    )
}

fn invariant_suites() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = substream(MASTER_SEED, 8);

    // PCA: orthonormal basis, idempotent projector, rotation-invariant spectrum.
    let mut pca_ok = true;
    for trial in 0..10 {
        let (dim, n) = (2 + trial % 6, 20 + trial);
        let x: Vec<f64> = (0..dim * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = SampleMatrix::from_columns(dim, x).unwrap();
        let model = fit_pca(&x, 1 + trial % dim, true).unwrap();
        let d = model.target_dim;
        pca_ok &= (model.basis.transpose() * &model.basis - DMatrix::identity(d, d)).amax() < 1e-8;
        let p = model.projector();
        pca_ok &= (&p * &p - &p).amax() < 1e-10;
        let q = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let rotated = fit_pca(&SampleMatrix::new(&q * x.matrix()).unwrap(), d, true).unwrap();
        pca_ok &= model
            .spectrum
            .iter()
            .zip(&rotated.spectrum)
            .all(|(a, b)| (a - b).abs() <= 1e-8 * model.spectrum[0].max(1.0));
    }
    notes.push(format!("pca {}", ok(pca_ok)));

    let mut tele_ok = true;
    for (big, mid, small, sigma) in [(100, 10, 3, 0.1), (50, 50, 1, 2.0), (7, 4, 4, 0.37)] {
        let lhs = dimension_correction(big, mid, sigma).unwrap()
            + dimension_correction(mid, small, sigma).unwrap();
        tele_ok &= (lhs - dimension_correction(big, small, sigma).unwrap()).abs()
            <= 1e-12 * lhs.abs().max(1.0);
    }
    notes.push(format!("telescoping {}", ok(tele_ok)));

    let centers: Vec<f64> = (0..3 * 300).map(|_| rng.random_range(-2.0..2.0)).collect();
    let shifted: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(i, v)| v + [40.0, -7.5, 1e3][i % 3])
        .collect();
    let a = IsotropicMixture::new(SampleMatrix::from_columns(3, centers).unwrap(), 0.2).unwrap();
    let b = IsotropicMixture::new(SampleMatrix::from_columns(3, shifted).unwrap(), 0.2).unwrap();
    let ea = plugin_entropy_mc(&a, 50, 17).unwrap();
    let eb = plugin_entropy_mc(&b, 50, 17).unwrap();
    let translation_ok = (ea.value - eb.value).abs() <= 1e-9 * ea.value.abs().max(1.0);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let again = single.install(|| plugin_entropy_mc(&a, 50, 17).unwrap());
    let determinism_ok = again.value.to_bits() == ea.value.to_bits();
    notes.push(format!(
        "translation {} seed/thread determinism {}",
        ok(translation_ok),
        ok(determinism_ok)
    ));

    let spec = SweepSpec {
        repeats: 3,
        ambient_dim: 8,
        template: EstimatorConfig::new(0.3, 2).with_n_mc(20).with_seed(5),
        ..gaussian_sweep(vec![30, 60], vec![2], vec![0.3], vec![0.05])
    };
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let rows = pool.install(|| run_sweep(&spec).unwrap());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows, false).unwrap();
        buf
    };
    let first = csv(1);
    let csv_ok = first == csv(1) && first == csv(4);
    notes.push(format!("csv bytes {}", ok(csv_ok)));

    let mut bound_ok = true;
    for _ in 0..200 {
        let b = BoundInputs {
            k: 1.0,
            m: rng.random_range(0.01..50.0),
            l: rng.random_range(0.0..5.0),
            delta_d: rng.random_range(1e-3..5.0),
            ambient_dim: rng.random_range(2..200),
            target_dim: 1,
            sigma: rng.random_range(0.01..3.0),
            n: rng.random_range(2.0..1e7),
        };
        let v = |x: BoundInputs| pca_error_bound(&x).unwrap().value;
        let base = v(b);
        bound_ok &= v(BoundInputs { n: b.n * 2.0, ..b }) <= base
            && v(BoundInputs { l: b.l + 0.1, ..b }) >= base
            && v(BoundInputs { m: b.m * 1.5, ..b }) >= base
            && v(BoundInputs {
                delta_d: b.delta_d * 1.5,
                ..b
            }) <= base;
    }
    notes.push(format!("bound monotonicity {}", ok(bound_ok)));

    Outcome::new(
        pca_ok && tele_ok && translation_ok && determinism_ok && csv_ok && bound_ok,
        notes.join(", "),
    )
}

fn bound_precision() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/bound_grid.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut count = 0;
    let mut worst = 0.0f64;
    for row in reader.records() {
        let row = row.unwrap();
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let u = |i: usize| row[i].parse::<usize>().unwrap();
        let b = BoundInputs {
            k: f(0),
            m: f(1),
            l: f(2),
            delta_d: f(3),
            ambient_dim: u(4),
            target_dim: u(5),
            sigma: f(6),
            n: f(7),
        };
        let got = pca_error_bound(&b).unwrap();
        for (value, expected) in [(got.prefactor, f(8)), (got.value, f(9))] {
            worst = worst.max(((value - expected) / expected).abs());
        }
        count += 1;
    }
    Outcome::new(
        count == 100 && worst <= 1e-10,
        format!("{count} inputs, worst relative error {worst:.2e}"),
    )
}
