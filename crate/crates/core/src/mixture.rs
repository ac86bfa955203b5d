//! Entropy of an isotropic Gaussian mixture `g = (1/n) Σ φ_σ(· − X_i)`.
//!
//! [`plugin_entropy_mc`] evaluates `h(g) = −(1/n) Σ_i E ln g(X_i + Z)` by Monte
//! Carlo, with the draws for center `i` taken from stream `i` of the seeded
//! generator. All log-densities are computed with log-sum-exp; no kernel value
//! is exponentiated without first subtracting the largest exponent.

use std::f64::consts::{E, PI};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::rng::substream;
use crate::sample::SampleMatrix;

/// Bound on the relative mass skipped by [`Evaluation::Exact`], in nats:
/// centers whose log-kernel falls more than `ln n + PRUNE_LOG_MARGIN` below
/// the largest one are skipped, so the skipped mass is at most
/// `e^{-PRUNE_LOG_MARGIN}` of the total.
pub const PRUNE_LOG_MARGIN: f64 = 36.0;

/// Largest mixture dimension for which the kd-tree is used.
const KD_MAX_DIM: usize = 8;
/// Smallest center count for which the kd-tree is used.
const KD_MIN_CENTERS: usize = 128;

/// How the mixture density is summed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Evaluation {
    /// Every center contributes, except those a kd-tree proves are more than
    /// [`PRUNE_LOG_MARGIN`] nats below the dominant term.
    #[default]
    Exact,
    /// Every center is summed, no pruning.
    Direct,
    /// Approximate: only centers within `radius_sigmas · σ` of the query are
    /// summed. Falls back to `Exact` when no center is that close.
    Truncated { radius_sigmas: f64 },
}

/// `(d/2) ln(2πeσ²)`: entropy of `N(0, σ² I_d)` in nats.
pub fn gaussian_noise_entropy(d: usize, sigma: f64) -> f64 {
    0.5 * d as f64 * (2.0 * PI * E * sigma * sigma).ln()
}

/// Equal-weight mixture of `N(X_i, σ² I_d)` over the columns of `centers`.
#[derive(Debug, Clone)]
pub struct IsotropicMixture {
    centers: SampleMatrix,
    sigma: f64,
    evaluation: Evaluation,
    tree: Option<KdTree>,
    /// Extra squared distance, beyond a known nearby center, inside which
    /// centers are summed.
    prune_sq_radius: f64,
}

impl IsotropicMixture {
    pub fn new(centers: SampleMatrix, sigma: f64) -> Result<Self> {
        Self::with_evaluation(centers, sigma, Evaluation::Exact)
    }

    pub fn with_evaluation(
        centers: SampleMatrix,
        sigma: f64,
        evaluation: Evaluation,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if let Evaluation::Truncated { radius_sigmas } = evaluation {
            if radius_sigmas.is_nan() || radius_sigmas <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "truncation radius must be positive, got {radius_sigmas}"
                )));
            }
        }
        let use_tree = match evaluation {
            Evaluation::Direct => false,
            Evaluation::Exact => centers.dim() <= KD_MAX_DIM && centers.count() >= KD_MIN_CENTERS,
            Evaluation::Truncated { .. } => true,
        };
        let tree = use_tree.then(|| KdTree::build(centers.dim(), centers.as_slice()));
        let prune_sq_radius =
            2.0 * sigma * sigma * ((centers.count() as f64).ln() + PRUNE_LOG_MARGIN);
        Ok(Self {
            centers,
            sigma,
            evaluation,
            tree,
            prune_sq_radius,
        })
    }

    pub fn centers(&self) -> &SampleMatrix {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn len(&self) -> usize {
        self.centers.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluation(&self) -> Evaluation {
        self.evaluation
    }

    /// `ln g(t)`.
    pub fn log_density(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(Error::InvalidData(format!(
                "query has dimension {}, mixture has {}",
                t.len(),
                self.dim()
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("query point is not finite".into()));
        }
        Ok(self.log_density_with(t, &mut Vec::new()))
    }

    /// `ln g(t)` using `scratch` for the squared distances.
    fn log_density_with(&self, t: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        match (&self.tree, self.evaluation) {
            (Some(tree), Evaluation::Truncated { radius_sigmas }) => {
                let r = radius_sigmas * self.sigma;
                tree.collect_sq_dists(t, r * r, true, scratch);
                if scratch.is_empty() {
                    let r2 = tree.nearby_sq_dist(t) + self.prune_sq_radius;
                    tree.collect_sq_dists(t, r2, true, scratch);
                }
            }
            (Some(tree), _) => {
                let r2 = tree.nearby_sq_dist(t) + self.prune_sq_radius;
                tree.collect_sq_dists(t, r2, true, scratch);
            }
            (None, _) => {
                scratch.extend(
                    self.centers
                        .samples()
                        .map(|c| c.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()),
                );
            }
        }
        self.log_density_from_sq_dists(scratch)
    }

    fn log_density_from_sq_dists(&self, sq: &[f64]) -> f64 {
        let inv_two_var = 0.5 / (self.sigma * self.sigma);
        let q_min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let sum: f64 = sq.iter().map(|&q| (-(q - q_min) * inv_two_var).exp()).sum();
        let d = self.dim() as f64;
        -(self.len() as f64).ln()
            - 0.5 * d * (2.0 * PI * self.sigma * self.sigma).ln()
            - q_min * inv_two_var
            + sum.ln()
    }
}

#[derive(Default)]
struct McScratch {
    noise: Vec<f64>,
    query: Vec<f64>,
    candidates: Vec<f64>,
    sq: Vec<f64>,
}

impl IsotropicMixture {
    /// Moments of `ln g(X_i + Z_j)` over the noise vectors in `s.noise`.
    ///
    /// With the kd-tree in exact mode, the centers that can matter for any of
    /// the queries around `X_i` are gathered once. Query `j` then sums every
    /// candidate within `‖Z_j‖² + prune_sq_radius` (squared) of it; `X_i`
    /// itself is at `‖Z_j‖²`, so this is the same certified rule as
    /// [`Self::log_density`].
    fn center_log_terms(&self, i: usize, s: &mut McScratch) -> Moments {
        let d = self.dim();
        let x = self.centers.sample(i);
        s.query.resize(d, 0.0);
        let mut m = Moments::default();
        let tree = match (&self.tree, self.evaluation) {
            (Some(tree), Evaluation::Exact) => tree,
            _ => {
                for z in s.noise.chunks_exact(d) {
                    for ((t, xk), zk) in s.query.iter_mut().zip(x).zip(z) {
                        *t = xk + zk;
                    }
                    m.push(self.log_density_with(&s.query, &mut s.sq));
                }
                return m;
            }
        };

        let z_sq: Vec<f64> = s
            .noise
            .chunks_exact(d)
            .map(|z| z.iter().map(|v| v * v).sum())
            .collect();
        let z_max = z_sq.iter().copied().fold(0.0f64, f64::max);
        let reach = (z_max + self.prune_sq_radius).sqrt() + z_max.sqrt();
        s.candidates.clear();
        tree.collect_points(x, reach * reach, &mut s.candidates);

        for (z, &zz) in s.noise.chunks_exact(d).zip(&z_sq) {
            for ((t, xk), zk) in s.query.iter_mut().zip(x).zip(z) {
                *t = xk + zk;
            }
            let r2 = zz + self.prune_sq_radius;
            s.sq.clear();
            for c in s.candidates.chunks_exact(d) {
                let q: f64 = c.iter().zip(&s.query).map(|(a, b)| (a - b) * (a - b)).sum();
                if q <= r2 {
                    s.sq.push(q);
                }
            }
            m.push(self.log_density_from_sq_dists(&s.sq));
        }
        m
    }
}

/// `ln g(t)` for the mixture `mix`.
pub fn mixture_log_density(mix: &IsotropicMixture, t: &[f64]) -> Result<f64> {
    mix.log_density(t)
}

/// Monte-Carlo smoothed-entropy estimate, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    /// Sample std of the `n·n_mc` log terms over `√(n·n_mc)`. Treats the
    /// terms as independent, so it is a diagnostic rather than a rigorous CI.
    pub mc_std_error: f64,
    pub n_centers: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub dim: usize,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// `ĥ = −(1/n) Σ_i (1/n_mc) Σ_j ln g(X_i + Z_j^{(i)})` with `Z ~ N(0, σ²I)` from
/// stream `i` of `seed`. Deterministic in `(mixture, n_mc, seed)` regardless
/// of thread count.
pub fn plugin_entropy_mc(
    mix: &IsotropicMixture,
    n_mc: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    if n_mc < 1 {
        return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
    }
    let d = mix.dim();
    let sigma = mix.sigma();
    let per_center: Vec<Moments> = (0..mix.len())
        .into_par_iter()
        .map_init(McScratch::default, |scratch, i| {
            let mut rng = substream(seed, i as u64);
            scratch.noise.clear();
            scratch.noise.extend((0..n_mc * d).map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                sigma * v
            }));
            mix.center_log_terms(i, scratch)
        })
        .collect();

    let n = mix.len() as f64;
    let value = -per_center.iter().map(|m| m.mean).sum::<f64>() / n;
    let total = per_center
        .iter()
        .fold(Moments::default(), |acc, &m| acc.merge(m));
    let mc_std_error = if total.count > 1.0 {
        (total.m2 / (total.count - 1.0)).sqrt() / total.count.sqrt()
    } else {
        0.0
    };
    Ok(EntropyEstimate {
        value,
        mc_std_error,
        n_centers: mix.len(),
        n_mc,
        seed,
        dim: d,
    })
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule over `[lo, hi]` with panels of width at most
/// `panel`.
fn composite_rule(lo: f64, hi: f64, panel: f64) -> Vec<(f64, f64)> {
    const ORDER: usize = 12;
    let (nodes, weights) = gauss_legendre(ORDER);
    let panels = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let h = (hi - lo) / panels as f64;
    let mut rule = Vec::with_capacity(panels * ORDER);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(&weights) {
            rule.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    rule
}

/// `−∫ g ln g` by tensor Gauss–Legendre quadrature over the centers' bounding
/// box padded by 8σ. Supports `d ≤ 2` and at most 200 centers.
pub fn plugin_entropy_quadrature(mix: &IsotropicMixture) -> Result<f64> {
    let d = mix.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature supports d <= 2, got {d}"
        )));
    }
    if mix.len() > 200 {
        return Err(Error::Unsupported(format!(
            "quadrature supports at most 200 centers, got {}",
            mix.len()
        )));
    }
    let pad = 8.0 * mix.sigma();
    let panel = 0.5 * mix.sigma();
    let rules: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| {
            let (lo, hi) = mix
                .centers()
                .samples()
                .map(|c| c[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            composite_rule(lo - pad, hi + pad, panel)
        })
        .collect();

    let direct = if mix.evaluation() == Evaluation::Direct {
        mix.clone()
    } else {
        IsotropicMixture::with_evaluation(mix.centers().clone(), mix.sigma(), Evaluation::Direct)?
    };
    let integrand = |t: &[f64], scratch: &mut Vec<f64>| {
        let lg = direct.log_density_with(t, scratch);
        -lg.exp() * lg
    };
    let mut scratch = Vec::new();
    let total = if d == 1 {
        rules[0]
            .iter()
            .map(|&(x, w)| w * integrand(&[x], &mut scratch))
            .sum()
    } else {
        rules[0]
            .par_iter()
            .map_init(Vec::new, |scratch, &(x, wx)| {
                rules[1]
                    .iter()
                    .map(|&(y, wy)| wx * wy * integrand(&[x, y], scratch))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    };
    Ok(total)
}
