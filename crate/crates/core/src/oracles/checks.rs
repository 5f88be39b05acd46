//! Statistical and exact checks of the estimator's properties.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::surrogate::{QuadraticRisk, SurrogateSpace};
use crate::error::{GfdError, Result};
use crate::function_space::{FactoredBasis, PreBasisExpansion};
use crate::linalg::{CholeskyFactor, SymMatrix};
use crate::optimizer::{estimate_gradient, optimal_constant_step, run, GfdConfig, StepSchedule};
use crate::quadrature::pairwise_sum;
use crate::risk::RiskFunctional;
use crate::rng::substream;
use crate::sampler::{tails_for_target, DimensionLaw, PreconditionSchedule, TRUNCATION_MASS};

/// Growth exponent of the running second moment above which it is flagged
/// as divergent.
pub const DIVERGENCE_SLOPE: f64 = 0.5;

/// Number of dyadic prefixes used by the divergence heuristic.
const PREFIX_LEVELS: usize = 7;

/// Exact Riesz representer of `D R(h; .)` restricted to the first `k`
/// pre-basis elements: solves `G_k a = d` with `d_i = D R(h; b_i)`.
pub fn galerkin_gradient<B, R>(risk: &R, basis: &B, gram: &SymMatrix, h: &PreBasisExpansion, k: usize) -> Result<Vec<f64>>
where
    B: FactoredBasis + ?Sized,
    R: RiskFunctional<B> + ?Sized,
{
    if k > gram.dim() {
        return Err(GfdError::Range { requested: k, available: gram.dim() });
    }
    let units: Vec<PreBasisExpansion> = (0..k)
        .map(|i| {
            let mut c = vec![0.0; k];
            c[i] = 1.0;
            PreBasisExpansion::new(basis.basis_id(), c)
        })
        .collect();
    let (_, d) = risk.value_and_derivatives(basis, h, &units)?;
    let chol = CholeskyFactor::factor(gram, k)?;
    if chol.jitter() > 0.0 {
        return Err(GfdError::NumericalRank { index: k, jitter: chol.jitter() });
    }
    chol.solve_normal(&d)
}

fn gamma_table(law: &DimensionLaw, sched: &PreconditionSchedule, n: usize) -> Vec<f64> {
    (1..=n).map(|i| law.conditional_lambda(sched, i)).collect()
}

/// Closed-form `E ||ghat||_C^2` for a gradient with orthonormal coordinates
/// `g`, evaluating the expectation over `K` by truncation.
pub fn second_moment_formula(g: &[f64], law: &DimensionLaw, sched: &PreconditionSchedule) -> Result<f64> {
    let n = law.truncation_index(TRUNCATION_MASS)?;
    let gamma = gamma_table(law, sched, n);
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    let mut terms = Vec::with_capacity(n);
    for k in 1..=n {
        let t = law.tail(k);
        let gk = g.get(k - 1).copied().unwrap_or(0.0);
        let gm = gamma[k - 1];
        if t > 0.0 && gm > 0.0 {
            s1 += 1.0 / (t * gm);
            s2 += gk * gk / t;
            s3 += gk * gk / (t * t * gm);
        }
        let p = law.pmf(k);
        if p == 0.0 {
            continue;
        }
        let lambda = sched.lambda(law, k);
        let m = sched.sample_size(k) as f64;
        let l2 = lambda * lambda;
        terms.push(p * (l2 / m * s1 * s2 + l2 * (1.0 + 1.0 / m) * s3));
    }
    Ok(pairwise_sum(&terms, 0.0))
}

/// Sample moments of the gradient estimator at a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStats {
    pub replications: usize,
    /// Mean of `<ghat, e_i>` for `i < coords`.
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Mean of `||ghat||_C^2`.
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// Growth exponent of the running mean of `||ghat||_C^2`.
    pub running_mean_slope: f64,
    pub divergent: bool,
}

impl EstimatorStats {
    pub fn relative_se(&self) -> f64 {
        if self.second_moment > 0.0 {
            self.second_moment_se / self.second_moment
        } else {
            0.0
        }
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values, 0.0) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if values.len() > 1 { pairwise_sum(&dev, 0.0) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `log(mean of the first n values)` against `log n`
/// over dyadic prefixes ending at the full sample. A finite mean makes the
/// running mean settle (slope near 0); with an infinite mean it keeps
/// climbing with each new block maximum.
pub fn running_mean_slope(values: &[f64]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = values.len();
    for _ in 0..PREFIX_LEVELS {
        if n < 2 {
            break;
        }
        let mean = pairwise_sum(&values[..n], 0.0) / n as f64;
        if mean > 0.0 {
            xs.push((n as f64).ln());
            ys.push(mean.ln());
        }
        n /= 2;
    }
    fit_slope(&xs, &ys)
}

/// Ordinary least-squares slope.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs the full sampling pipeline `replications` times at `h` and reports
/// moments of `ghat` in orthonormal coordinates.
#[allow(clippy::too_many_arguments)]
pub fn mc_estimator_stats<R>(
    space: &SurrogateSpace,
    risk: &R,
    h: &PreBasisExpansion,
    law: &DimensionLaw,
    sched: &PreconditionSchedule,
    replications: usize,
    seed: u64,
) -> Result<EstimatorStats>
where
    R: RiskFunctional<SurrogateSpace>,
{
    if replications < 2 {
        return Err(GfdError::Config("at least two replications are required".into()));
    }
    let coords = space.dim();
    let table_len = law.truncation_index(TRUNCATION_MASS).unwrap_or(4096).max(coords);
    let gamma = gamma_table(law, sched, table_len);
    let gamma_at = |i: usize| if i < gamma.len() { gamma[i] } else { law.conditional_lambda(sched, i + 1) };

    let draws = (0..replications)
        .into_par_iter()
        .map(|r| {
            let k = law.sample(&mut substream(seed, r as u64, 0));
            let est = estimate_gradient(risk, space, h, law, sched, k, seed, r as u64)?;
            let y = space.mul_upper(est.ghat.coeffs())?;
            let parts: Vec<f64> = y.iter().enumerate().map(|(i, v)| v * v / gamma_at(i)).collect();
            let mut head = vec![0.0; coords];
            for (a, b) in head.iter_mut().zip(&y) {
                *a = *b;
            }
            Ok((head, pairwise_sum(&parts, 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = Vec::with_capacity(coords);
    let mut se = Vec::with_capacity(coords);
    for i in 0..coords {
        let col: Vec<f64> = draws.iter().map(|(y, _)| y[i]).collect();
        let (m, s) = mean_and_se(&col);
        mean.push(m);
        se.push(s);
    }
    let norms: Vec<f64> = draws.iter().map(|(_, c)| *c).collect();
    let (second_moment, second_moment_se) = mean_and_se(&norms);
    let slope = running_mean_slope(&norms);
    Ok(EstimatorStats {
        replications,
        mean,
        se,
        second_moment,
        second_moment_se,
        running_mean_slope: slope,
        divergent: !second_moment.is_finite() || slope >= DIVERGENCE_SLOPE,
    })
}

/// Largest `|mean_i - gamma_i g_i| / SE_i`.
pub fn unbiasedness_statistic(stats: &EstimatorStats, g: &[f64], law: &DimensionLaw, sched: &PreconditionSchedule) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (m, s)) in stats.mean.iter().zip(&stats.se).enumerate() {
        let want = law.conditional_lambda(sched, i + 1) * g.get(i).copied().unwrap_or(0.0);
        let dev = (m - want).abs();
        let z = if *s > 0.0 { dev / s } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    worst
}

/// Outcome of the fourth-moment check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthMomentReport {
    /// Largest `|deviation| / SE` over entries.
    pub max_z: f64,
    pub max_abs_deviation: f64,
}

const FOURTH_MOMENT_CHUNK: usize = 1 << 14;

/// Monte-Carlo check of `E[(z z^T) L (z z^T)] = tr(L) I + 2L` for standard
/// normal `z`.
pub fn fourth_moment_check(l: &[Vec<f64>], samples: usize, seed: u64) -> Result<FourthMomentReport> {
    let k = l.len();
    if l.iter().any(|r| r.len() != k) {
        return Err(GfdError::Config("L must be square".into()));
    }
    for i in 0..k {
        for j in 0..i {
            if (l[i][j] - l[j][i]).abs() > 1e-12 * (1.0 + l[i][j].abs()) {
                return Err(GfdError::Config("L must be symmetric".into()));
            }
        }
    }
    if samples < 2 {
        return Err(GfdError::Config("at least two samples are required".into()));
    }
    let chunks = samples.div_ceil(FOURTH_MOMENT_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64, 0);
            let count = FOURTH_MOMENT_CHUNK.min(samples - c * FOURTH_MOMENT_CHUNK);
            let mut sum = vec![0.0; k * k];
            let mut sum_sq = vec![0.0; k * k];
            let mut z = vec![0.0; k];
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let mut quad = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        quad += z[i] * l[i][j] * z[j];
                    }
                }
                for i in 0..k {
                    for j in 0..k {
                        let x = quad * z[i] * z[j];
                        sum[i * k + j] += x;
                        sum_sq[i * k + j] += x * x;
                    }
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let n = samples as f64;
    let trace: f64 = (0..k).map(|i| l[i][i]).sum();
    let mut report = FourthMomentReport { max_z: 0.0, max_abs_deviation: 0.0 };
    for e in 0..k * k {
        let s: Vec<f64> = partial.iter().map(|(a, _)| a[e]).collect();
        let q: Vec<f64> = partial.iter().map(|(_, b)| b[e]).collect();
        let mean = pairwise_sum(&s, 0.0) / n;
        let var = ((pairwise_sum(&q, 0.0) / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        let (i, j) = (e / k, e % k);
        let want = 2.0 * l[i][j] + if i == j { trace } else { 0.0 };
        let dev = (mean - want).abs();
        let z = if se > 0.0 { dev / se } else if dev <= 1e-12 { 0.0 } else { f64::INFINITY };
        report.max_z = report.max_z.max(z);
        report.max_abs_deviation = report.max_abs_deviation.max(dev);
    }
    Ok(report)
}

/// Outcome of checking `t_i / 2 <= E[t_K | K >= i] <= t_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

impl LemmaReport {
    /// Distance of the worst ratio to the nearest end of `[1/2, 1]`;
    /// negative when violated.
    pub fn worst_margin(&self) -> f64 {
        (self.min_ratio - 0.5).min(1.0 - self.max_ratio)
    }
}

pub fn lemma_tail_check(law: &DimensionLaw, i_max: usize) -> Result<LemmaReport> {
    if !law.has_infinite_support() {
        return Err(GfdError::Domain(format!("lemma check needs an infinite-support law, got {law}")));
    }
    let sched = PreconditionSchedule::tail_ceil(1.0)?;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut pass = true;
    for i in 1..=i_max {
        let t = law.tail(i);
        let g = law.conditional_lambda(&sched, i);
        if t == 0.0 {
            continue;
        }
        let r = g / t;
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
        let tol = 1e-12;
        if !(g >= 0.5 * t * (1.0 - tol) && g <= t * (1.0 + tol)) {
            pass = false;
        }
    }
    Ok(LemmaReport { min_ratio, max_ratio, pass })
}

/// `|E <v, h><v, h'> - <h, h'>|` evaluated exactly over the truncated law,
/// with `h`, `h'` given in orthonormal coordinates.
pub fn weak_second_order_gap(law: &DimensionLaw, h: &[f64], h2: &[f64]) -> Result<f64> {
    let n = law.truncation_index(TRUNCATION_MASS)?.max(h.len().max(h2.len()));
    let mut partial = 0.0;
    let mut total = Vec::with_capacity(n);
    for k in 1..=n {
        let a = h.get(k - 1).copied().unwrap_or(0.0);
        let b = h2.get(k - 1).copied().unwrap_or(0.0);
        let t = law.tail(k);
        if t > 0.0 {
            partial += a * b / t;
        }
        total.push(law.pmf(k) * partial);
    }
    let lhs = pairwise_sum(&total, 0.0) + law.tail(n + 1) * partial;
    let rhs: f64 = h.iter().zip(h2).map(|(a, b)| a * b).sum();
    Ok((lhs - rhs).abs())
}

/// Properties of the tails built for a target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTailReport {
    pub partial_sums: Vec<f64>,
    /// `sum_k k 2^{-k+1} + A_1` with `A_1 = sum_i theta_i`.
    pub bound: f64,
    /// Largest ratio of consecutive increments `theta_{i+1} t_i / (theta_i t_{i+1})`
    /// over `i >= 2`.
    pub max_increment_ratio: f64,
    pub pass: bool,
}

pub fn target_tail_check(theta: &[f64]) -> Result<TargetTailReport> {
    let law = tails_for_target(theta)?;
    let mut partial_sums = Vec::with_capacity(theta.len());
    let mut s = 0.0;
    let increments: Vec<f64> = theta.iter().enumerate().map(|(i, th)| th / law.tail(i + 1)).collect();
    for inc in &increments {
        s += inc;
        partial_sums.push(s);
    }
    let a1: f64 = theta.iter().sum();
    let series: f64 = (1..=200).map(|k| k as f64 * 0.5f64.powi(k - 1)).sum();
    let bound = series + a1;
    let max_increment_ratio = increments
        .windows(2)
        .skip(1)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let pass = s <= bound && max_increment_ratio < 1.0;
    Ok(TargetTailReport { partial_sums, bound, max_increment_ratio, pass })
}

/// Fraction of consecutive pairs that increase.
pub fn increasing_fraction(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ups = values.windows(2).filter(|w| w[1] > w[0]).count();
    ups as f64 / (values.len() - 1) as f64
}

/// Setup for the convergence-rate experiment on the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCheckConfig {
    pub horizons: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Geometric ratio of the dimension law.
    pub q: f64,
    /// Sample-size divisor.
    pub c: f64,
    /// Range of the contraction factors `gamma_j mu_j`.
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl Default for RateCheckConfig {
    fn default() -> Self {
        Self {
            horizons: vec![100, 400, 1600],
            replicates: 50,
            seed: 11,
            q: 0.9,
            c: 1.0,
            kappa_min: 1e-4,
            kappa_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub horizons: Vec<usize>,
    pub mean_excess_risk: Vec<f64>,
    pub slope: f64,
}

/// Mean excess risk of the averaged iterate under the horizon-tuned constant
/// step, for each horizon, on a diagonal quadratic risk whose curvatures in
/// the `C` geometry are spread log-uniformly.
pub fn rate_check(cfg: &RateCheckConfig) -> Result<RateReport> {
    let mut space = SurrogateSpace::random(super::SURROGATE_DIM, 100.0, cfg.seed)?;
    let d = space.dim();
    let law = DimensionLaw::geometric(cfg.q)?;
    let sched = PreconditionSchedule::tail_ceil(cfg.c)?;
    let gamma = gamma_table(&law, &sched, d);
    let kappa: Vec<f64> = (0..d)
        .map(|j| cfg.kappa_max * (cfg.kappa_min / cfg.kappa_max).powf(j as f64 / (d - 1).max(1) as f64))
        .collect();
    let mu: Vec<f64> = kappa.iter().zip(&gamma).map(|(k, g)| k / g).collect();
    let y_star: Vec<f64> = gamma.iter().map(|g| g.sqrt()).collect();
    let mut risk = QuadraticRisk::diagonal_in_e(&space, &mu, &y_star)?;
    let dist_c = y_star.iter().zip(&gamma).map(|(y, g)| y * y / g).sum::<f64>().sqrt();
    let g_bound = mu.iter().zip(&y_star).map(|(m, y)| (m * y).powi(2)).sum::<f64>().sqrt();

    let mut means = Vec::with_capacity(cfg.horizons.len());
    for (hi, &n) in cfg.horizons.iter().enumerate() {
        let alpha = optimal_constant_step(dist_c, g_bound, cfg.c, n)?;
        let mut excess = Vec::with_capacity(cfg.replicates);
        for r in 0..cfg.replicates {
            let run_cfg = GfdConfig {
                iterations: n,
                step: StepSchedule::Constant(alpha),
                law: law.clone(),
                sched,
                seed: cfg.seed ^ ((hi as u64) << 40) ^ ((r as u64 + 1) << 8),
                cadence: n,
            };
            let rec = run(&mut risk, &mut space, &run_cfg)?;
            excess.push(risk.value(&space, &rec.averaged_iterate)?);
        }
        means.push(pairwise_sum(&excess, 0.0) / excess.len() as f64);
    }
    let xs: Vec<f64> = cfg.horizons.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    Ok(RateReport { horizons: cfg.horizons.clone(), mean_excess_risk: means, slope: fit_slope(&xs, &ys) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{LambdaKind, SampleSizeKind};

    #[test]
    fn deterministic_formula_reduces() {
        let law = DimensionLaw::deterministic(5).unwrap();
        let sched = PreconditionSchedule::new(LambdaKind::Unit, SampleSizeKind::Constant(3)).unwrap();
        let g = [1.0, -2.0, 0.5, 0.0, 1.0, 7.0];
        let v = second_moment_formula(&g, &law, &sched).unwrap();
        let pk: f64 = g[..5].iter().map(|x| x * x).sum();
        assert!((v - pk * (1.0 + 6.0 / 3.0)).abs() < 1e-12);
        assert_eq!(second_moment_formula(&[0.0; 4], &law, &sched).unwrap(), 0.0);
    }

    #[test]
    fn formula_monotone_in_sample_size() {
        let law = DimensionLaw::geometric(0.5).unwrap();
        let g = [0.3, -0.1, 0.8, 0.2];
        let mut prev = f64::INFINITY;
        for m in [1, 2, 4, 8] {
            let sched = PreconditionSchedule::new(LambdaKind::Tail, SampleSizeKind::Constant(m)).unwrap();
            let v = second_moment_formula(&g, &law, &sched).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn fourth_moment_small_cases() {
        let r = fourth_moment_check(&[vec![0.0]], 1000, 1).unwrap();
        assert_eq!(r.max_abs_deviation, 0.0);
        let r = fourth_moment_check(&[vec![1.0]], 200_000, 2).unwrap();
        assert!(r.max_z < 4.0, "{r:?}");
        assert!(fourth_moment_check(&[vec![1.0, 2.0], vec![0.0, 1.0]], 10, 1).is_err());
    }

    #[test]
    fn lemma_on_geometric() {
        let r = lemma_tail_check(&DimensionLaw::geometric(0.5).unwrap(), 200).unwrap();
        assert!(r.pass);
        assert!((r.min_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.max_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert!(lemma_tail_check(&DimensionLaw::deterministic(3).unwrap(), 10).is_err());
    }

    #[test]
    fn weak_second_order_exact() {
        let law = DimensionLaw::shifted_poisson(10.0).unwrap();
        let gap = weak_second_order_gap(&law, &[1.0, 2.0, -1.0], &[0.5, 0.5, 3.0]).unwrap();
        assert!(gap < 1e-10, "{gap}");
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 0.5, 0.0];
        assert!((fit_slope(&xs, &ys) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn increasing_fraction_counts() {
        assert_eq!(increasing_fraction(&[3.0, 2.0, 2.5, 1.0, 0.5]), 0.25);
        assert_eq!(increasing_fraction(&[1.0]), 0.0);
    }
}
