//! The default battery of checks run by `hgfd verify`.

use log::info;

use super::checks::{
    fourth_moment_check, galerkin_gradient, lemma_tail_check, mc_estimator_stats, rate_check, second_moment_formula,
    target_tail_check, unbiasedness_statistic, weak_second_order_gap, RateCheckConfig,
};
use super::surrogate::{QuadraticRisk, SurrogateSpace, SURROGATE_DIM};
use crate::error::Result;
use crate::function_space::{FactoredBasis, PreBasisExpansion};
use crate::rng::substream;
use crate::sampler::{DimensionLaw, LambdaKind, PreconditionSchedule, SampleSizeKind};
use rand::Rng;
use rand_distr::StandardNormal;

/// One row of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRow {
    fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self { name: name.into(), statistic, threshold, pass: statistic <= threshold }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub replications: usize,
    pub fourth_moment_samples: usize,
    /// Preconditioner used by the estimator checks; `Unit` is a negative
    /// control that must fail the variance bound.
    pub lambda: LambdaKind,
    pub rate: Option<RateCheckConfig>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            replications: 100_000,
            fourth_moment_samples: 1_000_000,
            lambda: LambdaKind::Tail,
            rate: Some(RateCheckConfig::default()),
        }
    }
}

fn random_vec(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = substream(seed, stream, 7);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A surrogate problem with a random quadratic risk evaluated at a random
/// point, and its gradient in orthonormal coordinates.
pub struct SurrogateInstance {
    pub space: SurrogateSpace,
    pub risk: QuadraticRisk,
    pub h: PreBasisExpansion,
    pub g: Vec<f64>,
}

impl SurrogateInstance {
    pub fn random(seed: u64) -> Result<Self> {
        let space = SurrogateSpace::random(SURROGATE_DIM, 100.0, seed)?;
        let risk = QuadraticRisk::random(&space, 8, seed)?;
        let h = space.from_e_coords(&random_vec(SURROGATE_DIM, seed, 1))?;
        let g = risk.gradient_e(&space, &h)?;
        Ok(Self { space, risk, h, g })
    }

    /// Diagonal risk whose gradient at zero is `g`.
    pub fn with_gradient(space: SurrogateSpace, g: &[f64]) -> Result<Self> {
        let y_star: Vec<f64> = g.iter().map(|x| -x).collect();
        let risk = QuadraticRisk::diagonal_in_e(&space, &vec![1.0; space.dim()], &y_star)?;
        let h = PreBasisExpansion::zero(space.basis_id());
        Ok(Self { g: g.to_vec(), space, risk, h })
    }
}

fn norm_sq(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum()
}

pub fn verification_suite(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let seed = opts.seed;
    let reps = opts.replications;
    let mc_laws = [DimensionLaw::geometric(0.5)?, DimensionLaw::shifted_poisson(10.0)?];

    // Tail lemma.
    let eps_tails: Vec<f64> = (0..6).map(|i| 1e-3f64.powi(i)).collect();
    let lemma_laws = [
        ("geometric", DimensionLaw::geometric(0.5)?),
        ("poisson100", DimensionLaw::shifted_poisson(100.0)?),
        ("poisson10", DimensionLaw::shifted_poisson(10.0)?),
        ("explicit_eps", DimensionLaw::explicit_tails(eps_tails)?),
    ];
    for (name, law) in &lemma_laws {
        let r = lemma_tail_check(law, 200)?;
        rows.push(CheckRow { name: format!("tail_lemma_{name}"), statistic: r.worst_margin(), threshold: 0.0, pass: r.pass });
    }

    // Unbiasedness.
    let inst = SurrogateInstance::random(seed)?;
    for law in &mc_laws {
        let sched = PreconditionSchedule::new(opts.lambda, SampleSizeKind::CeilKOverC(1.0))?;
        let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, law, &sched, reps, seed ^ 0x51)?;
        let z = unbiasedness_statistic(&stats, &inst.g, law, &sched);
        rows.push(CheckRow::at_most(format!("unbiased_{law}"), z, 3.0));
    }

    // Second-moment formula against simulation.
    for (li, law) in mc_laws.iter().enumerate() {
        for (ci, c) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let sched = PreconditionSchedule::new(opts.lambda, SampleSizeKind::CeilKOverC(c))?;
            for gi in 0..3u64 {
                let inst = SurrogateInstance::random(seed.wrapping_add(100 + gi))?;
                let formula = second_moment_formula(&inst.g, law, &sched)?;
                let stream = seed ^ ((li as u64) << 20 | (ci as u64) << 10 | gi);
                let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, law, &sched, reps, stream)?;
                let z = (stats.second_moment - formula).abs() / stats.second_moment_se;
                rows.push(CheckRow::at_most(format!("second_moment_{law}_c{c}_g{gi}"), z, 3.0));
            }
        }
    }
    {
        let law = DimensionLaw::deterministic(SURROGATE_DIM)?;
        let m = 3;
        let sched = PreconditionSchedule::new(LambdaKind::Unit, SampleSizeKind::Constant(m))?;
        let g = random_vec(SURROGATE_DIM, seed, 2);
        let v = second_moment_formula(&g, &law, &sched)?;
        let want = norm_sq(&g) * (m + SURROGATE_DIM + 1) as f64 / m as f64;
        rows.push(CheckRow::at_most("second_moment_full_dimension", (v - want).abs(), 1e-10));
    }

    // Variance bound.
    {
        let space = SurrogateSpace::random(SURROGATE_DIM, 100.0, seed)?;
        let g = vec![1.0 / (SURROGATE_DIM as f64).sqrt(); SURROGATE_DIM];
        let inst = SurrogateInstance::with_gradient(space, &g)?;
        let law = DimensionLaw::geometric(0.5)?;
        for c in [0.5, 1.0, 2.0] {
            let sched = PreconditionSchedule::new(opts.lambda, SampleSizeKind::CeilKOverC(c))?;
            let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, &law, &sched, reps, seed ^ 0x77)?;
            let bound = 2.0 * (1.0 + 2.0 * c) * norm_sq(&g) * (1.0 + 3.0 * stats.relative_se());
            rows.push(CheckRow::at_most(format!("variance_bound_c{c}"), stats.second_moment, bound));
        }
    }

    // Heavy tails without preconditioning.
    {
        let mut g = vec![0.0; SURROGATE_DIM];
        g[SURROGATE_DIM - 1] = 1.0;
        let space = SurrogateSpace::random(SURROGATE_DIM, 100.0, seed)?;
        let inst = SurrogateInstance::with_gradient(space, &g)?;
        let heavy = DimensionLaw::explicit_tails(vec![1.0])?;
        let unit = PreconditionSchedule::new(LambdaKind::Unit, SampleSizeKind::Constant(1))?;
        let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, &heavy, &unit, 1 << 16, seed ^ 0x99)?;
        rows.push(CheckRow {
            name: "divergence_flag_unit_heavy".into(),
            statistic: stats.running_mean_slope,
            threshold: super::checks::DIVERGENCE_SLOPE,
            pass: stats.divergent,
        });
        let spread = vec![1.0 / (SURROGATE_DIM as f64).sqrt(); SURROGATE_DIM];
        let inst = SurrogateInstance::with_gradient(inst.space, &spread)?;
        let light = DimensionLaw::geometric(0.5)?;
        let tail = PreconditionSchedule::tail_ceil(1.0)?;
        let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, &light, &tail, 1 << 16, seed ^ 0x9a)?;
        rows.push(CheckRow {
            name: "divergence_flag_tail_geometric".into(),
            statistic: stats.running_mean_slope,
            threshold: super::checks::DIVERGENCE_SLOPE,
            pass: !stats.divergent,
        });
    }

    // Galerkin representer at full dimension equals the exact gradient.
    {
        let inst = SurrogateInstance::random(seed.wrapping_add(3))?;
        let a = galerkin_gradient(&inst.risk, &inst.space, inst.space.gram(), &inst.h, SURROGATE_DIM)?;
        let e = inst.space.mul_upper(&a)?;
        let err = e.iter().zip(&inst.g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        rows.push(CheckRow::at_most("galerkin_full_dimension", err, 1e-8));
    }

    // Fourth moment.
    {
        let k = 5;
        let raw = random_vec(k * k, seed, 3);
        let l: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| 0.5 * (raw[i * k + j] + raw[j * k + i])).collect()).collect();
        let r = fourth_moment_check(&l, opts.fourth_moment_samples, seed ^ 0x4)?;
        rows.push(CheckRow::at_most("fourth_moment", r.max_z, 4.0));
    }

    // Weak second order.
    {
        let law = DimensionLaw::shifted_poisson(10.0)?;
        let h = random_vec(SURROGATE_DIM, seed, 4);
        let gap = weak_second_order_gap(&law, &h, &h)?;
        rows.push(CheckRow::at_most("weak_second_order", gap, 1e-9 * norm_sq(&h).max(1.0)));
    }

    // Tails for a target sequence.
    {
        let theta: Vec<f64> = (1..=64).map(|i| 0.5f64.powi(i)).collect();
        let r = target_tail_check(&theta)?;
        let total = *r.partial_sums.last().unwrap_or(&0.0);
        rows.push(CheckRow::at_most("target_tails_bound", total, r.bound));
        rows.push(CheckRow { name: "target_tails_ratio".into(), statistic: r.max_increment_ratio, threshold: 1.0, pass: r.max_increment_ratio < 1.0 });
    }

    // Convergence rate.
    if let Some(cfg) = &opts.rate {
        let r = rate_check(cfg)?;
        rows.push(CheckRow { name: "rate_slope".into(), statistic: r.slope, threshold: -0.5, pass: (r.slope + 0.5).abs() <= 0.15 });
    }

    for r in &rows {
        info!("{} statistic={:.6e} threshold={:.6e} pass={}", r.name, r.statistic, r.threshold, r.pass);
    }
    Ok(rows)
}
