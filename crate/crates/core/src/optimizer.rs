//! The descent loop and its gradient estimator.

use log::{debug, info};

use crate::error::{GfdError, Result};
use crate::function_space::{weighted_average, FactoredBasis, PreBasisExpansion};
use crate::risk::RiskFunctional;
use crate::rng::substream;
use crate::sampler::{sample_direction, DimensionLaw, PreconditionSchedule};

/// Risk growth factor that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// Constant step tuned to the horizon from `||h - h_1||_C`, the gradient
    /// bound `G` and the sample-size divisor `c`.
    FixedHorizonOptimal { dist_c: f64, g: f64, c: f64 },
}

/// `||h - h_1||_C / (sqrt(2 (1 + 2c)) G sqrt(N))`.
pub fn optimal_constant_step(dist_c: f64, g: f64, c: f64, n: usize) -> Result<f64> {
    if !(dist_c > 0.0 && g > 0.0 && c > 0.0 && n > 0) {
        return Err(GfdError::Config("optimal step needs positive distance, bound, divisor and horizon".into()));
    }
    Ok(dist_c / ((2.0 * (1.0 + 2.0 * c)).sqrt() * g * (n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfdConfig {
    pub iterations: usize,
    pub step: StepSchedule,
    pub law: DimensionLaw,
    pub sched: PreconditionSchedule,
    pub seed: u64,
    /// Log every `cadence` iterations (plus the first and last).
    pub cadence: usize,
}

impl GfdConfig {
    pub fn step_size(&self) -> Result<f64> {
        match self.step {
            StepSchedule::Constant(a) => Ok(a),
            StepSchedule::FixedHorizonOptimal { dist_c, g, c } => optimal_constant_step(dist_c, g, c, self.iterations),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(GfdError::Config("at least one iteration is required".into()));
        }
        if self.cadence == 0 {
            return Err(GfdError::Config("logging cadence must be at least 1".into()));
        }
        let alpha = self.step_size()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GfdError::Config(format!("step size must be positive, got {alpha}")));
        }
        if !self.law.has_infinite_support() {
            return Err(GfdError::Config(format!(
                "the dimension law must have infinite support, got {}",
                self.law
            )));
        }
        Ok(())
    }
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub n: usize,
    /// `R(h_n)`.
    pub risk: f64,
    pub k: usize,
    pub m: usize,
    /// Coefficient 2-norm of the gradient estimate.
    pub grad_norm: f64,
    pub monitor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Diverged { iteration: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<LogRow>,
    pub termination: Termination,
    /// Last iterate: `h_{N+1}`, or the iterate at the abort.
    pub final_iterate: PreBasisExpansion,
    pub averaged_iterate: PreBasisExpansion,
    pub initial_risk: f64,
    pub final_risk: f64,
    pub final_monitor: Option<f64>,
    pub max_k: usize,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }
}

/// A gradient estimate together with the quantities computed on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub ghat: PreBasisExpansion,
    /// `R(h)`.
    pub risk: f64,
    pub lambda: f64,
    pub m: usize,
}

/// `ghat = lambda_k / M_k sum_m D R(h; v_m) v_m`. Direction `m` is drawn from
/// substream `(seed, stream, m + 1)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradient<B, R>(
    risk: &R,
    basis: &B,
    h: &PreBasisExpansion,
    law: &DimensionLaw,
    sched: &PreconditionSchedule,
    k: usize,
    seed: u64,
    stream: u64,
) -> Result<GradientEstimate>
where
    B: FactoredBasis + ?Sized,
    R: RiskFunctional<B> + ?Sized,
{
    let m = sched.sample_size(k);
    let lambda = sched.lambda(law, k);
    let dirs = (0..m)
        .map(|j| sample_direction(basis, law, k, &mut substream(seed, stream, j as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let (value, derivs) = risk.value_and_derivatives(basis, h, &dirs)?;
    let mut coeffs = vec![0.0; k];
    for (d, v) in derivs.iter().zip(&dirs) {
        for (c, x) in coeffs.iter_mut().zip(v.coeffs()) {
            *c += d * x;
        }
    }
    let scale = lambda / m as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    Ok(GradientEstimate { ghat: PreBasisExpansion::new(basis.basis_id(), coeffs), risk: value, lambda, m })
}

/// `sum alpha_n h_n / sum alpha_n`.
pub fn averaged_iterate(history: &[(f64, PreBasisExpansion)]) -> Result<PreBasisExpansion> {
    weighted_average(history)
}

fn aborted(iteration: usize, source: GfdError) -> GfdError {
    GfdError::Aborted { iteration, source: Box::new(source) }
}

/// Runs `N` descent steps from `h_1 = 0`.
pub fn run<B, R>(risk: &mut R, basis: &mut B, cfg: &GfdConfig) -> Result<RunRecord>
where
    B: FactoredBasis + ?Sized,
    R: RiskFunctional<B> + ?Sized,
{
    cfg.validate()?;
    let alpha = cfg.step_size()?;
    let mut h = PreBasisExpansion::zero(basis.basis_id());
    let mut sum_h: Vec<f64> = Vec::new();
    let mut sum_alpha = 0.0;
    let mut rows = Vec::new();
    let mut initial_risk = f64::NAN;
    let mut max_k = 0;
    let mut termination = Termination::Completed;

    for n in 1..=cfg.iterations {
        let k = cfg.law.sample(&mut substream(cfg.seed, n as u64, 0));
        if k > max_k {
            basis.ensure(k).map_err(|e| aborted(n, e))?;
            risk.prepare(basis, k).map_err(|e| aborted(n, e))?;
            max_k = k;
        }
        let est = estimate_gradient(&*risk, &*basis, &h, &cfg.law, &cfg.sched, k, cfg.seed, n as u64)
            .map_err(|e| aborted(n, e))?;
        if n == 1 {
            initial_risk = est.risk;
        }
        let exploded = !est.risk.is_finite() || est.risk > DIVERGENCE_FACTOR * initial_risk;
        let grad_norm = est.ghat.coeff_norm();
        let log_now = n == 1 || n % cfg.cadence == 0 || n == cfg.iterations || exploded;
        if log_now {
            let monitor = if exploded { None } else { risk.monitor(basis, &h).map_err(|e| aborted(n, e))? };
            debug!("n={n} risk={:.6e} k={k} m={} |g|={grad_norm:.3e} monitor={monitor:?}", est.risk, est.m);
            rows.push(LogRow { n, risk: est.risk, k, m: est.m, grad_norm, monitor });
        }
        if exploded {
            termination = Termination::Diverged {
                iteration: n,
                reason: format!("risk {:e} exceeds {DIVERGENCE_FACTOR:e} times the initial {initial_risk:e}", est.risk),
            };
            break;
        }

        if sum_h.len() < h.len() {
            sum_h.resize(h.len(), 0.0);
        }
        for (s, x) in sum_h.iter_mut().zip(h.coeffs()) {
            *s += alpha * x;
        }
        sum_alpha += alpha;

        h = PreBasisExpansion::axpy(-alpha, &est.ghat, &h)?;
        if !h.is_finite() {
            termination = Termination::Diverged { iteration: n, reason: "non-finite coefficients".into() };
            break;
        }
    }

    let averaged = if sum_alpha > 0.0 {
        PreBasisExpansion::new(basis.basis_id(), sum_h.iter().map(|s| s / sum_alpha).collect())
    } else {
        PreBasisExpansion::zero(basis.basis_id())
    };
    let (final_risk, final_monitor) = match termination {
        Termination::Completed => (
            risk.value(basis, &h)?,
            risk.monitor(basis, &h)?,
        ),
        Termination::Diverged { .. } => (rows.last().map_or(f64::NAN, |r| r.risk), None),
    };
    info!(
        "run finished: {:?}, initial risk {initial_risk:.6e}, final risk {final_risk:.6e}, max k {max_k}",
        termination
    );
    Ok(RunRecord {
        rows,
        termination,
        final_iterate: h,
        averaged_iterate: averaged,
        initial_risk,
        final_risk,
        final_monitor,
        max_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_step_examples() {
        let a = optimal_constant_step(1.0, 1.0, 1.0, 4).unwrap();
        assert!((a - 1.0 / (6f64.sqrt() * 2.0)).abs() < 1e-15);
        assert!((a - 0.204_124).abs() < 1e-6);
        let half = optimal_constant_step(1.0, 2.0, 1.0, 4).unwrap();
        assert!((half - a / 2.0).abs() < 1e-15);
        let long = optimal_constant_step(1.0, 1.0, 1.0, 16).unwrap();
        assert!((long - a / 2.0).abs() < 1e-15);
        assert!(optimal_constant_step(0.0, 1.0, 1.0, 4).is_err());
    }
}
