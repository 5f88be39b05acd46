//! Dimension laws, preconditioner schedules and random directions.
//!
//! A direction is `v = B_k R_k^{-1} T_k^{-1/2} z` with `z ~ N(0, I_k)` and
//! `T_k = diag(t_1, ..., t_k)`. Its pre-basis coefficients solve
//! `R_k w = T_k^{-1/2} z` by back-substitution.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};

use crate::error::{GfdError, Result};
use crate::function_space::{FactoredBasis, PreBasisExpansion};

/// Largest index visited when a law is truncated at a given mass.
pub const MAX_TRUNCATION: usize = 1_000_000;
/// Mass kept when an expectation over `K` is evaluated by truncation.
pub const TRUNCATION_MASS: f64 = 1.0 - 1e-12;

const SERIES_EPS: f64 = 1e-17;
const LN_FACT_TABLE: usize = 256;

fn ln_factorial(n: usize) -> f64 {
    if n < LN_FACT_TABLE {
        (2..=n).map(|v| (v as f64).ln()).sum()
    } else {
        let x = n as f64;
        let x2 = x * x;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x * x2)
            + 1.0 / (1260.0 * x * x2 * x2)
    }
}

/// Poisson probabilities and upper tails on a table covering the bulk.
#[derive(Debug, PartialEq)]
struct PoissonTable {
    rate: f64,
    ln_fact: Vec<f64>,
    pmf: Vec<f64>,
    tails: Vec<f64>,
}

impl PoissonTable {
    fn new(rate: f64) -> Self {
        let n_max = (rate + 40.0 * rate.sqrt() + 60.0).ceil() as usize;
        let mut ln_fact = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0;
        for n in 0..LN_FACT_TABLE {
            if n > 1 {
                acc += (n as f64).ln();
            }
            ln_fact.push(acc);
        }
        let mut table = Self { rate, ln_fact, pmf: Vec::new(), tails: Vec::new() };
        table.pmf = (0..=n_max).map(|n| table.pmf_direct(n)).collect();
        let mut tails = vec![0.0; n_max + 1];
        tails[n_max] = table.series_tail(n_max);
        for n in (0..n_max).rev() {
            tails[n] = tails[n + 1] + table.pmf[n];
        }
        // Rounding in ln n! leaves the total mass off by ~1e-14.
        let total = tails[0];
        for (p, t) in table.pmf.iter_mut().zip(tails.iter_mut()) {
            *p /= total;
            *t /= total;
        }
        tails[0] = 1.0;
        table.tails = tails;
        table
    }

    fn ln_fact(&self, n: usize) -> f64 {
        self.ln_fact.get(n).copied().unwrap_or_else(|| ln_factorial(n))
    }

    fn pmf_direct(&self, n: usize) -> f64 {
        (n as f64 * self.rate.ln() - self.rate - self.ln_fact(n)).exp()
    }

    fn pmf(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or_else(|| self.pmf_direct(n))
    }

    /// `P[P >= n]` summed upward; only used past the mode.
    fn series_tail(&self, n: usize) -> f64 {
        let mut term = self.pmf_direct(n);
        let mut sum = 0.0;
        let mut m = n;
        while term > 0.0 {
            sum += term;
            if term < SERIES_EPS * sum {
                break;
            }
            m += 1;
            term *= self.rate / m as f64;
        }
        sum
    }

    fn tail(&self, n: usize) -> f64 {
        self.tails.get(n).copied().unwrap_or_else(|| self.series_tail(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LawKind {
    ShiftedPoisson { rate: f64, table: Arc<PoissonTable> },
    Geometric { q: f64 },
    Deterministic { k: usize },
    ExplicitTails { tails: Arc<Vec<f64>> },
}

/// Law of the random dimension `K` on the positive integers.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionLaw {
    kind: LawKind,
}

impl DimensionLaw {
    /// `K = 1 + Poisson(rate)`.
    pub fn shifted_poisson(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(GfdError::Config(format!("poisson rate must be positive, got {rate}")));
        }
        Ok(Self { kind: LawKind::ShiftedPoisson { rate, table: Arc::new(PoissonTable::new(rate)) } })
    }

    /// `P[K >= i] = q^{i-1}`.
    pub fn geometric(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(GfdError::Config(format!("geometric ratio must lie in (0, 1), got {q}")));
        }
        Ok(Self { kind: LawKind::Geometric { q } })
    }

    /// `K = k` almost surely. Finite support; for tests only.
    pub fn deterministic(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(GfdError::Config("deterministic dimension must be at least 1".into()));
        }
        Ok(Self { kind: LawKind::Deterministic { k } })
    }

    /// Tails `t_1..t_L` given explicitly, extended by `t_i = t_L L / i`.
    pub fn explicit_tails(tails: Vec<f64>) -> Result<Self> {
        if tails.first() != Some(&1.0) {
            return Err(GfdError::Config("explicit tails must start with t_1 = 1".into()));
        }
        if tails.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(GfdError::Config("explicit tails must be positive and finite".into()));
        }
        if tails.windows(2).any(|w| w[1] > w[0]) {
            return Err(GfdError::Config("explicit tails must be non-increasing".into()));
        }
        Ok(Self { kind: LawKind::ExplicitTails { tails: Arc::new(tails) } })
    }

    pub fn has_infinite_support(&self) -> bool {
        !matches!(self.kind, LawKind::Deterministic { .. })
    }

    /// `t_i = P[K >= i]` for `i >= 1`.
    pub fn tail(&self, i: usize) -> f64 {
        if i <= 1 {
            return 1.0;
        }
        match &self.kind {
            LawKind::ShiftedPoisson { table, .. } => table.tail(i - 1),
            LawKind::Geometric { q } => q.powi((i - 1) as i32),
            LawKind::Deterministic { k } => {
                if i <= *k {
                    1.0
                } else {
                    0.0
                }
            }
            LawKind::ExplicitTails { tails } => {
                let l = tails.len();
                if i <= l {
                    tails[i - 1]
                } else {
                    tails[l - 1] * l as f64 / i as f64
                }
            }
        }
    }

    /// `p_i = P[K = i]`.
    pub fn pmf(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::ShiftedPoisson { table, .. } => table.pmf(i - 1),
            LawKind::Geometric { q } => q.powi((i - 1) as i32) * (1.0 - q),
            _ => self.tail(i) - self.tail(i + 1),
        }
    }

    /// Draws `K`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.kind {
            LawKind::ShiftedPoisson { rate, .. } => {
                let p = Poisson::new(*rate).expect("validated rate");
                1 + p.sample(rng) as usize
            }
            LawKind::Geometric { q } => {
                let g = Geometric::new(1.0 - q).expect("validated ratio");
                1 + g.sample(rng) as usize
            }
            LawKind::Deterministic { k } => *k,
            LawKind::ExplicitTails { tails } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let l = tails.len();
                let count = tails.partition_point(|t| *t >= u);
                if count < l {
                    count.max(1)
                } else {
                    let k = (tails[l - 1] * l as f64 / u).floor();
                    if k >= usize::MAX as f64 {
                        usize::MAX
                    } else {
                        (k as usize).max(l)
                    }
                }
            }
        }
    }

    /// Smallest `n` with `P[K > n] <= 1 - mass`.
    pub fn truncation_index(&self, mass: f64) -> Result<usize> {
        let slack = 1.0 - mass;
        if let LawKind::Deterministic { k } = self.kind {
            return Ok(k);
        }
        let mut n = 1;
        while self.tail(n + 1) > slack {
            n += 1;
            if n > MAX_TRUNCATION {
                return Err(GfdError::Domain(format!(
                    "law keeps mass {} beyond index {MAX_TRUNCATION}; too heavy-tailed to truncate",
                    self.tail(n)
                )));
            }
        }
        Ok(n)
    }

    /// `E[lambda_K | K >= i]` without the infinite-support requirement.
    pub(crate) fn conditional_lambda(&self, sched: &PreconditionSchedule, i: usize) -> f64 {
        match sched.lambda {
            LambdaKind::Unit => 1.0,
            LambdaKind::Tail => self.tail_weighted_mean(i),
        }
    }

    /// `sum_{j >= i} t_j p_j / t_i`.
    fn tail_weighted_mean(&self, i: usize) -> f64 {
        let i = i.max(1);
        match &self.kind {
            LawKind::Geometric { q } => self.tail(i) / (1.0 + q),
            LawKind::Deterministic { k } => {
                if i <= *k {
                    1.0
                } else {
                    0.0
                }
            }
            LawKind::ShiftedPoisson { .. } => {
                let ti = self.tail(i);
                if ti == 0.0 {
                    return 0.0;
                }
                // Summing (t_j / t_i) p_j keeps the terms clear of underflow.
                let mut sum = 0.0;
                let mut j = i;
                loop {
                    let term = self.tail(j) / ti * self.pmf(j);
                    sum += term;
                    if j > i + 1 && (term <= SERIES_EPS * sum || term == 0.0) {
                        break;
                    }
                    j += 1;
                }
                sum
            }
            LawKind::ExplicitTails { tails } => {
                let l = tails.len();
                let mut sum = 0.0;
                for j in i..l {
                    sum += tails[j - 1] * (tails[j - 1] - tails[j]);
                }
                let c = tails[l - 1] * l as f64;
                sum += c * c * inverse_cubic_tail(i.max(l));
                sum / self.tail(i)
            }
        }
    }
}

/// `sum_{j >= m} 1 / (j^2 (j + 1))`.
fn inverse_cubic_tail(m: usize) -> f64 {
    const SWITCH: usize = 50;
    let mut sum = 0.0;
    let mut j = m;
    while j < SWITCH {
        let x = j as f64;
        sum += 1.0 / (x * x * (x + 1.0));
        j += 1;
    }
    let x = j as f64;
    let x2 = x * x;
    sum + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x)
        - 1.0 / (30.0 * x2 * x2 * x2 * x2 * x)
}

impl fmt::Display for DimensionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::ShiftedPoisson { rate, .. } => write!(f, "shifted_poisson:{rate}"),
            LawKind::Geometric { q } => write!(f, "geometric:{q}"),
            LawKind::Deterministic { k } => write!(f, "deterministic:{k}"),
            LawKind::ExplicitTails { tails } => {
                let parts: Vec<String> = tails.iter().map(f64::to_string).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for DimensionLaw {
    type Err = GfdError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| GfdError::Config(format!("law {s:?} must look like kind:parameter")))?;
        let num = |v: &str| {
            v.trim().parse::<f64>().map_err(|e| GfdError::Config(format!("bad number {v:?} in law: {e}")))
        };
        match kind.trim() {
            "shifted_poisson" | "poisson" => Self::shifted_poisson(num(arg)?),
            "geometric" => Self::geometric(num(arg)?),
            "deterministic" => {
                let k = arg.trim().parse::<usize>().map_err(|e| GfdError::Config(e.to_string()))?;
                Self::deterministic(k)
            }
            "explicit" => Self::explicit_tails(arg.split(',').map(num).collect::<Result<Vec<_>>>()?),
            other => Err(GfdError::Config(format!(
                "unknown law {other:?}; expected shifted_poisson, geometric, deterministic or explicit"
            ))),
        }
    }
}

/// How `lambda_k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaKind {
    /// `lambda_k = t_k`.
    Tail,
    /// `lambda_k = 1`.
    Unit,
}

impl FromStr for LambdaKind {
    type Err = GfdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tail" => Ok(Self::Tail),
            "unit" => Ok(Self::Unit),
            other => Err(GfdError::Config(format!("unknown lambda kind {other:?}; expected tail or unit"))),
        }
    }
}

impl fmt::Display for LambdaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tail => "tail",
            Self::Unit => "unit",
        })
    }
}

/// How `M_k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSizeKind {
    /// `M_k = ceil(k / c)`.
    CeilKOverC(f64),
    /// `M_k = M`.
    Constant(usize),
}

impl fmt::Display for SampleSizeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CeilKOverC(c) => write!(f, "ceil:{c}"),
            Self::Constant(m) => write!(f, "constant:{m}"),
        }
    }
}

impl FromStr for SampleSizeKind {
    type Err = GfdError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| GfdError::Config(format!("sample size {s:?} must look like ceil:c or constant:M")))?;
        match kind.trim() {
            "ceil" => {
                let c = arg.trim().parse::<f64>().map_err(|e| GfdError::Config(e.to_string()))?;
                if !(c > 0.0 && c.is_finite()) {
                    return Err(GfdError::Config(format!("sample-size divisor must be positive, got {c}")));
                }
                Ok(Self::CeilKOverC(c))
            }
            "constant" => {
                let m = arg.trim().parse::<usize>().map_err(|e| GfdError::Config(e.to_string()))?;
                if m == 0 {
                    return Err(GfdError::Config("constant sample size must be at least 1".into()));
                }
                Ok(Self::Constant(m))
            }
            other => Err(GfdError::Config(format!("unknown sample size kind {other:?}"))),
        }
    }
}

/// `lambda_k` and `M_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionSchedule {
    lambda: LambdaKind,
    sizes: SampleSizeKind,
}

impl PreconditionSchedule {
    pub fn new(lambda: LambdaKind, sizes: SampleSizeKind) -> Result<Self> {
        match sizes {
            SampleSizeKind::CeilKOverC(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(GfdError::Config(format!("sample-size divisor must be positive, got {c}")))
            }
            SampleSizeKind::Constant(0) => {
                return Err(GfdError::Config("constant sample size must be at least 1".into()))
            }
            _ => {}
        }
        Ok(Self { lambda, sizes })
    }

    /// `lambda_k = t_k`, `M_k = ceil(k / c)`.
    pub fn tail_ceil(c: f64) -> Result<Self> {
        Self::new(LambdaKind::Tail, SampleSizeKind::CeilKOverC(c))
    }

    pub fn lambda_kind(&self) -> LambdaKind {
        self.lambda
    }

    pub fn size_kind(&self) -> SampleSizeKind {
        self.sizes
    }

    pub fn lambda(&self, law: &DimensionLaw, k: usize) -> f64 {
        match self.lambda {
            LambdaKind::Tail => law.tail(k),
            LambdaKind::Unit => 1.0,
        }
    }

    /// `M_k`, always at least one.
    pub fn sample_size(&self, k: usize) -> usize {
        match self.sizes {
            SampleSizeKind::Constant(m) => m.max(1),
            SampleSizeKind::CeilKOverC(c) => {
                let x = k as f64 / c;
                let nearest = x.round();
                let m = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
                (m as usize).max(1)
            }
        }
    }
}

/// Draws `K` from the law.
pub fn sample_dimension<R: Rng + ?Sized>(law: &DimensionLaw, rng: &mut R) -> usize {
    law.sample(rng)
}

/// `M_k` for the schedule.
pub fn sample_sizes(sched: &PreconditionSchedule, k: usize) -> usize {
    sched.sample_size(k)
}

/// `gamma_i = E[lambda_K | K >= i]`; requires an infinite-support law.
pub fn gamma(law: &DimensionLaw, sched: &PreconditionSchedule, i: usize) -> Result<f64> {
    if !law.has_infinite_support() {
        return Err(GfdError::Domain(format!("gamma is defined only for infinite-support laws, got {law}")));
    }
    if i == 0 {
        return Err(GfdError::Range { requested: 0, available: 0 });
    }
    Ok(law.conditional_lambda(sched, i))
}

/// Coefficients of `v` for given normals `z`, `k = z.len()`.
pub fn direction_from_normals<B: FactoredBasis + ?Sized>(
    basis: &B,
    law: &DimensionLaw,
    z: &[f64],
) -> Result<PreBasisExpansion> {
    let k = z.len();
    if basis.factored_len() < k {
        return Err(GfdError::State(format!(
            "basis factored to {} but a direction of dimension {k} was requested",
            basis.factored_len()
        )));
    }
    let rhs: Vec<f64> = z.iter().enumerate().map(|(i, zi)| zi / law.tail(i + 1).sqrt()).collect();
    let w = basis.solve_upper(&rhs)?;
    Ok(PreBasisExpansion::new(basis.basis_id(), w))
}

/// Draws `v = B_k R_k^{-1} T_k^{-1/2} z`.
pub fn sample_direction<B, R>(basis: &B, law: &DimensionLaw, k: usize, rng: &mut R) -> Result<PreBasisExpansion>
where
    B: FactoredBasis + ?Sized,
    R: Rng + ?Sized,
{
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    direction_from_normals(basis, law, &z)
}

/// Tail law making `sum_i theta_i / t_i` finite for the given target
/// coefficients (`theta_i` plays the role of a squared coordinate).
pub fn tails_for_target(theta: &[f64]) -> Result<DimensionLaw> {
    if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(GfdError::Config("target coefficients must be finite and non-negative".into()));
    }
    let l = theta.len();
    if theta.iter().all(|t| *t == 0.0) {
        return DimensionLaw::explicit_tails(vec![1.0]);
    }
    // a[i - 1] = A_i = sum_{j >= i} theta_j, with A_{L+1} = 0.
    let mut a = vec![0.0; l + 1];
    for i in (0..l).rev() {
        a[i] = a[i + 1] + theta[i];
    }
    let big_a = |i: usize| if i <= l { a[i - 1] } else { 0.0 };
    let mut tails = vec![0.0; l];
    let mut prev = 1usize;
    let mut k = 1usize;
    while prev <= l {
        let bound = 0.5f64.powi(k as i32);
        let mut n = (prev + 1).max(2);
        while big_a(n) > bound {
            n += 1;
        }
        for t in tails.iter_mut().take((n - 1).min(l)).skip(prev - 1) {
            *t = 1.0 / k as f64;
        }
        prev = n;
        k += 1;
    }
    DimensionLaw::explicit_tails(tails)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::GramBasis;
    use crate::linalg::SymMatrix;
    use crate::rng::substream;

    #[test]
    fn tails_match_definitions() {
        let g = DimensionLaw::geometric(0.5).unwrap();
        assert_eq!(g.tail(1), 1.0);
        assert_eq!(g.tail(4), 0.125);
        let d = DimensionLaw::deterministic(5).unwrap();
        assert_eq!(d.tail(5), 1.0);
        assert_eq!(d.tail(6), 0.0);
        let p = DimensionLaw::shifted_poisson(100.0).unwrap();
        assert_eq!(p.tail(1), 1.0);
        assert!((p.tail(2) - (1.0 - (-100.0f64).exp())).abs() < 1e-14);
        let total: f64 = (1..=400).map(|i| p.pmf(i)).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn poisson_tail_consistency() {
        let p = DimensionLaw::shifted_poisson(10.0).unwrap();
        for i in 1..120 {
            let diff = p.tail(i) - p.tail(i + 1);
            assert!((diff - p.pmf(i)).abs() <= 1e-14 + 1e-10 * p.pmf(i), "i={i}");
            assert!(p.tail(i + 1) <= p.tail(i));
            assert!(p.tail(i) > 0.0);
        }
    }

    #[test]
    fn gamma_examples() {
        let g = DimensionLaw::geometric(0.5).unwrap();
        let tail = PreconditionSchedule::tail_ceil(1.0).unwrap();
        let unit = PreconditionSchedule::new(LambdaKind::Unit, SampleSizeKind::Constant(1)).unwrap();
        for i in 1..30 {
            assert_eq!(gamma(&g, &unit, i).unwrap(), 1.0);
            assert!((gamma(&g, &tail, i).unwrap() - 2.0 / 3.0 * g.tail(i)).abs() < 1e-15);
        }
        let d = DimensionLaw::deterministic(3).unwrap();
        assert!(matches!(gamma(&d, &tail, 1), Err(GfdError::Domain(_))));
        let p = DimensionLaw::shifted_poisson(100.0).unwrap();
        let g1 = gamma(&p, &tail, 1).unwrap();
        assert!((0.5..=1.0).contains(&g1));
    }

    #[test]
    fn explicit_gamma_matches_brute_force() {
        let law = DimensionLaw::explicit_tails(vec![1.0, 0.6, 0.5, 0.2]).unwrap();
        let tail = PreconditionSchedule::tail_ceil(1.0).unwrap();
        for i in 1..8 {
            let brute: f64 = (i..2_000_000).map(|j| law.tail(j) * law.pmf(j)).sum::<f64>() / law.tail(i);
            let g = gamma(&law, &tail, i).unwrap();
            assert!((g - brute).abs() < 1e-9 * g, "i={i} g={g} brute={brute}");
        }
    }

    #[test]
    fn sample_size_examples() {
        let s = |c| PreconditionSchedule::tail_ceil(c).unwrap();
        assert_eq!(sample_sizes(&s(2.0), 5), 3);
        assert_eq!(sample_sizes(&s(2.0), 4), 2);
        assert_eq!(sample_sizes(&s(1.5), 100), 67);
        assert_eq!(sample_sizes(&s(1.5), 3), 2);
        assert_eq!(sample_sizes(&s(0.1), 3), 30);
        assert_eq!(sample_sizes(&s(1000.0), 3), 1);
    }

    #[test]
    fn deterministic_sampling() {
        let d = DimensionLaw::deterministic(7).unwrap();
        let mut rng = substream(1, 0, 0);
        assert!((0..100).all(|_| sample_dimension(&d, &mut rng) == 7));
    }

    #[test]
    fn empirical_poisson_mean() {
        let p = DimensionLaw::shifted_poisson(100.0).unwrap();
        let mut rng = substream(3, 0, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| p.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        let se = (100.0 / n as f64).sqrt();
        assert!((mean - 101.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn empirical_geometric_tail() {
        let g = DimensionLaw::geometric(0.5).unwrap();
        let mut rng = substream(4, 0, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| g.sample(&mut rng) >= 3).count() as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((hits - 0.25).abs() < 3.0 * se, "hits {hits}");
    }

    #[test]
    fn empirical_explicit_tails() {
        let law = DimensionLaw::explicit_tails(vec![1.0, 0.5, 0.4]).unwrap();
        let mut rng = substream(5, 0, 0);
        let n = 200_000;
        let draws: Vec<usize> = (0..n).map(|_| law.sample(&mut rng)).collect();
        for i in [2usize, 3, 4, 6, 10] {
            let freq = draws.iter().filter(|&&k| k >= i).count() as f64 / n as f64;
            let t = law.tail(i);
            let se = (t * (1.0 - t) / n as f64).sqrt();
            assert!((freq - t).abs() < 4.0 * se, "i={i} freq={freq} t={t}");
        }
    }

    #[test]
    fn direction_examples() {
        let law = DimensionLaw::explicit_tails(vec![1.0, 0.25]).unwrap();
        let one = GramBasis::new(SymMatrix::identity(1)).unwrap();
        assert_eq!(direction_from_normals(&one, &law, &[1.0]).unwrap().coeffs(), &[1.0]);
        let g = SymMatrix::from_dense(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let basis = GramBasis::new(g).unwrap();
        let v = direction_from_normals(&basis, &law, &[0.0, 1.0]).unwrap();
        assert!((v.coeffs()[1] - 2.309_401).abs() < 1e-6);
        assert!((v.coeffs()[0] + 1.154_701).abs() < 1e-6);
        assert!(matches!(direction_from_normals(&basis, &law, &[0.0; 3]), Err(GfdError::State(_))));
    }

    #[test]
    fn target_tails_examples() {
        let law = tails_for_target(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for i in 1..12 {
            assert!((law.tail(i) - 1.0 / i as f64).abs() < 1e-15, "i={i}");
        }
        let zero = tails_for_target(&[0.0; 4]).unwrap();
        for i in 1..10 {
            assert!((zero.tail(i) - 1.0 / i as f64).abs() < 1e-15);
        }
        let empty = tails_for_target(&[]).unwrap();
        assert!((empty.tail(7) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn target_tails_bound_for_geometric_theta() {
        let theta: Vec<f64> = (1..=64).map(|i| 0.5f64.powi(i)).collect();
        let law = tails_for_target(&theta).unwrap();
        let a1: f64 = theta.iter().sum();
        let total: f64 = theta.iter().enumerate().map(|(i, t)| t / law.tail(i + 1)).sum();
        assert!(total <= a1 + 3.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["shifted_poisson:100", "geometric:0.5", "deterministic:7", "explicit:1,0.5,0.25"] {
            let law: DimensionLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        assert!("poisson".parse::<DimensionLaw>().is_err());
        assert!("geometric:1.5".parse::<DimensionLaw>().is_err());
        assert!("explicit:0.5,1".parse::<DimensionLaw>().is_err());
        assert_eq!("ceil:1.5".parse::<SampleSizeKind>().unwrap(), SampleSizeKind::CeilKOverC(1.5));
        assert_eq!("tail".parse::<LambdaKind>().unwrap(), LambdaKind::Tail);
    }

    #[test]
    fn truncation_index_behaviour() {
        let g = DimensionLaw::geometric(0.5).unwrap();
        let n = g.truncation_index(TRUNCATION_MASS).unwrap();
        assert!(g.tail(n + 1) <= 1e-12 && g.tail(n) > 1e-12);
        let heavy = DimensionLaw::explicit_tails(vec![1.0]).unwrap();
        assert!(matches!(heavy.truncation_index(TRUNCATION_MASS), Err(GfdError::Domain(_))));
    }
}
