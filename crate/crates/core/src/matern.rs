//! Half-integer Matérn kernels and their mixed partial derivatives.
//!
//! With `a = sqrt(2 nu) / eta` and `s = a r`, the kernel is `Q_0(s) e^{-s}`
//! for a polynomial `Q_0` fixed by `nu`. Derivatives are built from the
//! radial sequence `F_j = ((1/r) d/dr)^j k`, which stays of the form
//! `F_j = a^{2j} Q_j(s) e^{-s}` with `Q_{j+1}(s) = (Q_j'(s) - Q_j(s)) / s`.
//! For `y = x - center`, `d/dx_i [F_j y^b] = F_{j+1} y_i y^b + b_i F_j y^{b - e_i}`,
//! so every partial is a finite sum of terms `c F_j y^b`.

use std::collections::BTreeMap;

use crate::error::{GfdError, Result};
use crate::function_space::MultiIndex;

/// Distances below this fraction of `eta` count as zero.
const ZERO_RADIUS: f64 = 1e-10;
const SNAP: f64 = 1e-12;

/// Smoothness `nu` and bandwidth `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    nu: f64,
    eta: f64,
}

impl MaternParams {
    pub fn new(nu: f64, eta: f64) -> Result<Self> {
        half_integer_index(nu)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(GfdError::Config(format!("bandwidth must be positive, got {eta}")));
        }
        Ok(Self { nu, eta })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `p` with `nu = p + 1/2`.
    pub fn half_index(&self) -> usize {
        (self.nu - 0.5).round() as usize
    }

    /// Highest derivative order that exists classically, `2 floor(nu)`.
    pub fn max_order(&self) -> usize {
        2 * self.half_index()
    }

    /// Inverse length scale `sqrt(2 nu) / eta`.
    pub fn rate(&self) -> f64 {
        (2.0 * self.nu).sqrt() / self.eta
    }
}

fn half_integer_index(nu: f64) -> Result<usize> {
    [0.5, 1.5, 2.5, 3.5]
        .iter()
        .position(|v| (nu - v).abs() < 1e-12)
        .ok_or_else(|| GfdError::Config(format!("unsupported smoothness nu = {nu}; use 0.5, 1.5, 2.5 or 3.5")))
}

/// Laurent polynomial in `s` as `(exponent, coefficient)` pairs.
#[derive(Debug, Clone, PartialEq)]
struct Laurent(Vec<(i32, f64)>);

impl Laurent {
    fn base(p: usize) -> Self {
        let c: &[f64] = match p {
            0 => &[1.0],
            1 => &[1.0, 1.0],
            2 => &[1.0, 1.0, 1.0 / 3.0],
            _ => &[1.0, 1.0, 2.0 / 5.0, 1.0 / 15.0],
        };
        Self(c.iter().enumerate().map(|(n, &v)| (n as i32, v)).collect())
    }

    /// `(Q' - Q) / s`.
    fn step(&self) -> Self {
        let mut acc: BTreeMap<i32, f64> = BTreeMap::new();
        let scale = self.0.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        for &(n, c) in &self.0 {
            if n != 0 {
                *acc.entry(n - 2).or_default() += n as f64 * c;
            }
            *acc.entry(n - 1).or_default() -= c;
        }
        Self(acc.into_iter().filter(|(_, c)| c.abs() > SNAP * scale).collect())
    }

    fn eval(&self, s: f64) -> f64 {
        self.0.iter().map(|&(n, c)| c * s.powi(n)).sum()
    }

    /// Value at `s = 0`; only meaningful when no negative powers remain.
    fn at_zero(&self) -> f64 {
        self.0.iter().filter(|(n, _)| *n == 0).map(|(_, c)| c).sum()
    }
}

/// One term `coeff F_j(r) y^beta`.
#[derive(Debug, Clone, PartialEq)]
struct Term {
    j: usize,
    beta: Vec<usize>,
    coeff: f64,
}

/// Precomputed term list for one multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialPlan {
    terms: Vec<Term>,
    max_j: usize,
}

impl PartialPlan {
    pub fn max_radial(&self) -> usize {
        self.max_j
    }
}

/// A Matérn kernel on `R^dim` with its radial derivative sequence.
#[derive(Debug, Clone)]
pub struct MaternKernel {
    params: MaternParams,
    dim: usize,
    radial: Vec<Laurent>,
}

impl MaternKernel {
    pub fn new(params: MaternParams, dim: usize) -> Self {
        let mut radial = vec![Laurent::base(params.half_index())];
        for _ in 0..params.max_order() {
            let next = radial.last().map(Laurent::step).unwrap_or_else(|| Laurent(vec![]));
            radial.push(next);
        }
        Self { params, dim, radial }
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Kernel value at distance `r`.
    pub fn eval_radial(&self, r: f64) -> f64 {
        let s = self.params.rate() * r;
        self.radial[0].eval(s) * (-s).exp()
    }

    /// Expands `D^idx` into radial terms.
    pub fn plan(&self, idx: &MultiIndex) -> Result<PartialPlan> {
        if idx.dim() != self.dim {
            return Err(GfdError::ContractViolation(format!(
                "multi-index of dimension {} for a {}-dimensional kernel",
                idx.dim(),
                self.dim
            )));
        }
        let order = idx.total_order();
        if order > self.params.max_order() {
            return Err(GfdError::UnsupportedOrder { requested: order, supported: self.params.max_order() });
        }
        let mut terms: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
        terms.insert((0, vec![0; self.dim]), 1.0);
        for (axis, &count) in idx.orders().iter().enumerate() {
            for _ in 0..count {
                let mut next: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
                for ((j, beta), c) in terms {
                    let mut up = beta.clone();
                    up[axis] += 1;
                    *next.entry((j + 1, up)).or_default() += c;
                    if beta[axis] > 0 {
                        let mut down = beta.clone();
                        down[axis] -= 1;
                        *next.entry((j, down)).or_default() += c * beta[axis] as f64;
                    }
                }
                terms = next;
            }
        }
        let terms: Vec<Term> = terms
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((j, beta), coeff)| Term { j, beta, coeff })
            .collect();
        let max_j = terms.iter().map(|t| t.j).max().unwrap_or(0);
        Ok(PartialPlan { terms, max_j })
    }

    /// `D^idx_x k(center, x)` at `x = point` for a prepared plan.
    pub fn eval_plan(&self, plan: &PartialPlan, center: &[f64], point: &[f64]) -> f64 {
        let mut out = [0.0];
        self.eval_plans(std::slice::from_ref(plan), center, point, &mut out);
        out[0]
    }

    /// Evaluates several plans at one point, sharing the radial factors.
    pub fn eval_plans(&self, plans: &[PartialPlan], center: &[f64], point: &[f64], out: &mut [f64]) {
        let mut y = [0.0f64; 8];
        let mut ybuf = Vec::new();
        let y: &mut [f64] = if self.dim <= 8 {
            &mut y[..self.dim]
        } else {
            ybuf.resize(self.dim, 0.0);
            &mut ybuf
        };
        let mut r2 = 0.0;
        for ((yi, p), c) in y.iter_mut().zip(point).zip(center) {
            *yi = p - c;
            r2 += *yi * *yi;
        }
        let r = r2.sqrt();
        let a = self.params.rate();
        let max_j = plans.iter().map(|p| p.max_j).max().unwrap_or(0);
        let mut radial = [0.0f64; 16];
        let at_center = r <= ZERO_RADIUS * self.params.eta;
        let s = a * r;
        let decay = (-s).exp();
        let a2 = a * a;
        let mut scale = 1.0;
        for (j, slot) in radial.iter_mut().enumerate().take(max_j + 1) {
            let q = &self.radial[j];
            *slot = scale * if at_center { q.at_zero() } else { q.eval(s) * decay };
            scale *= a2;
        }
        for (plan, o) in plans.iter().zip(out.iter_mut()) {
            let mut total = 0.0;
            for term in &plan.terms {
                let degree: usize = term.beta.iter().sum();
                if at_center && degree > 0 {
                    continue;
                }
                let mut mono = term.coeff * radial[term.j];
                for (yi, &b) in y.iter().zip(&term.beta) {
                    if b > 0 {
                        mono *= yi.powi(b as i32);
                    }
                }
                total += mono;
            }
            *o = total;
        }
    }
}

/// Stationary kernel value at distance `r >= 0`.
pub fn matern_eval(params: &MaternParams, r: f64) -> f64 {
    MaternKernel::new(*params, 1).eval_radial(r)
}

/// Mixed partial of `x -> k(center, x)` at `point`.
pub fn matern_partial(params: &MaternParams, center: &[f64], point: &[f64], idx: &MultiIndex) -> Result<f64> {
    let kernel = MaternKernel::new(*params, center.len());
    if point.len() != center.len() {
        return Err(GfdError::ContractViolation("center and point dimensions differ".into()));
    }
    let plan = kernel.plan(idx)?;
    Ok(kernel.eval_plan(&plan, center, point))
}
