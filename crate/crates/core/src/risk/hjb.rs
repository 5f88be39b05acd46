//! Residual risk for the Hamilton-Jacobi-Bellman equation
//! `h_t + H~(x, h_x) = 0` on `(0, T) x (-xbar, xbar)` with `h(T, x) = G x^2`,
//! where `H~` is the infimum over `|c| <= cbar` of `A x^2 + B c^2 + p c`:
//!
//! `R(h) = 1/2 int (h_t + H~(x, h_x))^2 + 1/2 int_{t=T} (h - G x^2)^2`.

use rayon::prelude::*;

use super::{NodeFeatures, RiskFunctional};
use crate::dual::{DualScalar, Scalar};
use crate::error::{GfdError, Result};
use crate::function_space::{MultiIndex, PreBasisExpansion};
use crate::prebasis::PreBasis;
use crate::quadrature::{boundary_quadrature, BoxDomain, Quadrature};

/// Sobolev order of the HJB risk.
pub const HJB_SOBOLEV_ORDER: usize = 1;

/// Problem constants `A`, `B`, `cbar`, `xbar`, `T`; `G = sqrt(A B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbParams {
    pub a: f64,
    pub b: f64,
    pub c_bar: f64,
    pub x_bar: f64,
    pub t_final: f64,
}

impl Default for HjbParams {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, c_bar: 0.5, x_bar: 3.0, t_final: 5.0 }
    }
}

impl HjbParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c_bar, self.x_bar, self.t_final];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(GfdError::Config(format!("HJB constants must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn g(&self) -> f64 {
        (self.a * self.b).sqrt()
    }
}

/// `H~(x, p)`; the branch is picked by the value of `p`, with the tie
/// `|p| = 2 B cbar` going to the quadratic branch.
pub fn htilde<S: Scalar>(x: f64, p: S, params: &HjbParams) -> S {
    let ax2 = params.a * x * x;
    if p.value().abs() <= 2.0 * params.b * params.c_bar {
        p.square() * (-0.25 / params.b) + ax2
    } else {
        p.abs() * (-params.c_bar) + (ax2 + params.b * params.c_bar * params.c_bar)
    }
}

/// Minimizer of `B c^2 + p c` over `|c| <= cbar`.
pub fn control_from_slope(p: f64, params: &HjbParams) -> f64 {
    (-p / (2.0 * params.b)).clamp(-params.c_bar, params.c_bar)
}

/// Optimal feedback control at `(t, x)` for the value function `u`.
pub fn optimal_control(u: &PreBasisExpansion, pb: &PreBasis, t: f64, x: f64, params: &HjbParams) -> Result<f64> {
    let p = u.evaluate_partial(pb, &[t, x], &MultiIndex::new(vec![0, 1]))?;
    Ok(control_from_slope(p, params))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbConfig {
    pub params: HjbParams,
    pub interior_nodes: usize,
    pub terminal_nodes: usize,
}

impl Default for HjbConfig {
    fn default() -> Self {
        Self { params: HjbParams::default(), interior_nodes: 1 << 14, terminal_nodes: 1 << 11 }
    }
}

#[derive(Debug, Clone)]
pub struct HjbRisk {
    config: HjbConfig,
    domain: BoxDomain,
    /// Channels: `d/dt`, `d/dx`.
    interior: NodeFeatures,
    xs: Vec<f64>,
    /// Channel: value on `t = T`.
    terminal: NodeFeatures,
    targets: Vec<f64>,
}

const DT: usize = 0;
const DX: usize = 1;

impl HjbRisk {
    pub fn new(config: HjbConfig) -> Result<Self> {
        let p = config.params;
        p.validate()?;
        let domain = BoxDomain::new(vec![0.0, -p.x_bar], vec![p.t_final, p.x_bar])?;
        let iquad = domain.quadrature(config.interior_nodes)?;
        let xs = iquad.nodes().map(|n| n[1]).collect();
        let interior = NodeFeatures::new(iquad, vec![MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![0, 1])]);
        let tquad = boundary_quadrature(&[domain.face(0, true)?], config.terminal_nodes)?;
        let targets = tquad.nodes().map(|n| p.g() * n[1] * n[1]).collect();
        let terminal = NodeFeatures::new(tquad, vec![MultiIndex::zero(2)]);
        Ok(Self { config, domain, interior, xs, terminal, targets })
    }

    pub fn config(&self) -> &HjbConfig {
        &self.config
    }

    pub fn params(&self) -> &HjbParams {
        &self.config.params
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn interior_quadrature(&self) -> &Quadrature {
        self.interior.quadrature()
    }

    pub fn terminal_quadrature(&self) -> &Quadrature {
        self.terminal.quadrature()
    }

    /// `||h(T, .) - G x^2||_{L^2(-xbar, xbar)}`.
    pub fn terminal_error(&self, h: &PreBasisExpansion) -> Result<f64> {
        let vals = self.terminal.fields(h)?;
        let sq: Vec<f64> = vals.iter().zip(&self.targets).map(|(v, t)| (v - t).powi(2)).collect();
        Ok(self.terminal.quadrature().integrate_values(&sq, 0.0).max(0.0).sqrt())
    }

    /// Risk of a function given pointwise by `(u, u_t, u_x)`.
    pub fn value_of<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> [f64; 3],
    {
        let n = self.interior.node_count();
        let mut int = vec![0.0; 2 * n];
        for (i, p) in self.interior.quadrature().nodes().enumerate() {
            let [_, ut, ux] = f(p);
            int[DT * n + i] = ut;
            int[DX * n + i] = ux;
        }
        let term: Vec<f64> = self.terminal.quadrature().nodes().map(|p| f(p)[0]).collect();
        self.assemble(&int, &term)
    }

    fn assemble<S: Scalar>(&self, int: &[S], term: &[S]) -> S {
        let n = self.interior.node_count();
        let params = &self.config.params;
        let residual: Vec<S> = (0..n)
            .map(|i| (int[DT * n + i] + htilde(self.xs[i], int[DX * n + i], params)).square() * 0.5)
            .collect();
        let terminal: Vec<S> = term.iter().zip(&self.targets).map(|(h, g)| (*h - *g).square() * 0.5).collect();
        self.interior.quadrature().integrate_values(&residual, S::zero())
            + self.terminal.quadrature().integrate_values(&terminal, S::zero())
    }
}

fn lift(h: &[f64], v: &[f64]) -> Vec<DualScalar> {
    h.iter().zip(v).map(|(a, b)| DualScalar::new(*a, *b)).collect()
}

impl RiskFunctional<PreBasis> for HjbRisk {
    fn prepare(&mut self, basis: &PreBasis, k: usize) -> Result<()> {
        if basis.params().max_order() < 1 {
            return Err(GfdError::Config(format!(
                "HJB risk needs first derivatives but nu = {} provides none",
                basis.params().nu()
            )));
        }
        self.interior.ensure(basis, k)?;
        self.terminal.ensure(basis, k)
    }

    fn value(&self, _basis: &PreBasis, h: &PreBasisExpansion) -> Result<f64> {
        Ok(self.assemble(&self.interior.fields(h)?, &self.terminal.fields(h)?))
    }

    fn value_and_derivatives(
        &self,
        _basis: &PreBasis,
        h: &PreBasisExpansion,
        dirs: &[PreBasisExpansion],
    ) -> Result<(f64, Vec<f64>)> {
        let hi = self.interior.fields(h)?;
        let ht = self.terminal.fields(h)?;
        let value = self.assemble(&hi, &ht);
        let derivs = dirs
            .par_iter()
            .map(|v| {
                let vi = self.interior.fields(v)?;
                let vt = self.terminal.fields(v)?;
                Ok(self.assemble(&lift(&hi, &vi), &lift(&ht, &vt)).deriv)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((value, derivs))
    }

    fn monitor(&self, _basis: &PreBasis, h: &PreBasisExpansion) -> Result<Option<f64>> {
        self.terminal_error(h).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::FactoredBasis;
    use crate::matern::MaternParams;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn params() -> HjbParams {
        HjbParams::default()
    }

    #[test]
    fn htilde_examples() {
        let p = params();
        assert_eq!(htilde(0.0, 0.0, &p), 0.0);
        assert!((htilde(1.0, 1.0, &p) - 0.75).abs() < 1e-15);
        assert!((htilde(0.0, 2.0, &p) + 0.75).abs() < 1e-15);
        assert!((p.g() * p.g() - p.a * p.b).abs() < 1e-12);
    }

    #[test]
    fn control_examples() {
        let p = params();
        assert_eq!(control_from_slope(0.0, &p), 0.0);
        assert_eq!(control_from_slope(0.5, &p), -0.25);
        assert_eq!(control_from_slope(3.0, &p), -0.5);
        assert_eq!(control_from_slope(-3.0, &p), 0.5);
    }

    #[test]
    fn branch_derivative_at_tie_and_zero() {
        let p = params();
        let at_tie = htilde(0.5, DualScalar::new(1.0, 1.0), &p);
        let beyond = htilde(0.5, DualScalar::new(1.0 + 1e-12, 1.0), &p);
        assert!((at_tie.deriv + 0.5).abs() < 1e-15);
        assert!((beyond.deriv + 0.5).abs() < 1e-15);
        let zero = htilde(0.5, DualScalar::new(0.0, 1.0), &p);
        assert_eq!(zero.deriv, 0.0);
    }

    #[test]
    fn zero_risk_matches_polynomial_integrals() {
        let risk = HjbRisk::new(HjbConfig::default()).unwrap();
        let r0 = risk.value_of(|_| [0.0; 3]);
        assert!((r0 - 291.6).abs() < 0.3, "R(0) = {r0}");
    }

    proptest! {
        #[test]
        fn htilde_continuous_at_branch(x in -3.0f64..3.0) {
            let p = params();
            let edge = 2.0 * p.b * p.c_bar;
            let lo: f64 = htilde(x, edge - 1e-9, &p);
            let hi: f64 = htilde(x, edge + 1e-9, &p);
            prop_assert!((lo - hi).abs() <= 1e-8);
            let lo: f64 = htilde(x, -edge + 1e-9, &p);
            let hi: f64 = htilde(x, -edge - 1e-9, &p);
            prop_assert!((lo - hi).abs() <= 1e-8);
        }

        #[test]
        fn htilde_bounded(x in -5.0f64..5.0, q in -10.0f64..10.0) {
            let p = params();
            let v: f64 = htilde(x, q, &p);
            prop_assert!(v.abs() <= x * x + p.b * p.c_bar * p.c_bar + p.c_bar * q.abs() + 1e-12);
        }
    }

    fn small_setup(k: usize) -> (PreBasis, HjbRisk) {
        let cfg = HjbConfig { interior_nodes: 1 << 11, terminal_nodes: 1 << 9, ..Default::default() };
        let mut risk = HjbRisk::new(cfg).unwrap();
        let mp = MaternParams::new(1.5, 2.0).unwrap();
        let mut pb = PreBasis::new(mp, risk.domain().clone(), 1, 1 << 10).unwrap();
        pb.ensure(k).unwrap();
        risk.prepare(&pb, k).unwrap();
        (pb, risk)
    }

    fn random_expansion(pb: &PreBasis, k: usize, stream: u64, scale: f64) -> PreBasisExpansion {
        let mut rng = substream(13, stream, 0);
        PreBasisExpansion::new(pb.id(), (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (pb, risk) = small_setup(6);
        for s in 0..5 {
            let h = random_expansion(&pb, 6, 2 * s, 3.0);
            let v = random_expansion(&pb, 6, 2 * s + 1, 1.0);
            let d = risk.directional_derivative(&pb, &h, &v).unwrap();
            let delta = 1e-5;
            let plus = risk.value(&pb, &PreBasisExpansion::axpy(delta, &v, &h).unwrap()).unwrap();
            let minus = risk.value(&pb, &PreBasisExpansion::axpy(-delta, &v, &h).unwrap()).unwrap();
            let fd = (plus - minus) / (2.0 * delta);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1e-6), "{d} vs {fd}");
        }
    }

    #[test]
    fn linear_in_direction() {
        let (pb, risk) = small_setup(5);
        let h = random_expansion(&pb, 5, 50, 2.0);
        let v = random_expansion(&pb, 5, 51, 1.0);
        let w = random_expansion(&pb, 5, 52, 1.0);
        let combo = PreBasisExpansion::axpy(2.0, &w, &v.scale(-0.5)).unwrap();
        let lhs = risk.directional_derivative(&pb, &h, &combo).unwrap();
        let rhs = -0.5 * risk.directional_derivative(&pb, &h, &v).unwrap()
            + 2.0 * risk.directional_derivative(&pb, &h, &w).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn controls_stay_in_bounds() {
        let (pb, _) = small_setup(5);
        let h = random_expansion(&pb, 5, 60, 50.0);
        let p = params();
        for i in 0..20 {
            for j in 0..20 {
                let t = 5.0 * i as f64 / 19.0;
                let x = -3.0 + 6.0 * j as f64 / 19.0;
                let c = optimal_control(&h, &pb, t, x, &p).unwrap();
                assert!((-0.5..=0.5).contains(&c));
            }
        }
    }
}
