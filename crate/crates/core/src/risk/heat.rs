//! Residual risk for the heat equation `u_t = u_xx` on `(0, T) x (0, 2 pi)`
//! with `u(0, x) = sin x` and zero lateral data:
//!
//! `R(h) = 1/2 int (h_t - h_xx)^2 + 1/2 int_{t=0} (h - sin x)^2
//!        + 1/2 int_{x=0} h^2 + 1/2 int_{x=2 pi} h^2`.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{NodeFeatures, RiskFunctional};
use crate::dual::{DualScalar, Scalar};
use crate::error::{GfdError, Result};
use crate::function_space::{MultiIndex, PreBasisExpansion};
use crate::prebasis::PreBasis;
use crate::quadrature::{boundary_quadrature, BoxDomain, Quadrature};

/// Sobolev order of the heat risk.
pub const HEAT_SOBOLEV_ORDER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatConfig {
    pub t_final: f64,
    pub interior_nodes: usize,
    pub boundary_nodes: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self { t_final: 1.0, interior_nodes: 1 << 14, boundary_nodes: 1 << 11 }
    }
}

/// `e^{-t} sin x`.
pub fn heat_exact(point: &[f64]) -> f64 {
    (-point[0]).exp() * point[1].sin()
}

/// `||e^{-t} sin x||_{L^2((0,T) x (0,2 pi))}`.
pub fn heat_exact_norm(t_final: f64) -> f64 {
    (PI * (1.0 - (-2.0 * t_final).exp()) / 2.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct HeatRisk {
    config: HeatConfig,
    domain: BoxDomain,
    /// Channels: value, `d/dt`, `d^2/dx^2`.
    interior: NodeFeatures,
    /// Channel: value, on the faces `t = 0`, `x = 0`, `x = 2 pi`.
    boundary: NodeFeatures,
    targets: Vec<f64>,
}

const VALUE: usize = 0;
const DT: usize = 1;
const DXX: usize = 2;

impl HeatRisk {
    pub fn new(config: HeatConfig) -> Result<Self> {
        if !(config.t_final > 0.0) {
            return Err(GfdError::Config(format!("final time must be positive, got {}", config.t_final)));
        }
        let domain = BoxDomain::new(vec![0.0, 0.0], vec![config.t_final, 2.0 * PI])?;
        let interior = NodeFeatures::new(
            domain.quadrature(config.interior_nodes)?,
            vec![MultiIndex::zero(2), MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![0, 2])],
        );
        let faces = [domain.face(0, false)?, domain.face(1, false)?, domain.face(1, true)?];
        let bquad = boundary_quadrature(&faces, config.boundary_nodes)?;
        let targets = bquad.nodes().map(|p| if p[0] == 0.0 { p[1].sin() } else { 0.0 }).collect();
        let boundary = NodeFeatures::new(bquad, vec![MultiIndex::zero(2)]);
        Ok(Self { config, domain, interior, boundary, targets })
    }

    pub fn config(&self) -> &HeatConfig {
        &self.config
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn interior_quadrature(&self) -> &Quadrature {
        self.interior.quadrature()
    }

    pub fn boundary_quadrature(&self) -> &Quadrature {
        self.boundary.quadrature()
    }

    /// Risk of a function given pointwise by `(u, u_t, u_xx)`.
    pub fn value_of<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> [f64; 3],
    {
        let n = self.interior.node_count();
        let mut int = vec![0.0; 3 * n];
        for (i, p) in self.interior.quadrature().nodes().enumerate() {
            let [u, ut, uxx] = f(p);
            int[VALUE * n + i] = u;
            int[DT * n + i] = ut;
            int[DXX * n + i] = uxx;
        }
        let bnd: Vec<f64> = self.boundary.quadrature().nodes().map(|p| f(p)[0]).collect();
        self.assemble(&int, &bnd)
    }

    /// `||h - e^{-t} sin x||_{L^2}` on the interior nodes.
    pub fn l2_error(&self, h: &PreBasisExpansion) -> Result<f64> {
        let fields = self.interior.fields(h)?;
        let n = self.interior.node_count();
        let sq: Vec<f64> = self
            .interior
            .quadrature()
            .nodes()
            .enumerate()
            .map(|(i, p)| (fields[VALUE * n + i] - heat_exact(p)).powi(2))
            .collect();
        Ok(self.interior.quadrature().integrate_values(&sq, 0.0).max(0.0).sqrt())
    }

    fn assemble<S: Scalar>(&self, int: &[S], bnd: &[S]) -> S {
        let n = self.interior.node_count();
        let residual: Vec<S> = (0..n).map(|i| (int[DT * n + i] - int[DXX * n + i]).square() * 0.5).collect();
        let boundary: Vec<S> = bnd.iter().zip(&self.targets).map(|(h, f)| (*h - *f).square() * 0.5).collect();
        self.interior.quadrature().integrate_values(&residual, S::zero())
            + self.boundary.quadrature().integrate_values(&boundary, S::zero())
    }

    fn check_smoothness(pb: &PreBasis) -> Result<()> {
        if pb.params().max_order() < 2 {
            return Err(GfdError::Config(format!(
                "heat risk needs second derivatives but nu = {} only provides order {}",
                pb.params().nu(),
                pb.params().max_order()
            )));
        }
        Ok(())
    }
}

fn lift(h: &[f64], v: &[f64]) -> Vec<DualScalar> {
    h.iter().zip(v).map(|(a, b)| DualScalar::new(*a, *b)).collect()
}

impl RiskFunctional<PreBasis> for HeatRisk {
    fn prepare(&mut self, basis: &PreBasis, k: usize) -> Result<()> {
        Self::check_smoothness(basis)?;
        self.interior.ensure(basis, k)?;
        self.boundary.ensure(basis, k)
    }

    fn value(&self, _basis: &PreBasis, h: &PreBasisExpansion) -> Result<f64> {
        Ok(self.assemble(&self.interior.fields(h)?, &self.boundary.fields(h)?))
    }

    fn value_and_derivatives(
        &self,
        _basis: &PreBasis,
        h: &PreBasisExpansion,
        dirs: &[PreBasisExpansion],
    ) -> Result<(f64, Vec<f64>)> {
        let hi = self.interior.fields(h)?;
        let hb = self.boundary.fields(h)?;
        let value = self.assemble(&hi, &hb);
        let derivs = dirs
            .par_iter()
            .map(|v| {
                let vi = self.interior.fields(v)?;
                let vb = self.boundary.fields(v)?;
                Ok(self.assemble(&lift(&hi, &vi), &lift(&hb, &vb)).deriv)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((value, derivs))
    }

    fn monitor(&self, _basis: &PreBasis, h: &PreBasisExpansion) -> Result<Option<f64>> {
        self.l2_error(h).map(Some)
    }
}
