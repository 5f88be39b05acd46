use rayon::prelude::*;

use crate::error::{GfdError, Result};
use crate::function_space::{BasisId, MultiIndex, PreBasisExpansion};
use crate::matern::PartialPlan;
use crate::prebasis::PreBasis;
use crate::quadrature::Quadrature;

/// Values of selected partial derivatives of each basis function at a fixed
/// set of quadrature nodes, so that any expansion can be evaluated there by
/// combining columns.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    quad: Quadrature,
    channels: Vec<MultiIndex>,
    plans: Vec<PartialPlan>,
    basis: Option<BasisId>,
    cols: Vec<Vec<f64>>,
}

impl NodeFeatures {
    pub fn new(quad: Quadrature, channels: Vec<MultiIndex>) -> Self {
        Self { quad, channels, plans: Vec::new(), basis: None, cols: Vec::new() }
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn channels(&self) -> &[MultiIndex] {
        &self.channels
    }

    pub fn node_count(&self) -> usize {
        self.quad.len()
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Computes columns for basis functions up to `k`.
    pub fn ensure(&mut self, pb: &PreBasis, k: usize) -> Result<()> {
        if self.basis != Some(pb.id()) {
            self.plans = self.channels.iter().map(|c| pb.kernel().plan(c)).collect::<Result<_>>()?;
            self.cols.clear();
            self.basis = Some(pb.id());
        }
        if k > pb.center_count() {
            return Err(GfdError::Range { requested: k, available: pb.center_count() });
        }
        if k <= self.cols.len() {
            return Ok(());
        }
        let nodes: Vec<&[f64]> = self.quad.nodes().collect();
        let n = nodes.len();
        let plans = &self.plans;
        let kernel = pb.kernel();
        let fresh: Vec<Vec<f64>> = pb.centers()[self.cols.len()..k]
            .par_iter()
            .map(|center| {
                let mut col = vec![0.0; plans.len() * n];
                let mut buf = vec![0.0; plans.len()];
                for (i, p) in nodes.iter().enumerate() {
                    kernel.eval_plans(plans, center, p, &mut buf);
                    for (c, v) in buf.iter().enumerate() {
                        col[c * n + i] = *v;
                    }
                }
                col
            })
            .collect();
        self.cols.extend(fresh);
        Ok(())
    }

    /// Channel-major values of `h` at the nodes: entry `c * N + i` is
    /// channel `c` at node `i`.
    pub fn fields(&self, h: &PreBasisExpansion) -> Result<Vec<f64>> {
        if Some(h.basis()) != self.basis && !h.is_empty() {
            return Err(GfdError::ContractViolation(
                "expansion does not belong to the cached pre-basis".into(),
            ));
        }
        if h.len() > self.cols.len() {
            return Err(GfdError::State(format!(
                "node features cached for {} basis functions but the expansion has {}; prepare the risk first",
                self.cols.len(),
                h.len()
            )));
        }
        let mut out = vec![0.0; self.channels.len() * self.quad.len()];
        for (a, col) in h.coeffs().iter().zip(&self.cols) {
            if *a == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(col) {
                *o += a * c;
            }
        }
        Ok(out)
    }
}
