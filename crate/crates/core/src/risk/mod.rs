//! Risk functionals and their directional derivatives.

mod cache;
pub mod heat;
pub mod hjb;

pub use cache::NodeFeatures;
pub use heat::{HeatConfig, HeatRisk};
pub use hjb::{htilde, optimal_control, HjbConfig, HjbParams, HjbRisk};

use crate::error::Result;
use crate::function_space::PreBasisExpansion;

/// A risk `R` on the span of a pre-basis of type `B`.
pub trait RiskFunctional<B: ?Sized>: Sync {
    /// Makes the first `k` basis functions usable; `basis` has already been
    /// extended to `k`.
    fn prepare(&mut self, basis: &B, k: usize) -> Result<()>;

    /// `R(h)`.
    fn value(&self, basis: &B, h: &PreBasisExpansion) -> Result<f64>;

    /// `R(h)` together with `D R(h; v)` for every direction.
    fn value_and_derivatives(
        &self,
        basis: &B,
        h: &PreBasisExpansion,
        dirs: &[PreBasisExpansion],
    ) -> Result<(f64, Vec<f64>)>;

    /// `D R(h; v)`.
    fn directional_derivative(&self, basis: &B, h: &PreBasisExpansion, v: &PreBasisExpansion) -> Result<f64> {
        let (_, d) = self.value_and_derivatives(basis, h, std::slice::from_ref(v))?;
        Ok(d[0])
    }

    /// Optional quality metric logged next to the risk.
    fn monitor(&self, _basis: &B, _h: &PreBasisExpansion) -> Result<Option<f64>> {
        Ok(None)
    }
}
