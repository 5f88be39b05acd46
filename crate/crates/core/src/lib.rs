//! Gradient-free stochastic descent over separable Hilbert spaces.
//!
//! Functions are expansions over a Matérn pre-basis; descent directions are
//! Gaussian in a randomly truncated orthonormalized basis and only
//! directional derivatives of the risk are ever evaluated.

pub mod dual;
pub mod error;
pub mod function_space;
pub mod linalg;
pub mod matern;
pub mod optimizer;
pub mod oracles;
pub mod prebasis;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod sampler;

pub use error::{GfdError, Result};
pub use function_space::{BasisId, FactoredBasis, MultiIndex, PreBasisExpansion};
pub use matern::{MaternKernel, MaternParams};
pub use optimizer::{run, GfdConfig, LogRow, RunRecord, StepSchedule, Termination};
pub use prebasis::PreBasis;
pub use quadrature::{BoxDomain, Quadrature};
pub use risk::{HeatConfig, HeatRisk, HjbConfig, HjbParams, HjbRisk, RiskFunctional};
pub use sampler::{DimensionLaw, LambdaKind, PreconditionSchedule, SampleSizeKind};
