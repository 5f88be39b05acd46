//! Executable checks of the estimator's theory on a finite-dimensional
//! surrogate where every expectation is computable.

mod checks;
mod suite;
mod surrogate;

pub use checks::{
    fit_slope, running_mean_slope, fourth_moment_check, galerkin_gradient, increasing_fraction, lemma_tail_check,
    mc_estimator_stats, rate_check, second_moment_formula, target_tail_check, unbiasedness_statistic,
    weak_second_order_gap, EstimatorStats, FourthMomentReport, LemmaReport, RateCheckConfig, RateReport,
    TargetTailReport, DIVERGENCE_SLOPE,
};
pub use suite::{verification_suite, CheckRow, SurrogateInstance, VerifyOptions};
pub use surrogate::{QuadraticRisk, SurrogateSpace, SURROGATE_DIM};
