//! Discrete transport metric, entropic curvature bounds, and
//! functional-inequality constants for finite, irreducible, reversible
//! Markov chains.

pub mod analysis;
pub mod chain;
pub mod curvature;
pub mod mapping;
pub mod geodesics;
pub mod mean;
pub mod parallel;
pub mod sample;
pub mod transport;

pub use analysis::{
    entropy, fisher, lipschitz_sampler, poincare_lambda, verify_ladder, AnalysisError,
    CheckOutcome, HeatKernel, InequalityReport, LadderConfig,
};
pub use chain::{builtin, Builtin, ChainError, ChainJson, Density, MarkovChain, Tolerances};
pub use curvature::{
    b_functional, certify_builtin, combine_bounds, criterion_bound, lazy_bound, ricci_estimate,
    sample_min_margin, two_point_kappa, CertifiedBound, CurvatureError, CurvatureReport,
    Provenance, RicciConfig, RicciEstimate, SamplingStats,
};
pub use mapping::{MappingError, MappingRepresentation};
pub use mean::{
    alpha_cost, log_mean, theta_constant, theta_constant_c, ArithmeticMean, LogMean,
    MeanError, MeanEvaluation, MeanFunction, LOG_MEAN_C,
};
pub use geodesics::{
    geodesic_rhs, integrate, shoot, GeodesicError, GeodesicState, IntegrateConfig, ShootConfig,
    ShootInit, ShootResult,
};
pub use transport::{
    action, action_prime, solve_w, solve_w_refined, total_variation, wasserstein, Metric,
    Momentum, PathSolution, Potential, SolverConfig, TransportError, WSolver,
};
