//! Closed-loop stochastic simulation, scenarios and controller comparison.

pub mod closed_loop;
pub mod compare;
pub mod diagnostics;
pub mod noise;
pub mod scenario;

pub use closed_loop::{run_closed_loop, simulate_run, Plant, SimOptions, SimSummary, SimTrace, StepRecord};
pub use compare::{compare_controllers, monte_carlo, AnalyticRates, ComparisonReport, Gaps, MonteCarloEstimate, MonteCarloOptions};
pub use diagnostics::{estimator_identity_residuals, orthogonality_check, IdentityResiduals, OrthogonalityReport};
pub use noise::{run_rng, sample_noise, GaussianSampler};
pub use scenario::{kmh_to_mps, scenario_injection, ProfilePoint, Scenario};
