//! Stratified sample allocation under expected response rates.
//!
//! Compares proportional-to-size (PS) allocation against allocation inflated
//! by expected stratum response rates (ERR) when nonresponse is corrected by
//! post-stratification:
//!
//! * [`population`]: strata, expected and true response rates
//! * [`allocation`]: PS and ERR sample sizes
//! * [`estimator`]: four-cell response model and post-stratified estimates
//! * [`variance`]: delta-method variances and the PS/ERR comparison
//! * [`simulation`]: reproducible product-multinomial Monte Carlo
//! * [`sweep`] and [`figures`]: the misspecification grid and its aggregates
//! * [`cli`]: the `strata-alloc` command

pub mod allocation;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod figures;
pub mod manifest;
pub mod population;
pub mod simulation;
pub mod stats;
pub mod sweep;
pub mod variance;

pub use allocation::{
    allocate, allocate_err, allocate_ps, expected_respondents, round_allocation, Allocation, IntegerAllocation, Method,
};
pub use error::{Error, Result};
pub use estimator::{
    cell_probabilities, estimate_stratum, estimate_total, estimate_total_weighted, poststrat_weight, CellProbabilities,
    ObservedSample, StratumCounts,
};
pub use exec::Exec;
pub use population::{
    average_expected_rate, intended_from_allocated, DesignSpec, Population, ResponseScenario, Stratum,
};
pub use simulation::{
    draw_stratum, empirical_vs_asymptotic, run_monte_carlo, AsymptoticComparison, EmptyStratumPolicy, SimConfig,
    SimResult,
};
pub use sweep::{
    generate_grid, misspecification, run_sweep, spread_from_weighted_average, GridSpec, QMode, SweepRecord,
    SweepSummary,
};
pub use variance::{
    compare, delta_variance_general, delta_variance_stratum, variance_err_total, variance_ps_total, VarianceReport,
};
