//! Delta-method asymptotic variances of the post-stratified "yes" estimate.
//!
//! Three routes are provided and cross-checked in tests:
//!
//! * the general quadratic form `D' Σ D` with the gradient of
//!   `f(Z) = Z4 / (Z3 + Z4)` and the multinomial covariance,
//! * the per-stratum closed form `q(1-q) / (n p)` plugged with the real-valued
//!   allocation and combined as `(1/N²) sum N_h² σ²_h`,
//! * the simplified totals `(1/(N m)) sum N_h q_h (1-q_h) ρ_h / p_h` where
//!   `ρ_h` is the average expected rate under PS and `r_h` under ERR.

use serde::Serialize;

use crate::allocation::{allocate, Method};
use crate::error::{Error, Result};
use crate::estimator::CellProbabilities;
use crate::population::{check_probability, check_rate, DesignSpec, ResponseScenario};
use crate::sweep::{misspecification, spread_from_weighted_average};

/// Gradient of `Z4 / (Z3 + Z4)` at `E[Z] = n * cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientVector(pub [f64; 4]);

impl GradientVector {
    pub fn at_expectation(n: f64, cells: &CellProbabilities) -> Self {
        let [_, _, p3, p4] = cells.cells();
        let denom = (n * p3 + n * p4).powi(2);
        GradientVector([0.0, 0.0, -n * p4 / denom, n * p3 / denom])
    }
}

/// Covariance of a multinomial count vector: `n p_i (1 - p_i)` on the
/// diagonal, `-n p_i p_j` off it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultinomialCovariance(pub [[f64; 4]; 4]);

impl MultinomialCovariance {
    pub fn new(n: f64, cells: &CellProbabilities) -> Self {
        let p = cells.cells();
        let mut sigma = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                sigma[i][j] = if i == j {
                    n * p[i] * (1.0 - p[i])
                } else {
                    -n * (p[i] * p[j])
                };
            }
        }
        MultinomialCovariance(sigma)
    }

    /// `d' Σ d`.
    pub fn quadratic_form(&self, d: &GradientVector) -> f64 {
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += d.0[i] * self.0[i][j] * d.0[j];
            }
        }
        acc
    }
}

/// Asymptotic variance of the stratum estimator via `D' Σ D`.
pub fn delta_variance_general(n: f64, cells: &CellProbabilities) -> Result<f64> {
    check_size(n)?;
    if cells.response_mass() <= 0.0 {
        return Err(Error::DegenerateStratum);
    }
    let d = GradientVector::at_expectation(n, cells);
    let sigma = MultinomialCovariance::new(n, cells);
    // exact zero when q is 0 or 1; clamp guards rounding below zero
    Ok(sigma.quadratic_form(&d).max(0.0))
}

/// Closed form `q(1-q) / (n p)`.
pub fn delta_variance_stratum(n: f64, p: f64, q: f64) -> Result<f64> {
    check_size(n)?;
    check_rate("p", p)?;
    check_probability("q", q)?;
    Ok(q * (1.0 - q) / (n * p))
}

fn check_size(n: f64) -> Result<()> {
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("n", format!("{n} is not a positive sample size")))
    }
}

/// Simplified total variance for either allocation from raw per-stratum
/// parameters. Inputs are assumed validated.
///
/// PS uses the size-weighted average expected rate for every stratum; ERR uses
/// each stratum's own expected rate.
pub fn total_variance_kernel(
    sizes: &[u64],
    expected: &[f64],
    true_rates: &[f64],
    yes: &[f64],
    intended_size: f64,
    method: Method,
) -> f64 {
    let total: u64 = sizes.iter().sum();
    let total = total as f64;
    let avg_rate = match method {
        Method::Ps => Some(crate::population::weighted_mean(sizes, expected)),
        Method::Err => None,
    };
    let mut acc = 0.0;
    for h in 0..sizes.len() {
        let q = yes[h];
        let inflation = avg_rate.unwrap_or(expected[h]);
        acc += sizes[h] as f64 * q * (1.0 - q) * inflation / true_rates[h];
    }
    acc / (total * intended_size)
}

fn total_direct(design: &DesignSpec, scenario: &ResponseScenario, method: Method) -> Result<f64> {
    let pop = design.population();
    scenario.check_aligned(pop)?;
    Ok(total_variance_kernel(
        &pop.sizes(),
        &pop.expected_rates(),
        scenario.true_rates(),
        &pop.yes_probs(),
        design.intended_size() as f64,
        method,
    ))
}

/// PS total variance `(1/(N m)) sum N_h q_h (1-q_h) r / p_h`.
pub fn variance_ps_total(design: &DesignSpec, scenario: &ResponseScenario) -> Result<f64> {
    total_direct(design, scenario, Method::Ps)
}

/// ERR total variance `(1/(N m)) sum N_h q_h (1-q_h) r_h / p_h`.
pub fn variance_err_total(design: &DesignSpec, scenario: &ResponseScenario) -> Result<f64> {
    total_direct(design, scenario, Method::Err)
}

pub fn variance_total(design: &DesignSpec, scenario: &ResponseScenario, method: Method) -> Result<f64> {
    total_direct(design, scenario, method)
}

/// Stratum variances `q_h(1-q_h) / (n_h p_h)` with `n_h` from the
/// real-valued allocation of `method`.
pub fn per_stratum_variances(design: &DesignSpec, scenario: &ResponseScenario, method: Method) -> Result<Vec<f64>> {
    let pop = design.population();
    scenario.check_aligned(pop)?;
    let alloc = allocate(design, method);
    alloc
        .per_stratum
        .iter()
        .zip(scenario.true_rates())
        .zip(pop.strata())
        .map(|((&n, &p), s)| delta_variance_stratum(n, p, s.yes_prob()))
        .collect()
}

/// `(1/N²) sum N_h² σ²_h`.
pub fn combine_strata(sizes: &[u64], per_stratum: &[f64]) -> f64 {
    let total: u64 = sizes.iter().sum();
    let total = total as f64;
    sizes
        .iter()
        .zip(per_stratum)
        .map(|(&n, v)| {
            let share = n as f64 / total;
            share * share * v
        })
        .sum()
}

/// Total variance via the allocation plug-in chain.
pub fn variance_total_plugin(design: &DesignSpec, scenario: &ResponseScenario, method: Method) -> Result<f64> {
    let per = per_stratum_variances(design, scenario, method)?;
    Ok(combine_strata(&design.population().sizes(), &per))
}

pub(crate) fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub per_stratum_ps: Vec<f64>,
    pub per_stratum_err: Vec<f64>,
    pub total_ps: f64,
    pub total_err: f64,
    /// `total_err / total_ps`; `None` when both totals vanish.
    pub ratio: Option<f64>,
    pub ratio_defined: bool,
    pub correctly_specified: bool,
    pub misspecification: f64,
    pub spread_from_avg: f64,
}

/// Both totals, their ratio, and the misspecification metrics.
pub fn compare(design: &DesignSpec, scenario: &ResponseScenario) -> Result<VarianceReport> {
    let pop = design.population();
    let per_stratum_ps = per_stratum_variances(design, scenario, Method::Ps)?;
    let per_stratum_err = per_stratum_variances(design, scenario, Method::Err)?;
    let total_ps = variance_ps_total(design, scenario)?;
    let total_err = variance_err_total(design, scenario)?;

    let sizes = pop.sizes();
    debug_assert!(relative_gap(total_ps, combine_strata(&sizes, &per_stratum_ps)) <= 1e-12);
    debug_assert!(relative_gap(total_err, combine_strata(&sizes, &per_stratum_err)) <= 1e-12);

    let ratio = (total_ps > 0.0).then(|| total_err / total_ps);
    Ok(VarianceReport {
        per_stratum_ps,
        per_stratum_err,
        total_ps,
        total_err,
        ratio,
        ratio_defined: ratio.is_some(),
        correctly_specified: scenario.is_correct_for(pop),
        misspecification: misspecification(scenario.true_rates(), &pop.expected_rates())?,
        spread_from_avg: spread_from_weighted_average(scenario.true_rates(), pop)?,
    })
}
