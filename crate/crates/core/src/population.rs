//! Population frame, expected and true response rates, and the intended
//! sample size.
//!
//! Strata are identified by position. Every per-stratum vector elsewhere in
//! the crate (allocations, scenarios, counts) is aligned with
//! [`Population::strata`].

use serde::Serialize;

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stratum {
    size: u64,
    expected_rate: f64,
    yes_prob: f64,
}

impl Stratum {
    /// `size >= 1`, `expected_rate` in `(0, 1]`, `yes_prob` in `[0, 1]`.
    pub fn new(size: u64, expected_rate: f64, yes_prob: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("size", "stratum size must be at least 1"));
        }
        check_rate("expected_rate", expected_rate)?;
        check_probability("yes_prob", yes_prob)?;
        Ok(Stratum {
            size,
            expected_rate,
            yes_prob,
        })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn expected_rate(&self) -> f64 {
        self.expected_rate
    }

    pub fn yes_prob(&self) -> f64 {
        self.yes_prob
    }
}

/// Checks a response rate lies in `(0, 1]`.
pub(crate) fn check_rate(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{value} is not in (0, 1]")))
    }
}

pub(crate) fn check_probability(field: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{value} is not in [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    strata: Vec<Stratum>,
}

impl Population {
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::invalid("strata", "at least one stratum is required"));
        }
        Ok(Population { strata })
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    /// Number of strata, `H`.
    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    /// `N = N_1 + ... + N_H`.
    pub fn total_size(&self) -> u64 {
        self.strata.iter().map(|s| s.size).sum()
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.strata.iter().map(|s| s.size).collect()
    }

    /// Population shares `N_h / N`.
    pub fn shares(&self) -> Vec<f64> {
        let total = self.total_size() as f64;
        self.strata.iter().map(|s| s.size as f64 / total).collect()
    }

    pub fn expected_rates(&self) -> Vec<f64> {
        self.strata.iter().map(|s| s.expected_rate).collect()
    }

    pub fn yes_probs(&self) -> Vec<f64> {
        self.strata.iter().map(|s| s.yes_prob).collect()
    }

    /// Size-weighted mean of the expected rates, `r = sum(r_h N_h) / N`.
    pub fn average_expected_rate(&self) -> f64 {
        weighted_mean(&self.sizes(), &self.expected_rates())
    }

    /// The population estimand `sum (N_h / N) q_h`.
    pub fn true_yes_fraction(&self) -> f64 {
        weighted_mean(&self.sizes(), &self.yes_probs())
    }
}

/// `sum(v_h N_h) / sum(N_h)`.
pub(crate) fn weighted_mean(sizes: &[u64], values: &[f64]) -> f64 {
    let total: u64 = sizes.iter().sum();
    let num: f64 = sizes.iter().zip(values).map(|(&n, &v)| n as f64 * v).sum();
    num / total as f64
}

pub fn average_expected_rate(pop: &Population) -> f64 {
    pop.average_expected_rate()
}

/// Respondents implied by an allocated size at response rate `rate`:
/// `n_intended = n_allocated * r`.
pub fn intended_from_allocated(n_allocated: f64, rate: f64) -> Result<f64> {
    if n_allocated.is_nan() || n_allocated < 0.0 || !n_allocated.is_finite() {
        return Err(Error::invalid(
            "n_allocated",
            format!("{n_allocated} is not a nonnegative count"),
        ));
    }
    check_rate("rate", rate)?;
    Ok(n_allocated * rate)
}

/// True (fieldwork) response rates `p_h`, possibly different from the
/// expected rates the allocation was designed with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseScenario {
    true_rates: Vec<f64>,
}

impl ResponseScenario {
    pub fn new(true_rates: Vec<f64>, pop: &Population) -> Result<Self> {
        ensure_len("true_rates", pop.len(), true_rates.len())?;
        for (h, &p) in true_rates.iter().enumerate() {
            check_rate(&format!("true_rates[{h}]"), p)?;
        }
        Ok(ResponseScenario { true_rates })
    }

    /// Scenario in which every stratum responds at its expected rate.
    pub fn correctly_specified(pop: &Population) -> Self {
        ResponseScenario {
            true_rates: pop.expected_rates(),
        }
    }

    pub fn true_rates(&self) -> &[f64] {
        &self.true_rates
    }

    pub fn len(&self) -> usize {
        self.true_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_rates.is_empty()
    }

    pub fn is_correct_for(&self, pop: &Population) -> bool {
        self.true_rates.len() == pop.len()
            && self
                .true_rates
                .iter()
                .zip(pop.strata())
                .all(|(&p, s)| p == s.expected_rate)
    }

    pub(crate) fn check_aligned(&self, pop: &Population) -> Result<()> {
        ensure_len("true_rates", pop.len(), self.true_rates.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpec {
    population: Population,
    intended_size: u64,
}

impl DesignSpec {
    pub fn new(population: Population, intended_size: u64) -> Result<Self> {
        if intended_size == 0 {
            return Err(Error::invalid(
                "intended_size",
                "intended sample size must be at least 1",
            ));
        }
        Ok(DesignSpec {
            population,
            intended_size,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    /// Intended number of respondents, `m`.
    pub fn intended_size(&self) -> u64 {
        self.intended_size
    }

    pub fn with_intended_size(&self, intended_size: u64) -> Result<Self> {
        DesignSpec::new(self.population.clone(), intended_size)
    }
}
