//! Monte Carlo engine for the product-multinomial response model.
//!
//! Replicate `i` draws from its own ChaCha stream keyed by `(seed, i)`, so the
//! result depends only on the configuration and never on scheduling.
//! Replicates are processed in fixed-size blocks; block summaries are merged
//! in block order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, round_allocation, IntegerAllocation, Method};
use crate::error::{Error, Result};
use crate::estimator::{combine_estimates, estimate_strata, CellProbabilities, ObservedSample, StratumCounts};
use crate::exec::Exec;
use crate::population::{DesignSpec, ResponseScenario};
use crate::stats::{CompensatedSum, Moments};
use crate::variance::variance_total;

const BLOCK_SIZE: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyStratumPolicy {
    /// Skip replicates with a zero-respondent stratum and count them.
    #[default]
    Discard,
    /// Fail on the first zero-respondent replicate.
    Error,
}

impl FromStr for EmptyStratumPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "discard" => Ok(EmptyStratumPolicy::Discard),
            "error" => Ok(EmptyStratumPolicy::Error),
            other => Err(Error::invalid("policy", format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for EmptyStratumPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmptyStratumPolicy::Discard => "discard",
            EmptyStratumPolicy::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub design: DesignSpec,
    pub scenario: ResponseScenario,
    pub method: Method,
    pub replications: u64,
    pub seed: u64,
    pub empty_stratum_policy: EmptyStratumPolicy,
}

impl SimConfig {
    pub fn new(
        design: DesignSpec,
        scenario: ResponseScenario,
        method: Method,
        replications: u64,
        seed: u64,
    ) -> Result<Self> {
        let config = SimConfig {
            design,
            scenario,
            method,
            replications,
            seed,
            empty_stratum_policy: EmptyStratumPolicy::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_policy(mut self, policy: EmptyStratumPolicy) -> Self {
        self.empty_stratum_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", "at least one replicate is required"));
        }
        self.scenario.check_aligned(self.design.population())
    }

    /// Integer stratum sizes actually drawn.
    pub fn integer_allocation(&self) -> IntegerAllocation {
        round_allocation(&allocate(&self.design, self.method))
    }

    fn cells(&self) -> Vec<CellProbabilities> {
        self.scenario
            .true_rates()
            .iter()
            .zip(self.design.population().strata())
            .map(|(&p, s)| CellProbabilities::new(p, s.yes_prob()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_estimate: f64,
    /// Unbiased (divisor `R - 1`) variance of the replicate estimates.
    pub empirical_variance: f64,
    pub replicate_count_used: u64,
    pub discarded_replicates: u64,
    pub per_stratum_mean_estimates: Vec<f64>,
}

impl SimResult {
    /// Standard error of `mean_estimate`.
    pub fn standard_error(&self) -> f64 {
        (self.empirical_variance / self.replicate_count_used as f64).sqrt()
    }
}

/// RNG for replicate `replicate`: ChaCha8 seeded from `seed`, on stream
/// `replicate`. Streams are disjoint for 2^64 words each.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// One multinomial draw of `n` units over the four cells, by conditional
/// binomials on the renormalised remaining mass.
pub fn draw_stratum<R: Rng + ?Sized>(n: u64, cells: &CellProbabilities, rng: &mut R) -> StratumCounts {
    let probs = cells.cells();
    let mut counts = [0u64; 4];
    let mut remaining = n;
    let mut mass = 1.0;
    for j in 0..3 {
        if remaining == 0 {
            break;
        }
        let cond = if mass > 0.0 {
            (probs[j] / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        counts[j] = binomial(remaining, cond, rng);
        remaining -= counts[j];
        mass -= probs[j];
    }
    counts[3] = remaining;
    StratumCounts::from(counts)
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability clamped to (0, 1)").sample(rng)
    }
}

/// Draws every stratum of one replicate.
pub fn draw_sample<R: Rng + ?Sized>(
    sizes: &IntegerAllocation,
    cells: &[CellProbabilities],
    rng: &mut R,
) -> ObservedSample {
    ObservedSample::new(
        sizes
            .per_stratum
            .iter()
            .zip(cells)
            .map(|(&n, c)| draw_stratum(n, c, rng))
            .collect(),
    )
}

struct BlockSummary {
    moments: Moments,
    per_stratum: Vec<CompensatedSum>,
    discarded: u64,
    failure: Option<Error>,
}

fn run_block(config: &SimConfig, sizes: &IntegerAllocation, cells: &[CellProbabilities], block: u64) -> BlockSummary {
    let pop = config.design.population();
    let start = block * BLOCK_SIZE;
    let end = (start + BLOCK_SIZE).min(config.replications);
    let mut summary = BlockSummary {
        moments: Moments::default(),
        per_stratum: vec![CompensatedSum::default(); pop.len()],
        discarded: 0,
        failure: None,
    };
    for replicate in start..end {
        let mut rng = replicate_rng(config.seed, replicate);
        let sample = draw_sample(sizes, cells, &mut rng);
        match estimate_strata(&sample) {
            Ok(shares) => {
                summary.moments.push(combine_estimates(pop, &shares));
                for (acc, v) in summary.per_stratum.iter_mut().zip(&shares) {
                    acc.add(*v);
                }
            }
            Err(e) => match config.empty_stratum_policy {
                EmptyStratumPolicy::Discard => summary.discarded += 1,
                EmptyStratumPolicy::Error => {
                    summary.failure = Some(e);
                    break;
                }
            },
        }
    }
    summary
}

pub fn run_monte_carlo(config: &SimConfig) -> Result<SimResult> {
    run_monte_carlo_with(config, Exec::default())
}

/// Runs the configured replicates under `exec`. The result is identical for
/// every execution strategy.
pub fn run_monte_carlo_with(config: &SimConfig, exec: Exec) -> Result<SimResult> {
    config.validate()?;
    let sizes = config.integer_allocation();
    let cells = config.cells();
    let blocks = config.replications.div_ceil(BLOCK_SIZE);
    let summaries = exec.map_indexed(blocks as usize, |b| run_block(config, &sizes, &cells, b as u64));

    let h = config.design.population().len();
    let mut moments = Moments::default();
    let mut per_stratum = vec![CompensatedSum::default(); h];
    let mut discarded = 0;
    for s in summaries {
        if let Some(e) = s.failure {
            return Err(e);
        }
        moments.merge(&s.moments);
        for (acc, part) in per_stratum.iter_mut().zip(&s.per_stratum) {
            acc.merge(part);
        }
        discarded += s.discarded;
    }

    let used = moments.count();
    if used == 0 {
        return Err(Error::AllDiscarded {
            replications: config.replications,
        });
    }
    Ok(SimResult {
        mean_estimate: moments.mean(),
        empirical_variance: moments.sample_variance(),
        replicate_count_used: used,
        discarded_replicates: discarded,
        per_stratum_mean_estimates: per_stratum.iter().map(|s| s.value() / used as f64).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticComparison {
    pub result: SimResult,
    pub empirical_variance: f64,
    /// Delta-method total variance at the real-valued allocation.
    pub analytic_variance: f64,
    /// `|empirical - analytic| / analytic`; zero when both vanish.
    pub relative_error: f64,
}

pub fn empirical_vs_asymptotic(config: &SimConfig) -> Result<AsymptoticComparison> {
    empirical_vs_asymptotic_with(config, Exec::default())
}

pub fn empirical_vs_asymptotic_with(config: &SimConfig, exec: Exec) -> Result<AsymptoticComparison> {
    let result = run_monte_carlo_with(config, exec)?;
    let analytic = variance_total(&config.design, &config.scenario, config.method)?;
    let empirical = result.empirical_variance;
    let relative_error = if analytic == 0.0 {
        if empirical == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - analytic).abs() / analytic
    };
    Ok(AsymptoticComparison {
        result,
        empirical_variance: empirical,
        analytic_variance: analytic,
        relative_error,
    })
}
