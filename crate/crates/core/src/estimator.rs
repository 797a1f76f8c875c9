//! Response model and post-stratified estimation of the "yes" fraction.
//!
//! Each stratum's complete data is a four-cell count vector
//! `(nonresponse-no, nonresponse-yes, response-no, response-yes)` drawn from a
//! multinomial with the cell probabilities of [`CellProbabilities`]. Only the
//! two response cells are observed.

use serde::Serialize;

use crate::error::{ensure_len, Error, Result};
use crate::population::Population;

/// Four-cell probabilities of the response model for one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellProbabilities {
    cells: [f64; 4],
}

impl CellProbabilities {
    /// `((1-p)(1-q), (1-p)q, p(1-q), pq)` for response rate `p` and
    /// yes-probability `q`.
    pub fn new(p: f64, q: f64) -> Self {
        CellProbabilities {
            cells: [(1.0 - p) * (1.0 - q), (1.0 - p) * q, p * (1.0 - q), p * q],
        }
    }

    /// Arbitrary cell vector; entries must be probabilities summing to one.
    pub fn from_cells(cells: [f64; 4]) -> Result<Self> {
        if cells.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("cells", "cell probabilities must lie in [0, 1]"));
        }
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("cells", format!("cells sum to {sum}, not 1")));
        }
        Ok(CellProbabilities { cells })
    }

    pub fn cells(&self) -> [f64; 4] {
        self.cells
    }

    /// Probability of responding, `p3 + p4`.
    pub fn response_mass(&self) -> f64 {
        self.cells[2] + self.cells[3]
    }
}

pub fn cell_probabilities(p: f64, q: f64) -> CellProbabilities {
    CellProbabilities::new(p, q)
}

/// Cell counts for one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StratumCounts {
    /// Nonresponse, would have answered "no".
    pub z1: u64,
    /// Nonresponse, would have answered "yes".
    pub z2: u64,
    /// Responded "no".
    pub z3: u64,
    /// Responded "yes".
    pub z4: u64,
}

impl StratumCounts {
    pub fn new(z1: u64, z2: u64, z3: u64, z4: u64) -> Self {
        StratumCounts { z1, z2, z3, z4 }
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.z1, self.z2, self.z3, self.z4]
    }

    /// Observed sample size `o_h = z3 + z4`.
    pub fn observed(&self) -> u64 {
        self.z3 + self.z4
    }

    /// Allocated size: the sum of all four cells.
    pub fn allocated(&self) -> u64 {
        self.z1 + self.z2 + self.z3 + self.z4
    }
}

impl From<[u64; 4]> for StratumCounts {
    fn from(z: [u64; 4]) -> Self {
        StratumCounts::new(z[0], z[1], z[2], z[3])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObservedSample {
    strata: Vec<StratumCounts>,
}

impl ObservedSample {
    pub fn new(strata: Vec<StratumCounts>) -> Self {
        ObservedSample { strata }
    }

    pub fn strata(&self) -> &[StratumCounts] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total_observed(&self) -> u64 {
        self.strata.iter().map(StratumCounts::observed).sum()
    }
}

/// Post-stratification weight `(N_h/N) sum(o_i) / o_h` for stratum `h`.
pub fn poststrat_weight(h: usize, sample: &ObservedSample, pop: &Population) -> Result<f64> {
    ensure_len("sample strata", pop.len(), sample.len())?;
    let counts = sample
        .strata
        .get(h)
        .ok_or_else(|| Error::invalid("h", format!("stratum index {h} out of range")))?;
    let o_h = counts.observed();
    if o_h == 0 {
        return Err(Error::ZeroRespondents { stratum: Some(h) });
    }
    let share = pop.strata()[h].size() as f64 / pop.total_size() as f64;
    Ok(share * sample.total_observed() as f64 / o_h as f64)
}

pub fn poststrat_weights(sample: &ObservedSample, pop: &Population) -> Result<Vec<f64>> {
    (0..sample.len()).map(|h| poststrat_weight(h, sample, pop)).collect()
}

/// Within-stratum "yes" share among respondents, `z4 / (z3 + z4)`.
pub fn estimate_stratum(counts: &StratumCounts) -> Result<f64> {
    stratum_share(counts).ok_or(Error::ZeroRespondents { stratum: None })
}

fn stratum_share(counts: &StratumCounts) -> Option<f64> {
    match counts.observed() {
        0 => None,
        o => Some(counts.z4 as f64 / o as f64),
    }
}

/// Per-stratum estimates; the error names the first stratum without
/// respondents.
pub fn estimate_strata(sample: &ObservedSample) -> Result<Vec<f64>> {
    sample
        .strata
        .iter()
        .enumerate()
        .map(|(h, c)| stratum_share(c).ok_or(Error::ZeroRespondents { stratum: Some(h) }))
        .collect()
}

/// Post-stratified total estimate `(1/N) sum N_h z_h4 / (z_h3 + z_h4)`.
pub fn estimate_total(sample: &ObservedSample, pop: &Population) -> Result<f64> {
    ensure_len("sample strata", pop.len(), sample.len())?;
    let shares = estimate_strata(sample)?;
    Ok(combine_estimates(pop, &shares))
}

/// `(1/N) sum N_h v_h`.
pub(crate) fn combine_estimates(pop: &Population, per_stratum: &[f64]) -> f64 {
    let num: f64 = pop
        .strata()
        .iter()
        .zip(per_stratum)
        .map(|(s, v)| s.size() as f64 * v)
        .sum();
    num / pop.total_size() as f64
}

/// The total estimate computed the long way: weight every response cell by
/// its post-stratification weight and take the weighted "yes" fraction.
/// Algebraically equal to [`estimate_total`].
pub fn estimate_total_weighted(sample: &ObservedSample, pop: &Population) -> Result<f64> {
    let weights = poststrat_weights(sample, pop)?;
    let mut yes = 0.0;
    let mut respondents = 0.0;
    for (w, c) in weights.iter().zip(sample.strata()) {
        yes += w * c.z4 as f64;
        respondents += w * c.z3 as f64 + w * c.z4 as f64;
    }
    Ok(yes / respondents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Stratum;
    use proptest::prelude::*;

    fn pop(sizes: &[u64]) -> Population {
        Population::new(sizes.iter().map(|&n| Stratum::new(n, 0.5, 0.5).unwrap()).collect()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn cell_probability_examples() {
        let c = cell_probabilities(0.8, 0.25).cells();
        for (x, y) in c.iter().zip([0.15, 0.05, 0.60, 0.20]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(cell_probabilities(1.0, 0.3).cells(), [0.0, 0.0, 0.7, 0.3]);
        let c = cell_probabilities(0.4, 0.0).cells();
        assert_eq!(c, [0.6, 0.0, 0.4, 0.0]);
        assert!(CellProbabilities::from_cells([0.5, 0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn weight_examples() {
        let s = ObservedSample::new(vec![StratumCounts::new(3, 9, 17, 4)]);
        assert_eq!(poststrat_weight(0, &s, &pop(&[77])).unwrap(), 1.0);

        let s = ObservedSample::new(vec![StratumCounts::new(0, 0, 20, 20), StratumCounts::new(0, 0, 30, 30)]);
        let w = poststrat_weights(&s, &pop(&[500, 500])).unwrap();
        assert!(close(w[0], 1.25));
        assert!(close(w[1], 50.0 / 60.0));

        let s = ObservedSample::new(vec![StratumCounts::new(1, 1, 10, 10), StratumCounts::new(5, 5, 30, 30)]);
        let w = poststrat_weights(&s, &pop(&[100, 300])).unwrap();
        assert!(w.iter().all(|&x| close(x, 1.0)));

        let s = ObservedSample::new(vec![StratumCounts::new(5, 5, 0, 0), StratumCounts::new(0, 0, 3, 3)]);
        assert!(matches!(
            poststrat_weight(0, &s, &pop(&[1, 1])),
            Err(Error::ZeroRespondents { stratum: Some(0) })
        ));
    }

    #[test]
    fn stratum_estimate_examples() {
        assert_eq!(estimate_stratum(&StratumCounts::new(10, 20, 30, 70)).unwrap(), 0.7);
        assert_eq!(estimate_stratum(&StratumCounts::new(0, 0, 0, 50)).unwrap(), 1.0);
        assert!(matches!(
            estimate_stratum(&StratumCounts::new(5, 5, 0, 0)),
            Err(Error::ZeroRespondents { .. })
        ));
    }

    #[test]
    fn total_estimate_examples() {
        let c = StratumCounts::new(4, 1, 13, 29);
        let one = ObservedSample::new(vec![c]);
        assert_eq!(
            estimate_total(&one, &pop(&[10])).unwrap(),
            estimate_stratum(&c).unwrap()
        );

        let s = ObservedSample::new(vec![StratumCounts::new(0, 0, 80, 20), StratumCounts::new(0, 0, 20, 30)]);
        assert!(close(estimate_total(&s, &pop(&[500, 500])).unwrap(), 0.4));

        let s = ObservedSample::new(vec![
            StratumCounts::new(0, 0, 3, 1),
            StratumCounts::new(9, 9, 30, 10),
            StratumCounts::new(0, 2, 6, 2),
        ]);
        assert!(close(estimate_total(&s, &pop(&[17, 300, 4])).unwrap(), 0.25));

        let s = ObservedSample::new(vec![StratumCounts::new(0, 0, 3, 1), StratumCounts::new(9, 9, 0, 0)]);
        assert!(matches!(
            estimate_total(&s, &pop(&[1, 1])),
            Err(Error::ZeroRespondents { stratum: Some(1) })
        ));
        assert!(matches!(
            estimate_total(&s, &pop(&[1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u64>, Vec<StratumCounts>)> {
        prop::collection::vec((1u64..1_000_000, 0u64..500, 0u64..500, 0u64..500, 1u64..500), 1..7).prop_map(|rows| {
            rows.into_iter()
                .map(|(n, a, b, c, d)| (n, StratumCounts::new(a, b, c, d)))
                .unzip()
        })
    }

    proptest! {
        #[test]
        fn estimator_identities((sizes, counts) in arb_case()) {
            let p = pop(&sizes);
            let s = ObservedSample::new(counts.clone());
            let simple = estimate_total(&s, &p).unwrap();
            let weighted = estimate_total_weighted(&s, &p).unwrap();
            prop_assert!((simple - weighted).abs() <= 1e-12 * simple.abs().max(1e-300) || (simple - weighted).abs() < 1e-15);

            let weights = poststrat_weights(&s, &p).unwrap();
            let weighted_total: f64 = weights.iter().zip(&counts).map(|(w, c)| w * c.observed() as f64).sum();
            let total = s.total_observed() as f64;
            prop_assert!((weighted_total - total).abs() <= 1e-9 * total);

            let ests = estimate_strata(&s).unwrap();
            let lo = ests.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(simple >= lo - 1e-12 && simple <= hi + 1e-12);

            let mut rev_sizes = sizes.clone();
            rev_sizes.reverse();
            let mut rev_counts = counts.clone();
            rev_counts.reverse();
            let reversed = estimate_total(&ObservedSample::new(rev_counts), &pop(&rev_sizes)).unwrap();
            prop_assert!((reversed - simple).abs() <= 1e-12);
        }

        #[test]
        fn stratum_estimate_ignores_nonresponse_cells(
            z in (0u64..1000, 0u64..1000, 0u64..1000, 1u64..1000),
            extra in (0u64..1000, 0u64..1000),
        ) {
            let a = estimate_stratum(&StratumCounts::new(z.0, z.1, z.2, z.3)).unwrap();
            let b = estimate_stratum(&StratumCounts::new(extra.0, extra.1, z.2, z.3)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cells_form_independence_table(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let c = cell_probabilities(p, q).cells();
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((c[0] * c[3] - c[1] * c[2]).abs() <= 1e-12);
            prop_assert!(c.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
