//! PS and ERR sample allocation.
//!
//! PS inflates every stratum by the single average expected rate `r`; ERR
//! inflates each stratum by its own expected rate `r_h`. Real-valued
//! allocations are canonical. [`round_allocation`] produces integer sizes for
//! Monte Carlo draws only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::population::{DesignSpec, ResponseScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Proportional to size.
    Ps,
    /// Expected response rates.
    Err,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ps, Method::Err];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ps => "PS",
            Method::Err => "ERR",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ps" => Ok(Method::Ps),
            "err" => Ok(Method::Err),
            other => Err(Error::invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub method: Method,
    pub per_stratum: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntegerAllocation {
    pub method: Method,
    pub per_stratum: Vec<u64>,
    pub total: u64,
}

/// `n_h = (1/r) (N_h / N) m`, total `m / r`, with `r` the size-weighted
/// average of the *expected* rates.
pub fn allocate_ps(design: &DesignSpec) -> Allocation {
    let pop = design.population();
    let m = design.intended_size() as f64;
    let r = pop.average_expected_rate();
    let per_stratum = pop.shares().into_iter().map(|w| w * m / r).collect();
    Allocation {
        method: Method::Ps,
        per_stratum,
        total: m / r,
    }
}

/// `n_h = (1/r_h) (N_h / N) m`, total `m sum (N_h/N)(1/r_h)`.
pub fn allocate_err(design: &DesignSpec) -> Allocation {
    let pop = design.population();
    let m = design.intended_size() as f64;
    let per_stratum: Vec<f64> = pop
        .shares()
        .into_iter()
        .zip(pop.strata())
        .map(|(w, s)| w * m / s.expected_rate())
        .collect();
    let total = m * pop
        .shares()
        .into_iter()
        .zip(pop.strata())
        .map(|(w, s)| w / s.expected_rate())
        .sum::<f64>();
    Allocation {
        method: Method::Err,
        per_stratum,
        total,
    }
}

pub fn allocate(design: &DesignSpec, method: Method) -> Allocation {
    match method {
        Method::Ps => allocate_ps(design),
        Method::Err => allocate_err(design),
    }
}

/// Largest-remainder (Hamilton) rounding.
///
/// Floors every coordinate, then hands the `round(total) - sum(floors)`
/// leftover units to the largest fractional parts; ties go to the lower
/// stratum index. The rounded total is taken from the sum of coordinates so
/// that the result is consistent with `per_stratum` even when `total`
/// carries accumulation error.
pub fn round_allocation(alloc: &Allocation) -> IntegerAllocation {
    let real_total: f64 = alloc.per_stratum.iter().sum();
    let target = real_total.round().max(0.0) as u64;

    let mut per_stratum: Vec<u64> = alloc.per_stratum.iter().map(|&n| n.max(0.0).floor() as u64).collect();
    let floor_sum: u64 = per_stratum.iter().sum();

    let mut order: Vec<usize> = (0..per_stratum.len()).collect();
    let frac = |h: usize| alloc.per_stratum[h] - alloc.per_stratum[h].floor();
    // stable sort keeps index order among equal fractional parts
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)));

    let leftover = target.saturating_sub(floor_sum) as usize;
    for &h in order.iter().take(leftover) {
        per_stratum[h] += 1;
    }
    let total = per_stratum.iter().sum();
    IntegerAllocation {
        method: alloc.method,
        per_stratum,
        total,
    }
}

/// Expected respondents `sum n_h p_h` under the given true response rates.
pub fn expected_respondents(alloc: &Allocation, scenario: &ResponseScenario) -> Result<f64> {
    ensure_len("true_rates", alloc.per_stratum.len(), scenario.len())?;
    Ok(alloc
        .per_stratum
        .iter()
        .zip(scenario.true_rates())
        .map(|(n, p)| n * p)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{Population, Stratum};
    use proptest::prelude::*;

    fn design(sizes: &[u64], rates: &[f64], m: u64) -> DesignSpec {
        let strata = sizes
            .iter()
            .zip(rates)
            .map(|(&n, &r)| Stratum::new(n, r, 0.5).unwrap())
            .collect();
        DesignSpec::new(Population::new(strata).unwrap(), m).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0))
    }

    #[test]
    fn ps_examples() {
        let a = allocate_ps(&design(&[500, 500], &[0.5, 0.5], 100));
        assert!(close(&a.per_stratum, &[100.0, 100.0]));
        assert!((a.total - 200.0).abs() < 1e-9);

        let a = allocate_ps(&design(&[750, 250], &[0.5, 0.25], 175));
        assert!(close(&a.per_stratum, &[300.0, 100.0]));
        assert!((a.total - 400.0).abs() < 1e-9);
    }

    #[test]
    fn err_examples() {
        let a = allocate_err(&design(&[500, 500], &[0.5, 0.25], 100));
        assert!(close(&a.per_stratum, &[100.0, 200.0]));
        assert!((a.total - 300.0).abs() < 1e-9);

        let a = allocate_err(&design(&[500, 500], &[1.0, 1.0], 100));
        assert!(close(&a.per_stratum, &[50.0, 50.0]));

        let a = allocate_err(&design(&[750, 250], &[0.5, 0.25], 175));
        assert!(close(&a.per_stratum, &[262.5, 175.0]));
        assert!((a.total - 437.5).abs() < 1e-9);

        let d = design(&[120, 40, 999], &[0.35, 0.35, 0.35], 77);
        assert!(close(&allocate_err(&d).per_stratum, &allocate_ps(&d).per_stratum));
    }

    #[test]
    fn rounding_examples() {
        let alloc = |v: Vec<f64>| Allocation {
            method: Method::Ps,
            total: v.iter().sum(),
            per_stratum: v,
        };
        assert_eq!(round_allocation(&alloc(vec![100.0, 200.0])).per_stratum, vec![100, 200]);
        let r = round_allocation(&alloc(vec![100.5, 100.5]));
        assert_eq!(r.per_stratum, vec![101, 100]);
        assert_eq!(r.total, 201);
        assert_eq!(round_allocation(&alloc(vec![0.4, 0.6])).per_stratum, vec![0, 1]);
    }

    #[test]
    fn expected_respondents_examples() {
        let d = design(&[500, 500], &[0.9, 0.1], 100);
        let truth = ResponseScenario::correctly_specified(d.population());
        let err = allocate_err(&d);
        assert!((expected_respondents(&err, &truth).unwrap() - 100.0).abs() < 1e-9);

        let ps = allocate_ps(&d);
        assert!((expected_respondents(&ps, &truth).unwrap() - 100.0).abs() < 1e-9);

        let flat = ResponseScenario::new(vec![0.5, 0.5], d.population()).unwrap();
        assert!((expected_respondents(&ps, &flat).unwrap() - 100.0).abs() < 1e-9);

        let short = Allocation {
            method: Method::Ps,
            per_stratum: vec![1.0],
            total: 1.0,
        };
        assert!(matches!(
            expected_respondents(&short, &truth),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn arb_design() -> impl Strategy<Value = DesignSpec> {
        (
            prop::collection::vec((1u64..100_000, 0.01f64..=1.0), 1..8),
            1u64..100_000,
        )
            .prop_map(|(strata, m)| {
                let (sizes, rates): (Vec<_>, Vec<_>) = strata.into_iter().unzip();
                design(&sizes, &rates, m)
            })
    }

    proptest! {
        #[test]
        fn allocation_invariants(d in arb_design()) {
            let ps = allocate_ps(&d);
            let err = allocate_err(&d);
            for a in [&ps, &err] {
                let sum: f64 = a.per_stratum.iter().sum();
                prop_assert!((sum - a.total).abs() <= 1e-9 * a.total);
                prop_assert!(a.per_stratum.iter().all(|&n| n >= 0.0));
            }

            // constant sampling fraction under PS
            let sizes = d.population().sizes();
            let f0 = ps.per_stratum[0] / sizes[0] as f64;
            for (n, &size) in ps.per_stratum.iter().zip(&sizes) {
                prop_assert!((n / size as f64 - f0).abs() <= 1e-12 * f0);
            }

            // weighted AM-HM on the totals
            let rates = d.population().expected_rates();
            let spread = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - rates.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(err.total >= ps.total * (1.0 - 1e-12));
            if spread == 0.0 {
                prop_assert!((err.total - ps.total).abs() <= 1e-12 * ps.total);
            }

            let truth = ResponseScenario::correctly_specified(d.population());
            let m = d.intended_size() as f64;
            prop_assert!((expected_respondents(&err, &truth).unwrap() - m).abs() <= 1e-9 * m);
        }

        #[test]
        fn allocation_is_linear_in_m(d in arb_design(), k in 2u64..10) {
            let scaled = d.with_intended_size(d.intended_size() * k).unwrap();
            for method in Method::ALL {
                let a = allocate(&d, method);
                let b = allocate(&scaled, method);
                for (x, y) in a.per_stratum.iter().zip(&b.per_stratum) {
                    prop_assert!((x * k as f64 - y).abs() <= 1e-12 * y);
                }
            }
        }

        #[test]
        fn rounding_preserves_total(values in prop::collection::vec(0.0f64..1e6, 1..12)) {
            let a = Allocation { method: Method::Err, total: values.iter().sum(), per_stratum: values };
            let r = round_allocation(&a);
            prop_assert_eq!(r.total, r.per_stratum.iter().sum::<u64>());
            prop_assert_eq!(r.total, a.per_stratum.iter().sum::<f64>().round() as u64);
            for (n, x) in r.per_stratum.iter().zip(&a.per_stratum) {
                prop_assert!((*n as f64 - x).abs() < 1.0);
            }
        }
    }
}
