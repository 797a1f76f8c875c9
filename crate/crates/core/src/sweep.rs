//! Misspecification grid sweep.
//!
//! Every grid cell fixes true rates `p`, expected rates `r` and yes-probabilities
//! `q`; the PS and ERR total variances are evaluated analytically and streamed
//! to a [`RecordSink`] in grid-index order.
//!
//! Enumeration order is lexicographic over the tuple
//! `(p_1, ..., p_H, r_1, ..., r_H, q_1, ..., q_K)` with the last coordinate
//! varying fastest, where `K = H` for [`QMode::PerStratum`] and `K = 1` for
//! [`QMode::Shared`]. Values follow the order of `rate_values` / `q_values`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::Method;
use crate::error::{ensure_len, Error, Result};
use crate::exec::Exec;
use crate::population::{check_probability, check_rate, weighted_mean, Population};
use crate::variance::total_variance_kernel;

/// Cells evaluated per work item.
const CHUNK: u64 = 4096;
/// Work items evaluated per parallel round before they are flushed in order.
const ROUND: u64 = 256;

/// Slack used when comparing the two L1 metrics and the variance ratio with 1.
pub const FIGURE3_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for the correctly-specified dominance check.
pub const DOMINANCE_TOLERANCE: f64 = 1e-12;

/// Total absolute misspecification `sum |r_h - p_h|`.
pub fn misspecification(p: &[f64], r: &[f64]) -> Result<f64> {
    ensure_len("rate vector", p.len(), r.len())?;
    Ok(p.iter().zip(r).map(|(a, b)| (a - b).abs()).sum())
}

/// `sum |p_h - p̄|` with `p̄` the size-weighted mean of `p`.
pub fn spread_from_weighted_average(p: &[f64], pop: &Population) -> Result<f64> {
    ensure_len("rate vector", pop.len(), p.len())?;
    Ok(spread_with_sizes(p, &pop.sizes()))
}

pub(crate) fn spread_with_sizes(p: &[f64], sizes: &[u64]) -> f64 {
    let avg = weighted_mean(sizes, p);
    p.iter().map(|x| (x - avg).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QMode {
    /// One `q` shared by all strata.
    #[default]
    Shared,
    /// An independent `q` per stratum.
    #[serde(alias = "per_stratum")]
    PerStratum,
}

impl FromStr for QMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(QMode::Shared),
            "per-stratum" | "per_stratum" => Ok(QMode::PerStratum),
            other => Err(Error::invalid("q_mode", format!("unknown q mode `{other}`"))),
        }
    }
}

impl fmt::Display for QMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QMode::Shared => "shared",
            QMode::PerStratum => "per-stratum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub strata_count: usize,
    /// Values taken by every `p_h` and every `r_h`.
    pub rate_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub q_mode: QMode,
    /// Fixed `N_h`; equal sizes of 1000 when omitted.
    pub population_sizes: Option<Vec<u64>>,
    pub intended_size: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            strata_count: 3,
            rate_values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            q_values: (0..=20).map(|i| i as f64 * 0.05).collect(),
            q_mode: QMode::Shared,
            population_sizes: None,
            intended_size: 1000,
        }
    }
}

const DEFAULT_STRATUM_SIZE: u64 = 1000;

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strata_count == 0 {
            return Err(Error::invalid("strata_count", "at least one stratum is required"));
        }
        if self.rate_values.is_empty() {
            return Err(Error::EmptyGrid("rate_values"));
        }
        if self.q_values.is_empty() {
            return Err(Error::EmptyGrid("q_values"));
        }
        for (i, &v) in self.rate_values.iter().enumerate() {
            check_rate(&format!("rate_values[{i}]"), v)?;
        }
        for (i, &v) in self.q_values.iter().enumerate() {
            check_probability(&format!("q_values[{i}]"), v)?;
        }
        if let Some(sizes) = &self.population_sizes {
            ensure_len("population_sizes", self.strata_count, sizes.len())?;
            if sizes.contains(&0) {
                return Err(Error::invalid("population_sizes", "stratum sizes must be at least 1"));
            }
        }
        if self.intended_size == 0 {
            return Err(Error::invalid("intended_size", "must be at least 1"));
        }
        self.cell_count().map(|_| ())
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.population_sizes
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_STRATUM_SIZE; self.strata_count])
    }

    fn q_dims(&self) -> usize {
        match self.q_mode {
            QMode::Shared => 1,
            QMode::PerStratum => self.strata_count,
        }
    }

    /// `|rates|^(2H) * |q|^(H or 1)`.
    pub fn cell_count(&self) -> Result<u64> {
        let overflow = || Error::invalid("grid", "cell count overflows u64");
        let rates = self.rate_values.len() as u64;
        let qs = self.q_values.len() as u64;
        let mut count: u64 = 1;
        for _ in 0..2 * self.strata_count {
            count = count.checked_mul(rates).ok_or_else(overflow)?;
        }
        for _ in 0..self.q_dims() {
            count = count.checked_mul(qs).ok_or_else(overflow)?;
        }
        Ok(count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: u64,
    /// True response rates.
    pub p: Vec<f64>,
    /// Expected response rates.
    pub r: Vec<f64>,
    /// Per-stratum yes-probabilities (repeated in shared mode).
    pub q: Vec<f64>,
}

/// Lazily enumerated parameter grid.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    sizes: Vec<u64>,
    len: u64,
}

pub fn generate_grid(spec: &GridSpec) -> Result<Grid> {
    spec.validate()?;
    Ok(Grid {
        sizes: spec.sizes(),
        len: spec.cell_count()?,
        spec: spec.clone(),
    })
}

impl Grid {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    /// Decodes `index` (mixed radix, last coordinate fastest).
    pub fn cell(&self, index: u64) -> GridCell {
        let h = self.spec.strata_count;
        let rates = &self.spec.rate_values;
        let qs = &self.spec.q_values;
        let mut rest = index;
        let mut take = |radix: usize| {
            let digit = (rest % radix as u64) as usize;
            rest /= radix as u64;
            digit
        };

        let q_dims = self.spec.q_dims();
        let mut q_digits: Vec<usize> = (0..q_dims).map(|_| take(qs.len())).collect();
        q_digits.reverse();
        let mut r: Vec<f64> = (0..h).map(|_| rates[take(rates.len())]).collect();
        r.reverse();
        let mut p: Vec<f64> = (0..h).map(|_| rates[take(rates.len())]).collect();
        p.reverse();

        let q = match self.spec.q_mode {
            QMode::Shared => vec![qs[q_digits[0]]; h],
            QMode::PerStratum => q_digits.into_iter().map(|d| qs[d]).collect(),
        };
        GridCell { index, p, r, q }
    }

    pub fn iter(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.len).map(move |i| self.cell(i))
    }

    pub fn evaluate(&self, cell: &GridCell) -> SweepRecord {
        evaluate_cell(cell, &self.sizes, self.spec.intended_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub index: u64,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub var_ps: f64,
    pub var_err: f64,
    /// `var_err / var_ps`; `None` when `var_ps == 0`.
    pub ratio: Option<f64>,
    pub misspec: f64,
    pub spread: f64,
}

impl SweepRecord {
    pub fn correctly_specified(&self) -> bool {
        self.p == self.r
    }

    /// True rates are closer to the expected ones than to their own weighted
    /// average.
    pub fn in_figure3_region(&self) -> bool {
        self.misspec < self.spread - FIGURE3_TOLERANCE
    }

    pub fn violates_figure3(&self) -> bool {
        self.in_figure3_region() && self.ratio.is_some_and(|x| x > 1.0 + FIGURE3_TOLERANCE)
    }

    /// Under correct specification ERR must not lose to PS, and the two
    /// must tie exactly when all rates coincide.
    pub fn violates_dominance(&self) -> bool {
        if !self.correctly_specified() {
            return false;
        }
        if self.var_err > self.var_ps + DOMINANCE_TOLERANCE {
            return true;
        }
        if self.var_ps == 0.0 {
            return false;
        }
        let hi = self.r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.r.iter().cloned().fold(f64::INFINITY, f64::min);
        let rates_equal = hi - lo <= DOMINANCE_TOLERANCE;
        let tied = (self.var_ps - self.var_err).abs() <= DOMINANCE_TOLERANCE;
        rates_equal != tied
    }
}

pub fn evaluate_cell(cell: &GridCell, sizes: &[u64], intended_size: u64) -> SweepRecord {
    let m = intended_size as f64;
    let var_ps = total_variance_kernel(sizes, &cell.r, &cell.p, &cell.q, m, Method::Ps);
    let var_err = total_variance_kernel(sizes, &cell.r, &cell.p, &cell.q, m, Method::Err);
    SweepRecord {
        index: cell.index,
        var_ps,
        var_err,
        ratio: (var_ps > 0.0).then(|| var_err / var_ps),
        misspec: cell.p.iter().zip(&cell.r).map(|(a, b)| (a - b).abs()).sum(),
        spread: spread_with_sizes(&cell.p, sizes),
        p: cell.p.clone(),
        r: cell.r.clone(),
        q: cell.q.clone(),
    }
}

/// Consumer of sweep records, called in grid-index order.
pub trait RecordSink {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl<S: RecordSink + ?Sized> RecordSink for &mut S {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()> {
        (**self).write_record(record)
    }

    fn finish(&mut self) -> io::Result<()> {
        (**self).finish()
    }
}

impl RecordSink for Vec<SweepRecord> {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Sink that drops everything; useful when only the summary is wanted.
#[derive(Debug, Default)]
pub struct NullSink;

impl RecordSink for NullSink {
    fn write_record(&mut self, _: &SweepRecord) -> io::Result<()> {
        Ok(())
    }
}

/// Real number with 17 significant digits, the shortest width that always
/// round-trips an `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_header(strata_count: usize) -> String {
    let mut cols = Vec::with_capacity(3 * strata_count + 5);
    for prefix in ["p", "r", "q"] {
        cols.extend((1..=strata_count).map(|h| format!("{prefix}{h}")));
    }
    cols.extend(["var_ps", "var_err", "ratio", "misspec", "spread"].map(String::from));
    cols.join(",")
}

pub fn csv_row(record: &SweepRecord) -> String {
    let mut out = String::with_capacity(24 * (3 * record.p.len() + 5));
    for v in record.p.iter().chain(&record.r).chain(&record.q) {
        out.push_str(&format_real(*v));
        out.push(',');
    }
    out.push_str(&format_real(record.var_ps));
    out.push(',');
    out.push_str(&format_real(record.var_err));
    out.push(',');
    match record.ratio {
        Some(x) => out.push_str(&format_real(x)),
        None => out.push_str("NA"),
    }
    out.push(',');
    out.push_str(&format_real(record.misspec));
    out.push(',');
    out.push_str(&format_real(record.spread));
    out
}

/// Writes the record CSV: header, then one line per record.
pub struct CsvSink<W: Write> {
    writer: W,
    filter: fn(&SweepRecord) -> bool,
    rows: u64,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut writer: W, strata_count: usize) -> io::Result<Self> {
        writeln!(writer, "{}", csv_header(strata_count))?;
        Ok(CsvSink {
            writer,
            filter: |_| true,
            rows: 0,
        })
    }

    /// Only records accepted by `filter` are written.
    pub fn filtered(writer: W, strata_count: usize, filter: fn(&SweepRecord) -> bool) -> io::Result<Self> {
        let mut sink = CsvSink::new(writer, strata_count)?;
        sink.filter = filter;
        Ok(sink)
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> RecordSink for CsvSink<W> {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()> {
        if (self.filter)(record) {
            writeln!(self.writer, "{}", csv_row(record))?;
            self.rows += 1;
        }
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cell_count: u64,
    pub defined_ratio_cells: u64,
    pub undefined_ratio_cells: u64,
    pub ratio_below_one: u64,
    /// Share of defined-ratio cells where ERR beats PS.
    pub fraction_ratio_below_one: f64,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub dominance_cells: u64,
    pub dominance_violations: u64,
    pub figure3_region_cells: u64,
    pub figure3_violations: u64,
}

impl SweepSummary {
    fn new() -> Self {
        SweepSummary {
            cell_count: 0,
            defined_ratio_cells: 0,
            undefined_ratio_cells: 0,
            ratio_below_one: 0,
            fraction_ratio_below_one: 0.0,
            min_ratio: None,
            max_ratio: None,
            dominance_cells: 0,
            dominance_violations: 0,
            figure3_region_cells: 0,
            figure3_violations: 0,
        }
    }

    fn observe(&mut self, rec: &SweepRecord) {
        self.cell_count += 1;
        match rec.ratio {
            Some(x) => {
                self.defined_ratio_cells += 1;
                if x < 1.0 {
                    self.ratio_below_one += 1;
                }
                self.min_ratio = Some(self.min_ratio.map_or(x, |m| m.min(x)));
                self.max_ratio = Some(self.max_ratio.map_or(x, |m| m.max(x)));
            }
            None => self.undefined_ratio_cells += 1,
        }
        if rec.correctly_specified() {
            self.dominance_cells += 1;
            if rec.violates_dominance() {
                self.dominance_violations += 1;
            }
        }
        if rec.in_figure3_region() {
            self.figure3_region_cells += 1;
            if rec.violates_figure3() {
                self.figure3_violations += 1;
            }
        }
    }

    fn finish(&mut self) {
        if self.defined_ratio_cells > 0 {
            self.fraction_ratio_below_one = self.ratio_below_one as f64 / self.defined_ratio_cells as f64;
        }
    }
}

pub fn run_sweep<S: RecordSink>(spec: &GridSpec, sink: S) -> Result<SweepSummary> {
    run_sweep_with(spec, sink, Exec::default())
}

/// Evaluates every grid cell and feeds the sink in index order. Output is
/// independent of `exec`.
pub fn run_sweep_with<S: RecordSink>(spec: &GridSpec, mut sink: S, exec: Exec) -> Result<SweepSummary> {
    let grid = generate_grid(spec)?;
    let chunks = grid.len().div_ceil(CHUNK);
    let mut summary = SweepSummary::new();

    let mut first = 0;
    while first < chunks {
        let batch = ROUND.min(chunks - first);
        let evaluated = exec.map_indexed(batch as usize, |i| {
            let start = (first + i as u64) * CHUNK;
            let end = (start + CHUNK).min(grid.len());
            (start..end)
                .map(|idx| grid.evaluate(&grid.cell(idx)))
                .collect::<Vec<_>>()
        });
        for rec in evaluated.iter().flatten() {
            summary.observe(rec);
            sink.write_record(rec)?;
        }
        first += batch;
    }
    sink.finish()?;
    summary.finish();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Stratum;

    fn equal_pop(h: usize, size: u64) -> Population {
        Population::new((0..h).map(|_| Stratum::new(size, 0.5, 0.5).unwrap()).collect()).unwrap()
    }

    #[test]
    fn misspecification_examples() {
        assert_eq!(misspecification(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 0.0);
        let m = misspecification(&[0.1, 0.3, 0.5], &[0.3, 0.1, 0.5]).unwrap();
        assert!((m - 0.4).abs() < 1e-15);
        assert_eq!(
            misspecification(&[0.1, 0.7], &[0.9, 0.2]).unwrap(),
            misspecification(&[0.9, 0.2], &[0.1, 0.7]).unwrap()
        );
        assert!(misspecification(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn spread_examples() {
        assert_eq!(
            spread_from_weighted_average(&[0.3, 0.3, 0.3], &equal_pop(3, 10)).unwrap(),
            0.0
        );
        let s = spread_from_weighted_average(&[0.1, 0.5, 0.9], &equal_pop(3, 10)).unwrap();
        assert!((s - 0.8).abs() < 1e-15);
        let pop = Population::new(vec![
            Stratum::new(10, 0.5, 0.5).unwrap(),
            Stratum::new(30, 0.5, 0.5).unwrap(),
        ])
        .unwrap();
        let scaled = Population::new(vec![
            Stratum::new(70, 0.5, 0.5).unwrap(),
            Stratum::new(210, 0.5, 0.5).unwrap(),
        ])
        .unwrap();
        let a = spread_from_weighted_average(&[0.2, 0.9], &pop).unwrap();
        let b = spread_from_weighted_average(&[0.2, 0.9], &scaled).unwrap();
        assert!((a - b).abs() < 1e-15);
        // p̄ = 0.725
        assert!((a - (0.525 + 0.175)).abs() < 1e-12);
        assert!(spread_from_weighted_average(&[0.2], &pop).is_err());
    }

    #[test]
    fn grid_counts() {
        let shared_one_q = GridSpec {
            q_values: vec![0.5],
            ..GridSpec::default()
        };
        assert_eq!(generate_grid(&shared_one_q).unwrap().len(), 15_625);

        let tiny = GridSpec {
            strata_count: 1,
            rate_values: vec![0.5],
            q_values: vec![0.5],
            ..GridSpec::default()
        };
        assert_eq!(generate_grid(&tiny).unwrap().len(), 1);

        let per = GridSpec {
            q_mode: QMode::PerStratum,
            ..GridSpec::default()
        };
        assert_eq!(per.cell_count().unwrap(), 144_703_125);
        assert_eq!(GridSpec::default().cell_count().unwrap(), 328_125);
    }

    #[test]
    fn grid_validation() {
        let mut spec = GridSpec::default();
        spec.rate_values.clear();
        assert!(matches!(generate_grid(&spec), Err(Error::EmptyGrid("rate_values"))));
        let spec = GridSpec {
            q_values: vec![],
            ..GridSpec::default()
        };
        assert!(matches!(generate_grid(&spec), Err(Error::EmptyGrid("q_values"))));
        let spec = GridSpec {
            rate_values: vec![0.0, 0.5],
            ..GridSpec::default()
        };
        assert!(generate_grid(&spec).is_err());
        let spec = GridSpec {
            q_values: vec![1.5],
            ..GridSpec::default()
        };
        assert!(generate_grid(&spec).is_err());
        let spec = GridSpec {
            population_sizes: Some(vec![1, 2]),
            ..GridSpec::default()
        };
        assert!(generate_grid(&spec).is_err());
        let spec = GridSpec {
            strata_count: 0,
            ..GridSpec::default()
        };
        assert!(generate_grid(&spec).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let spec = GridSpec {
            strata_count: 2,
            rate_values: vec![0.1, 0.9],
            q_values: vec![0.0, 0.5, 1.0],
            q_mode: QMode::PerStratum,
            ..GridSpec::default()
        };
        let grid = generate_grid(&spec).unwrap();
        let key = |c: &GridCell| {
            let mut k: Vec<f64> = c.p.clone();
            k.extend(&c.r);
            k.extend(&c.q);
            k
        };
        let cells: Vec<GridCell> = grid.iter().collect();
        assert_eq!(cells.len() as u64, 2u64.pow(4) * 9);
        assert_eq!(key(&cells[0]), vec![0.1, 0.1, 0.1, 0.1, 0.0, 0.0]);
        assert_eq!(key(&cells[1]), vec![0.1, 0.1, 0.1, 0.1, 0.0, 0.5]);
        assert_eq!(key(cells.last().unwrap()), vec![0.9, 0.9, 0.9, 0.9, 1.0, 1.0]);
        for w in cells.windows(2) {
            let (a, b) = (key(&w[0]), key(&w[1]));
            assert!(a.partial_cmp(&b) == Some(std::cmp::Ordering::Less));
        }
    }

    #[test]
    fn correctly_specified_cells_never_favour_ps() {
        let mut records = Vec::new();
        let summary = run_sweep(&GridSpec::default(), &mut records).unwrap();
        assert_eq!(summary.cell_count, 328_125);
        assert_eq!(records.len(), 328_125);
        assert_eq!(summary.dominance_cells, 125 * 21);
        assert_eq!(summary.dominance_violations, 0);
        for rec in records.iter().filter(|r| r.correctly_specified()) {
            if let Some(x) = rec.ratio {
                assert!(x <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn known_figure3_counterexample_is_flagged() {
        // p = (0.1, 0.9, 0.1), r = (0.1, 0.1, 0.3): misspec 1.0 < spread 16/15,
        // yet ERR loses to PS by about 17%.
        let cell = GridCell {
            index: 0,
            p: vec![0.1, 0.9, 0.1],
            r: vec![0.1, 0.1, 0.3],
            q: vec![0.5; 3],
        };
        let rec = evaluate_cell(&cell, &[1000; 3], 1000);
        assert!(rec.in_figure3_region());
        assert!(rec.violates_figure3());
        assert!((rec.ratio.unwrap() - 1.168_421_052_631_579).abs() < 1e-12);
    }

    #[test]
    fn degenerate_q_cells_are_flagged_not_nan() {
        let spec = GridSpec {
            q_values: vec![0.0, 1.0],
            ..GridSpec::default()
        };
        let mut records = Vec::new();
        let summary = run_sweep(&spec, &mut records).unwrap();
        assert_eq!(summary.undefined_ratio_cells, summary.cell_count);
        assert!(records
            .iter()
            .all(|r| r.var_ps == 0.0 && r.var_err == 0.0 && r.ratio.is_none()));
        let mut out = Vec::new();
        CsvSink::new(&mut out, 3).unwrap().write_record(&records[0]).unwrap();
        assert!(String::from_utf8(out).unwrap().lines().nth(1).unwrap().contains(",NA,"));
    }

    #[test]
    fn ratio_invariant_in_m() {
        let base = GridSpec {
            q_values: vec![0.3],
            ..GridSpec::default()
        };
        let big = GridSpec {
            intended_size: 10_000,
            ..base.clone()
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run_sweep(&base, &mut a).unwrap();
        run_sweep(&big, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.ratio.unwrap(), y.ratio.unwrap());
            assert!((x - y).abs() <= 1e-12 * x);
        }
    }

    #[test]
    fn output_is_independent_of_exec() {
        let spec = GridSpec {
            q_values: vec![0.2, 0.5],
            ..GridSpec::default()
        };
        let run = |exec| {
            let mut out = Vec::new();
            run_sweep_with(&spec, CsvSink::new(&mut out, 3).unwrap(), exec).unwrap();
            out
        };
        let seq = run(Exec::Sequential);
        assert_eq!(seq, run(Exec::Workers(8)));
        assert_eq!(seq, run(Exec::Parallel));
        assert_eq!(seq, run(Exec::Sequential));
    }

    #[test]
    fn format_real_round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            2.5e-4,
            0.0,
            1.168_421_052_631_579,
            f64::MIN_POSITIVE,
            123456.789,
        ] {
            let s = format_real(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
            assert_eq!(format_real(back), s);
        }
    }
}
