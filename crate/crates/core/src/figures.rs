//! Binned aggregates behind the misspecification plots.
//!
//! Three heat maps of the mean variance ratio over pairs of L1 metrics and a
//! scatter of `(spread, ratio, misspec)` for a few fixed yes-probability
//! setups. Only cells with a defined ratio contribute.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use crate::sweep::{format_real, RecordSink, SweepRecord};

pub const BIN_STEP: f64 = 0.1;

/// Heat-map axes: `(x, y)` metric pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Panel {
    /// misspecification × spread of true rates around their weighted mean
    MisspecBySpread,
    /// misspecification × distance of true from expected rates (the same L1
    /// metric on both axes)
    MisspecByDistance,
    /// spread × distance of true from expected rates
    SpreadByDistance,
}

impl Panel {
    pub const ALL: [Panel; 3] = [
        Panel::MisspecBySpread,
        Panel::MisspecByDistance,
        Panel::SpreadByDistance,
    ];

    fn coords(self, rec: &SweepRecord) -> (f64, f64) {
        match self {
            Panel::MisspecBySpread => (rec.misspec, rec.spread),
            Panel::MisspecByDistance => (rec.misspec, rec.misspec),
            Panel::SpreadByDistance => (rec.spread, rec.misspec),
        }
    }

    pub fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            Panel::MisspecBySpread => ("misspecification", "spread of true rates from weighted average"),
            Panel::MisspecByDistance => ("misspecification", "distance of true from expected rates"),
            Panel::SpreadByDistance => (
                "spread of true rates from weighted average",
                "distance of true from expected rates",
            ),
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Panel::MisspecBySpread => "figure1",
            Panel::MisspecByDistance => "figure2",
            Panel::SpreadByDistance => "figure3",
        }
    }
}

/// Bin index for a nonnegative metric; the epsilon keeps exact multiples of
/// the step (e.g. 0.3) from falling into the bin below.
pub fn bin_index(value: f64) -> i64 {
    (value / BIN_STEP + 1e-9).floor() as i64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BinCell {
    pub cells: u64,
    pub ratio_sum: f64,
}

impl BinCell {
    pub fn mean_ratio(&self) -> f64 {
        self.ratio_sum / self.cells as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeatMap {
    pub bins: BTreeMap<(i64, i64), BinCell>,
}

impl HeatMap {
    fn add(&mut self, x: f64, y: f64, ratio: f64) {
        let cell = self.bins.entry((bin_index(x), bin_index(y))).or_default();
        cell.cells += 1;
        cell.ratio_sum += ratio;
    }

    pub fn x_bins(&self) -> usize {
        let mut xs: Vec<i64> = self.bins.keys().map(|k| k.0).collect();
        xs.dedup();
        xs.len()
    }

    pub fn y_bins(&self) -> usize {
        let mut ys: Vec<i64> = self.bins.keys().map(|k| k.1).collect();
        ys.sort_unstable();
        ys.dedup();
        ys.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_lo,y_lo,cells,mean_ratio\n");
        for (&(x, y), cell) in &self.bins {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_real(x as f64 * BIN_STEP),
                format_real(y as f64 * BIN_STEP),
                cell.cells,
                format_real(cell.mean_ratio())
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub setup: usize,
    pub spread: f64,
    pub ratio: f64,
    pub misspec: f64,
}

/// The four yes-probability setups of the scatter panel for three strata;
/// for other strata counts only the constant setups apply.
pub fn default_q_setups(strata_count: usize) -> Vec<Vec<f64>> {
    let mut setups = vec![vec![0.1; strata_count]];
    if strata_count == 3 {
        setups.push(vec![0.1, 0.5, 0.9]);
    }
    setups.push(vec![0.5; strata_count]);
    setups.push(vec![0.9; strata_count]);
    setups
}

/// Mean ratio over cells whose misspecification lies strictly below a
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandMean {
    pub threshold: f64,
    pub cells: u64,
    pub mean_ratio: Option<f64>,
}

/// Streaming accumulator for all figure aggregates.
#[derive(Debug, Clone)]
pub struct FigureBins {
    pub heat_maps: [HeatMap; 3],
    pub q_setups: Vec<Vec<f64>>,
    pub scatter: Vec<ScatterPoint>,
    bands: Vec<(f64, u64, f64)>,
}

pub const BAND_THRESHOLDS: [f64; 2] = [0.3, 0.4];

impl FigureBins {
    pub fn new(strata_count: usize) -> Self {
        FigureBins::with_setups(default_q_setups(strata_count))
    }

    pub fn with_setups(q_setups: Vec<Vec<f64>>) -> Self {
        FigureBins {
            heat_maps: Default::default(),
            q_setups,
            scatter: Vec::new(),
            bands: BAND_THRESHOLDS.iter().map(|&t| (t, 0, 0.0)).collect(),
        }
    }

    pub fn push(&mut self, rec: &SweepRecord) {
        let Some(ratio) = rec.ratio else { return };
        for (panel, map) in Panel::ALL.iter().zip(self.heat_maps.iter_mut()) {
            let (x, y) = panel.coords(rec);
            map.add(x, y, ratio);
        }
        for (setup, q) in self.q_setups.iter().enumerate() {
            if q.len() == rec.q.len() && q.iter().zip(&rec.q).all(|(a, b)| (a - b).abs() < 1e-12) {
                self.scatter.push(ScatterPoint {
                    setup,
                    spread: rec.spread,
                    ratio,
                    misspec: rec.misspec,
                });
            }
        }
        for band in &mut self.bands {
            if rec.misspec < band.0 - 1e-9 {
                band.1 += 1;
                band.2 += ratio;
            }
        }
    }

    pub fn heat_map(&self, panel: Panel) -> &HeatMap {
        &self.heat_maps[Panel::ALL.iter().position(|&p| p == panel).unwrap_or(0)]
    }

    pub fn band_means(&self) -> Vec<BandMean> {
        self.bands
            .iter()
            .map(|&(threshold, cells, sum)| BandMean {
                threshold,
                cells,
                mean_ratio: (cells > 0).then(|| sum / cells as f64),
            })
            .collect()
    }

    pub fn scatter_csv(&self) -> String {
        let h = self.q_setups.first().map_or(0, Vec::len);
        let mut out = String::from("setup,");
        for i in 1..=h {
            let _ = write!(out, "q{i},");
        }
        out.push_str("spread,ratio,misspec\n");
        for pt in &self.scatter {
            let _ = write!(out, "{},", pt.setup + 1);
            for q in &self.q_setups[pt.setup] {
                let _ = write!(out, "{},", format_real(*q));
            }
            let _ = writeln!(
                out,
                "{},{},{}",
                format_real(pt.spread),
                format_real(pt.ratio),
                format_real(pt.misspec)
            );
        }
        out
    }
}

impl RecordSink for FigureBins {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()> {
        self.push(record);
        Ok(())
    }
}

/// Aggregates an in-memory record set.
pub fn figure_bins<'a, I>(records: I, strata_count: usize) -> Option<FigureBins>
where
    I: IntoIterator<Item = &'a SweepRecord>,
{
    let mut bins = FigureBins::new(strata_count);
    let mut any = false;
    for rec in records {
        any = true;
        bins.push(rec);
    }
    any.then_some(bins)
}

// Diverging colour for a ratio on a log scale: blue below 1, red above.
fn ratio_colour(ratio: f64) -> String {
    let t = (ratio.max(1e-3).log2() / 2.0).clamp(-1.0, 1.0);
    let fade = |v: f64| (255.0 * (1.0 - v.abs())).round() as u8;
    let (r, g, b) = if t < 0.0 {
        (fade(t), fade(t), 255)
    } else {
        (255, fade(t), fade(t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn heat_map_svg(map: &HeatMap, panel: Panel) -> String {
    const CELL: f64 = 18.0;
    const MARGIN: f64 = 60.0;
    let max_x = map.bins.keys().map(|k| k.0).max().unwrap_or(0) + 1;
    let max_y = map.bins.keys().map(|k| k.1).max().unwrap_or(0) + 1;
    let width = MARGIN * 2.0 + CELL * max_x as f64;
    let height = MARGIN * 2.0 + CELL * max_y as f64;
    let (xl, yl) = panel.axis_labels();

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (&(x, y), cell) in &map.bins {
        let px = MARGIN + x as f64 * CELL;
        let py = height - MARGIN - (y + 1) as f64 * CELL;
        let _ = writeln!(
            svg,
            "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"><title>{:.3} ({} cells)</title></rect>",
            ratio_colour(cell.mean_ratio()),
            cell.mean_ratio(),
            cell.cells
        );
    }
    for i in (0..=max_x).step_by(2) {
        let px = MARGIN + i as f64 * CELL;
        let _ = writeln!(
            svg,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{:.1}</text>",
            height - MARGIN + 14.0,
            i as f64 * BIN_STEP
        );
    }
    for i in (0..=max_y).step_by(2) {
        let py = height - MARGIN - i as f64 * CELL;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{py}\" text-anchor=\"end\">{:.1}</text>",
            MARGIN - 4.0,
            i as f64 * BIN_STEP
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xl}</text>",
        width / 2.0,
        height - 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{yl}</text>",
        height / 2.0,
        height / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn scatter_svg(bins: &FigureBins) -> String {
    const PANEL: f64 = 260.0;
    const MARGIN: f64 = 40.0;
    let panels = bins.q_setups.len().max(1);
    let max_spread = bins.scatter.iter().map(|p| p.spread).fold(0.0, f64::max).max(1e-9);
    let max_ratio = bins.scatter.iter().map(|p| p.ratio).fold(0.0, f64::max).max(1.0);
    let max_mis = bins.scatter.iter().map(|p| p.misspec).fold(0.0, f64::max).max(1e-9);
    let width = panels as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (i, setup) in bins.q_setups.iter().enumerate() {
        let ox = MARGIN + i as f64 * (PANEL + MARGIN);
        let label: Vec<String> = setup.iter().map(|q| format!("{q}")).collect();
        let _ = writeln!(
            svg,
            "<rect x=\"{ox}\" y=\"{MARGIN}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#888\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">q = ({})</text>",
            ox + PANEL / 2.0,
            MARGIN - 8.0,
            label.join(", ")
        );
        let one = MARGIN + PANEL * (1.0 - 1.0 / max_ratio);
        let _ = writeln!(
            svg,
            "<line x1=\"{ox}\" x2=\"{}\" y1=\"{one}\" y2=\"{one}\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>",
            ox + PANEL
        );
        for pt in bins.scatter.iter().filter(|p| p.setup == i) {
            let cx = ox + PANEL * pt.spread / max_spread;
            let cy = MARGIN + PANEL * (1.0 - pt.ratio / max_ratio);
            let shade = (200.0 * pt.misspec / max_mis).round() as u8;
            let _ = writeln!(
                svg,
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"1.5\" fill=\"#{shade:02x}40{:02x}\"/>",
                200 - shade
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
