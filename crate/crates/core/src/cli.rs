//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 undefined ratio under
//! `--require-ratio`, 4 simulation failure (every replicate discarded, or a
//! zero-respondent stratum under the `error` policy), 5 output I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::allocation::{allocate, round_allocation, Allocation, IntegerAllocation, Method};
use crate::config::{parse_design, parse_grid, parse_sim_config, SimOverrides};
use crate::error::Error;
use crate::exec::Exec;
use crate::figures::{heat_map_svg, scatter_svg, BandMean, FigureBins, Panel};
use crate::manifest::RunManifest;
use crate::population::{DesignSpec, ResponseScenario};
use crate::simulation::{empirical_vs_asymptotic_with, EmptyStratumPolicy, SimConfig, SimResult};
use crate::sweep::{format_real, run_sweep_with, CsvSink, GridSpec, QMode, RecordSink, SweepRecord, SweepSummary};
use crate::variance::{compare, VarianceReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "strata-alloc",
    version,
    about = "PS vs ERR stratified allocation: allocation, variances, Monte Carlo and grid sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print PS and ERR allocations, real-valued and rounded.
    Allocate(CommonArgs),
    /// Per-stratum and total delta-method variances for both allocations.
    Variance(ReportArgs),
    /// Compare total variances: ratio, specification flag and metrics.
    Compare(ReportArgs),
    /// Monte Carlo estimate of the variance, checked against the formula.
    Simulate(SimulateArgs),
    /// Evaluate the misspecification grid and write CSV/JSON outputs.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON design document.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted. A manifest is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fail with exit code 3 when the variance ratio is undefined.
    #[arg(long)]
    require_ratio: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Required when the CI environment variable is set.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, env = "STRATA_ALLOC_THREADS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON grid document; the default grid is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Format of the summary echoed to stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, env = "STRATA_ALLOC_THREADS")]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    q_mode: Option<QModeArg>,
    /// Also render SVG heat maps and the scatter panel.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Discard,
    Error,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Ps,
    Err,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QModeArg {
    Shared,
    PerStratum,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn invalid(err: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_INVALID, err.to_string())
    }

    fn io(err: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_IO, err.to_string())
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::AllDiscarded { .. } | Error::ZeroRespondents { .. } => EXIT_SIMULATION,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure::new(code, err.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Allocate(a) => cmd_allocate(&a),
        Command::Variance(a) => cmd_report(&a, "variance"),
        Command::Compare(a) => cmd_report(&a, "compare"),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read_config(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))
}

fn load_design(path: &Path) -> CliResult<(DesignSpec, ResponseScenario)> {
    let text = read_config(path)?;
    parse_design(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes `content` to `--out` (plus manifest) or stdout.
fn emit(
    common: &CommonArgs,
    subcommand: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    content: &str,
) -> CliResult<()> {
    let started = Utc::now();
    match &common.out {
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(content.as_bytes()).map_err(Failure::io)?;
            stdout.flush().map_err(Failure::io)
        }
        Some(path) => {
            let write = || -> io::Result<()> {
                fs::write(path, content)?;
                RunManifest::new(subcommand, config, seed, started)
                    .finish(std::slice::from_ref(path))?
                    .write(&manifest_path(path))
            };
            write().map_err(|e| {
                let _ = fs::remove_file(path);
                let _ = fs::remove_file(manifest_path(path));
                Failure::io(format!("writing {}: {e}", path.display()))
            })
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn design_json(design: &DesignSpec, scenario: &ResponseScenario) -> serde_json::Value {
    json!({ "design": design, "scenario": scenario })
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

#[derive(Serialize)]
struct AllocationPair {
    real: Allocation,
    rounded: IntegerAllocation,
}

fn cmd_allocate(args: &CommonArgs) -> CliResult<()> {
    let (design, scenario) = load_design(&args.config)?;
    let pairs: Vec<AllocationPair> = Method::ALL
        .iter()
        .map(|&m| {
            let real = allocate(&design, m);
            let rounded = round_allocation(&real);
            AllocationPair { real, rounded }
        })
        .collect();

    let content = match args.format {
        Format::Json => to_json(&json!({
            "intended_size": design.intended_size(),
            "average_expected_rate": design.population().average_expected_rate(),
            "ps": pairs[0],
            "err": pairs[1],
        })),
        Format::Csv => {
            let h = design.population().len();
            let mut out = String::from("method,kind,total");
            for i in 1..=h {
                let _ = write!(out, ",n{i}");
            }
            out.push('\n');
            for pair in &pairs {
                let _ = write!(out, "{},real,{}", pair.real.method, format_real(pair.real.total));
                for n in &pair.real.per_stratum {
                    let _ = write!(out, ",{}", format_real(*n));
                }
                out.push('\n');
                let _ = write!(out, "{},rounded,{}", pair.rounded.method, pair.rounded.total);
                for n in &pair.rounded.per_stratum {
                    let _ = write!(out, ",{n}");
                }
                out.push('\n');
            }
            out
        }
    };
    emit(args, "allocate", design_json(&design, &scenario), None, &content)
}

fn cmd_report(args: &ReportArgs, subcommand: &str) -> CliResult<()> {
    let (design, scenario) = load_design(&args.common.config)?;
    let report = compare(&design, &scenario)?;

    let content = match args.common.format {
        Format::Json => to_json(&report),
        Format::Csv if subcommand == "variance" => variance_csv(&design, &report),
        Format::Csv => compare_csv(&report),
    };
    emit(
        &args.common,
        subcommand,
        design_json(&design, &scenario),
        None,
        &content,
    )?;
    if args.require_ratio && !report.ratio_defined {
        return Err(Failure::new(
            EXIT_DEGENERATE,
            "variance ratio is undefined (both totals are zero)",
        ));
    }
    Ok(())
}

fn variance_csv(design: &DesignSpec, report: &VarianceReport) -> String {
    let ps = allocate(design, Method::Ps);
    let err = allocate(design, Method::Err);
    let mut out = String::from("stratum,n_ps,n_err,var_ps,var_err\n");
    for h in 0..report.per_stratum_ps.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            h + 1,
            format_real(ps.per_stratum[h]),
            format_real(err.per_stratum[h]),
            format_real(report.per_stratum_ps[h]),
            format_real(report.per_stratum_err[h]),
        );
    }
    let _ = writeln!(
        out,
        "total,{},{},{},{}",
        format_real(ps.total),
        format_real(err.total),
        format_real(report.total_ps),
        format_real(report.total_err)
    );
    out
}

fn compare_csv(report: &VarianceReport) -> String {
    format!(
        "total_ps,total_err,ratio,correctly_specified,misspec,spread\n{},{},{},{},{},{}\n",
        format_real(report.total_ps),
        format_real(report.total_err),
        report.ratio.map_or_else(|| "NA".to_string(), format_real),
        bool_str(report.correctly_specified),
        format_real(report.misspecification),
        format_real(report.spread_from_avg),
    )
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    allocation: IntegerAllocation,
    result: &'a SimResult,
    analytic_variance: f64,
    relative_error: f64,
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.seed.is_none() && std::env::var_os("CI").is_some() {
        return Err(Failure::invalid("--seed is required when CI is set"));
    }
    let text = read_config(&args.common.config)?;
    let overrides = SimOverrides {
        method: args.method.map(|m| match m {
            MethodArg::Ps => Method::Ps,
            MethodArg::Err => Method::Err,
        }),
        replications: args.reps,
        seed: args.seed,
        policy: args.policy.map(|p| match p {
            PolicyArg::Discard => EmptyStratumPolicy::Discard,
            PolicyArg::Error => EmptyStratumPolicy::Error,
        }),
    };
    let config: SimConfig = parse_sim_config(&text, overrides)
        .map_err(|e| Failure::invalid(format!("{}: {e}", args.common.config.display())))?;

    let cmp = empirical_vs_asymptotic_with(&config, Exec::from_workers(args.workers))?;
    let output = SimulationOutput {
        allocation: config.integer_allocation(),
        result: &cmp.result,
        analytic_variance: cmp.analytic_variance,
        relative_error: cmp.relative_error,
    };
    let content = match args.common.format {
        Format::Json => to_json(&output),
        Format::Csv => {
            let r = &cmp.result;
            let mut out = String::from(
                "method,replications,seed,mean_estimate,empirical_variance,analytic_variance,relative_error,replicates_used,discarded\n",
            );
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                config.method,
                config.replications,
                config.seed,
                format_real(r.mean_estimate),
                format_real(r.empirical_variance),
                format_real(cmp.analytic_variance),
                format_real(cmp.relative_error),
                r.replicate_count_used,
                r.discarded_replicates
            );
            out
        }
    };
    let resolved = serde_json::to_value(&config).expect("config serializes");
    emit(&args.common, "simulate", resolved, Some(config.seed), &content)
}

#[derive(Serialize)]
struct SweepReport<'a> {
    grid: &'a GridSpec,
    #[serde(flatten)]
    summary: &'a SweepSummary,
    figure2_band_means: Vec<BandMean>,
}

struct SweepOutputs<W: Write> {
    records: CsvSink<W>,
    counterexamples: CsvSink<W>,
    bins: FigureBins,
}

impl<W: Write> RecordSink for SweepOutputs<W> {
    fn write_record(&mut self, record: &SweepRecord) -> io::Result<()> {
        self.records.write_record(record)?;
        self.counterexamples.write_record(record)?;
        self.bins.push(record);
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.records.finish()?;
        self.counterexamples.finish()
    }
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let started = Utc::now();
    let mut spec = match &args.config {
        Some(path) => {
            let text = read_config(path)?;
            parse_grid(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?
        }
        None => GridSpec::default(),
    };
    if let Some(mode) = args.q_mode {
        spec.q_mode = match mode {
            QModeArg::Shared => QMode::Shared,
            QModeArg::PerStratum => QMode::PerStratum,
        };
    }
    spec.validate()?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_sweep(args, &spec, &mut written, started);
    if let Err(f) = &result {
        if f.code == EXIT_IO {
            for path in &written {
                let _ = fs::remove_file(path);
            }
        }
    }
    let (summary_json, summary) = result?;
    let echo = match args.format {
        Format::Json => summary_json,
        Format::Csv => format!(
            "cells,defined_ratio_cells,ratio_below_one,dominance_violations,figure3_region_cells,figure3_violations\n{},{},{},{},{},{}\n",
            summary.cell_count,
            summary.defined_ratio_cells,
            summary.ratio_below_one,
            summary.dominance_violations,
            summary.figure3_region_cells,
            summary.figure3_violations
        ),
    };
    print!("{echo}");
    Ok(())
}

fn write_sweep(
    args: &SweepArgs,
    spec: &GridSpec,
    written: &mut Vec<PathBuf>,
    started: chrono::DateTime<Utc>,
) -> CliResult<(String, SweepSummary)> {
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))?;
    let mut create = |name: &str| -> CliResult<(PathBuf, BufWriter<File>)> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Failure::io(format!("creating {}: {e}", path.display())))?;
        written.push(path.clone());
        Ok((path, BufWriter::new(file)))
    };

    let h = spec.strata_count;
    let (_, records_w) = create("records.csv")?;
    let (_, counter_w) = create("figure3_counterexamples.csv")?;
    let mut outputs = SweepOutputs {
        records: CsvSink::new(records_w, h).map_err(Failure::io)?,
        counterexamples: CsvSink::filtered(counter_w, h, SweepRecord::violates_figure3).map_err(Failure::io)?,
        bins: FigureBins::new(h),
    };
    let summary = run_sweep_with(spec, &mut outputs, Exec::from_workers(args.workers)).map_err(|e| match e {
        Error::Io(io) => Failure::io(format!("writing sweep records: {io}")),
        other => Failure::from(other),
    })?;
    drop(outputs.records);
    drop(outputs.counterexamples);
    let bins = outputs.bins;

    let mut put = |name: &str, content: &str| -> CliResult<()> {
        let (path, mut w) = create(name)?;
        w.write_all(content.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))
    };
    for panel in Panel::ALL {
        put(&format!("{}.csv", panel.file_stem()), &bins.heat_map(panel).to_csv())?;
    }
    put("figure4.csv", &bins.scatter_csv())?;
    if args.svg {
        for panel in Panel::ALL {
            put(
                &format!("{}.svg", panel.file_stem()),
                &heat_map_svg(bins.heat_map(panel), panel),
            )?;
        }
        put("figure4.svg", &scatter_svg(&bins))?;
    }
    let report = SweepReport {
        grid: spec,
        summary: &summary,
        figure2_band_means: bins.band_means(),
    };
    let summary_json = to_json(&report);
    put("summary.json", &summary_json)?;

    let digests = written.clone();
    let manifest_file = dir.join("manifest.json");
    RunManifest::new(
        "sweep",
        serde_json::to_value(spec).expect("grid serializes"),
        None,
        started,
    )
    .finish(&digests)
    .and_then(|m| m.write(&manifest_file))
    .map_err(|e| Failure::io(format!("writing manifest: {e}")))?;
    written.push(manifest_file);
    Ok((summary_json, summary))
}
