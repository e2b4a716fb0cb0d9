//! Command-line front end for the randomized Milstein studies.
//!
//! Each subcommand reads an experiment config (TOML), runs one study and
//! writes `<subcommand>.csv` and `<subcommand>.svg` to the output directory.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use randmil_core::diagnostics::{eoc_regression, ErrorEntry, ErrorReport};
use randmil_core::harness::{
    quadrature_study, residual_decay_study, strong_convergence_study, work_precision_study,
    ErrorMetric, ExperimentConfig, ReferenceKind,
};
use randmil_core::SchemeKind;

mod svg;

pub use svg::{emit_svg, render_svg, PlotKind};

pub const CSV_HEADER: [&str; 9] = [
    "scheme",
    "n",
    "h",
    "samples",
    "p",
    "error",
    "stderr",
    "cpu_seconds",
    "eoc_slope",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Convergence,
    Timing,
    Quadrature,
    Residual,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Convergence => "convergence",
            Study::Timing => "timing",
            Study::Quadrature => "quadrature",
            Study::Residual => "residual",
        }
    }

    /// Config used when `--config` is not given.
    pub fn builtin_config(self) -> &'static str {
        match self {
            Study::Convergence | Study::Residual => BUILTIN_GBM,
            Study::Timing => BUILTIN_PAPER_EXAMPLE,
            Study::Quadrature => BUILTIN_QUADRATURE,
        }
    }

    pub fn plot_kind(self) -> PlotKind {
        match self {
            Study::Timing => PlotKind::WorkPrecision,
            _ => PlotKind::Convergence,
        }
    }

    pub fn run(self, config: &ExperimentConfig) -> Result<ErrorReport> {
        let report = match self {
            Study::Convergence => strong_convergence_study(config),
            Study::Timing => work_precision_study(config),
            Study::Quadrature => quadrature_study(config),
            Study::Residual => residual_decay_study(config),
        };
        Ok(report?)
    }
}

pub const BUILTIN_GBM: &str = include_str!("../../../configs/gbm.toml");
pub const BUILTIN_PAPER_EXAMPLE: &str = include_str!("../../../configs/paper_example.toml");
pub const BUILTIN_HOLDER_ODE: &str = include_str!("../../../configs/holder_ode.toml");
pub const BUILTIN_QUADRATURE: &str = include_str!("../../../configs/quadrature.toml");

#[derive(Debug, Parser)]
#[command(
    name = "randmil",
    version,
    about = "Strong-convergence studies for randomized Milstein schemes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Strong L^p error against step size.
    Convergence(StudyArgs),
    /// Error and CPU time per scheme and step size.
    Timing(StudyArgs),
    /// Randomized Riemann sum error against step size.
    Quadrature(StudyArgs),
    /// Spijker norm of the exact solution's residual against step size.
    Residual(StudyArgs),
}

/// Flags shared by every subcommand. Each one overrides the config key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct StudyArgs {
    /// Experiment config (TOML); the built-in config is used if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "RANDMIL_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
    #[arg(long)]
    pub n_ref: Option<u32>,
    /// `exact` or `randomized-milstein`.
    #[arg(long, value_parser = parse_reference)]
    pub reference: Option<ReferenceKind>,
    /// `terminal` or `max`.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<ErrorMetric>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<SchemeKind>>,
}

fn parse_reference(s: &str) -> Result<ReferenceKind, String> {
    match s {
        "exact" => Ok(ReferenceKind::Exact),
        "randomized-milstein" => Ok(ReferenceKind::RandomizedMilstein),
        _ => Err(format!("unknown reference `{s}`")),
    }
}

fn parse_metric(s: &str) -> Result<ErrorMetric, String> {
    match s {
        "terminal" => Ok(ErrorMetric::Terminal),
        "max" => Ok(ErrorMetric::Max),
        _ => Err(format!("unknown metric `{s}`")),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    Ok(toml::from_str(text)?)
}

/// Reads the config file, or the study's built-in config, and applies the
/// command-line overrides.
pub fn load_config(study: Study, args: &StudyArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => parse_config(study.builtin_config()).context("invalid built-in config")?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    if let Some(p) = args.p {
        config.p = p;
    }
    if let Some(n) = args.n_min {
        config.n_min = n;
    }
    if let Some(n) = args.n_max {
        config.n_max = n;
    }
    if let Some(n) = args.n_ref {
        config.n_ref = n;
    }
    if let Some(reference) = args.reference {
        config.reference = reference;
    }
    if let Some(metric) = args.metric {
        config.metric = metric;
    }
    if let Some(schemes) = &args.schemes {
        config.schemes = schemes.clone();
    }
    Ok(config)
}

/// Entries in output order: by scheme name, then by descending step size.
pub fn sorted_entries(report: &ErrorReport) -> Vec<&ErrorEntry> {
    let mut rows: Vec<&ErrorEntry> = report.entries.iter().collect();
    rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(b.h.total_cmp(&a.h)));
    rows
}

pub fn write_csv<W: Write>(report: &ErrorReport, sink: W) -> Result<()> {
    if report.entries.is_empty() {
        bail!("report has no entries");
    }
    let mut out = csv::Writer::from_writer(sink);
    out.write_record(CSV_HEADER)?;
    for e in sorted_entries(report) {
        let slope = report.slope(&e.scheme).unwrap_or(f64::NAN);
        out.write_record([
            e.scheme.clone(),
            e.n.to_string(),
            e.h.to_string(),
            e.samples.to_string(),
            e.p.to_string(),
            e.error.to_string(),
            e.standard_error.to_string(),
            e.cpu_seconds.to_string(),
            slope.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(report: &ErrorReport, destination: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(report, &mut buf)?;
    fs::write(destination, buf).with_context(|| format!("cannot write {}", destination.display()))
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub entry: ErrorEntry,
    pub eoc_slope: f64,
}

pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    if reader.headers()?.iter().ne(CSV_HEADER) {
        bail!("unexpected CSV header");
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        let f = |i: usize| -> Result<f64> { Ok(r[i].parse()?) };
        rows.push(CsvRow {
            entry: ErrorEntry {
                scheme: r[0].to_string(),
                n: r[1].parse()?,
                h: f(2)?,
                samples: r[3].parse()?,
                p: f(4)?,
                error: f(5)?,
                standard_error: f(6)?,
                cpu_seconds: f(7)?,
            },
            eoc_slope: f(8)?,
        });
    }
    Ok(rows)
}

/// Runs one study and writes its CSV and SVG into `args.out`.
pub fn execute(study: Study, args: &StudyArgs) -> Result<ErrorReport> {
    let config = load_config(study, args)?;
    let report = study.run(&config)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    emit_csv(&report, &args.out.join(format!("{}.csv", study.name())))?;
    emit_svg(
        &report,
        &args.out.join(format!("{}.svg", study.name())),
        study.plot_kind(),
    )?;
    Ok(report)
}

fn summary(study: Study, report: &ErrorReport) -> String {
    let mut s = format!("{} (reference: {})\n", study.name(), report.reference);
    for fit in &report.fits {
        s.push_str(&format!("  {:<20} slope {:.3}\n", fit.scheme, fit.slope));
    }
    if study == Study::Timing {
        for e in sorted_entries(report) {
            s.push_str(&format!(
                "  {:<20} n={:<2} error {:.3e} cpu {:.3e} s\n",
                e.scheme, e.n, e.error, e.cpu_seconds
            ));
        }
    }
    s
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (study, args) = match cli.command {
        Command::Convergence(a) => (Study::Convergence, a),
        Command::Timing(a) => (Study::Timing, a),
        Command::Quadrature(a) => (Study::Quadrature, a),
        Command::Residual(a) => (Study::Residual, a),
    };
    match execute(study, &args) {
        Ok(report) => {
            print!("{}", summary(study, &report));
            println!("wrote {}", args.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Least-squares fit of `log y` against `log x`, if at least two points.
pub(crate) fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    eoc_regression(xs, ys).ok()
}
