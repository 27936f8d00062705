//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::beamformers::NullingRule;
use crate::sim::{
    mean_stderr, parse_assignment, run_sweep, run_trials, write_results, Figure, OutputFormat, SimConfig,
    SweepResult, SweepSpec,
};
use crate::verify::{run_suites, rank_condition_suite, VerifyPlan};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kronbeam", version, about = "Kronecker-factor hybrid beamforming simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run trials at one operating point and print per-scheme sum rates.
    Run(Common),
    /// Run the sweep given by `sweep_axis` and `sweep_values`.
    Sweep(Common),
    /// Run the invariant suites.
    Verify(VerifyArgs),
    /// Reproduce the figure sweeps.
    Figures(FiguresArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trials per point (overrides `trials`).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output file (sweep) or directory (figures).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Inject a fault; `nulling` flips the nulling factor signs.
    #[arg(long)]
    pub corrupt: Option<String>,
    /// Also run the 1000-draw rank sweep.
    #[arg(long)]
    pub theorem1: bool,
    /// Use the acceptance-scale case counts.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[command(flatten)]
    pub common: Common,
    /// fig3, fig4, fig5 or fig6; all four when omitted.
    #[arg(long)]
    pub which: Option<String>,
}

fn load_config(c: &Common) -> crate::Result<SimConfig> {
    let mut overrides = c.set.iter().map(|s| parse_assignment(s)).collect::<crate::Result<Vec<_>>>()?;
    if let Some(seed) = c.seed {
        overrides.push(("master_seed".into(), seed.to_string()));
    }
    if let Some(t) = c.trials {
        overrides.push(("trials".into(), t.to_string()));
    }
    SimConfig::load(c.config.as_deref(), &overrides)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Infeasible { .. } | Error::SearchTooLarge { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c, out),
        Command::Sweep(c) => cmd_sweep(c, out),
        Command::Verify(v) => cmd_verify(v, out),
        Command::Figures(f) => cmd_figures(f, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// Prints mean sum rate and worst nulling residual per scheme.
pub fn cmd_run(c: &Common, out: &mut dyn Write) -> crate::Result<i32> {
    let cfg = load_config(c)?;
    let outcomes = run_trials(&cfg)?;
    writeln!(
        out,
        "# K={} Q={} L={} M={} N={} Psi={} Gamma_psi={:?} snr_dB={} isr_dB={} trials={} seed={}",
        cfg.users,
        cfg.ue_antennas,
        cfg.paths_per_user,
        cfg.rows,
        cfg.cols,
        cfg.interferers,
        cfg.gamma_counts()?,
        cfg.snr_db,
        cfg.isr_db,
        cfg.trials,
        cfg.master_seed
    )
    .map_err(io)?;
    writeln!(out, "{:<16} {:>14} {:>10} {:>14}", "scheme", "sum_rate_bps_hz", "stderr", "max_residual").map_err(io)?;
    for (i, scheme) in cfg.schemes.iter().enumerate() {
        let results: Vec<_> = outcomes.iter().map(|o| &o.results[i]).collect();
        if let Some(e) = results.iter().find_map(|r| r.error.as_ref()) {
            writeln!(out, "{:<16} unavailable: {e}", scheme.id()).map_err(io)?;
            continue;
        }
        let rates: Vec<f64> = results.iter().filter_map(|r| r.rate).collect();
        let (mean, se) = mean_stderr(&rates);
        let residual = results
            .iter()
            .filter_map(|r| r.max_residual)
            .reduce(f64::max)
            .map_or_else(|| "-".to_string(), |r| format!("{r:.3e}"));
        writeln!(out, "{:<16} {:>14.6} {:>10.6} {:>14}", scheme.id(), mean, se, residual).map_err(io)?;
    }
    let violations: usize = outcomes.iter().map(|o| o.dominance_violations).sum();
    if violations > 0 {
        writeln!(out, "# exhaustive below alg3 desired power for {violations} user(s)").map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn emit(result: &SweepResult, path: Option<&Path>, format: OutputFormat, out: &mut dyn Write) -> crate::Result<()> {
    match path {
        Some(p) => write_results(result, p, format),
        None => match format {
            OutputFormat::Csv => {
                crate::sim::output::write_csv(&result.rows, &mut *out).map_err(|e| Error::Serialization(e.to_string()))
            }
            OutputFormat::Json => {
                let doc = crate::sim::ResultDocument {
                    rows: result.rows.clone(),
                    config: result.config.clone(),
                    fingerprint: result.fingerprint.clone(),
                    gaps: result.gaps.clone(),
                };
                let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialization(e.to_string()))?;
                writeln!(out, "{text}").map_err(io)
            }
        },
    }
}

fn report_gaps(result: &SweepResult, out: &mut dyn Write) -> crate::Result<()> {
    for g in &result.gaps {
        writeln!(out, "# gap: {} at {}={}: {}", g.scheme, result.axis.name(), g.axis_value, g.message).map_err(io)?;
    }
    Ok(())
}

pub fn cmd_sweep(c: &Common, out: &mut dyn Write) -> crate::Result<i32> {
    let cfg = load_config(c)?;
    let format = OutputFormat::parse(&c.format)?;
    let spec = SweepSpec::from_config(&cfg)?;
    let result = run_sweep(&spec)?;
    emit(&result, c.out.as_deref(), format, out)?;
    if c.out.is_some() {
        report_gaps(&result, out)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_figures(f: &FiguresArgs, out: &mut dyn Write) -> crate::Result<i32> {
    let cfg = load_config(&f.common)?;
    let format = OutputFormat::parse(&f.common.format)?;
    let figures = match &f.which {
        Some(w) => vec![Figure::parse(w)?],
        None => Figure::ALL.to_vec(),
    };
    let dir = f.common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if !dir.is_dir() {
        return Err(Error::Io {
            path: dir,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    for fig in figures {
        let result = run_sweep(&fig.spec(&cfg)?)?;
        let path = dir.join(format!("{}.{ext}", fig.id()));
        write_results(&result, &path, format)?;
        writeln!(out, "{}: {} rows -> {}", fig.id(), result.rows.len(), path.display()).map_err(io)?;
        report_gaps(&result, out)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(v: &VerifyArgs, out: &mut dyn Write) -> crate::Result<i32> {
    let cfg = load_config(&v.common)?;
    let mut plan = if v.full { VerifyPlan::full() } else { VerifyPlan::default() };
    match v.corrupt.as_deref() {
        None => {}
        Some("nulling") => plan.nulling = NullingRule::SignFlipped,
        Some(other) => return Err(Error::Config(format!("unknown fault `{other}` (expected nulling)"))),
    }
    let mut reports = run_suites(&cfg, &plan);
    if v.theorem1 && plan.rank_draws < 1000 {
        reports.push(rank_condition_suite(cfg.master_seed, 1000));
    }
    let mut failed = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {:<12} cases={:<6} {}", r.name, r.cases, r.detail).map_err(io)?;
        failed += usize::from(!r.passed);
    }
    writeln!(out, "{} suites, {failed} failed", reports.len()).map_err(io)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
