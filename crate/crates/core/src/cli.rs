//! Command-line front end: `run`, `verify` and `norms`.
//!
//! Exit codes: 0 success, 1 failed check, 2 run truncated by the support
//! budget with a passing prefix, 64 usage error, 65 malformed input, 66
//! unreadable input, 73 output not writable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::humpbuilder::{build_witness_stages, export_stages, import_stages, RunParams, DEFAULT_SUPPORT_BUDGET};
use crate::seqcore::{lp_norm, weak_lp_norm_equiv, weak_lp_quasinorm, Exponent, SparseSeq};
use crate::subspace::{make_preset, Preset};
use crate::verifier::{verify, VerifyOptions, WitnessReport};

pub const SEED_ENV: &str = "HUMPFORGE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_TRUNCATED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_CANT_CREATE: i32 = 73;

#[derive(Parser, Debug)]
#[command(name = "humpforge", version, about = "Gliding-hump witnesses for l_p into weak l_p")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build witness stages, verify them and write stages.jsonl, report.json, norms.csv.
    Run(RunArgs),
    /// Re-verify an exported stages.jsonl.
    Verify(VerifyArgs),
    /// Print the l_p norm, weak quasinorm and maximal weak norm of a sequence file.
    Norms(NormsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Canonical,
    Lacunary,
    #[value(name = "random_block", alias = "random-block")]
    RandomBlock,
    #[value(name = "from_file", alias = "from-file")]
    FromFile,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Canonical => Preset::Canonical,
            PresetArg::Lacunary => Preset::Lacunary,
            PresetArg::RandomBlock => Preset::RandomBlock,
            PresetArg::FromFile => Preset::FromFile,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(clap::Args, Debug, Clone)]
pub struct RunArgs {
    /// Exponent(s) p > 1; several values run a grid.
    #[arg(long = "p", value_delimiter = ',', default_value = "2")]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 8)]
    pub stages: usize,
    #[arg(long, value_enum, default_value = "canonical")]
    pub preset: PresetArg,
    /// Seed(s); falls back to HUMPFORGE_SEED, then 0.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    #[arg(long)]
    pub basis_file: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_BUDGET)]
    pub support_budget: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<Format>,
    /// Worker threads for grids of (p, seed) cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Audit every index in the case split instead of samples.
    #[arg(long)]
    pub full_audit: bool,
}

#[derive(clap::Args, Debug, Clone)]
pub struct VerifyArgs {
    /// stages.jsonl produced by `run`.
    pub stages: PathBuf,
    #[arg(long = "p")]
    pub p: f64,
    #[arg(long)]
    pub delta: f64,
    /// Requested stage count (defaults to the number of stages in the file).
    #[arg(long)]
    pub expect_stages: Option<usize>,
    /// Write report.json / norms.csv here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<Format>,
    #[arg(long)]
    pub full_audit: bool,
}

#[derive(clap::Args, Debug, Clone)]
pub struct NormsArgs {
    /// JSON file {"entries": [[index, value], ...]}.
    pub sequence: PathBuf,
    #[arg(long = "p")]
    pub p: f64,
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::InputFormat(_) | Error::InvalidSequence(_) => EXIT_DATA,
            _ => EXIT_CHECK_FAILED,
        };
        CliError { code, message: e.to_string() }
    }
}

/// Result of one `(p, seed)` cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub p: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub report: WitnessReport,
    pub stages_jsonl: String,
    pub exit: i32,
    pub summary: String,
}

/// Resolved configuration of a `run`.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub params: Vec<RunParams>,
    pub preset: Preset,
    pub seeds: Vec<u64>,
    pub basis_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub jobs: usize,
    pub full_audit: bool,
}

impl CliConfig {
    /// Validates flags; `env_seed` is the value of `HUMPFORGE_SEED`, if set.
    pub fn from_args(args: &RunArgs, env_seed: Option<&str>) -> Result<Self, CliError> {
        let mut params = Vec::new();
        for &p in &args.p {
            let exp = Exponent::new(p).map_err(|e| CliError::usage(e.to_string()))?;
            let rp = RunParams::new(exp, args.delta, args.stages)
                .and_then(|r| r.with_support_budget(args.support_budget))
                .map_err(|e| CliError::usage(e.to_string()))?;
            params.push(rp);
        }
        let seeds = match (&args.seed, env_seed) {
            (Some(s), _) => s.clone(),
            (None, Some(text)) => vec![text
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("{SEED_ENV}='{text}' is not an unsigned integer")))?],
            (None, None) => vec![0],
        };
        if seeds.is_empty() || params.is_empty() {
            return Err(CliError::usage("need at least one p and one seed"));
        }
        let preset = Preset::from(args.preset);
        if preset == Preset::FromFile && args.basis_file.is_none() {
            return Err(CliError::usage("--preset from_file requires --basis-file"));
        }
        if args.jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        Ok(CliConfig {
            params,
            preset,
            seeds,
            basis_file: args.basis_file.clone(),
            out_dir: args.out_dir.clone(),
            formats: args.format.clone(),
            jobs: args.jobs,
            full_audit: args.full_audit,
        })
    }

    fn is_grid(&self) -> bool {
        self.params.len() * self.seeds.len() > 1
    }
}

fn exit_for(report: &WitnessReport) -> i32 {
    if !report.all_passed {
        EXIT_CHECK_FAILED
    } else if report.truncated.is_some() {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    }
}

fn summarise(report: &WitnessReport, label: &str) -> String {
    let mut s = String::new();
    let p = report.params.p;
    let _ = writeln!(s, "[{label}] p = {p}, delta = {}", report.params.delta);
    let _ = writeln!(
        s,
        "  stages: {} of {} requested{}",
        report.stages_completed,
        report.params.stages_requested,
        match &report.truncated {
            Some(t) => format!(" (truncated: {})", t.reason),
            None => String::new(),
        }
    );
    let _ = writeln!(s, "  max N: {}", report.rows.len());
    match report.trend_exponent() {
        Some(t) => {
            let _ = writeln!(s, "  ||z_N||_p trend exponent: {t:.4} (1/p = {:.4})", 1.0 / p);
        }
        None => {
            let _ = writeln!(s, "  ||z_N||_p trend exponent: n/a");
        }
    }
    let _ = writeln!(
        s,
        "  weak-norm ceiling: max ||z_N||_(p,inf) = {:.6} vs B = {:.6}",
        report.max_weak(),
        report.constants.b
    );
    let failed: Vec<&str> = report
        .checklist
        .families
        .iter()
        .filter(|f| !f.passed)
        .map(|f| f.id)
        .collect();
    if failed.is_empty() {
        let _ = writeln!(s, "  checks: all {} families pass", report.checklist.families.len());
    } else {
        let _ = writeln!(s, "  checks: FAILED {}", failed.join(", "));
    }
    s
}

fn write_outputs(dir: &Path, formats: &[Format], report: &WitnessReport, stages: Option<&str>) -> Result<(), CliError> {
    let io = |e: std::io::Error, what: &Path| CliError {
        code: EXIT_CANT_CREATE,
        message: format!("cannot write {}: {e}", what.display()),
    };
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    if let Some(text) = stages {
        let path = dir.join("stages.jsonl");
        fs::write(&path, text).map_err(|e| io(e, &path))?;
    }
    if formats.contains(&Format::Json) {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report).expect("report serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(e, &path))?;
    }
    if formats.contains(&Format::Csv) {
        let path = dir.join("norms.csv");
        fs::write(&path, report.to_csv()).map_err(|e| io(e, &path))?;
    }
    Ok(())
}

/// Builds and verifies one cell; nothing is written.
pub fn run_cell(config: &CliConfig, params: &RunParams, seed: u64) -> Result<CellOutcome, CliError> {
    let basis = make_preset(config.preset, seed, config.basis_file.as_deref(), params.p).map_err(|e| {
        let mut err = CliError::from(e);
        if let Some(path) = &config.basis_file {
            if fs::metadata(path).is_err() {
                err.code = EXIT_NO_INPUT;
            }
        }
        err
    })?;
    let run = build_witness_stages(&basis, params)?;
    let report = verify(
        &run.stages,
        params,
        run.truncated.clone(),
        VerifyOptions { full_audit: config.full_audit },
    );
    let dir = if config.is_grid() {
        config.out_dir.join(format!("p{}-seed{}", params.p, seed))
    } else {
        config.out_dir.clone()
    };
    let label = format!("{} seed {}", config.preset.name(), seed);
    Ok(CellOutcome {
        p: params.p.get(),
        seed,
        dir,
        exit: exit_for(&report),
        summary: summarise(&report, &label),
        stages_jsonl: export_stages(&run.stages),
        report,
    })
}

/// Executes `run` for every `(p, seed)` cell, writing outputs per cell.
/// Returns the worst exit code and the per-cell summaries in grid order.
pub fn run(config: &CliConfig) -> (i32, Vec<Result<CellOutcome, CliError>>) {
    let cells: Vec<(RunParams, u64)> = config
        .params
        .iter()
        .flat_map(|rp| config.seeds.iter().map(move |&s| (*rp, s)))
        .collect();
    let results: Vec<Mutex<Option<Result<CellOutcome, CliError>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.jobs.min(cells.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (rp, seed) = &cells[i];
                let out = run_cell(config, rp, *seed).and_then(|cell| {
                    write_outputs(&cell.dir, &config.formats, &cell.report, Some(&cell.stages_jsonl))?;
                    Ok(cell)
                });
                *results[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let results: Vec<Result<CellOutcome, CliError>> = results
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every cell ran"))
        .collect();
    let code = results
        .iter()
        .map(|r| match r {
            Ok(c) => c.exit,
            Err(e) => e.code,
        })
        .fold(EXIT_OK, |acc, c| match (acc, c) {
            (a, EXIT_OK) => a,
            (EXIT_OK, c) => c,
            (EXIT_TRUNCATED, c) => c,
            (a, EXIT_TRUNCATED) => a,
            (a, c) => a.max(c),
        });
    (code, results)
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError {
        code: EXIT_NO_INPUT,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

/// `verify` subcommand; returns the report and its exit code.
pub fn verify_file(args: &VerifyArgs) -> Result<(i32, WitnessReport), CliError> {
    let p = Exponent::new(args.p).map_err(|e| CliError::usage(e.to_string()))?;
    let text = read_input(&args.stages)?;
    let stages = import_stages(&text)?;
    if stages.is_empty() {
        return Err(CliError { code: EXIT_DATA, message: "stage file holds no stages".into() });
    }
    let params = RunParams::new(p, args.delta, args.expect_stages.unwrap_or(stages.len()))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let report = verify(&stages, &params, None, VerifyOptions { full_audit: args.full_audit });
    if let Some(dir) = &args.out_dir {
        write_outputs(dir, &args.format, &report, None)?;
    }
    let code = if !report.all_passed {
        EXIT_CHECK_FAILED
    } else if stages.len() < params.stages {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    };
    Ok((code, report))
}

/// Formats like C's `%.{digits}g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    }
}

/// `norms` subcommand: the three norms at 12 significant digits.
pub fn norms_line(args: &NormsArgs) -> Result<String, CliError> {
    let p = Exponent::new(args.p).map_err(|e| CliError::usage(e.to_string()))?;
    let text = read_input(&args.sequence)?;
    let u: SparseSeq = serde_json::from_str(&text).map_err(|e| CliError {
        code: EXIT_DATA,
        message: format!("sequence file: {e}"),
    })?;
    Ok(format!(
        "{}, {}, {}",
        format_significant(lp_norm(&u, p), 12),
        format_significant(weak_lp_quasinorm(&u, p), 12),
        format_significant(weak_lp_norm_equiv(&u, p), 12)
    ))
}

/// Full entry point: parses `argv`, runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(argv: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => CliConfig::from_args(&args, env_seed.as_deref()).map(|cfg| {
            let (code, results) = run(&cfg);
            for r in results {
                match r {
                    Ok(cell) => {
                        print!("{}", cell.summary);
                        println!("  wrote {}", cell.dir.display());
                    }
                    Err(e) => eprintln!("error: {}", e.message),
                }
            }
            code
        }),
        Command::Verify(args) => verify_file(&args).map(|(code, report)| {
            print!("{}", summarise(&report, &args.stages.display().to_string()));
            code
        }),
        Command::Norms(args) => norms_line(&args).map(|line| {
            println!("{line}");
            EXIT_OK
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
