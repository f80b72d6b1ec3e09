//! The `maxdet` command line and its report format.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bnb::{solve, SolveOptions, DEFAULT_TIME_LIMIT_S};
use crate::conic::{build_expcone_lp, build_sdp_relaxation, write_model, ModelFormat};
use crate::error::{Error, Result};
use crate::graph::gen_ocp;
use crate::io::{independent_columns, load_csv, CsvOptions, RawMatrix, DEFAULT_COLUMN_TOL};
use crate::linalg::InstanceMatrix;
use crate::relax::{solve_lp_relaxation, RelaxOptions, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Normalized duality gap `|ub - lb| / max(|ub|, |lb|, 1e-8)`.
pub fn gap(lb: f64, ub: f64) -> f64 {
    (ub - lb).abs() / ub.abs().max(lb.abs()).max(1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum LogBase {
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    #[value(name = "e")]
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    /// Converts a natural-log value to this base.
    pub fn from_ln(self, v: f64) -> f64 {
        match self {
            LogBase::Two => v / std::f64::consts::LN_2,
            LogBase::E => v,
        }
    }

    pub fn from_log2(self, v: f64) -> f64 {
        match self {
            LogBase::Two => v,
            LogBase::E => v * std::f64::consts::LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::Two => "log2",
            LogBase::E => "ln",
        }
    }
}

/// One line of a results table. Objective values are `log det M` in `log_base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub name: String,
    pub n: usize,
    pub r: usize,
    pub lb_log: f64,
    /// Certified relaxation bound; `None` when the relaxation could not start.
    pub ub_log: Option<f64>,
    pub gap: Option<f64>,
    pub optimal: bool,
    /// 1-based, sorted.
    pub subset: Vec<usize>,
    pub time_bnb_s: f64,
    pub time_lp_s: f64,
    pub log_base: LogBase,
}

impl ReportRow {
    pub fn table_header() -> String {
        format!(
            "{:<24} {:>6} {:>4} {:>14} {:>10} {:>12} {:>10} {:>8}",
            "name", "n", "r", "LB", "time(s)", "UB", "time(s)", "GAP"
        )
    }

    pub fn table_line(&self) -> String {
        let lb = format!(
            "{:.4}{}",
            self.lb_log,
            if self.optimal { "(*)" } else { "" }
        );
        let ub = self.ub_log.map_or("-".to_string(), |u| format!("{u:.4}"));
        let gap = self.gap.map_or("-".to_string(), |g| format!("{g:.4}"));
        format!(
            "{:<24} {:>6} {:>4} {:>14} {:>10.2} {:>12} {:>10.2} {:>8}",
            self.name, self.n, self.r, lb, self.time_bnb_s, ub, self.time_lp_s, gap
        )
    }
}

#[derive(Debug, Parser)]
#[command(name = "maxdet", version, about = "Maximum-determinant row selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact branch-and-bound plus the relaxation bound for one instance.
    Solve(SolveArgs),
    /// Certified log-det relaxation for one instance.
    Relax(RelaxArgs),
    /// Write a conic formulation for an external solver.
    Export(ExportArgs),
    /// Generate a random odd-cycle-packing instance.
    GenOcp(GenOcpArgs),
    /// Solve every CSV instance in a directory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Skip the first CSV line.
    #[arg(long)]
    pub skip_header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Rows forced into the selection, 1-based, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<usize>,
    #[arg(long, value_enum, default_value = "none")]
    pub scale: Scale,
}

/// Preprocessing applied to the loaded table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Use the values as read.
    None,
    /// Divide by the largest absolute entry.
    MaxAbs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Wall-clock limit for branch-and-bound, seconds.
    #[arg(long, default_value_t = DEFAULT_TIME_LIMIT_S)]
    pub time_limit: f64,
    #[arg(long, value_enum)]
    pub log_base: Option<LogBase>,
    /// Also write the report row as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct RelaxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, value_enum)]
    pub log_base: Option<LogBase>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    Lp,
    Sdp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Cbf,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "lp")]
    pub form: FormArg,
    #[arg(long, value_enum, default_value = "cbf")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenOcpArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub edges: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TIME_LIMIT_S)]
    pub time_limit: f64,
    #[arg(long, value_enum)]
    pub log_base: Option<LogBase>,
    #[arg(long)]
    pub skip_header: bool,
    #[arg(long, value_enum, default_value = "none")]
    pub scale: Scale,
    /// Instances solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Exit status for an error: 2 for infeasible inputs, 3 for I/O and
/// parsing, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible | Error::DependentFixedRows { .. } | Error::StartSingular => 2,
        Error::Io(_)
        | Error::Parse { .. }
        | Error::NonNumeric { .. }
        | Error::RaggedRows { .. }
        | Error::RankZero
        | Error::NotTall { .. } => 3,
        _ => 1,
    }
}

/// Rows that look like edge incidences (0/1 entries, two ones per row).
fn looks_like_incidence(v: &InstanceMatrix) -> bool {
    v.rows().all(|row| {
        row.iter().all(|&x| x == 0.0 || x == 1.0) && row.iter().filter(|&&x| x == 1.0).count() == 2
    })
}

/// Uses the table as-is when it already has full column rank, otherwise keeps
/// an independent subset of its columns.
fn instance_from_raw(raw: &RawMatrix) -> Result<InstanceMatrix> {
    match InstanceMatrix::new(raw.nrows, raw.ncols, raw.values.clone()) {
        Ok(v) => Ok(v),
        Err(Error::RankDeficient { .. }) | Err(Error::InvalidDimensions(_)) => {
            independent_columns(raw, DEFAULT_COLUMN_TOL)
        }
        Err(e) => Err(e),
    }
}

/// Loads a CSV table and turns it into a full column rank instance.
pub fn load_instance(
    path: &Path,
    skip_header: bool,
    delimiter: char,
    scale: Scale,
) -> Result<InstanceMatrix> {
    if !delimiter.is_ascii() {
        return Err(Error::InvalidDimensions(format!(
            "delimiter {delimiter:?} is not ASCII"
        )));
    }
    let opts = CsvOptions {
        delimiter: delimiter as u8,
        skip_header,
    };
    let mut raw = load_csv(path, &opts)?;
    if scale == Scale::MaxAbs {
        raw.scale_max_abs();
    }
    instance_from_raw(&raw)
}

fn fixed_rows(fix: &[usize]) -> Result<Vec<usize>> {
    fix.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::InvalidIndexSet("--fix indices are 1-based".into()))
        })
        .collect()
}

fn instance_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// Branch-and-bound and root relaxation for one instance.
pub fn report_instance(
    name: &str,
    v: &InstanceMatrix,
    j: &[usize],
    time_limit: Duration,
    workers: usize,
    base: Option<LogBase>,
) -> Result<ReportRow> {
    let base = base.unwrap_or(if looks_like_incidence(v) {
        LogBase::Two
    } else {
        LogBase::E
    });
    let opts = SolveOptions {
        time_limit,
        workers,
        ..SolveOptions::default()
    };
    let rep = solve(v, j, &opts)?;

    let start = Instant::now();
    let ub = match solve_lp_relaxation(v, j, &RelaxOptions::default()) {
        Ok(sol) => Some(base.from_ln(sol.cert_ub_ln)),
        Err(Error::StartSingular) => None,
        Err(e) => return Err(e),
    };
    let time_lp_s = start.elapsed().as_secs_f64();

    let lb = base.from_log2(rep.lb_log2);
    Ok(ReportRow {
        name: name.to_string(),
        n: v.nrows(),
        r: v.ncols(),
        lb_log: lb,
        ub_log: ub,
        gap: ub.map(|u| gap(lb, u)),
        optimal: rep.optimal,
        subset: rep.subset,
        time_bnb_s: rep.time_seconds,
        time_lp_s,
        log_base: base,
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let v = load_instance(
        &a.input.input,
        a.input.skip_header,
        a.input.delimiter,
        a.input.scale,
    )?;
    let j = fixed_rows(&a.input.fix)?;
    let row = report_instance(
        &instance_name(&a.input.input),
        &v,
        &j,
        Duration::from_secs_f64(a.time_limit.max(0.0)),
        a.workers,
        a.log_base,
    )?;
    println!("{}", ReportRow::table_header());
    println!("{}", row.table_line());
    println!(
        "subset: {}",
        row.subset
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&row).expect("report serializes");
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn cmd_relax(a: &RelaxArgs) -> Result<()> {
    let v = load_instance(
        &a.input.input,
        a.input.skip_header,
        a.input.delimiter,
        a.input.scale,
    )?;
    let j = fixed_rows(&a.input.fix)?;
    let base = a.log_base.unwrap_or(if looks_like_incidence(&v) {
        LogBase::Two
    } else {
        LogBase::E
    });
    let opts = RelaxOptions {
        tol: a.tol,
        max_iters: a.max_iters,
    };
    let start = Instant::now();
    let sol = solve_lp_relaxation(&v, &j, &opts)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "objective ({}): {:.8}",
        base.label(),
        base.from_ln(sol.obj_ln)
    );
    let _ = writeln!(
        out,
        "certified UB ({}): {:.8}",
        base.label(),
        base.from_ln(sol.cert_ub_ln)
    );
    let _ = writeln!(out, "iterations: {}", sol.iters);
    let _ = writeln!(out, "converged: {}", sol.converged);
    let _ = writeln!(out, "time(s): {:.3}", start.elapsed().as_secs_f64());
    print!("{out}");
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let v = load_instance(
        &a.input.input,
        a.input.skip_header,
        a.input.delimiter,
        a.input.scale,
    )?;
    let j = fixed_rows(&a.input.fix)?;
    let mut model = match a.form {
        FormArg::Lp => build_expcone_lp(&v, &j)?,
        FormArg::Sdp => build_sdp_relaxation(&v, &j)?,
    };
    model.metadata.name = instance_name(&a.input.input);
    let format = match a.format {
        FormatArg::Cbf => ModelFormat::Cbf,
        FormatArg::Json => ModelFormat::Json,
    };
    write_model(&model, format, &a.out)
}

fn cmd_gen_ocp(a: &GenOcpArgs) -> Result<()> {
    let inst = gen_ocp(a.nodes, a.edges, a.seed)?;
    inst.write_csv(&a.out)?;
    Ok(())
}

fn bench_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

type Slot = Mutex<Option<Result<ReportRow>>>;

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let files = bench_files(&a.dir)?;
    let results: Vec<Slot> = files.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let limit = Duration::from_secs_f64(a.time_limit.max(0.0));
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.max(1).min(files.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(k) else { break };
                let res = load_instance(path, a.skip_header, ',', a.scale).and_then(|v| {
                    report_instance(&instance_name(path), &v, &[], limit, 1, a.log_base)
                });
                *results[k].lock().expect("result slot poisoned") = Some(res);
            });
        }
    });

    let mut status = 0;
    let mut stdout = std::io::stdout().lock();
    eprintln!("{}", ReportRow::table_header());
    for (path, slot) in files.iter().zip(results) {
        match slot.into_inner().expect("result slot poisoned") {
            Some(Ok(row)) => {
                eprintln!("{}", row.table_line());
                let line = serde_json::to_string(&row).expect("report serializes");
                writeln!(stdout, "{line}")?;
            }
            Some(Err(e)) => {
                eprintln!("maxdet: {}: {e}", path.display());
                if status == 0 {
                    status = exit_code(&e);
                }
            }
            None => unreachable!("every instance is claimed by a worker"),
        }
    }
    Ok(status)
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| 0),
        Command::Relax(a) => cmd_relax(a).map(|_| 0),
        Command::Export(a) => cmd_export(a).map(|_| 0),
        Command::GenOcp(a) => cmd_gen_ocp(a).map(|_| 0),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("maxdet: {e}");
            exit_code(&e)
        }
    }
}
