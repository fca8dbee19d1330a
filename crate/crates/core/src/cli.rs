//! The `wbc` command line.
//!
//! Exit codes: 0 on success (a converged run, a clean report), 2 when a run
//! hits `max_rounds` without converging, 1 on any error or failed check.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::{Overrides, ScenarioConfig};
use crate::consensus::{run_with, ConsensusState, MetricsRecord, RunStatus};
use crate::error::Result;
use crate::network::{validate_schedule_with, verify_meeting_lemma, ValidateOptions};
use crate::trace::{read_checkpoints, read_trace, write_checkpoint, TraceWriter};
use crate::verify::{verify_trace, Tolerances, TraceData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

pub const LOG_ENV: &str = "WBC_LOG_LEVEL";

#[derive(Debug, Parser)]
#[command(name = "wbc", about = "Barycentric consensus over time-varying graphs", disable_version_flag = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write the trace, checkpoints and summary.
    Run(CommonArgs),
    /// Check the schedule assumptions and the meeting lemma.
    Validate(CommonArgs),
    /// Re-verify the run invariants on a stored trace.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace CSV; defaults to the scenario's output trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Write the scenario's schedule as JSON plus its union-graph edges.
    GenerateSchedule(CommonArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the scenario's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `stop.max_rounds`.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Overrides `stop.diameter_threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run even if the schedule fails validation (same as `force: true`).
    #[arg(long)]
    pub force: bool,
}

impl CommonArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            max_rounds: self.max_rounds,
            threshold: self.threshold,
            out: self.out.clone(),
            force: self.force,
        })?;
        Ok(cfg)
    }
}

/// Installs the logger; the level comes from `WBC_LOG_LEVEL` (default warn).
pub fn init_logging() {
    let env = env_logger::Env::default().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let out = std::io::stdout();
    let mut out = out.lock();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, &mut out),
        Command::Validate(a) => cmd_validate(a, &mut out),
        Command::Check { common, trace } => cmd_check(common, trace.as_deref(), &mut out),
        Command::GenerateSchedule(a) => cmd_generate_schedule(a, &mut out),
        Command::Version => writeln!(out, "wbc {}", env!("CARGO_PKG_VERSION"))
            .map(|_| EXIT_OK)
            .map_err(Into::into),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn remove_stale_checkpoints(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let stale = path
            .file_name()
            .and_then(|f| f.to_str())
            .is_some_and(|f| f.starts_with("checkpoint_") && f.ends_with(".json"));
        if stale {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub fn cmd_run(args: &CommonArgs, out: &mut impl Write) -> Result<i32> {
    let cfg = args.load()?;
    let initial = cfg.build_initial()?;
    let schedule = cfg.build_schedule()?;
    if cfg.force {
        warn!("schedule validation bypassed");
    } else {
        let opts = ValidateOptions {
            strict_symmetry: cfg.validation.strict_symmetry,
        };
        let report = validate_schedule_with(&schedule, cfg.stop.max_rounds, opts);
        if !report.is_valid() {
            for v in &report.violations {
                writeln!(out, "violation [{:?}] {v}", v.kind)?;
            }
            writeln!(out, "schedule is invalid; rerun with --force to run anyway")?;
            return Ok(EXIT_ERROR);
        }
    }

    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    remove_stale_checkpoints(&dir)?;
    fs::write(dir.join("scenario.json"), cfg.to_json()? + "\n")?;
    let trace_path = cfg.trace_path();
    let mut writer = TraceWriter::new(fs::File::create(&trace_path)?, initial.n())?;
    let interval = cfg.output.checkpoint_interval;
    let mut last: Option<(ConsensusState, MetricsRecord)> = None;
    let mut last_written = None;

    let result = run_with(&initial, &schedule, &cfg.solver, &cfg.stop, cfg.seed, |state, record| {
        writer.write(record)?;
        if interval > 0 && state.t % interval == 0 {
            write_checkpoint(&dir, state, record)?;
            last_written = Some(state.t);
        }
        last = Some((state.clone(), record.clone()));
        Ok(())
    });
    if interval > 0 {
        if let Some((s, r)) = &last {
            if last_written != Some(s.t) {
                write_checkpoint(&dir, s, r)?;
            }
        }
    }
    let summary = result?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    writeln!(
        out,
        "{} after {} rounds, diameter {:e}; trace in {}",
        match summary.status {
            RunStatus::Converged => "converged",
            RunStatus::MaxRounds => "not converged",
        },
        summary.rounds,
        summary.final_diameter,
        trace_path.display()
    )?;
    Ok(match summary.status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::MaxRounds => EXIT_NOT_CONVERGED,
    })
}

pub fn cmd_validate(args: &CommonArgs, out: &mut impl Write) -> Result<i32> {
    let cfg = args.load()?;
    let schedule = cfg.build_schedule()?;
    let horizon = cfg.stop.max_rounds;
    let opts = ValidateOptions {
        strict_symmetry: cfg.validation.strict_symmetry,
    };
    let report = validate_schedule_with(&schedule, horizon, opts);
    writeln!(out, "schedule: n={}, L={}, delta={}, horizon {horizon}", schedule.n(), schedule.L(), schedule.delta())?;
    for v in &report.violations {
        writeln!(out, "violation [{:?}] {v}", v.kind)?;
    }
    let meeting = verify_meeting_lemma(&schedule, cfg.validation.k_max);
    for f in &meeting.failures {
        writeln!(
            out,
            "meeting failure: agent {} does not meet {} on [t_{}, t_{}]",
            f.i,
            f.j,
            f.k,
            f.k + 1
        )?;
    }
    writeln!(
        out,
        "meeting lemma: k_max={}, {} failures, M={} (bound {})",
        meeting.k_max,
        meeting.failures.len(),
        meeting.m,
        meeting.m_bound
    )?;
    if let Some(note) = &meeting.incomplete {
        writeln!(out, "warning: {note}")?;
    }
    let clean = report.is_valid() && meeting.failures.is_empty() && meeting.m <= meeting.m_bound;
    writeln!(out, "{}", if clean { "valid" } else { "invalid" })?;
    Ok(if clean { EXIT_OK } else { EXIT_ERROR })
}

pub fn cmd_check(args: &CommonArgs, trace: Option<&Path>, out: &mut impl Write) -> Result<i32> {
    let cfg = args.load()?;
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| cfg.trace_path());
    let rows = read_trace(&trace_path)?;
    let dir = trace_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let checkpoints = read_checkpoints(&dir)?;
    let states: Vec<ConsensusState> = checkpoints.iter().map(|c| c.state()).collect();
    let initial = cfg.build_initial()?;
    let schedule = cfg.build_schedule()?;
    let rounds = rows.last().map_or(0, |r| r.t);
    let schedule = schedule.extended(rounds).unwrap_or(schedule);
    let tol = Tolerances::ladder(initial.kind(), cfg.solver.method);
    let data = TraceData {
        rows: &rows,
        states: &states,
        schedule: Some(&schedule),
        cfg: &cfg.solver,
        threshold: cfg.stop.diameter_threshold,
    };
    let mut report = verify_trace(&data, &tol)?;
    if states.is_empty() {
        report
            .warnings
            .push("no checkpoints found; only the CSV columns were verified".into());
    }
    info!("checked {} rows and {} checkpoints", rows.len(), states.len());
    write!(out, "{report}")?;
    let ok = report.is_ok();
    writeln!(out, "{}", if ok { "all checks passed" } else { "checks failed" })?;
    Ok(if ok { EXIT_OK } else { EXIT_ERROR })
}

pub fn cmd_generate_schedule(args: &CommonArgs, out: &mut impl Write) -> Result<i32> {
    let cfg = args.load()?;
    let schedule = cfg.build_schedule()?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let json = dir.join("schedule.json");
    fs::write(&json, serde_json::to_string(&schedule)? + "\n")?;
    let edges = dir.join("union_edges.csv");
    schedule.write_union_edges(cfg.stop.max_rounds, fs::File::create(&edges)?)?;
    writeln!(out, "wrote {} and {}", json.display(), edges.display())?;
    Ok(EXIT_OK)
}
