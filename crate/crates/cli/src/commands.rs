//! `run`, `sweep`, `picard` and `inspect`.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use npe_core::diagnostics::{invariant_report, InvariantTolerances};
use npe_core::experiments::{inviscid_sweep, mollification_sweep, picard_solve, Quantity, SweepBase};
use npe_core::{integrate, DiagnosticsRecord, FnSink, PicardReport, Sink, SimState, SweepReport};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, InitialConfig, RunConfig};
use crate::snapshot::{read_snapshot, write_snapshot, FORMAT_VERSION};
use crate::series::{read_series, SeriesWriter};
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Abort when a recorded state fails an invariant check.
    pub strict_invariants: bool,
    /// Continue from this snapshot instead of the configured initial data.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_time: f64,
    pub rows: usize,
    pub snapshots: Vec<PathBuf>,
}

/// Builds the initial state from the configured preset or snapshot.
pub fn initial_state(cfg: &RunConfig) -> Result<SimState, CliError> {
    let grid = cfg.grid();
    match &cfg.initial {
        InitialConfig::Snapshot(snap) => {
            let (state, _) = read_snapshot(&snap.path)?;
            if state.grid() != grid {
                return Err(ConfigError::Invalid(format!(
                    "initial snapshot has n = {}, config has n = {}",
                    state.grid().n(),
                    grid.n()
                ))
                .into());
            }
            Ok(state)
        }
        other => {
            let preset = other.preset().expect("non-snapshot initial config");
            Ok(preset.build(grid, cfg.seed)?)
        }
    }
}

fn snapshot_name(dir: &Path, time: f64) -> PathBuf {
    dir.join(format!("snapshot_t{time:.6}.npe"))
}

fn io_error(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Integrates to `time.t_end`, writing the series and periodic snapshots.
pub fn run_simulation(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let params = cfg.params();
    let state = match &opts.resume {
        Some(path) => {
            let (state, stored) = read_snapshot(path)?;
            if state.grid() != cfg.grid() {
                return Err(ConfigError::Invalid(format!(
                    "resume snapshot has n = {}, config has n = {}",
                    state.grid().n(),
                    cfg.grid.n
                ))
                .into());
            }
            if stored != params {
                return Err(ConfigError::Invalid(
                    "resume snapshot was written with different physical parameters".into(),
                )
                .into());
            }
            state
        }
        None => initial_state(cfg)?,
    };
    let t_start = state.time;
    if cfg.time.t_end < t_start {
        return Err(ConfigError::Invalid(format!(
            "time.t_end = {} precedes the start time {t_start}",
            cfg.time.t_end
        ))
        .into());
    }

    let out = &cfg.output;
    let series_path = &out.series_path;
    let mut writer = if opts.resume.is_some() && series_path.exists() {
        // keep the rows before the checkpoint, rewrite from there on
        let tol = 1e-9 * out.series_interval;
        let kept: Vec<_> = read_series(series_path)?
            .into_iter()
            .filter(|r| r.time < t_start - tol)
            .collect();
        let mut w = SeriesWriter::create(series_path)?;
        for r in &kept {
            w.write(r)?;
        }
        w
    } else {
        SeriesWriter::create(series_path)?
    };
    if out.snapshot_interval.is_some() {
        fs::create_dir_all(&out.snapshot_dir)
            .map_err(io_error(format!("creating {}", out.snapshot_dir.display())))?;
    }

    let failure: RefCell<Option<CliError>> = RefCell::new(None);
    let mut rows = 0usize;
    let mut snapshots = Vec::new();
    let tolerances = InvariantTolerances {
        initial_mean_sigma: Some(state.sigma.mean()),
        ..Default::default()
    };

    let result = {
        let mut series_sink = FnSink::new(out.series_interval, |s: &SimState| {
            let fail = |e: CliError| {
                let msg = e.to_string();
                *failure.borrow_mut() = Some(e);
                msg
            };
            let record = DiagnosticsRecord::compute(s, &params).map_err(|e| fail(e.into()))?;
            writer.write(&record).map_err(|e| fail(e.into()))?;
            rows += 1;
            if opts.strict_invariants {
                let report = invariant_report(s, &tolerances);
                if !report.all_passed() {
                    let detail = report
                        .failures()
                        .map(|c| format!("{} (residual {:e})", c.name, c.residual))
                        .collect::<Vec<_>>()
                        .join(", ");
                    return Err(fail(CliError::Invariant { time: s.time, detail }));
                }
            }
            Ok(())
        });
        let mut snapshot_sink = out.snapshot_interval.map(|interval| {
            FnSink::new(interval, |s: &SimState| {
                let path = snapshot_name(&out.snapshot_dir, s.time);
                write_snapshot(s, &params, &path).map_err(|e| {
                    let msg = e.to_string();
                    *failure.borrow_mut() = Some(e.into());
                    msg
                })?;
                snapshots.push(path);
                Ok(())
            })
        });
        let mut sinks: Vec<&mut dyn Sink> = vec![&mut series_sink];
        if let Some(s) = snapshot_sink.as_mut() {
            sinks.push(s);
        }
        integrate(state, &params, &cfg.time.stepper(), &mut sinks)
    };
    let final_state = match result {
        Ok(s) => s,
        Err(e) => {
            let _ = writer.flush();
            return Err(failure.into_inner().unwrap_or(e.into()));
        }
    };
    writer.flush()?;
    Ok(RunSummary {
        final_time: final_state.time,
        rows,
        snapshots,
    })
}

fn write_report<T: Serialize>(report: &T, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("reports serialize");
    fs::write(path, json).map_err(io_error(format!("writing {}", path.display())))
}

/// Runs the configured sweep and writes its JSON report.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport, CliError> {
    let experiment = cfg
        .experiment
        .as_ref()
        .filter(|e| e.is_sweep())
        .ok_or_else(|| ConfigError::Invalid("`sweep` needs an inviscid-sweep or mollification-sweep experiment".into()))?;
    let settings = experiment.sweep_settings(cfg.time.t_end).expect("sweep experiment");
    let base = SweepBase {
        initial: initial_state(cfg)?,
        params: cfg.params(),
        dt: cfg.time.dt,
    };
    let report = match experiment {
        ExperimentConfig::InviscidSweep { nu_list, mode, .. } => inviscid_sweep(&base, nu_list, &settings, *mode)?,
        ExperimentConfig::MollificationSweep { ell_list, .. } => mollification_sweep(&base, ell_list, &settings)?,
        ExperimentConfig::Picard { .. } => unreachable!("filtered above"),
    };
    write_report(&report, &cfg.output.report_path)?;
    if !report.is_complete() {
        let failed = report
            .failures
            .iter()
            .map(|f| format!("{} = {}: {}", parameter_name(&report), f.value, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::PartialSweep(failed));
    }
    Ok(report)
}

fn parameter_name(report: &SweepReport) -> String {
    serde_json::to_value(report.parameter)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Human-readable summary of a sweep: one slope line per (time, s).
pub fn describe_sweep(report: &SweepReport) -> String {
    let mut out = String::new();
    let name = parameter_name(report);
    for m in &report.members {
        for d in &m.differences {
            for n in &d.norms {
                let _ = writeln!(
                    out,
                    "{name}={:<10e} t={:<6} s={} rho={:.6e} sigma={:.6e} u={:.6e}",
                    m.value, d.time, n.s, n.rho, n.sigma, n.u
                );
            }
        }
    }
    for f in report.slopes.iter().filter(|f| f.quantity == Quantity::Total) {
        let _ = writeln!(
            out,
            "slope t={} s={}: {:.4} (rms {:.2e}, {} points)",
            f.time, f.s, f.slope, f.rms_residual, f.points
        );
    }
    out
}

/// Runs the configured Picard iteration and writes its JSON report.
pub fn run_picard(cfg: &RunConfig) -> Result<PicardReport, CliError> {
    let pc = cfg
        .experiment
        .as_ref()
        .and_then(ExperimentConfig::picard_config)
        .ok_or_else(|| ConfigError::Invalid("`picard` needs a picard experiment".into()))?;
    let report = picard_solve(&initial_state(cfg)?, &cfg.params(), &pc)?;
    write_report(&report, &cfg.output.report_path)?;
    Ok(report)
}

pub fn describe_picard(report: &PicardReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "T0 = {:e}{} over {} steps of {:e}, size proxy {:.4}",
        report.t0,
        if report.t0_is_default { " (heuristic default)" } else { "" },
        report.steps,
        report.dt,
        report.size_proxy
    );
    for (n, (d, u)) in report.deltas.iter().zip(&report.upsilons).enumerate() {
        let q = match report.ratios.get(n) {
            Some(Some(q)) => format!("{q:.4}"),
            Some(None) => "roundoff".into(),
            None => "-".into(),
        };
        let _ = writeln!(out, "n={n:<3} delta={d:.6e} upsilon={u:.6e} q={q}");
    }
    let _ = writeln!(out, "nonlinear residual {:.3e}", report.nonlinear_residual);
    out
}

/// Header and diagnostics of a snapshot file.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let (state, params) = read_snapshot(path)?;
    let record = DiagnosticsRecord::compute(&state, &params)?;
    let mut out = String::new();
    let _ = writeln!(out, "format      NPE2 v{FORMAT_VERSION}");
    let _ = writeln!(out, "n           {}", state.grid().n());
    let _ = writeln!(out, "time        {:e}", state.time);
    let _ = writeln!(out, "variant     {:?}", params.variant);
    let _ = writeln!(out, "diffusivity {:e}", params.diffusivity);
    let _ = writeln!(out, "epsilon     {:e}", params.epsilon);
    let _ = writeln!(out, "kbtk        {:e}", params.kbtk);
    let _ = writeln!(out, "nu          {:e}", params.nu);
    let _ = writeln!(out, "ell         {:e}", params.ell);
    for (name, v) in DiagnosticsRecord::COLUMNS.iter().zip(record.to_row()).skip(1) {
        let _ = writeln!(out, "{name:<20} {v:e}");
    }
    Ok(out)
}
