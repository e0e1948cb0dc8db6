//! `nlch`: command-line front end for simulations, limit sweeps, the
//! stability study, the property suite and the spectral oracle.
//!
//! Exit codes: 0 success, 1 a run or property failed, 2 configuration error
//! (including a failed hypothesis audit).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use nlch_core::asymptotics::{default_bump, stability_probe, sweep, SweepMode, SweepPlan};
use nlch_core::audit::{audit, AuditReport, Task};
use nlch_core::config::{ConfigDoc, RunConfig};
use nlch_core::diagnostics::{probe_max_principle, worst_lyapunov_increase, worst_mass_balance, DiagnosticsRecord};
use nlch_core::error::{Error, Result};
use nlch_core::io::{save_snapshot, write_field_csv};
use nlch_core::model::RunOptions;
use nlch_core::verify::{oracle_study, run_properties};

const MANIFEST_FORMAT: &str = "nlch-run-manifest";
const MANIFEST_VERSION: u32 = 1;
/// Fitted slopes may fall this far below the theoretical rate.
const SLOPE_SLACK: f64 = 0.05;

#[derive(Parser)]
#[command(name = "nlch", version, about = "Non-local Cahn-Hilliard tumor-growth solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (key = value with [section] headers).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Result directory (output.directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Parallel runs for sweeps and the stability study (sweep.workers).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Seed of random initial data (ic.seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Snapshot stride of simulate (output.snapshot_stride).
    #[arg(long, global = true, value_name = "STRIDE")]
    snapshots: Option<usize>,

    /// Append errors as JSON lines to this file (output.error_log).
    #[arg(long, global = true, value_name = "PATH")]
    error_log: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one trajectory and write diagnostics and snapshots.
    Simulate,
    /// Convergence rate as eps -> 0.
    SweepEps,
    /// Convergence rate as tau -> 0.
    SweepTau,
    /// Convergence rate along eps = tau^p, tau -> 0.
    SweepJoint,
    /// Continuous-dependence ratios across perturbation sizes and tau.
    Stability,
    /// Run the property suite and print a table.
    Verify,
    /// Compare the stepper with the spectral Galerkin oracle.
    OracleCompare,
    /// Print the hypothesis audit without running anything.
    Audit {
        /// Task whose hypotheses are audited.
        #[arg(long = "for", value_enum, default_value = "simulate")]
        task: TaskArg,
    },
}

#[derive(ValueEnum, Clone, Copy)]
enum TaskArg {
    Simulate,
    SweepEps,
    SweepTau,
    SweepJoint,
    Stability,
    Verify,
    OracleCompare,
}

impl TaskArg {
    fn task(self) -> Task {
        match self {
            TaskArg::Simulate => Task::Simulate,
            TaskArg::SweepEps => Task::Sweep(SweepMode::EpsToZero),
            TaskArg::SweepTau => Task::Sweep(SweepMode::TauToZero),
            TaskArg::SweepJoint => Task::Sweep(SweepMode::Joint),
            TaskArg::Stability => Task::Stability,
            TaskArg::Verify => Task::Verify,
            TaskArg::OracleCompare => Task::Oracle,
        }
    }
}

impl Command {
    fn task(self) -> Task {
        match self {
            Command::Simulate => Task::Simulate,
            Command::SweepEps => Task::Sweep(SweepMode::EpsToZero),
            Command::SweepTau => Task::Sweep(SweepMode::TauToZero),
            Command::SweepJoint => Task::Sweep(SweepMode::Joint),
            Command::Stability => Task::Stability,
            Command::Verify => Task::Verify,
            Command::OracleCompare => Task::Oracle,
            Command::Audit { task } => task.task(),
        }
    }
}

/// Result directory that remembers what it wrote, for the manifest.
struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(path)
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.path(name)?;
        fs::write(path, contents)?;
        Ok(())
    }

    fn manifest(&mut self, task: Task, status: &str, code: u8) -> Result<()> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let manifest = json!({
            "format": MANIFEST_FORMAT,
            "format_version": MANIFEST_VERSION,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "task": task.name(),
            "status": status,
            "exit_code": code,
            "snapshot_format": "NLCHF1",
            "files": files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }
}

/// What a subcommand reports back to `main`.
struct Outcome {
    code: u8,
    status: &'static str,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome { code: 0, status: "pass" }
        } else {
            Outcome { code: 1, status: "fail" }
        }
    }
}

struct Session {
    command: &'static str,
    error_log: Option<PathBuf>,
}

impl Session {
    fn log(&self, error: &Error, code: u8) {
        let Some(path) = &self.error_log else { return };
        let kind = if error.is_configuration() { "configuration" } else { "run" };
        let line = json!({
            "command": self.command,
            "kind": kind,
            "exit_code": code,
            "error": error.to_string(),
        });
        let written = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            eprintln!("warning: cannot write error log {}: {e}", path.display());
        }
    }
}

fn exit_code(error: &Error) -> u8 {
    if error.is_configuration() {
        2
    } else {
        1
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut doc = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ConfigDoc::parse(&text)?
        }
        None => ConfigDoc::default(),
    };
    for assignment in &cli.set {
        doc.set_assignment(assignment)?;
    }
    if let Some(out) = &cli.out {
        doc.set("output.directory", &out.to_string_lossy())?;
    }
    if let Some(w) = cli.workers {
        doc.set("sweep.workers", &w.to_string())?;
    }
    if let Some(s) = cli.seed {
        doc.set("ic.seed", &s.to_string())?;
    }
    if let Some(s) = cli.snapshots {
        doc.set("output.snapshot_stride", &s.to_string())?;
    }
    if let Task::Sweep(mode) = cli.command.task() {
        let name = match mode {
            SweepMode::EpsToZero => "eps",
            SweepMode::TauToZero => "tau",
            SweepMode::Joint => "joint",
        };
        doc.set("sweep.mode", name)?;
    }
    RunConfig::from_doc(doc)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = cli.command.task();
    let mut session = Session {
        command: match cli.command {
            Command::Audit { .. } => "audit",
            _ => task.name(),
        },
        error_log: cli.error_log.clone(),
    };
    let code = match run(&cli, &mut session) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            session.log(&e, code);
            code
        }
    };
    ExitCode::from(code)
}

fn run(cli: &Cli, session: &mut Session) -> Result<u8> {
    let cfg = load_config(cli)?;
    if session.error_log.is_none() {
        session.error_log = cfg.output.error_log.clone();
    }
    let task = cli.command.task();
    let report = audit(&cfg, task)?;

    if let Command::Audit { .. } = cli.command {
        print!("{}", report.render());
        if cli.out.is_some() {
            let mut out = OutputDir::create(&cfg.output.directory)?;
            write_preamble(&mut out, &cfg, &report)?;
            let (status, code) = if report.passed() { ("pass", 0) } else { ("audit-failed", 2) };
            out.manifest(task, status, code)?;
        }
        return match report.into_result() {
            Ok(_) => Ok(0),
            Err(e) => Err(e),
        };
    }

    let mut out = OutputDir::create(&cfg.output.directory)?;
    write_preamble(&mut out, &cfg, &report)?;
    if !report.passed() {
        eprint!("{}", report.render());
        out.manifest(task, "audit-failed", 2)?;
        return report.into_result().map(|_| 2);
    }
    println!("audit: PASS ({} checks)", report.items.len());

    let result = match cli.command {
        Command::Simulate => simulate(&cfg, &mut out),
        Command::SweepEps | Command::SweepTau | Command::SweepJoint => run_sweep(&cfg, &mut out),
        Command::Stability => stability(&cfg, &mut out),
        Command::Verify => verify(&cfg, &mut out),
        Command::OracleCompare => oracle(&cfg, &mut out),
        Command::Audit { .. } => unreachable!("handled above"),
    };
    match result {
        Ok(outcome) => {
            out.manifest(task, outcome.status, outcome.code)?;
            Ok(outcome.code)
        }
        Err(e) => {
            let code = exit_code(&e);
            out.manifest(task, "error", code)?;
            Err(e)
        }
    }
}

fn write_preamble(out: &mut OutputDir, cfg: &RunConfig, report: &AuditReport) -> Result<()> {
    out.write("config.resolved", cfg.doc.resolved().as_bytes())?;
    out.write("audit.txt", report.render().as_bytes())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let model = cfg.model()?;
    let init = cfg.initial_data(&model)?;
    let options = RunOptions {
        snapshot_stride: cfg.output.snapshot_stride,
        record_lyapunov: true,
    };
    let (traj, failure) = match model.run(&init, &options, &mut []) {
        Ok(t) => (t, None),
        Err(f) => (*f.partial, Some(f.error)),
    };

    if cfg.output.diagnostics_csv {
        let bytes = csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(DiagnosticsRecord::CSV_HEADER)?;
            for r in &traj.diagnostics {
                w.write_record(r.csv_row())?;
            }
            w.flush()?;
            Ok(())
        })?;
        out.write("diagnostics.csv", &bytes)?;
    }
    if cfg.output.snapshots {
        for s in &traj.snapshots {
            let step = (s.t / model.params.dt).round() as u64;
            for (name, field) in [("phi", &s.phi), ("mu", &s.mu), ("sigma", &s.sigma)] {
                let path = out.path(&format!("snapshots/{name}_{step:08}.nlchf1"))?;
                save_snapshot(path, field)?;
            }
        }
    }
    if cfg.output.field_csv {
        let last = traj.final_state();
        for (name, field) in [("phi", &last.phi), ("mu", &last.mu), ("sigma", &last.sigma)] {
            let bytes = csv_bytes(|buf| write_field_csv(buf, field))?;
            out.write(&format!("{name}_final.csv"), &bytes)?;
        }
    }

    let last = traj.final_state();
    let mp = probe_max_principle(&traj);
    let mut summary = format!(
        "steps {} of {}, t = {}\nmass-balance residual (max, relative) {:.3e}\nsigma range [{:.6e}, {:.6}]\n|phi|_inf at t = {}: {:.6}\n",
        traj.diagnostics.len() - 1,
        model.params.steps(),
        last.t,
        worst_mass_balance(&traj),
        mp.sigma_min,
        mp.sigma_max,
        last.t,
        last.phi.sup_norm(),
    );
    if traj.diagnostics.len() > 1 {
        summary += &format!(
            "largest per-step Lyapunov change {:.3e}\n",
            worst_lyapunov_increase(&traj)
        );
    }
    print!("{summary}");
    out.write("summary.txt", summary.as_bytes())?;
    match failure {
        None => Ok(Outcome { code: 0, status: "pass" }),
        Some(e) => Err(e),
    }
}

fn run_sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let (phi, sigma) = cfg.targets()?;
    let mut plan = SweepPlan::new(cfg.sweep.mode, cfg.model()?, phi, sigma);
    plan.values = cfg.sweep.values.clone();
    plan.coupling_power = cfg.sweep.coupling;
    plan.m0 = cfg.sweep.m0;
    plan.workers = cfg.sweep.workers;
    plan.snapshot_stride = cfg.sweep.snapshot_stride;
    let report = sweep(&plan)?;
    let min_slope = cfg.sweep.mode.theoretical_slope() - SLOPE_SLACK;
    let bytes = csv_bytes(|buf| report.write_csv(buf))?;
    out.write("rates.csv", &bytes)?;
    let summary = report.summary(min_slope);
    print!("{summary}");
    out.write("summary.txt", summary.as_bytes())?;
    Ok(Outcome::from_pass(report.passes(min_slope)))
}

fn stability(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let model = cfg.model()?;
    let init = cfg.initial_data(&model)?;
    let bump = default_bump(&cfg.grid);
    let report = stability_probe(
        &model,
        &init,
        &bump,
        &cfg.stability.taus,
        &cfg.stability.deltas,
        cfg.sweep.workers,
    )?;
    let bytes = csv_bytes(|buf| report.write_csv(buf))?;
    out.write("stability.csv", &bytes)?;
    let summary = report.summary();
    print!("{summary}");
    out.write("summary.txt", summary.as_bytes())?;
    Ok(Outcome::from_pass(report.passes()))
}

fn verify(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let table = run_properties(cfg)?;
    let text = table.render();
    print!("{text}");
    out.write("properties.txt", text.as_bytes())?;
    Ok(Outcome::from_pass(table.passed()))
}

fn oracle(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let study = oracle_study(cfg, |c, m| c.initial_data(m))?;
    let bytes = csv_bytes(|buf| study.write_csv(buf))?;
    out.write("oracle.csv", &bytes)?;
    let summary = study.summary();
    print!("{summary}");
    out.write("summary.txt", summary.as_bytes())?;
    Ok(Outcome::from_pass(study.passes()))
}
