use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oscnet::error::OscError;
use oscnet::fixtures;
use oscnet::model::{parse_netlist, render_netlist, Network};
use oscnet::report::{self, AnalysisReport, IcSpec, SimulateOptions, Simulation};
use oscnet::spectral::{SyncOptions, DEFAULT_SEED};

const EXIT_ERROR: u8 = 3;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Osc(#[from] OscError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serializing summary: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, CliError>;

/// Decide whether a network of identical LC oscillators coupled through resistors and
/// inductors synchronizes.
///
/// Exit status: 0 synchronous, 1 not synchronous, 2 outside the theory, 3 error.
#[derive(Debug, Parser)]
#[command(name = "oscnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Write the JSON report here instead of printing it to stdout.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Absolute threshold on |Re λ| for counting an eigenvalue as imaginary.
    #[arg(long, value_name = "FLOAT")]
    tol_imag: Option<f64>,
    /// Seed for the randomized spectral check and random initial conditions.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full analysis on a netlist and report the verdict.
    Analyze {
        netlist: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Refuse references to undeclared nodes.
        #[arg(long)]
        strict: bool,
    },
    /// Simulate the linear dynamics and check the verdict against the trajectory.
    Simulate {
        netlist: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strict: bool,
        #[arg(long, value_name = "T")]
        t_end: Option<f64>,
        #[arg(long, value_name = "DT")]
        dt: Option<f64>,
        /// `random`, `sync` or `mode:<k>` (0-based index into the printed mode list).
        #[arg(long, default_value = "random", value_parser = parse_ic)]
        ic: IcSpec,
        /// Write `t,v1..vq,W` samples here.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Analyze a built-in example network.
    Demo {
        name: DemoName,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
        /// Also write the example as a netlist file.
        #[arg(long, value_name = "PATH")]
        netlist: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DemoName {
    /// Four coupled LC tanks with inductive coupling scaled by `--alpha`.
    #[value(name = "section8")]
    FourTank,
}

fn parse_ic(s: &str) -> std::result::Result<IcSpec, String> {
    s.parse().map_err(|e: OscError| e.to_string())
}

fn read_network(path: &Path, strict: bool) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(parse_netlist(&text, strict)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

fn fmt_complex(re: f64, im: f64) -> String {
    if im < 0.0 {
        format!("{re:.6}-{:.6}j", -im)
    } else {
        format!("{re:.6}+{im:.6}j")
    }
}

fn label<T: serde::Serialize>(value: T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn stdout(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn summary(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "decision: {} ({})", label(r.verdict.decision), label(r.verdict.method));
    let _ = writeln!(out, "{}", r.verdict.explanation);
    if let Some(s) = &r.spectrum {
        let eigs: Vec<String> = s.eigenvalues.iter().map(|z| fmt_complex(z.re, z.im)).collect();
        let _ = writeln!(out, "eigenvalues of Y: {}", eigs.join(", "));
        if !s.marginal.is_empty() {
            let _ = writeln!(out, "marginal eigenvalues (indices): {:?}", s.marginal);
        }
    }
    if let Some(w) = &r.witness {
        let _ = writeln!(out, "undamped non-synchronous mode at omega = {:.12}", w.omega);
    }
    out
}

fn emit_analysis(r: &AnalysisReport, json: Option<&Path>) -> Result<u8> {
    let json_text = r.to_json();
    match json {
        Some(path) => {
            write(path, &json_text)?;
            stdout(&summary(r))?;
        }
        None => stdout(&(json_text + "\n"))?,
    }
    Ok(r.exit_code() as u8)
}

fn simulation_summary(sim: &Simulation) -> String {
    let mut out = String::new();
    let s = &sim.summary;
    let _ = writeln!(out, "t_end = {}, dt = {}, samples = {}, ic = {}", s.t_end, s.dt, s.samples, s.ic);
    for m in &s.modes {
        let _ = writeln!(out, "  mode {}: {}", m.index, fmt_complex(m.lambda.re, m.lambda.im));
    }
    match &s.sync {
        Some(m) => {
            let _ = writeln!(out, "sync metric: {:.6e} (nontrivial: {})", m.metric, m.nontrivial);
        }
        None => {
            let _ = writeln!(out, "sync metric: not computed, horizon shorter than five periods");
        }
    }
    let _ = writeln!(
        out,
        "energy nonincreasing: {} (largest increase {:.3e})",
        s.energy_nonincreasing, s.energy_max_increase
    );
    let _ = writeln!(out, "fit residual {:.3e}, dynamics residual {:.3e}", s.fit_residual, s.dynamics_residual);
    let corroborates = s.sync.as_ref().map_or("n/a".to_string(), |m| m.corroborates.to_string());
    let _ = writeln!(out, "verdict: {}, simulation corroborates: {corroborates}", label(s.verdict));
    out
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze { netlist, common, strict } => {
            let net = read_network(&netlist, strict)?;
            let opts = SyncOptions { seed: common.seed, tol_imag: common.tol_imag };
            emit_analysis(&report::analyze(&net, &opts)?, common.json.as_deref())
        }
        Command::Simulate { netlist, common, strict, t_end, dt, ic, csv } => {
            let net = read_network(&netlist, strict)?;
            let opts = SimulateOptions { t_end, dt, ic, seed: common.seed, tol_imag: common.tol_imag };
            let sim = report::simulate(&net, &opts)?;
            if let Some(path) = &csv {
                write(path, &sim.csv())?;
            }
            if let Some(path) = &common.json {
                write(path, &sim.summary.to_json())?;
            }
            stdout(&simulation_summary(&sim))?;
            Ok(sim.summary.verdict.exit_code() as u8)
        }
        Command::Demo { name: DemoName::FourTank, alpha, common, netlist } => {
            let net = fixtures::try_four_tank(alpha)?;
            if let Some(path) = &netlist {
                write(path, &render_netlist(&net))?;
            }
            let opts = SyncOptions { seed: common.seed, tol_imag: common.tol_imag };
            emit_analysis(&report::analyze(&net, &opts)?, common.json.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
