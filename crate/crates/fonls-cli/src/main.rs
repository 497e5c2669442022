use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fonls_core::dynamics::{dump_field, evolve_with, IntegratorConfig};
use fonls_core::linops::OperatorSelect;
use fonls_core::orbit::{OrbitFitter, StabilitySweep};
use fonls_core::Error;

use fonls_cli::checks::{self, Session};
use fonls_cli::config::{Overrides, RunConfig};
use fonls_cli::report::{CheckRecord, VerificationReport};

/// Numerical verification toolkit for the fourth-order cubic dispersive
/// wave equation: spectra, positivity certificates, coercivity constants,
/// and stability experiments around the solitary wave.
#[derive(Parser)]
#[command(name = "fonls", version, max_term_width = 100)]
struct Cli {
    /// Flat key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Half-length of the spatial domain [-L, L]
    #[arg(long = "grid-L", global = true, value_name = "L")]
    grid_l: Option<f64>,
    /// Number of spatial grid points (even)
    #[arg(long = "grid-N", global = true, value_name = "N")]
    grid_n: Option<usize>,
    /// Integrator time step
    #[arg(long, global = true, value_name = "DT")]
    dt: Option<f64>,
    /// Horizon for time integration (also steers the stability sweep)
    #[arg(long, global = true, value_name = "T")]
    tmax: Option<f64>,
    /// Seed for every randomized check
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// Output directory for reports and trajectory artifacts
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the full JSON report to stdout instead of summary lines
    #[arg(long, global = true)]
    json: bool,
    /// Also write trajectory CSV files where a run produces them
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    L1,
    L2,
}

impl From<OpArg> for OperatorSelect {
    fn from(v: OpArg) -> Self {
        match v {
            OpArg::L1 => OperatorSelect::L1,
            OpArg::L2 => OperatorSelect::L2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the solitary wave: profile equation residual and invariant levels
    VerifyWave,
    /// Eigenvalue structure of a linearized operator, with refinement checks
    Spectrum {
        /// Which linearized block to decompose
        #[arg(long, value_enum, default_value = "l1")]
        op: OpArg,
        /// Re-run the counts on refined and widened grids
        #[arg(long)]
        robust: bool,
    },
    /// Total positivity certificates and the frequency-side operator family
    Totalpos,
    /// The sign of the scaling-criticality quantity, by two routes
    Weinstein,
    /// Constrained minima, subspace bounds, and the penalty calibration
    Coercivity,
    /// Integrate the standing wave and check conservation, order, reversibility
    Evolve,
    /// Fit modulation parameters for a perturbed state and check invariance
    OrbitFit,
    /// Lyapunov functional: orbit values, symmetry pairings, quadratic bound
    Lyapunov,
    /// Perturbation sweep: distances stay bounded and ordered by amplitude
    Stability,
    /// Run every check and write the combined report
    ReportAll,
}

impl Command {
    fn slug(&self) -> &'static str {
        match self {
            Command::VerifyWave => "verify-wave",
            Command::Spectrum { .. } => "spectrum",
            Command::Totalpos => "totalpos",
            Command::Weinstein => "weinstein",
            Command::Coercivity => "coercivity",
            Command::Evolve => "evolve",
            Command::OrbitFit => "orbit-fit",
            Command::Lyapunov => "lyapunov",
            Command::Stability => "stability",
            Command::ReportAll => "report-all",
        }
    }
}

/// Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
/// error, 3 numerical abort.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

enum RunError {
    Usage(String),
    Core(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| RunError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        grid_l: cli.grid_l,
        grid_n: cli.grid_n,
        dt: cli.dt,
        t_max: cli.tmax,
        seed: cli.seed,
        out_dir: cli.out.clone(),
    };
    cfg.apply(&overrides);
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(Error::from)?;
        }
    }
    fs::write(path, bytes).map_err(Error::from)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    write_bytes(path, text.as_bytes())
}

fn write_stability_csv(out_dir: &Path, sweep: &StabilitySweep) -> Result<(), RunError> {
    let mut summary = String::from("family,delta0,sup_distance,v0,lyapunov_drift,chain_ok\n");
    for run in &sweep.runs {
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sweep.family.label(),
            run.delta0,
            run.sup_distance,
            run.v0,
            run.lyapunov_drift,
            run.chain_ok
        ));
    }
    write_text(&out_dir.join("stability-sweep.csv"), &summary)?;
    for (k, run) in sweep.runs.iter().enumerate() {
        let mut body = String::from("t,distance,theta,shift,lyapunov\n");
        for i in 0..run.times.len() {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                run.times[i], run.distances[i], run.thetas[i], run.shifts[i], run.lyapunov[i]
            ));
        }
        write_text(&out_dir.join(format!("stability-run-{k}.csv")), &body)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let cfg = load_config(&cli)?;
    let slug = cli.command.slug();
    let session = Session::new(cfg).map_err(RunError::Core)?;
    let cfg = &session.cfg;

    let mut sweep_artifact: Option<StabilitySweep> = None;
    let mut evolve_rows: Vec<(f64, f64, f64)> = Vec::new();

    let records: Vec<CheckRecord> = match &cli.command {
        Command::VerifyWave => {
            let mut r = checks::check_wave(&session)?;
            r.extend(checks::check_kernel_residuals(&session)?);
            r
        }
        Command::Spectrum { op, robust } => {
            let mut r = checks::check_spectrum(&session, (*op).into())?;
            if *robust {
                r.extend(checks::check_spectrum_robustness(&session)?);
            }
            r
        }
        Command::Totalpos => checks::check_totalpos(&session)?,
        Command::Weinstein => checks::check_weinstein(&session)?,
        Command::Coercivity => checks::check_coercivity(&session)?,
        Command::Evolve => {
            let records = checks::check_dynamics(&session)?;
            // re-run the recorded trajectory for the artifacts; the check
            // itself only keeps scalars
            let u0 = session.profile.state();
            let fitter = OrbitFitter::new(&session.profile);
            let icfg = IntegratorConfig::new(cfg.dt, cfg.t_max, cfg.record_every)?;
            let diag = evolve_with(&u0, &icfg, |t, u| {
                let fit = fitter.fit(u)?;
                evolve_rows.push((t, fit.distance, fit.theta1));
                Ok(())
            })?;
            let mut dump = Vec::new();
            dump_field(&diag.terminal, &mut dump)?;
            write_bytes(&cfg.out_dir.join("evolve-final.bin"), &dump)?;
            records
        }
        Command::OrbitFit => checks::check_orbit(&session)?,
        Command::Lyapunov => checks::check_lyapunov(&session)?,
        Command::Stability => {
            let (sweep, records) = checks::run_stability(&session)?;
            sweep_artifact = sweep;
            records
        }
        Command::ReportAll => {
            let (sweep, records) = checks::run_all(&session)?;
            sweep_artifact = sweep;
            records
        }
    };

    let report = VerificationReport::new(slug, &session.cfg, records);

    let json = report.to_json();
    write_text(&session.cfg.out_dir.join(format!("{slug}.json")), &json)?;

    if cli.csv {
        if let Some(sweep) = &sweep_artifact {
            write_stability_csv(&session.cfg.out_dir, sweep)?;
        }
        if !evolve_rows.is_empty() {
            let mut body = String::from("t,distance,theta\n");
            for (t, d, th) in &evolve_rows {
                body.push_str(&format!("{t},{d},{th}\n"));
            }
            write_text(&session.cfg.out_dir.join("evolve-trajectory.csv"), &body)?;
        }
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if cli.json {
        let _ = out.write_all(json.as_bytes());
    } else {
        for check in &report.checks {
            let _ = writeln!(out, "{}", check.summary_line());
        }
        let _ = writeln!(
            out,
            "{} {} ({} checks)",
            if report.overall_pass { "[PASS]" } else { "[FAIL]" },
            slug,
            report.checks.len()
        );
    }
    Ok(report.overall_pass)
}
