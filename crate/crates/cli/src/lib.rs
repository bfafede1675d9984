//! Command-line front end: subcommands, overrides and exit codes.
//!
//! Exit codes: 0 success, 1 a verification failed, 2 configuration or usage
//! error, 3 integration aborted.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use monodomain_funnel::closed_loop::FemDiscretization;
use monodomain_funnel::config::{parse_config, RunConfig, ScenarioKind};
use monodomain_funnel::integrate::TrajectoryLog;
use monodomain_funnel::io::{self, Snapshot};
use monodomain_funnel::model::energy_budget;
use monodomain_funnel::scenario::{self, TrackingSetup};
use monodomain_funnel::spectral::build_basis;
use monodomain_funnel::verify::{self, HolderField, Tolerance, VerificationReport};
use monodomain_funnel::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fhn-funnel", version, about = "FitzHugh-Nagumo monodomain simulations under funnel control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Common {
    /// TOML configuration document; omitted keys take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Controller gain.
    #[arg(long)]
    k0: Option<f64>,
    /// Finite element cells per side, `N` or `NXxNY`.
    #[arg(long, value_parser = parse_pair)]
    mesh: Option<[usize; 2]>,
    /// Largest spectral index per axis, `N` or `JxK`.
    #[arg(long, value_parser = parse_pair)]
    modes: Option<[usize; 2]>,
    /// Horizon of the primary run of the subcommand.
    #[arg(long)]
    t_end: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop reference run from rest driven by the two stimulus pulses.
    Reference(Common),
    /// S1-S2 protocol; writes the snapshot only if activity persists.
    Reentry(Common),
    /// Closed-loop tracking run from the reentry snapshot.
    Track(Common),
    /// Eigenmode decay under pure diffusion on both discretizations, plus mass conservation.
    DiffusionTest(Common),
    /// Finite element versus spectral outputs from a smooth initial state.
    Converge(Common),
    /// Runs one check on an existing trajectory CSV.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    log: PathBuf,
    /// funnel, holder, boundedness or energy.
    #[arg(long)]
    check: String,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `y` or `v_l2` for the Hölder check.
    #[arg(long, default_value = "y")]
    field: String,
}

fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

enum Outcome {
    Reports(Vec<VerificationReport>),
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::IntegrationAbort { .. } | Error::FunnelViolation { .. } => EXIT_ABORT,
        Error::ReentryNotEstablished { .. } => EXIT_CHECK_FAILED,
        _ => EXIT_CONFIG,
    }
}

fn load_config(common: &Common, kind: ScenarioKind) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cfg.scenario {
        if s != kind {
            return Err(Error::Config {
                key: Some("scenario".into()),
                line: None,
                message: format!("document is for `{}` but `{}` was requested", s.name(), kind.name()),
            });
        }
    }
    if let Some(k0) = common.k0 {
        cfg.controller.k0 = k0;
    }
    if let Some(m) = common.mesh {
        cfg.discretization.mesh = m;
    }
    if let Some(m) = common.modes {
        cfg.discretization.modes = m;
    }
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(t) = common.t_end {
        match kind {
            ScenarioKind::Reference => cfg.times.reference_t_end = t,
            ScenarioKind::Track => {
                cfg.times.track_t_end = t;
                cfg.times.reference_t_end = cfg.times.reference_t_end.max(t);
            }
            ScenarioKind::Reentry => cfg.reentry.snapshot_time = t,
            ScenarioKind::DiffusionTest => cfg.diffusion_test.t_end = t,
            ScenarioKind::Converge => cfg.converge.t_end = t,
            ScenarioKind::Verify => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn fem(cfg: &RunConfig) -> Result<FemDiscretization, Error> {
    let [nx, ny] = cfg.discretization.mesh;
    FemDiscretization::new(nx, ny, &cfg.model)
}

/// Peak of `||y_ref||` and the largest value after the first pulse has died out.
fn quiescence(log: &TrajectoryLog, window: (f64, f64)) -> (f64, f64) {
    let norm = |y: &[f64]| y.iter().map(|x| x * x).sum::<f64>().sqrt();
    let peak = log.samples.iter().map(|s| norm(&s.y)).fold(0.0, f64::max);
    let rest = log
        .samples
        .iter()
        .filter(|s| s.t >= window.0 && s.t <= window.1)
        .map(|s| norm(&s.y))
        .fold(0.0, f64::max);
    (peak, rest)
}

fn run_reference(cfg: &RunConfig) -> Result<Outcome, Error> {
    let disc = fem(cfg)?;
    let log = scenario::generate_reference(
        &disc,
        &cfg.model,
        &cfg.stimulus,
        cfg.times.reference_t_end,
        &cfg.integrator,
        cfg.times.sample_dt,
    )?;
    ensure_dir(&cfg.output.dir)?;
    io::write_trajectory(&log, &cfg.output.reference_path())?;
    let (peak, rest) = quiescence(&log, (150.0, 290.0));
    println!("reference: peak |y_ref| = {peak}, max |y_ref| on [150, 290] = {rest} ({:.3}% of peak)", 100.0 * rest / peak);
    Ok(Outcome::Reports(vec![verify::boundedness_check(&log, &cfg.checks.ceilings())]))
}

fn activity_floor(cfg: &RunConfig, disc: &FemDiscretization) -> Result<f64, Error> {
    match cfg.reentry.activity_floor {
        Some(f) => Ok(f),
        None => scenario::derived_activity_floor(
            disc,
            &cfg.model,
            &cfg.stimulus,
            cfg.reentry.activity_fraction,
            &cfg.integrator,
            cfg.times.sample_dt,
        ),
    }
}

fn run_reentry(cfg: &RunConfig) -> Result<Outcome, Error> {
    let disc = fem(cfg)?;
    let floor = activity_floor(cfg, &disc)?;
    let run = scenario::generate_reentry(&disc, &cfg.model, &cfg.reentry, floor, &cfg.integrator, cfg.times.sample_dt)?;
    let [nx, ny] = cfg.discretization.mesh;
    ensure_dir(&cfg.output.dir)?;
    io::write_snapshot(&Snapshot::from_state(nx, ny, run.snapshot_time, &run.state)?, &cfg.output.snapshot_path())?;
    println!(
        "reentry: |v| = {} at t = {}, {} at t = {} (floor {floor})",
        run.v_l2_at_snapshot,
        run.snapshot_time,
        run.v_l2_later,
        run.snapshot_time + cfg.reentry.persistence
    );
    Ok(Outcome::Reports(Vec::new()))
}

fn run_track(cfg: &RunConfig) -> Result<Outcome, Error> {
    let disc = fem(cfg)?;
    let [nx, ny] = cfg.discretization.mesh;
    let reference = scenario::generate_reference(
        &disc,
        &cfg.model,
        &cfg.stimulus,
        cfg.times.reference_t_end,
        &cfg.integrator,
        cfg.times.sample_dt,
    )?;
    let reentry = scenario::simulate_reentry(&disc, &cfg.model, &cfg.reentry, &cfg.integrator, cfg.times.sample_dt)?;
    let setup = TrackingSetup {
        funnel: cfg.funnel,
        controller: cfg.controller,
        t_end: cfg.times.track_t_end,
        sample_dt: cfg.times.sample_dt,
    };
    let run = scenario::run_tracking_experiment(&disc, &cfg.model, &reentry.state, &reference, &setup, &cfg.integrator)?;

    ensure_dir(&cfg.output.dir)?;
    io::write_trajectory(&reference, &cfg.output.reference_path())?;
    io::write_snapshot(
        &Snapshot::from_state(nx, ny, reentry.snapshot_time, &reentry.state)?,
        &cfg.output.snapshot_path(),
    )?;
    io::write_trajectory(&run.log, &cfg.output.track_path())?;
    println!(
        "track: {} samples, {} accepted / {} rejected steps; initial |v| = {}",
        run.log.len(),
        run.stats.accepted,
        run.stats.rejected,
        reentry.v_l2_at_snapshot
    );
    Ok(Outcome::Reports(vec![
        verify::check_funnel_invariant(&run.log, cfg.checks.funnel_delta)?,
        verify::holder_estimate(&run.log, HolderField::Output, cfg.checks.holder_lambda, cfg.checks.holder_delta)?,
        verify::boundedness_check(&run.log, &cfg.checks.ceilings()),
    ]))
}

fn run_diffusion_test(cfg: &RunConfig) -> Result<Outcome, Error> {
    let disc = fem(cfg)?;
    let [mj, mk] = cfg.discretization.modes;
    let basis = build_basis(mj, mk, &cfg.model)?;
    let d = &cfg.diffusion_test;
    let int = cfg.diffusion_integrator();
    let [fem_report, spec_report] = verify::eigendecay_study(
        &cfg.model,
        &disc,
        &basis,
        (d.mode[0], d.mode[1]),
        d.t_end,
        &int,
        Tolerance::relative(d.fem_tolerance),
        Tolerance::absolute(d.spectral_tolerance),
    )?;
    let v0 = disc.mesh.interpolate(|x, y| 1.0 + x * x * (1.0 - y));
    let mass = verify::mass_conservation_check(&disc, &cfg.model, &v0, 10.0, &cfg.integrator, 1e-6)?;
    Ok(Outcome::Reports(vec![fem_report, spec_report, mass]))
}

fn run_converge(cfg: &RunConfig) -> Result<Outcome, Error> {
    let [mj, mk] = cfg.discretization.modes;
    let basis = build_basis(mj, mk, &cfg.model)?;
    let c = &cfg.converge;
    let int = cfg.converge_integrator();
    let fine = fem(cfg)?;
    let (fine_log, spec_log) = verify::smooth_open_loop_logs(&cfg.model, &fine, &basis, c.t_end, c.sample_dt, &int)?;
    let mut report = verify::cross_discretization_check(&fine_log, &spec_log, c.tolerance)?;

    let [cx, cy] = c.coarse_mesh;
    let coarse = FemDiscretization::new(cx, cy, &cfg.model)?;
    let (coarse_log, _) = verify::smooth_open_loop_logs(&cfg.model, &coarse, &basis, c.t_end, c.sample_dt, &int)?;
    let (coarse_gap, _) = verify::output_gap(&coarse_log, &spec_log)?;
    let fine_gap = report.measured("gap").unwrap_or(f64::NAN);
    let mut refinement = report.clone();
    refinement.check = "refinement".into();
    refinement.passed = coarse_gap > fine_gap;
    refinement.tolerance = "coarse gap > fine gap".into();
    refinement.note = format!("{cx}x{cy} against the configured mesh");
    refinement.measured = vec![
        verify::Measurement {
            name: "fine_gap".into(),
            value: fine_gap,
        },
        verify::Measurement {
            name: "coarse_gap".into(),
            value: coarse_gap,
        },
    ];
    refinement.offending_times = if refinement.passed { Vec::new() } else { vec![c.t_end] };
    report.check = "cross-discretization".into();
    Ok(Outcome::Reports(vec![report, refinement]))
}

fn run_verify(args: &VerifyArgs, cfg: &RunConfig) -> Result<Outcome, Error> {
    let log = io::read_trajectory(&args.log)?;
    let report = match args.check.as_str() {
        "funnel" => verify::check_funnel_invariant(&log, args.delta.unwrap_or(cfg.checks.funnel_delta))?,
        "holder" => verify::holder_estimate(
            &log,
            args.field.parse()?,
            args.lambda.unwrap_or(cfg.checks.holder_lambda),
            args.delta.unwrap_or(cfg.checks.holder_delta),
        )?,
        "boundedness" => verify::boundedness_check(&log, &cfg.checks.ceilings()),
        "energy" => {
            let horizon = args.delta.unwrap_or(cfg.funnel.gamma);
            let mut prefix = log.clone();
            prefix.samples.retain(|s| s.t <= horizon);
            let first = prefix
                .samples
                .first()
                .ok_or_else(|| Error::Domain("energy check needs at least one sample".into()))?;
            let (v0, u0) = (first.v_l2 * first.v_l2, first.u_l2 * first.u_l2);
            let yref_sup = log
                .samples
                .iter()
                .flat_map(|s| s.y_ref.iter())
                .fold(0.0f64, |m, y| m.max(y.abs()));
            let isi = cfg.stimulus.amplitude.abs() * cfg.stimulus.region.area().sqrt();
            let budget = energy_budget(&cfg.model, yref_sup, isi, cfg.controller.k0, cfg.model.area())?;
            verify::check_energy_bound(&prefix, &budget, &cfg.model, v0, u0)?
        }
        other => {
            return Err(Error::Config {
                key: Some("--check".into()),
                line: None,
                message: format!("unknown check {other:?}, expected funnel, holder, boundedness or energy"),
            })
        }
    };
    Ok(Outcome::Reports(vec![report]))
}

/// Parses `argv` (including the program name), runs the subcommand and returns the exit status.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (kind, common) = match &cli.command {
        Command::Reference(c) => (ScenarioKind::Reference, c),
        Command::Reentry(c) => (ScenarioKind::Reentry, c),
        Command::Track(c) => (ScenarioKind::Track, c),
        Command::DiffusionTest(c) => (ScenarioKind::DiffusionTest, c),
        Command::Converge(c) => (ScenarioKind::Converge, c),
        Command::Verify(v) => (ScenarioKind::Verify, &v.common),
    };
    let result = load_config(common, kind).and_then(|cfg| {
        let outcome = match &cli.command {
            Command::Reference(_) => run_reference(&cfg),
            Command::Reentry(_) => run_reentry(&cfg),
            Command::Track(_) => run_track(&cfg),
            Command::DiffusionTest(_) => run_diffusion_test(&cfg),
            Command::Converge(_) => run_converge(&cfg),
            Command::Verify(v) => run_verify(v, &cfg),
        }?;
        let Outcome::Reports(reports) = outcome;
        if !reports.is_empty() {
            print!("{}", io::render_reports_text(&reports));
            if kind != ScenarioKind::Verify {
                ensure_dir(&cfg.output.dir)?;
                io::write_reports(&reports, &cfg.output.report_stem().with_file_name(format!(
                    "{}-{}",
                    cfg.output.report,
                    kind.name()
                )))?;
            }
        }
        Ok(reports.iter().all(|r| r.passed))
    });
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
