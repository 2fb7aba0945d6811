//! Command-line front end: model/signal/input parsing, command dispatch,
//! deterministic report and CSV emission.
//!
//! Exit codes: 0 success, 1 validation or parse failure, 2 numerical
//! failure (singular operator, indefinite solution), 3 property-suite
//! failure.

mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swdae::error::Error;
use swdae::fileio::{self, LoadedSystem};
use swdae::gramian::{self, GramianPair};
use swdae::reform::{self, GleStacking, JumpOdeSystem, SwitchingSignal};
use swdae::sim::InputSignal;
use swdae::{sets, Tolerances};

#[derive(Parser)]
#[command(
    name = "swdae",
    about = "Switched descriptor systems: decoupling, reachability and observability \
             subspaces, generalized Lyapunov Gramians, balanced truncation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Absolute singular-value threshold for rank decisions (default:
    /// adaptive).
    #[arg(long, global = true)]
    tol_rank: Option<f64>,

    /// Principal-angle tolerance for the verification checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol_check: f64,

    /// Solver tolerance for the Lyapunov residuals.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_solver: f64,

    /// Seed for every randomized suite.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Output directory for generated files.
    #[arg(short = 'o', long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ModelArg {
    /// Model file (descriptor modes or a serialized jump-ODE system).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SignalArg {
    /// Switching-signal file.
    #[arg(long)]
    signal: PathBuf,
}

#[derive(Args)]
struct InputArg {
    /// Input-signal file.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Per-mode regularity, nilpotency index and projector residuals.
    Check {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Decouple every mode and write the jump-ODE system matrices.
    Reform {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Reachable and modified reachable subspace chains along a signal.
    Reach {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        signal: SignalArg,
    },
    /// Unobservable chain and observable subspace along a signal.
    Obs {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        signal: SignalArg,
    },
    /// Solve the coupled generalized Lyapunov equations.
    Gramians {
        #[command(flatten)]
        model: ModelArg,
        /// Restrict to the common differential subspace first.
        #[arg(long)]
        restrict: bool,
    },
    /// Balanced truncation to a target order, with full-vs-reduced
    /// comparison on the given signal and input.
    Reduce {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        signal: SignalArg,
        #[command(flatten)]
        input: InputArg,
        /// Reduced order.
        #[arg(short = 'r', long)]
        order: usize,
        #[arg(long)]
        restrict: bool,
        /// Sample step for the comparison runs.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Simulate the jump-ODE system and export the trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        signal: SignalArg,
        #[command(flatten)]
        input: InputArg,
        /// Sample step.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Run the full property suite; nonzero exit on any failure.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        signal: SignalArg,
        /// Optional input file; a seeded smooth input is synthesized
        /// otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sample step for the simulation oracles.
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = validate_config(&cli) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let tols = Tolerances {
        rank: cli.tol_rank,
        check: cli.tol_check,
        ..Tolerances::default()
    };
    match run(&cli, &tols) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn validate_config(cli: &Cli) -> Result<(), String> {
    let positive = |t: f64| t.is_finite() && t > 0.0;
    if let Some(t) = cli.tol_rank {
        if !positive(t) {
            return Err(format!("--tol-rank must be positive, got {t}"));
        }
    }
    if !positive(cli.tol_check) {
        return Err(format!("--tol-check must be positive, got {}", cli.tol_check));
    }
    if !positive(cli.tol_solver) {
        return Err(format!("--tol-solver must be positive, got {}", cli.tol_solver));
    }
    let dt = match &cli.command {
        Command::Reduce { dt, .. } | Command::Simulate { dt, .. } | Command::Verify { dt, .. } => {
            Some(*dt)
        }
        _ => None,
    };
    if let Some(dt) = dt {
        if !positive(dt) {
            return Err(format!("--dt must be positive, got {dt}"));
        }
    }
    if let Command::Reduce { order, .. } = &cli.command {
        if *order == 0 {
            return Err("--order must be at least 1".to_string());
        }
    }
    Ok(())
}

fn run(cli: &Cli, tols: &Tolerances) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Check { model } => cmd_check(&model.model, tols),
        Command::Reform { model } => cmd_reform(&model.model, &cli.out_dir, tols),
        Command::Reach { model, signal } => {
            cmd_reach(&model.model, &signal.signal, &cli.out_dir, tols)
        }
        Command::Obs { model, signal } => cmd_obs(&model.model, &signal.signal, &cli.out_dir, tols),
        Command::Gramians { model, restrict } => {
            cmd_gramians(&model.model, *restrict, cli.tol_solver, &cli.out_dir, tols)
        }
        Command::Reduce {
            model,
            signal,
            input,
            order,
            restrict,
            dt,
        } => cmd_reduce(
            &model.model,
            &signal.signal,
            &input.input,
            *order,
            *restrict,
            *dt,
            cli.tol_solver,
            &cli.out_dir,
            tols,
        ),
        Command::Simulate {
            model,
            signal,
            input,
            dt,
        } => cmd_simulate(&model.model, &signal.signal, &input.input, *dt, &cli.out_dir, tols),
        Command::Verify {
            model,
            signal,
            input,
            dt,
        } => verify::cmd_verify(
            &model.model,
            &signal.signal,
            input.as_deref(),
            *dt,
            cli.seed,
            cli.tol_solver,
            &cli.out_dir,
            tols,
        ),
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Write atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, content: &str) -> Result<(), Error> {
    let io_err = |e: std::io::Error| Error::Parse {
        context: path.display().to_string(),
        msg: format!("write failed: {e}"),
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

fn load_jump_ode(path: &Path, tols: &Tolerances) -> Result<JumpOdeSystem, Error> {
    let text = read_file(path)?;
    match fileio::parse_system(&text, tols)? {
        LoadedSystem::Dae(sys) => reform::build_jump_ode(&sys, tols),
        LoadedSystem::JumpOde(jos) => Ok(jos),
    }
}

fn load_signal(path: &Path, mode_count: usize) -> Result<SwitchingSignal, Error> {
    fileio::parse_signal(&read_file(path)?, mode_count)
}

fn load_input(path: &Path, channels: usize) -> Result<InputSignal, Error> {
    fileio::parse_input(&read_file(path)?, channels)
}

fn cmd_check(model: &Path, tols: &Tolerances) -> Result<ExitCode, Error> {
    let text = read_file(model)?;
    let sys = match fileio::parse_system(&text, tols)? {
        LoadedSystem::Dae(sys) => sys,
        LoadedSystem::JumpOde(_) => {
            return Err(Error::Parse {
                context: model.display().to_string(),
                msg: "check needs a descriptor model, not a jump-ODE file".to_string(),
            })
        }
    };
    println!(
        "model: {} modes, n = {}, m = {}, p = {}",
        sys.mode_count(),
        sys.state_dim(),
        sys.input_dim(),
        sys.output_dim()
    );
    for (j, mode) in sys.modes().iter().enumerate() {
        let report = swdae::pencil::is_regular(&mode.e, &mode.a, tols)?;
        let d = swdae::pencil::decouple(mode, tols)?;
        let shift = report
            .certificate
            .map(|s| format!("{s:.6}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "mode {}: regular (certificate shift {shift}), nu = {}, n_diff = {}, n_alg = {}, \
             projector residual = {:.3e}",
            j + 1,
            d.nu,
            d.qwf.n_j,
            d.qwf.n_n,
            d.projector_residual()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_reform(model: &Path, out_dir: &Path, tols: &Tolerances) -> Result<ExitCode, Error> {
    let text = read_file(model)?;
    let sys = match fileio::parse_system(&text, tols)? {
        LoadedSystem::Dae(sys) => sys,
        LoadedSystem::JumpOde(_) => {
            return Err(Error::Parse {
                context: model.display().to_string(),
                msg: "reform needs a descriptor model, not a jump-ODE file".to_string(),
            })
        }
    };
    let jos = reform::build_jump_ode(&sys, tols)?;
    write_atomic(&out_dir.join("jump_ode.json"), &fileio::jump_ode_to_json(&jos))?;

    let mut summary = String::new();
    for (j, mode) in jos.modes.iter().enumerate() {
        let dir = out_dir.join(format!("mode_{}", j + 1));
        for (name, m) in [
            ("pi", &mode.pi),
            ("a_diff", &mode.a_diff),
            ("b_diff", &mode.b_diff),
            ("c_diff", &mode.c_diff),
            ("jump_b", &mode.jump_b),
            ("feedthrough", &mode.feedthrough),
            ("imp_c", &mode.imp_c),
        ] {
            write_atomic(&dir.join(format!("{name}.csv")), &fileio::matrix_csv(m))?;
        }
        summary.push_str(&format!(
            "mode {}: nu = {}, jump_b is {}x{}, imp_c is {}x{}\n",
            j + 1,
            mode.nu,
            mode.jump_b.nrows(),
            mode.jump_b.ncols(),
            mode.imp_c.nrows(),
            mode.imp_c.ncols()
        ));
    }
    write_atomic(&out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!("decoupled system written to {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_reach(
    model: &Path,
    signal: &Path,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let jos = load_jump_ode(model, tols)?;
    let q = load_signal(signal, jos.mode_count())?;
    let result = sets::reach_recursion(&jos, &q)?;
    let mut summary = String::new();
    for (k, (m, mt)) in result.m.iter().zip(&result.m_tilde).enumerate() {
        write_atomic(
            &out_dir.join(format!("reach_M_{k}.csv")),
            &fileio::matrix_csv(m.basis()),
        )?;
        write_atomic(
            &out_dir.join(format!("reach_Mtilde_{k}.csv")),
            &fileio::matrix_csv(mt.basis()),
        )?;
        summary.push_str(&format!(
            "k = {k}: dim M = {}, dim M~ = {}\n",
            m.dim(),
            mt.dim()
        ));
    }
    summary.push_str(&format!(
        "reachable subspace dimension: {}\n\
         final-duration stability: {} (angle {:.3e})\n",
        result.reachable().dim(),
        result.final_duration_stable.holds,
        result.final_duration_stable.max_angle
    ));
    write_atomic(&out_dir.join("reach_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_obs(
    model: &Path,
    signal: &Path,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let jos = load_jump_ode(model, tols)?;
    let q = load_signal(signal, jos.mode_count())?;
    let result = sets::unobs_recursion(&jos, &q)?;
    let mut summary = String::new();
    for (k, n) in result.n.iter().enumerate() {
        write_atomic(
            &out_dir.join(format!("obs_N_{k}.csv")),
            &fileio::matrix_csv(n.basis()),
        )?;
        summary.push_str(&format!("k = {k}: dim N = {}\n", n.dim()));
    }
    let observable = result.observable();
    write_atomic(
        &out_dir.join("observable.csv"),
        &fileio::matrix_csv(observable.basis()),
    )?;
    summary.push_str(&format!(
        "unobservable dimension: {}\nobservable dimension: {}\n",
        result.unobservable().dim(),
        observable.dim()
    ));
    write_atomic(&out_dir.join("obs_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn solve_gramians(
    jos: &JumpOdeSystem,
    restrict: bool,
    tol_solver: f64,
) -> Result<(GramianPair, String), Error> {
    if restrict {
        let restr = gramian::restrict_to_differential(jos, GleStacking::AllModes)?;
        let gram = gramian::solve_gle(&restr.mats, tol_solver)?;
        let lifted = GramianPair {
            p: restr.lift_gramian(&gram.p),
            q: restr.lift_gramian(&gram.q),
            residual_p: gram.residual_p,
            residual_q: gram.residual_q,
            operator_spectrum_ok: gram.operator_spectrum_ok,
        };
        let note = format!(
            "restricted to the common differential subspace (dimension {})\n",
            restr.mats.state_dim()
        );
        Ok((lifted, note))
    } else {
        let mats = reform::gle_matrices(jos, GleStacking::AllModes);
        let gram = gramian::solve_gle(&mats, tol_solver)?;
        Ok((gram, String::new()))
    }
}

fn gramian_summary(gram: &GramianPair, note: &str) -> String {
    let eig_p = gram.p.clone().symmetric_eigen().eigenvalues;
    let eig_q = gram.q.clone().symmetric_eigen().eigenvalues;
    let hankel = gramian::hankel_values(gram);
    let hankel_str: Vec<String> = hankel.iter().map(|h| format!("{h:.6e}")).collect();
    format!(
        "{note}residual P: {:.3e}\nresidual Q: {:.3e}\n\
         P eigenvalue range: [{:.6e}, {:.6e}]\nQ eigenvalue range: [{:.6e}, {:.6e}]\n\
         hankel values: [{}]\n",
        gram.residual_p,
        gram.residual_q,
        eig_p.min(),
        eig_p.max(),
        eig_q.min(),
        eig_q.max(),
        hankel_str.join(", ")
    )
}

fn cmd_gramians(
    model: &Path,
    restrict: bool,
    tol_solver: f64,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let jos = load_jump_ode(model, tols)?;
    let (gram, note) = solve_gramians(&jos, restrict, tol_solver)?;
    write_atomic(&out_dir.join("P.csv"), &fileio::matrix_csv(&gram.p))?;
    write_atomic(&out_dir.join("Q.csv"), &fileio::matrix_csv(&gram.q))?;
    let summary = gramian_summary(&gram, &note);
    write_atomic(&out_dir.join("gramian_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_reduce(
    model: &Path,
    signal: &Path,
    input: &Path,
    order: usize,
    restrict: bool,
    dt: f64,
    tol_solver: f64,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let jos = load_jump_ode(model, tols)?;
    let q = load_signal(signal, jos.mode_count())?;
    let u = load_input(input, jos.input_dim())?;
    let (gram, note) = solve_gramians(&jos, restrict, tol_solver)?;
    let (reduced, report) = gramian::reduce_and_compare(&jos, &gram, order, &q, &u, dt)?;

    write_atomic(
        &out_dir.join("reduced_jump_ode.json"),
        &fileio::jump_ode_to_json(&reduced.jump_ode_system()),
    )?;
    write_atomic(&out_dir.join("V.csv"), &fileio::matrix_csv(&reduced.v))?;
    write_atomic(&out_dir.join("W.csv"), &fileio::matrix_csv(&reduced.w))?;
    let hankel_str: Vec<String> = reduced.hankel.iter().map(|h| format!("{h:.6e}")).collect();
    let summary = format!(
        "{note}reduced order: {}\nhankel values: [{}]\n\
         max output error: {:.6e}\nL2-grid output error: {:.6e}\n\
         max impulse-coefficient error: {:.6e}\n\
         max projected-jump idempotency defect: {:.6e}\n",
        reduced.order(),
        hankel_str.join(", "),
        report.max_output_error,
        report.l2_output_error,
        report.max_impulse_error,
        report.max_pi_idempotency_defect
    );
    write_atomic(&out_dir.join("reduce_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(
    model: &Path,
    signal: &Path,
    input: &Path,
    dt: f64,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let jos = load_jump_ode(model, tols)?;
    let q = load_signal(signal, jos.mode_count())?;
    let u = load_input(input, jos.input_dim())?;
    let traj = swdae::sim::simulate(&jos, &q, &u, dt)?;
    write_atomic(&out_dir.join("trajectory.csv"), &fileio::trajectory_csv(&traj))?;
    write_atomic(
        &out_dir.join("impulses.txt"),
        &fileio::impulse_records_text(&traj),
    )?;
    println!(
        "simulated {} samples over [{}, {}] with {} switch records and {} impulse records",
        traj.samples.len(),
        q.t0(),
        q.t_end,
        traj.switch_records.len(),
        traj.impulses.len()
    );
    Ok(ExitCode::SUCCESS)
}
