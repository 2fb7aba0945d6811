//! The `verify` command: runs every property check on a loaded model and
//! signal — projector identities, decomposition basis-choice invariance,
//! the two simulation routes, the simulation oracles for the reachable and
//! unobservable chains, the reformulation containment/equality checks, and
//! Gramian-image containment when the Lyapunov equations are solvable.
//!
//! Output is deterministic for a fixed configuration and seed; one line per
//! check, written both to stdout and to `verify_report.txt`.

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use swdae::error::Error;
use swdae::nalgebra::DVector;
use swdae::fileio::{self, LoadedSystem};
use swdae::gramian;
use swdae::pencil;
use swdae::reform::{self, GleStacking, JumpOdeSystem, SwitchedDae, SwitchingSignal};
use swdae::sets;
use swdae::sim::{self, InputSignal};
use swdae::synth::{self, ModelSampler};
use swdae::{Subspace, Tolerances};

struct Report {
    lines: Vec<String>,
    failures: usize,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: Vec::new(),
            failures: 0,
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        if !ok {
            self.failures += 1;
        }
        self.lines.push(format!("[{tag}] {name}: {detail}"));
    }

    fn skip(&mut self, name: &str, detail: String) {
        self.lines.push(format!("[SKIP] {name}: {detail}"));
    }

    fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        let _ = writeln!(
            out,
            "{} checks, {} failures",
            self.lines.len(),
            self.failures
        );
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify(
    model: &Path,
    signal: &Path,
    input: Option<&Path>,
    dt: f64,
    seed: u64,
    tol_solver: f64,
    out_dir: &Path,
    tols: &Tolerances,
) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(model).map_err(|e| Error::Parse {
        context: model.display().to_string(),
        msg: e.to_string(),
    })?;
    let (sys, jos) = match fileio::parse_system(&text, tols)? {
        LoadedSystem::Dae(sys) => {
            let jos = reform::build_jump_ode(&sys, tols)?;
            (Some(sys), jos)
        }
        LoadedSystem::JumpOde(jos) => (None, jos),
    };
    let signal_text = std::fs::read_to_string(signal).map_err(|e| Error::Parse {
        context: signal.display().to_string(),
        msg: e.to_string(),
    })?;
    let q = fileio::parse_signal(&signal_text, jos.mode_count())?;
    let mut sampler = ModelSampler::new(seed);
    let u = match input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                msg: e.to_string(),
            })?;
            fileio::parse_input(&text, jos.input_dim())?
        }
        None => sampler.input(jos.input_dim(), q.t0()),
    };

    let mut report = Report::new();
    if let Some(sys) = &sys {
        check_pencils(&mut report, sys, &mut sampler, tols);
    } else {
        report.skip(
            "pencil invariants",
            "jump-ODE input carries no descriptor pencils".to_string(),
        );
    }
    check_simulation_routes(&mut report, &jos, &q, &u, dt);
    check_reach_oracle(&mut report, &jos, &q, &mut sampler, dt);
    check_obs_oracle(&mut report, &jos, &q, &mut sampler, dt);
    check_reformulation_sets(&mut report, &jos, &q, tols);
    check_gramians(&mut report, &jos, &q, &mut sampler, tol_solver, tols);

    let rendered = report.render();
    print!("{rendered}");
    let io_err = |e: std::io::Error| Error::Parse {
        context: out_dir.display().to_string(),
        msg: e.to_string(),
    };
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let path = out_dir.join("verify_report.txt");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &rendered).map_err(io_err)?;
    std::fs::rename(&tmp, &path).map_err(io_err)?;

    if report.failures > 0 {
        Ok(ExitCode::from(3))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn check_pencils(report: &mut Report, sys: &SwitchedDae, sampler: &mut ModelSampler, tols: &Tolerances) {
    let mut worst_identity = 0.0f64;
    let mut worst_choice = 0.0f64;
    for mode in sys.modes() {
        let d = match pencil::decouple(mode, tols) {
            Ok(d) => d,
            Err(e) => {
                report.check("pencil invariants", false, format!("decoupling failed: {e}"));
                return;
            }
        };
        worst_identity = worst_identity.max(d.projector_residual());

        let (v, w) = match pencil::wong_sequences(&mode.e, &mode.a, tols) {
            Ok(vw) => vw,
            Err(e) => {
                report.check("pencil invariants", false, format!("{e}"));
                return;
            }
        };
        let gv = sampler.well_conditioned(v.dim());
        let gw = sampler.well_conditioned(w.dim());
        let alt = pencil::qwf_from_bases(&mode.e, &mode.a, &(v.basis() * gv), &(w.basis() * gw), tols)
            .and_then(|qwf| pencil::decouple_from_qwf(mode.clone(), qwf));
        match alt {
            Ok(alt) => {
                for (x, y) in [
                    (&d.pi, &alt.pi),
                    (&d.pi_diff, &alt.pi_diff),
                    (&d.pi_imp, &alt.pi_imp),
                    (&d.a_diff, &alt.a_diff),
                    (&d.b_diff, &alt.b_diff),
                    (&d.c_diff, &alt.c_diff),
                    (&d.e_imp, &alt.e_imp),
                    (&d.b_imp, &alt.b_imp),
                    (&d.c_imp, &alt.c_imp),
                ] {
                    let rel = swdae::linalg::frob(&(x - y)) / (1.0 + swdae::linalg::frob(x));
                    worst_choice = worst_choice.max(rel);
                }
            }
            Err(e) => {
                report.check("pencil invariants", false, format!("transformed basis: {e}"));
                return;
            }
        }
    }
    report.check(
        "pencil projector identities",
        worst_identity <= 1e-9,
        format!("worst residual {worst_identity:.3e} (limit 1e-9)"),
    );
    report.check(
        "decomposition basis-choice invariance",
        worst_choice <= 1e-8,
        format!("worst deviation {worst_choice:.3e} (limit 1e-8)"),
    );
}

fn check_simulation_routes(
    report: &mut Report,
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
) {
    let a = sim::simulate(jos, q, u, dt);
    let b = sim::simulate_impulsive(jos, q, u, dt);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let mut worst = 0.0f64;
            for ((_, za, _), (_, zb, _)) in a.samples.iter().zip(&b.samples) {
                worst = worst.max((za - zb).norm() / (1.0 + za.norm()));
            }
            report.check(
                "jump-rule vs impulsive-input simulation",
                worst <= 1e-8,
                format!("worst relative state deviation {worst:.3e} (limit 1e-8)"),
            );

            let mut worst_jump = 0.0f64;
            for (k, rec) in a.switch_records.iter().enumerate().skip(1) {
                let mode = &jos.modes[q.mode_at(k)];
                let prev = &jos.modes[q.mode_at(k - 1)];
                match sim::input_stack(u, prev, rec.t, sim::Side::Left) {
                    Ok(stack) => {
                        let expected = &mode.pi * (&rec.z_minus + &prev.jump_b * stack);
                        worst_jump = worst_jump.max((expected - &rec.z_plus).norm());
                    }
                    Err(e) => {
                        report.check("jump-rule recomputation", false, format!("{e}"));
                        return;
                    }
                }
            }
            report.check(
                "jump-rule recomputation from the records",
                worst_jump <= 1e-10,
                format!("worst deviation {worst_jump:.3e} (limit 1e-10)"),
            );
        }
        (Err(e), _) | (_, Err(e)) => {
            report.check("jump-rule vs impulsive-input simulation", false, format!("{e}"));
        }
    }
}

fn check_reach_oracle(
    report: &mut Report,
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    sampler: &mut ModelSampler,
    dt: f64,
) {
    let chain = match sets::reach_recursion(jos, q) {
        Ok(c) => c,
        Err(e) => {
            report.check("reachable-span oracle", false, format!("{e}"));
            return;
        }
    };
    let span = match synth::simulated_reachable_span(jos, q, sampler, 20 * jos.state_dim(), dt) {
        Ok(s) => s,
        Err(e) => {
            report.check("reachable-span oracle", false, format!("{e}"));
            return;
        }
    };
    match chain.reachable().equals(&span, 1e-6) {
        Ok(eq) => report.check(
            "reachable-span oracle",
            eq.holds,
            format!(
                "recursion dim {}, simulated dim {}, angle {:.3e} (limit 1e-6)",
                chain.reachable().dim(),
                span.dim(),
                eq.max_angle
            ),
        ),
        Err(e) => report.check("reachable-span oracle", false, format!("{e}")),
    }
}

fn check_obs_oracle(
    report: &mut Report,
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    sampler: &mut ModelSampler,
    dt: f64,
) {
    let obs = match sets::unobs_recursion(jos, q) {
        Ok(o) => o,
        Err(e) => {
            report.check("unobservable-response oracle", false, format!("{e}"));
            return;
        }
    };
    let n0 = obs.unobservable();
    let mut worst_silent = 0.0f64;
    for col in 0..n0.dim() {
        let z0: DVector<f64> = n0.basis().column(col).into_owned();
        match synth::zero_input_response(jos, q, &z0, dt) {
            Ok(r) => worst_silent = worst_silent.max(r),
            Err(e) => {
                report.check("unobservable-response oracle", false, format!("{e}"));
                return;
            }
        }
    }
    report.check(
        "unobservable directions stay silent",
        worst_silent <= 1e-8,
        format!(
            "{} basis vectors, worst response {worst_silent:.3e} (limit 1e-8)",
            n0.dim()
        ),
    );

    let observable = obs.observable();
    if observable.dim() == 0 {
        report.skip(
            "observable directions respond",
            "observable subspace is trivial".to_string(),
        );
        return;
    }
    let mut weakest = f64::INFINITY;
    let mut trials = 0;
    for _ in 0..10 {
        let mut z0 = sampler.matrix(jos.state_dim(), 1).column(0).into_owned();
        z0 /= z0.norm();
        if (observable.basis().transpose() * &z0).norm() < 0.1 {
            continue;
        }
        match synth::zero_input_response(jos, q, &z0, dt) {
            Ok(r) => {
                weakest = weakest.min(r);
                trials += 1;
            }
            Err(e) => {
                report.check("observable directions respond", false, format!("{e}"));
                return;
            }
        }
    }
    report.check(
        "observable directions respond",
        trials > 0 && weakest >= 1e-4,
        format!("{trials} trials, weakest response {weakest:.3e} (limit 1e-4)"),
    );
}

fn check_reformulation_sets(report: &mut Report, jos: &JumpOdeSystem, q: &SwitchingSignal, tols: &Tolerances) {
    match sets::verify_reach_inclusion(jos, q, tols.check) {
        Ok(t1) => report.check(
            "reachable-set inclusion (augmented inputs)",
            t1.holds,
            format!("angle {:.3e} (limit {:.1e})", t1.max_angle, tols.check),
        ),
        Err(e) => report.check("reachable-set inclusion (augmented inputs)", false, format!("{e}")),
    }
    for factor in [1.0, 2.0] {
        let scaled = q.with_scaled_durations(factor);
        match sets::verify_unobs_equality(jos, &scaled, tols.check) {
            Ok(t2) => report.check(
                &format!("unobservable-set equality (durations x{factor})"),
                t2.holds,
                format!("angle {:.3e} (limit {:.1e})", t2.max_angle, tols.check),
            ),
            Err(e) => report.check("unobservable-set equality", false, format!("{e}")),
        }
    }
    match sets::verify_nojump_inclusion(jos, q, tols.check) {
        Ok(nj) => {
            let worst = nj
                .reach_aug
                .max_angle
                .max(nj.reach_chain.max_angle)
                .max(nj.obs_aug.max_angle)
                .max(nj.obs_chain.max_angle);
            report.check(
                "no-jump containments",
                nj.all_hold(),
                format!("worst angle {worst:.3e} (limit {:.1e})", tols.check),
            );
        }
        Err(e) => report.check("no-jump containments", false, format!("{e}")),
    }
}

fn check_gramians(
    report: &mut Report,
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    sampler: &mut ModelSampler,
    tol_solver: f64,
    tols: &Tolerances,
) {
    let mats = reform::gle_matrices(jos, GleStacking::AllModes);
    let gram = match gramian::solve_gle(&mats, tol_solver) {
        Ok(g) => g,
        Err(e) => {
            // Containment is conditional on the equations being solvable.
            report.skip("Gramian-image containment", format!("no solution: {e}"));
            return;
        }
    };
    report.check(
        "Lyapunov residuals",
        gram.residual_p <= tol_solver && gram.residual_q <= tol_solver,
        format!(
            "residuals {:.3e} / {:.3e} (limit {:.1e})",
            gram.residual_p, gram.residual_q, tol_solver
        ),
    );
    let mut signals = vec![q.clone()];
    for _ in 0..9 {
        let switches = sampler.next_below(4);
        signals.push(sampler.signal(jos.mode_count(), switches, q.t0()));
    }
    match gramian::containment_report(&gram, jos, &signals, tols.check) {
        Ok(rep) => {
            let worst = rep
                .per_signal
                .iter()
                .map(|s| s.reach.max_angle.max(s.observe.max_angle))
                .fold(0.0f64, f64::max);
            report.check(
                "Gramian-image containment",
                rep.all_hold,
                format!(
                    "{} signals, worst angle {worst:.3e} (limit {:.1e})",
                    signals.len(),
                    tols.check
                ),
            );
        }
        Err(e) => report.check("Gramian-image containment", false, format!("{e}")),
    }

    // The stacking choice must not change the Gramian images.
    let alt = reform::gle_matrices(jos, GleStacking::ExcludeSelf);
    if let Ok(alt_gram) = gramian::solve_gle(&alt, tol_solver) {
        let same = Subspace::image(&gram.p)
            .and_then(|a| Subspace::image(&alt_gram.p).and_then(|b| a.equals(&b, tols.check)));
        match same {
            Ok(eq) => report.check(
                "Gramian image invariance under input stacking",
                eq.holds,
                format!("angle {:.3e}", eq.max_angle),
            ),
            Err(e) => report.check("Gramian image invariance under input stacking", false, format!("{e}")),
        }
    }
}
