use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rhg_core::game::{assemble, audit};
use rhg_core::output::write_trace;
use rhg_core::scenario::load_scenario;
use rhg_core::sim::{metrics, run_day_ahead, run_no_dsm, run_receding_horizon, Mode};
use rhg_core::solver::solve_steady_state;
use rhg_core::Error;

const GRADCHECK_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "rhg", version, about = "Receding-horizon demand-side management games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rhg,
    DayAhead,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, aggregate.csv and metrics.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "rhg")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the steady-state equilibrium for the parameters of one step.
    SteadyState {
        #[arg(long)]
        scenario: PathBuf,
        /// Step whose (realized) parameters are held constant.
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Compare the assembled pseudo-gradient with finite differences of the costs.
    Gradcheck {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Input(Error),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() || matches!(e, Error::Io { .. }) {
            Failure::Input(e)
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn simulate(scenario: PathBuf, mode: ModeArg, out: PathBuf) -> Result<(), Failure> {
    let scn = load_scenario(&scenario)?;
    let trace = match mode {
        ModeArg::Rhg => run_receding_horizon(&scn)?,
        ModeArg::DayAhead => run_day_ahead(&scn)?,
        ModeArg::None => run_no_dsm(&scn)?,
    };
    if trace.records.is_empty() {
        let f = trace.failure.expect("an empty trace carries its failure");
        return Err(Failure::Solver(format!("stopped at step {}: {}", f.step, f.reason)));
    }
    let mut baseline = if trace.mode == Mode::None {
        trace.clone()
    } else {
        run_no_dsm(&scn)?
    };
    baseline.records.truncate(trace.records.len());
    let report = metrics(&trace, &baseline, None)?;
    write_trace(&out, &scn, &trace, &report)?;
    println!(
        "{} {}: peak {:.3} kW ({:.1}% below no-DSM), {} limit violations, total cost {:.4} $, end-of-day dip {:.3} kW",
        scn.name,
        trace.mode.label(),
        report.peak_kw,
        report.shaving_pct,
        report.violations,
        report.total_cost,
        report.eod_dip
    );
    println!("wrote {}", out.display());
    match trace.failure {
        Some(f) => Err(Failure::Solver(format!("stopped at step {}: {}", f.step, f.reason))),
        None => Ok(()),
    }
}

fn steady_state(scenario: PathBuf, step: usize) -> Result<(), Failure> {
    let scn = load_scenario(&scenario)?;
    if step >= scn.len() {
        return Err(Failure::Input(Error::Validation {
            path: "--step".into(),
            reason: format!("must be below {}", scn.len()),
        }));
    }
    let ss = solve_steady_state(&scn.params, &scn.step_at(step, None))?;
    if !ss.feasible {
        return Err(Failure::Solver(format!(
            "no steady state exists (smallest achievable violation {:.3e})",
            ss.max_violation
        )));
    }
    println!("id,zeta,q,e,s");
    for (v, p) in scn.params.iter().enumerate() {
        let (x, (e, s)) = (ss.x_bar[v], ss.u_bar[v]);
        println!("{},{},{},{},{}", p.id, x.zeta, x.q, e, s);
    }
    println!(
        "coupling duals: lower {} upper {}",
        ss.coupling_dual.0, ss.coupling_dual.1
    );
    Ok(())
}

fn gradcheck(scenario: PathBuf, samples: usize, seed: u64) -> Result<(), Failure> {
    let scn = load_scenario(&scenario)?;
    let game = assemble(&scn.x0, &scn.params, &scn.window(0, scn.horizon)?)?;
    let points = audit::random_points(&game, samples.max(1), 5.0, seed);
    let a = audit::audit_points(&game, &points, 0.5)?;
    println!("pseudo-gradient max relative error: {:.3e}", a.pseudo_gradient);
    match a.potential {
        Some(p) => println!("potential gradient max relative error: {p:.3e}"),
        None => println!("potential gradient: not applicable (asymmetric pricing)"),
    }
    let worst = a.pseudo_gradient.max(a.potential.unwrap_or(0.0));
    if worst > GRADCHECK_TOL {
        return Err(Failure::Solver(format!(
            "gradient audit error {worst:.3e} above {GRADCHECK_TOL:e}"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, mode, out } => simulate(scenario, mode, out),
        Command::SteadyState { scenario, step } => steady_state(scenario, step),
        Command::Validate { scenario } => load_scenario(&scenario).map_err(Failure::from).map(|s| {
            println!(
                "{}: ok ({} prosumers, {} steps, horizon {})",
                s.name,
                s.prosumers(),
                s.steps,
                s.horizon
            );
        }),
        Command::Gradcheck {
            scenario,
            samples,
            seed,
        } => gradcheck(scenario, samples, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
