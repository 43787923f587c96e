//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --release --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rhg_core::game::{assemble, audit, GameQP, WindowStep};
use rhg_core::instances::{random_instance, Instance, InstanceOptions};
use rhg_core::linalg::max_abs_diff;
use rhg_core::model::{BatteryParams, FlexParams, PriceRates, ProsumerParams, ProsumerState};
use rhg_core::output::{trace_csv, write_trace};
use rhg_core::scenario::load_scenario;
use rhg_core::sim::{metrics, run_day_ahead, run_no_dsm, run_receding_horizon, Scenario, Trace, DAY};
use rhg_core::solver::{
    nash_check, solve_steady_state, solve_vgne_direct, solve_vgne_iterative, DirectOptions, IterativeOptions,
    StartPoint,
};

const INSTANCES: u64 = 20;
const POINTS_PER_INSTANCE: usize = 5;
const FD_STEP: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn instances() -> Vec<(Instance, GameQP)> {
    (0..INSTANCES)
        .map(|seed| {
            let inst = random_instance(seed, InstanceOptions::default());
            let game = assemble(&inst.x0, &inst.params, &inst.window).expect("instance assembles");
            (inst, game)
        })
        .collect()
}

fn gradient_audit(set: &[(Instance, GameQP)]) -> Outcome {
    let start = Instant::now();
    let (mut pg, mut pot, mut passive) = (0.0f64, 0.0f64, true);
    for (i, (inst, game)) in set.iter().enumerate() {
        passive &= inst.window.steps.iter().all(|s| s.l_passive > 0.0);
        let points = audit::random_points(game, POINTS_PER_INSTANCE, 5.0, 1000 + i as u64);
        match audit::audit_points(game, &points, FD_STEP) {
            Ok(a) => {
                pg = pg.max(a.pseudo_gradient);
                pot = pot.max(a.potential.unwrap_or(f64::INFINITY));
            }
            Err(e) => return outcome(false, format!("instance {i}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        pg <= 1e-6 && pot <= 1e-10 && passive && elapsed < Duration::from_secs(10),
        format!(
            "{} points: pseudo-gradient rel err {pg:.2e} (<= 1e-6), potential rel err {pot:.2e} (<= 1e-10), passive load nonzero {passive}, {:.2}s (< 10s)",
            INSTANCES as usize * POINTS_PER_INSTANCE,
            elapsed.as_secs_f64()
        ),
    )
}

fn uniqueness(set: &[(Instance, GameQP)]) -> Outcome {
    let (mut gap, mut gain, mut unconverged) = (0.0f64, 0.0f64, 0);
    for (_, game) in set {
        let origin = solve_vgne_direct(game, &DirectOptions::default());
        let centered = solve_vgne_direct(
            game,
            &DirectOptions {
                start: StartPoint::Centered,
                ..Default::default()
            },
        );
        let (Ok(a), Ok(b)) = (origin, centered) else {
            unconverged += 1;
            continue;
        };
        if !a.is_converged() || !b.is_converged() {
            unconverged += 1;
            continue;
        }
        gap = gap.max(max_abs_diff(&a.z, &b.z));
        for v in 0..game.prosumers() {
            match nash_check(game, &a, v, 1e-10) {
                Ok(g) => gain = gain.max(g),
                Err(_) => unconverged += 1,
            }
        }
    }
    outcome(
        unconverged == 0 && gap <= 1e-7 && gain <= 1e-6,
        format!(
            "start disagreement {gap:.2e} (<= 1e-7), best-response gain {gain:.2e} (<= 1e-6), failures {unconverged}"
        ),
    )
}

fn cross_validation(set: &[(Instance, GameQP)]) -> Outcome {
    let opts = IterativeOptions {
        tol: 1e-10,
        max_iter: Some(2_000_000),
        ..Default::default()
    };
    let (mut gap, mut failures) = (0.0f64, 0);
    for (_, game) in set {
        match (
            solve_vgne_direct(game, &DirectOptions::default()),
            solve_vgne_iterative(game, &opts),
        ) {
            (Ok(d), Ok(it)) if d.is_converged() && it.is_converged() => gap = gap.max(max_abs_diff(&d.z, &it.z)),
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && gap <= 1e-5,
        format!("iterative vs direct max gap {gap:.2e} (<= 1e-5), failures {failures}"),
    )
}

fn home(id: &str, q_max: f64) -> ProsumerParams {
    ProsumerParams {
        id: id.into(),
        battery: BatteryParams {
            alpha: 0.9f64.powf(1.0 / 24.0),
            beta: 0.9,
            q_max,
            s_eff_min: -0.7 * q_max,
            s_eff_max: 0.7 * q_max,
        },
        flex: FlexParams {
            e_min: 0.2,
            e_max: 4.0,
            l_max: 10.0,
            gamma1: 0.05,
            gamma2: 0.01,
        },
        has_generation: false,
    }
}

fn constant_fleet() -> (Vec<ProsumerParams>, WindowStep) {
    let params = vec![home("a", 10.0), home("b", 12.0), home("c", 8.0)];
    let step = WindowStep::nominal(
        &params,
        vec![1.0, 1.6, 2.3],
        PriceRates::new(0.015, 0.05),
        1.5,
        0.0,
        40.0,
    );
    (params, step)
}

fn steady_state_analytics() -> Outcome {
    let (params, step) = constant_fleet();
    let ss = match solve_steady_state(&params, &step) {
        Ok(ss) if ss.feasible => ss,
        Ok(_) => return outcome(false, "reported infeasible".into()),
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut err = 0.0f64;
    for v in 0..params.len() {
        err = err.max(ss.x_bar[v].zeta.abs()).max(ss.x_bar[v].q.abs());
        err = err.max((ss.u_bar[v].0 - step.e_ref[v]).abs()).max(ss.u_bar[v].1.abs());
    }
    outcome(
        err <= 1e-7,
        format!("max deviation from x=(0,0), u=(e_ref,0): {err:.2e} (<= 1e-7)"),
    )
}

fn stacked_distance(a: &[ProsumerState], b: &[ProsumerState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.distance(y).powi(2)).sum::<f64>().sqrt()
}

fn practical_stability() -> Outcome {
    const T: usize = 100;
    let start = Instant::now();
    let (params, step) = constant_fleet();
    let Ok(ss) = solve_steady_state(&params, &step) else {
        return outcome(false, "no steady state".into());
    };
    let x0 = vec![
        ProsumerState::new(3.0, 6.0),
        ProsumerState::new(-2.0, 1.0),
        ProsumerState::new(1.5, 7.0),
    ];
    let initial = stacked_distance(&x0, &ss.x_bar);
    let mut terminal = Vec::new();
    for n in [2, 4, 8, 12] {
        let scn = Scenario::constant(params.clone(), &step, T, n, x0.clone());
        match run_receding_horizon(&scn) {
            Ok(trace) if trace.failure.is_none() => {
                terminal.push((n, stacked_distance(trace.states_at(T).expect("final state"), &ss.x_bar)))
            }
            Ok(trace) => {
                let f = trace.failure.unwrap();
                return outcome(false, format!("N={n} infeasible at step {}: {}", f.step, f.reason));
            }
            Err(e) => return outcome(false, format!("N={n}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    // nonincreasing up to solver accuracy
    let monotone = terminal.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9);
    let last = terminal.last().unwrap().1;
    let errors = terminal
        .iter()
        .map(|(n, e)| format!("N={n}: {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        monotone && last <= 0.01 * initial && elapsed < Duration::from_secs(60),
        format!(
            "initial error {initial:.3}; terminal {errors}; nonincreasing {monotone}; N=12 ratio {:.2e} (<= 1e-2); {:.1}s (< 60s)",
            last / initial,
            elapsed.as_secs_f64()
        ),
    )
}

fn disturbance_rejection() -> Outcome {
    let scn = match load_scenario(scenario_path("disturbance_60pct.json")) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (rhg, da) = match (run_receding_horizon(&scn), run_day_ahead(&scn)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let drop: Vec<usize> = scn
        .disturbances
        .iter()
        .flat_map(|d| d.start..d.start + d.duration)
        .collect();
    let rhg_viol = rhg.violations(1e-6).len();
    let da_viol = da.violations(1e-6).iter().filter(|(t, _)| drop.contains(t)).count();
    let complete = rhg.failure.is_none() && rhg.records.len() == scn.steps;
    outcome(
        complete && rhg_viol == 0 && da_viol >= 1,
        format!(
            "RHG {} steps, {rhg_viol} violations (== 0); day-ahead {da_viol} violations during the drop (>= 1)",
            rhg.records.len()
        ),
    )
}

fn peak_shaving(scn: &Scenario, rhg: &Trace) -> Outcome {
    let (da, none) = match (run_day_ahead(scn), run_no_dsm(scn)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let (Ok(mr), Ok(md)) = (metrics(rhg, &none, None), metrics(&da, &none, None)) else {
        return outcome(false, "metrics failed".into());
    };
    let (p_rhg, p_da, p_none) = (rhg.peak(), da.peak(), none.peak());
    let ordering = p_rhg <= p_da && p_da <= p_none && p_rhg <= 0.9 * p_none;
    let q_cap = scn.params.iter().map(|p| p.battery.q_max).fold(f64::INFINITY, f64::min);
    let low = |soc: &[Vec<f64>]| soc.iter().all(|day| day.iter().all(|&q| q <= 0.05 * q_cap));
    let soc_effect = low(&md.midnight_soc) && !low(&mr.midnight_soc);
    let dip_effect = md.eod_dip > mr.eod_dip;
    let max_soc = |soc: &[Vec<f64>]| soc.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    outcome(
        rhg.failure.is_none() && ordering && (soc_effect || dip_effect),
        format!(
            "peaks RHG {p_rhg:.3} / day-ahead {p_da:.3} / no-DSM {p_none:.3} kW (shaving {:.1}%); max midnight SoC day-ahead {:.3} / RHG {:.3} kWh (5% of capacity {:.3}); end-of-day dip day-ahead {:.3} / RHG {:.3} kW",
            mr.shaving_pct,
            max_soc(&md.midnight_soc),
            max_soc(&mr.midnight_soc),
            0.05 * q_cap,
            md.eod_dip,
            mr.eod_dip
        ),
    )
}

fn scale(scn: &Scenario, loop_time: Duration) -> Outcome {
    let n = DAY;
    let game = match scn.window(0, n).and_then(|w| assemble(&scn.x0, &scn.params, &w)) {
        Ok(g) => g,
        Err(e) => return outcome(false, e.to_string()),
    };
    let start = Instant::now();
    let sol = solve_vgne_direct(&game, &scn.solver.direct_options());
    let solve_time = start.elapsed();
    let converged = sol.map(|s| s.is_converged()).unwrap_or(false);
    outcome(
        scn.prosumers() == 10
            && converged
            && solve_time < Duration::from_secs(1)
            && scn.steps == 48
            && loop_time < Duration::from_secs(60),
        format!(
            "M={} N={n} solve {:.3}s (< 1s, converged {converged}); {}-step closed loop {:.1}s (< 60s)",
            scn.prosumers(),
            solve_time.as_secs_f64(),
            scn.steps,
            loop_time.as_secs_f64()
        ),
    )
}

fn trace_bytes(scn: &Scenario, trace: &Trace) -> rhg_core::Result<Vec<Vec<u8>>> {
    let baseline = run_no_dsm(scn)?;
    let report = metrics(trace, &baseline, None)?;
    let io = |path: &Path, source| rhg_core::Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = tempfile::tempdir().map_err(|e| io(&std::env::temp_dir(), e))?;
    let files = write_trace(dir.path(), scn, trace, &report)?;
    files.iter().map(|f| std::fs::read(f).map_err(|e| io(f, e))).collect()
}

fn determinism(first_rhg: &[(Scenario, Trace)]) -> Outcome {
    let mut compared = 0;
    for (scn, first) in first_rhg {
        let runs: [fn(&Scenario) -> rhg_core::Result<Trace>; 2] = [run_day_ahead, run_no_dsm];
        for run in runs {
            let (a, b) = match (run(scn), run(scn)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
            };
            match (trace_bytes(scn, &a), trace_bytes(scn, &b)) {
                (Ok(x), Ok(y)) if x == y => compared += 1,
                _ => return outcome(false, format!("{} {} differs", scn.name, a.mode.label())),
            }
        }
        let again = match run_receding_horizon(scn) {
            Ok(t) => t,
            Err(e) => return outcome(false, e.to_string()),
        };
        match (
            trace_bytes(scn, first),
            trace_bytes(scn, &again),
            trace_csv(first),
            trace_csv(&again),
        ) {
            (Ok(x), Ok(y), Ok(c), Ok(d)) if x == y && c == d => compared += 1,
            _ => return outcome(false, format!("{} rhg differs", scn.name)),
        }
    }
    outcome(
        compared == 3 * first_rhg.len(),
        format!("{compared} scenario/mode pairs byte-identical across runs"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let set = instances();
    results.push((1, "gradient audit", gradient_audit(&set)));
    results.push((2, "uniqueness and Nash certification", uniqueness(&set)));
    results.push((3, "solver cross-validation", cross_validation(&set)));
    results.push((4, "steady-state analytics", steady_state_analytics()));
    results.push((5, "practical stability", practical_stability()));
    results.push((6, "disturbance rejection", disturbance_rejection()));

    let mut bundled = Vec::new();
    let mut peak_loop = None;
    for name in ["ny_peak_shaving.json", "disturbance_60pct.json"] {
        let scn = load_scenario(scenario_path(name)).expect("bundled scenario loads");
        let start = Instant::now();
        let trace = run_receding_horizon(&scn).expect("bundled scenario runs");
        if name == "ny_peak_shaving.json" {
            peak_loop = Some(start.elapsed());
        }
        bundled.push((scn, trace));
    }
    let (peak_scn, peak_trace) = &bundled[0];
    results.push((7, "peak shaving", peak_shaving(peak_scn, peak_trace)));
    results.push((8, "scale and runtime", scale(peak_scn, peak_loop.unwrap())));
    results.push((9, "determinism", determinism(&bundled)));

    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} {id}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
