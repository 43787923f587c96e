use log::{debug, warn};

use super::{Algorithm, Mode, Scenario, SolverSettings, StepFailure, StepRecord, Trace, DAY};
use crate::error::{Error, Result};
use crate::game::{assemble, GameQP, ScenarioWindow, WindowStep};
use crate::model::{self, ProsumerParams, ProsumerState};
use crate::solver::{solve_vgne_direct, solve_vgne_iterative, Solution, SolveStatus};

/// First inputs of the horizon game's v-GNE, with the game and its solution.
#[derive(Debug, Clone)]
pub struct Policy {
    pub inputs: Vec<(f64, f64)>,
    pub game: GameQP,
    pub solution: Solution,
}

impl Policy {
    fn coupling_dual(&self) -> (f64, f64) {
        self.solution.duals_coupling().first().copied().unwrap_or((0.0, 0.0))
    }
}

/// Solves the game of `window` from `x` and returns every prosumer's first input.
///
/// Fails if the game is infeasible or the solver does not reach its tolerance.
pub fn rhg_policy(
    x: &[ProsumerState],
    window: &ScenarioWindow,
    params: &[ProsumerParams],
    settings: &SolverSettings,
) -> Result<Policy> {
    let game = assemble(x, params, window)?;
    let solution = match settings.algorithm {
        Algorithm::Direct => solve_vgne_direct(&game, &settings.direct_options())?,
        Algorithm::Iterative => solve_vgne_iterative(&game, &settings.iterative_options())?,
    };
    match solution.status {
        SolveStatus::Converged => {}
        SolveStatus::Infeasible { max_violation } => return Err(Error::Infeasible { max_violation }),
        SolveStatus::MaxIterations => {
            return Err(Error::MaxIterations {
                iterations: solution.iterations,
                residual: solution.kkt_residual,
            })
        }
    }
    Ok(Policy {
        inputs: game.first_inputs(&solution.z),
        game,
        solution,
    })
}

struct Runner<'a> {
    scenario: &'a Scenario,
    trace: Trace,
    x: Vec<ProsumerState>,
}

impl<'a> Runner<'a> {
    fn new(scenario: &'a Scenario, mode: Mode) -> Result<Self> {
        scenario.validate()?;
        Ok(Runner {
            scenario,
            trace: Trace {
                mode,
                ids: scenario.ids(),
                records: Vec::with_capacity(scenario.steps),
                final_states: scenario.x0.clone(),
                costs: vec![0.0; scenario.prosumers()],
                failure: None,
            },
            x: scenario.x0.clone(),
        })
    }

    /// Applies `inputs` at step `t` against realized data and advances the states.
    fn execute(&mut self, t: usize, inputs: Vec<(f64, f64)>, diag: (f64, f64, usize, f64), clipped: bool) {
        let real = self.scenario.step_at(t, None);
        let params = &self.scenario.params;
        let loads: Vec<f64> = inputs
            .iter()
            .zip(&real.generation)
            .map(|(&(e, s), &g)| model::local_load(e, s, g))
            .collect();
        let aggregate = model::aggregate_load(&loads, real.l_passive);
        for v in 0..params.len() {
            self.trace.costs[v] +=
                model::stage_cost_weighted(self.x[v], loads[v], aggregate, &real.rates[v], &real.weights[v]);
        }
        let next: Vec<ProsumerState> = (0..params.len())
            .map(|v| model::step_state(self.x[v], inputs[v].0, inputs[v].1, real.e_ref[v], &params[v]))
            .collect();
        let (dual_lo, dual_hi, iterations, kkt_residual) = diag;
        self.trace.records.push(StepRecord {
            t,
            states: std::mem::replace(&mut self.x, next),
            inputs,
            loads,
            l_passive: real.l_passive,
            aggregate,
            l_min: real.l_min,
            l_max: real.l_max,
            price: model::price(aggregate, &real.rates[0]),
            coupling_dual: (dual_lo, dual_hi),
            iterations,
            kkt_residual,
            clipped,
        });
        self.trace.final_states = self.x.clone();
    }

    fn fail(mut self, step: usize, err: Error) -> Trace {
        warn!("{} run stopped at step {step}: {err}", self.trace.mode.label());
        self.trace.failure = Some(StepFailure {
            step,
            reason: err.to_string(),
        });
        self.trace
    }
}

/// Closed loop: at every step solve the game over the next `N` steps and apply the first input.
///
/// A step whose game cannot be solved ends the run; the trace then carries
/// the failure and the records up to it.
pub fn run_receding_horizon(scenario: &Scenario) -> Result<Trace> {
    let mut run = Runner::new(scenario, Mode::Rhg)?;
    for t in 0..scenario.steps {
        let window = scenario.window(t, scenario.horizon)?;
        match rhg_policy(&run.x, &window, &scenario.params, &scenario.solver) {
            Ok(policy) => {
                let (lo, hi) = policy.coupling_dual();
                let diag = (lo, hi, policy.solution.iterations, policy.solution.kkt_residual);
                debug!("t={t} iterations={} kkt={:.2e}", diag.2, diag.3);
                run.execute(t, policy.inputs, diag, false);
            }
            Err(e) => return Ok(run.fail(t, e)),
        }
    }
    Ok(run.trace)
}

/// Clips `(e, s)` to the device limits given the realized state and generation.
fn clip_to_device(e: f64, s: f64, x: ProsumerState, g: f64, p: &ProsumerParams) -> (f64, f64) {
    let e = e.clamp(p.flex.e_min, p.flex.e_max);
    let (s_lo, s_hi) = p.battery.input_bounds();
    let b = &p.battery;
    let q_lo = -b.alpha * x.q / b.beta;
    let q_hi = (b.q_max - b.alpha * x.q) / b.beta;
    let lo = s_lo.max(q_lo).max(g - e);
    let hi = s_hi.min(q_hi).min(p.flex.l_max + g - e);
    let s = if lo <= hi {
        s.clamp(lo, hi)
    } else {
        // grid limits cannot be met; keep the battery physical
        s.clamp(s_lo.max(q_lo), s_hi.min(q_hi).max(s_lo.max(q_lo)))
    };
    (e, s)
}

/// Open loop: at every midnight solve one 24-step game and apply its inputs as planned.
///
/// Aggregate-limit violations are recorded, not prevented. Inputs that
/// would break a device limit under the realized data are clipped and the
/// step is flagged.
pub fn run_day_ahead(scenario: &Scenario) -> Result<Trace> {
    if !scenario.steps.is_multiple_of(DAY) {
        return Err(Error::validation(
            "steps",
            format!(
                "day-ahead runs need a whole number of days, got {} steps",
                scenario.steps
            ),
        ));
    }
    let mut run = Runner::new(scenario, Mode::DayAhead)?;
    for day in 0..scenario.steps / DAY {
        let t0 = day * DAY;
        let window = scenario.window(t0, DAY)?;
        let policy = match rhg_policy(&run.x, &window, &scenario.params, &scenario.solver) {
            Ok(p) => p,
            Err(e) => return Ok(run.fail(t0, e)),
        };
        let layout = &policy.game.layout;
        let z = &policy.solution.z;
        let duals = policy.solution.duals_coupling().to_vec();
        for k in 0..DAY {
            let t = t0 + k;
            let real: WindowStep = scenario.step_at(t, None);
            let mut clipped = false;
            let inputs: Vec<(f64, f64)> = (0..scenario.prosumers())
                .map(|v| {
                    let planned = (z[layout.e(v, k)], z[layout.s(v, k)]);
                    let applied =
                        clip_to_device(planned.0, planned.1, run.x[v], real.generation[v], &scenario.params[v]);
                    if (applied.0 - planned.0).abs() > 1e-9 || (applied.1 - planned.1).abs() > 1e-9 {
                        clipped = true;
                    }
                    applied
                })
                .collect();
            if clipped {
                warn!("day-ahead inputs clipped to device limits at step {t}");
            }
            let (lo, hi) = duals.get(k).copied().unwrap_or((0.0, 0.0));
            let (iterations, kkt) = if k == 0 {
                (policy.solution.iterations, policy.solution.kkt_residual)
            } else {
                (0, policy.solution.kkt_residual)
            };
            run.execute(t, inputs, (lo, hi, iterations, kkt), clipped);
        }
    }
    Ok(run.trace)
}

/// Baseline without demand response: `e = e_ref`, `s = 0`.
pub fn run_no_dsm(scenario: &Scenario) -> Result<Trace> {
    let mut run = Runner::new(scenario, Mode::None)?;
    for t in 0..scenario.steps {
        let inputs = scenario.e_ref[t].iter().map(|&e| (e, 0.0)).collect();
        run.execute(t, inputs, (0.0, 0.0, 0, 0.0), false);
    }
    Ok(run.trace)
}
