//! Closed-loop execution of the horizon game and its baselines.
//!
//! A [`Scenario`] holds the nominal schedules over `T + N` steps plus a list
//! of disturbances. Reality at step `t` applies every disturbance active at
//! `t`. A prediction window built at time `t` applies foreseen disturbances
//! always and unforeseen ones only once `t` has reached their onset.

mod metrics;
mod run;

pub use metrics::{metrics, MetricsReport};
pub use run::{rhg_policy, run_day_ahead, run_no_dsm, run_receding_horizon, Policy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ScenarioWindow, WindowStep};
use crate::model::{validate_fleet, PriceRates, ProsumerParams, ProsumerState};
use crate::solver::{DirectOptions, IterativeOptions};

/// Steps per simulated day.
pub const DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// Multiplies `L_max`.
    AggregateLimitScale,
    /// Adds to the passive load.
    PassiveLoadAdd,
    /// Multiplies every prosumer's generation.
    GenerationScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Foreseen,
    Unforeseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub kind: DisturbanceKind,
    pub start: usize,
    pub duration: usize,
    pub magnitude: f64,
    pub visibility: Visibility,
}

impl Disturbance {
    pub fn active_at(&self, t: usize) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    /// Whether a forecast made at `known_at` includes this disturbance.
    pub fn visible_from(&self, known_at: usize) -> bool {
        self.visibility == Visibility::Foreseen || known_at >= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default = "SolverSettings::default_tol")]
    pub tol: f64,
    /// Defaults to the chosen algorithm's own limit.
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl SolverSettings {
    fn default_tol() -> f64 {
        1e-8
    }

    pub fn direct_options(&self) -> DirectOptions {
        let mut opts = DirectOptions {
            tol: self.tol,
            ..Default::default()
        };
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
        opts
    }

    pub fn iterative_options(&self) -> IterativeOptions {
        IterativeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            algorithm: Algorithm::Direct,
            tol: Self::default_tol(),
            max_iter: None,
        }
    }
}

/// Fully materialized simulation input.
///
/// Per-step tables are indexed `[t][prosumer]` and cover `steps + horizon`
/// steps. `zeta_bounds[t]` bounds the shift state reached at the end of step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: Vec<ProsumerParams>,
    pub steps: usize,
    pub horizon: usize,
    pub e_ref: Vec<Vec<f64>>,
    pub generation: Vec<Vec<f64>>,
    pub l_passive: Vec<f64>,
    pub rates: Vec<Vec<PriceRates>>,
    pub l_min: Vec<f64>,
    pub l_max: Vec<f64>,
    pub zeta_bounds: Vec<Vec<(f64, f64)>>,
    pub disturbances: Vec<Disturbance>,
    pub x0: Vec<ProsumerState>,
    pub terminal_cost: bool,
    pub solver: SolverSettings,
    /// Where the profiles came from, including generator parameters and seed.
    pub profile_source: String,
}

impl Scenario {
    /// Every step equal to `step`, for `steps + horizon` steps.
    pub fn constant(
        params: Vec<ProsumerParams>,
        step: &WindowStep,
        steps: usize,
        horizon: usize,
        x0: Vec<ProsumerState>,
    ) -> Self {
        let len = steps + horizon;
        Scenario {
            name: "constant".into(),
            params,
            steps,
            horizon,
            e_ref: vec![step.e_ref.clone(); len],
            generation: vec![step.generation.clone(); len],
            l_passive: vec![step.l_passive; len],
            rates: vec![step.rates.clone(); len],
            l_min: vec![step.l_min; len],
            l_max: vec![step.l_max; len],
            zeta_bounds: vec![step.zeta_bounds.clone(); len],
            disturbances: Vec::new(),
            x0,
            terminal_cost: true,
            solver: SolverSettings::default(),
            profile_source: "constant".into(),
        }
    }

    pub fn prosumers(&self) -> usize {
        self.params.len()
    }

    pub fn len(&self) -> usize {
        self.steps + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn ids(&self) -> Vec<String> {
        self.params.iter().map(|p| p.id.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.prosumers();
        if m == 0 {
            return Err(Error::validation("prosumers", "at least one prosumer required"));
        }
        validate_fleet(&self.params)?;
        for p in &self.params {
            if p.id == "aggregate" || p.id == "passive" {
                return Err(Error::validation(format!("prosumers.{}", p.id), "reserved id"));
            }
        }
        if self.steps == 0 || self.horizon == 0 {
            return Err(Error::validation("steps", "steps and horizon must be positive"));
        }
        let len = self.len();
        for (name, got) in [
            ("e_ref", self.e_ref.len()),
            ("generation", self.generation.len()),
            ("l_passive", self.l_passive.len()),
            ("rates", self.rates.len()),
            ("l_min", self.l_min.len()),
            ("l_max", self.l_max.len()),
            ("zeta_bounds", self.zeta_bounds.len()),
        ] {
            if got < len {
                return Err(Error::validation(name, format!("covers {got} steps, {len} required")));
            }
        }
        if self.x0.len() != m {
            return Err(Error::dims("initial states", m, self.x0.len()));
        }
        for (p, x) in self.params.iter().zip(&self.x0) {
            if !(x.zeta.is_finite() && x.q >= -1e-9 && x.q <= p.battery.q_max + 1e-9) {
                return Err(Error::validation(
                    format!("initial_states.{}", p.id),
                    "charge must lie in [0, q_max] and shift must be finite",
                ));
            }
        }
        for t in 0..len {
            for (v, p) in self.params.iter().enumerate() {
                if self.e_ref[t].get(v).is_none_or(|e| !(*e >= 0.0 && e.is_finite())) {
                    return Err(Error::validation(
                        format!("e_ref[{t}].{}", p.id),
                        "must be finite and nonnegative",
                    ));
                }
            }
            if !(self.l_passive[t] >= 0.0 && self.l_passive[t].is_finite()) {
                return Err(Error::validation(
                    format!("l_passive[{t}]"),
                    "must be finite and nonnegative",
                ));
            }
        }
        for d in &self.disturbances {
            if !d.magnitude.is_finite() || d.duration == 0 {
                return Err(Error::validation(
                    "disturbances",
                    "magnitude must be finite and duration positive",
                ));
            }
            if matches!(
                d.kind,
                DisturbanceKind::AggregateLimitScale | DisturbanceKind::GenerationScale
            ) && d.magnitude < 0.0
            {
                return Err(Error::validation("disturbances", "scale factors must be nonnegative"));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::validation("solver.tol", "must be positive"));
        }
        // every window (as forecast and as realized) must be well-formed
        for t in 0..len {
            let step = self.step_at(t, None);
            ScenarioWindow::new(vec![step])
                .validate(&self.params)
                .map_err(|e| match e {
                    Error::InconsistentBounds { location, lo, hi } => Error::InconsistentBounds {
                        location: format!("{location} (absolute step {t})"),
                        lo,
                        hi,
                    },
                    other => Error::AtStep {
                        step: t,
                        source: Box::new(other),
                    },
                })?;
        }
        Ok(())
    }

    /// Exogenous data of absolute step `t`, as forecast at `known_at`, or as
    /// realized when `known_at` is `None`.
    pub fn step_at(&self, t: usize, known_at: Option<usize>) -> WindowStep {
        let mut step = WindowStep {
            e_ref: self.e_ref[t].clone(),
            generation: self.generation[t].clone(),
            rates: self.rates[t].clone(),
            weights: self.params.iter().map(|p| p.flex.weights()).collect(),
            l_passive: self.l_passive[t],
            l_min: self.l_min[t],
            l_max: self.l_max[t],
            zeta_bounds: self.zeta_bounds[t].clone(),
        };
        for d in &self.disturbances {
            if !d.active_at(t) || known_at.is_some_and(|k| !d.visible_from(k)) {
                continue;
            }
            match d.kind {
                DisturbanceKind::AggregateLimitScale => step.l_max *= d.magnitude,
                DisturbanceKind::PassiveLoadAdd => step.l_passive += d.magnitude,
                DisturbanceKind::GenerationScale => step.generation.iter_mut().for_each(|g| *g *= d.magnitude),
            }
        }
        step
    }

    /// Prediction window of `len` steps starting at `t`, as known at `t`.
    pub fn window(&self, t: usize, len: usize) -> Result<ScenarioWindow> {
        if t + len > self.len() {
            return Err(Error::validation(
                "horizon",
                format!("window [{t}, {}) exceeds the {} scheduled steps", t + len, self.len()),
            ));
        }
        Ok(ScenarioWindow {
            steps: (t..t + len).map(|j| self.step_at(j, Some(t))).collect(),
            terminal_cost: self.terminal_cost,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Rhg,
    DayAhead,
    None,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Rhg => "rhg",
            Mode::DayAhead => "day-ahead",
            Mode::None => "none",
        }
    }
}

/// What happened at one executed step.
///
/// `states` are the states at the start of the step; `inputs` and `loads`
/// are what was applied; limits and price are the realized ones.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub states: Vec<ProsumerState>,
    pub inputs: Vec<(f64, f64)>,
    pub loads: Vec<f64>,
    pub l_passive: f64,
    pub aggregate: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Unit price paid by the first prosumer.
    pub price: f64,
    /// `(lower, upper)` multiplier of the first aggregate-load row of the game solved at this step.
    pub coupling_dual: (f64, f64),
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Planned inputs were cut back to device limits.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub mode: Mode,
    pub ids: Vec<String>,
    pub records: Vec<StepRecord>,
    /// States after the last executed step.
    pub final_states: Vec<ProsumerState>,
    /// Realized stage costs summed per prosumer.
    pub costs: Vec<f64>,
    /// First step at which no input could be computed; the run stops there.
    pub failure: Option<StepFailure>,
}

impl Trace {
    pub fn aggregate_loads(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.aggregate).collect()
    }

    /// States at the start of step `t`, for `t` up to the number of records.
    pub fn states_at(&self, t: usize) -> Option<&[ProsumerState]> {
        match t.cmp(&self.records.len()) {
            std::cmp::Ordering::Less => Some(&self.records[t].states),
            std::cmp::Ordering::Equal => Some(&self.final_states),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// `(t, amount)` for every step whose aggregate load leaves `[L_min, L_max]` by more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| {
                let v = (r.aggregate - r.l_max).max(r.l_min - r.aggregate);
                (v > tol).then_some((r.t, v))
            })
            .collect()
    }

    pub fn peak(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.aggregate)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
