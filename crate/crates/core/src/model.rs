//! Prosumer physics and economics: loads, battery and energy-shift dynamics,
//! affine pricing and the per-step cost each prosumer minimizes.
//!
//! Units are kWh per one-hour step and dollars throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Battery model `q' = alpha q + beta s` with bounds on the effective charge `beta s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Leakage factor per step, in (0, 1].
    pub alpha: f64,
    /// Charging efficiency, in (0, 1].
    pub beta: f64,
    /// Storage capacity (kWh).
    pub q_max: f64,
    /// Lower bound on `beta * s` per step (kWh, <= 0).
    pub s_eff_min: f64,
    /// Upper bound on `beta * s` per step (kWh, >= 0).
    pub s_eff_max: f64,
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param("alpha", format!("{} not in (0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param("beta", format!("{} not in (0, 1]", self.beta)));
        }
        if !(self.q_max > 0.0 && self.q_max.is_finite()) {
            return Err(Error::param("q_max", format!("{} must be positive", self.q_max)));
        }
        if !(self.s_eff_min <= 0.0 && 0.0 <= self.s_eff_max) {
            return Err(Error::param(
                "s_eff_min/s_eff_max",
                format!(
                    "need s_eff_min <= 0 <= s_eff_max, got [{}, {}]",
                    self.s_eff_min, self.s_eff_max
                ),
            ));
        }
        Ok(())
    }

    /// Bounds on the raw charging input `s`, i.e. the effective bounds divided by `beta`.
    pub fn input_bounds(&self) -> (f64, f64) {
        (self.s_eff_min / self.beta, self.s_eff_max / self.beta)
    }
}

/// Consumption flexibility, grid connection limit and comfort weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexParams {
    pub e_min: f64,
    pub e_max: f64,
    /// Maximum draw from the grid per step (kWh).
    pub l_max: f64,
    /// Weight on the squared energy-shift state.
    pub gamma1: f64,
    /// Weight on the squared state of charge.
    pub gamma2: f64,
}

impl FlexParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.e_min && self.e_min < self.e_max) {
            return Err(Error::param(
                "e_min/e_max",
                format!("need 0 <= e_min < e_max, got [{}, {}]", self.e_min, self.e_max),
            ));
        }
        if !(self.l_max > 0.0) {
            return Err(Error::param("l_max", format!("{} must be positive", self.l_max)));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::param(
                "gamma1/gamma2",
                format!("weights must be nonnegative, got ({}, {})", self.gamma1, self.gamma2),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> ComfortWeights {
        ComfortWeights {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        }
    }
}

/// The quadratic state weights of the stage cost, overridable per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComfortWeights {
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Affine price `rho1 * L + rho2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceRates {
    pub rho1: f64,
    pub rho2: f64,
}

impl PriceRates {
    pub fn new(rho1: f64, rho2: f64) -> Self {
        PriceRates { rho1, rho2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho1 > 0.0 && self.rho1.is_finite()) {
            return Err(Error::param("rho1", format!("{} must be positive", self.rho1)));
        }
        if !(self.rho2 >= 0.0 && self.rho2.is_finite()) {
            return Err(Error::param("rho2", format!("{} must be nonnegative", self.rho2)));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PriceRates {
            rho1: self.rho1 * factor,
            rho2: self.rho2 * factor,
        }
    }
}

/// Energy-shift state `zeta` and state of charge `q` (kWh).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerState {
    pub zeta: f64,
    pub q: f64,
}

impl ProsumerState {
    pub fn new(zeta: f64, q: f64) -> Self {
        ProsumerState { zeta, q }
    }

    pub fn distance(&self, other: &ProsumerState) -> f64 {
        ((self.zeta - other.zeta).powi(2) + (self.q - other.q).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerParams {
    pub id: String,
    pub battery: BatteryParams,
    pub flex: FlexParams,
    #[serde(default)]
    pub has_generation: bool,
}

impl ProsumerParams {
    pub fn validate(&self) -> Result<()> {
        self.battery
            .validate()
            .and_then(|_| self.flex.validate())
            .map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field: format!("{}.{}", self.id, field),
                    reason,
                },
                other => other,
            })
    }
}

/// Checks parameter validity and id uniqueness across a fleet.
pub fn validate_fleet(params: &[ProsumerParams]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for p in params {
        p.validate()?;
        if !seen.insert(p.id.as_str()) {
            return Err(Error::param("id", format!("duplicate prosumer id `{}`", p.id)));
        }
    }
    Ok(())
}

/// Grid load of one prosumer: consumption plus charging minus generation.
pub fn local_load(e: f64, s: f64, g: f64) -> f64 {
    e + s - g
}

pub fn aggregate_load(active_loads: &[f64], passive_load: f64) -> f64 {
    active_loads.iter().sum::<f64>() + passive_load
}

/// One step of `x' = A x + B u + d`.
pub fn step_state(state: ProsumerState, e: f64, s: f64, e_ref: f64, params: &ProsumerParams) -> ProsumerState {
    ProsumerState {
        zeta: state.zeta + (e - e_ref),
        q: params.battery.alpha * state.q + params.battery.beta * s,
    }
}

pub fn price(aggregate: f64, rates: &PriceRates) -> f64 {
    rates.rho1 * aggregate + rates.rho2
}

/// Energy cost plus shift discomfort plus battery usage for one step.
pub fn stage_cost(state: ProsumerState, load: f64, aggregate: f64, rates: &PriceRates, flex: &FlexParams) -> f64 {
    stage_cost_weighted(state, load, aggregate, rates, &flex.weights())
}

pub fn stage_cost_weighted(
    state: ProsumerState,
    load: f64,
    aggregate: f64,
    rates: &PriceRates,
    weights: &ComfortWeights,
) -> f64 {
    price(aggregate, rates) * load + weights.gamma1 * state.zeta * state.zeta + weights.gamma2 * state.q * state.q
}
