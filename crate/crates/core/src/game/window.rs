use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComfortWeights, PriceRates, ProsumerParams};

/// Exogenous data for one step of a prediction window.
///
/// Per-prosumer vectors are in fleet order. `zeta_bounds` bound the shift
/// state reached at the *end* of the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStep {
    pub e_ref: Vec<f64>,
    pub generation: Vec<f64>,
    pub rates: Vec<PriceRates>,
    pub weights: Vec<ComfortWeights>,
    pub l_passive: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub zeta_bounds: Vec<(f64, f64)>,
}

impl WindowStep {
    /// A step with zero generation, uniform rates, the prosumers' default
    /// weights and shift bounds of `±q_max`.
    pub fn nominal(
        params: &[ProsumerParams],
        e_ref: Vec<f64>,
        rates: PriceRates,
        l_passive: f64,
        l_min: f64,
        l_max: f64,
    ) -> Self {
        WindowStep {
            e_ref,
            generation: vec![0.0; params.len()],
            rates: vec![rates; params.len()],
            weights: params.iter().map(|p| p.flex.weights()).collect(),
            l_passive,
            l_min,
            l_max,
            zeta_bounds: params.iter().map(|p| (-p.battery.q_max, p.battery.q_max)).collect(),
        }
    }

    pub fn total_generation(&self) -> f64 {
        self.generation.iter().sum()
    }
}

/// The parameter vector of one horizon game: `N` steps of exogenous data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioWindow {
    pub steps: Vec<WindowStep>,
    /// Penalize the terminal state `x_N` with the last step's weights.
    pub terminal_cost: bool,
}

impl ScenarioWindow {
    pub fn new(steps: Vec<WindowStep>) -> Self {
        ScenarioWindow {
            steps,
            terminal_cost: true,
        }
    }

    /// `N` copies of the same step.
    pub fn constant(step: WindowStep, horizon: usize) -> Self {
        ScenarioWindow::new(vec![step; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Rates identical across prosumers at every step.
    pub fn symmetric_pricing(&self) -> bool {
        self.steps.iter().all(|st| st.rates.windows(2).all(|w| w[0] == w[1]))
    }

    pub fn validate(&self, params: &[ProsumerParams]) -> Result<()> {
        let m = params.len();
        for (k, st) in self.steps.iter().enumerate() {
            for (name, len) in [
                ("e_ref", st.e_ref.len()),
                ("generation", st.generation.len()),
                ("rates", st.rates.len()),
                ("weights", st.weights.len()),
                ("zeta_bounds", st.zeta_bounds.len()),
            ] {
                if len != m {
                    return Err(Error::dims(format!("window step {k} {name}"), m, len));
                }
            }
            if !(st.l_min < st.l_max) {
                return Err(Error::InconsistentBounds {
                    location: format!("aggregate limit at window step {k}"),
                    lo: st.l_min,
                    hi: st.l_max,
                });
            }
            if !st.l_passive.is_finite() {
                return Err(Error::param(format!("window step {k} l_passive"), "not finite"));
            }
            for (v, p) in params.iter().enumerate() {
                st.rates[v]
                    .validate()
                    .map_err(|e| Error::param(format!("window step {k} prosumer {}", p.id), e.to_string()))?;
                let w = st.weights[v];
                if !(w.gamma1 >= 0.0 && w.gamma2 >= 0.0) {
                    return Err(Error::param(
                        format!("window step {k} prosumer {} weights", p.id),
                        "must be nonnegative",
                    ));
                }
                let (lo, hi) = st.zeta_bounds[v];
                if !(lo <= hi) {
                    return Err(Error::InconsistentBounds {
                        location: format!("shift bound of {} after window step {k}", p.id),
                        lo,
                        hi,
                    });
                }
                if !p.has_generation && st.generation[v] != 0.0 {
                    return Err(Error::param(
                        format!("window step {k} generation of {}", p.id),
                        "non-generating prosumer has nonzero generation",
                    ));
                }
                if !(st.e_ref[v].is_finite() && st.generation[v].is_finite() && st.generation[v] >= 0.0) {
                    return Err(Error::param(
                        format!("window step {k} prosumer {}", p.id),
                        "reference consumption and generation must be finite, generation nonnegative",
                    ));
                }
            }
        }
        Ok(())
    }
}
