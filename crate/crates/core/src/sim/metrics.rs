use serde::Serialize;

use super::{Trace, DAY};
use crate::error::{Error, Result};
use crate::model::ProsumerState;

/// Hours before the last hour of a day averaged for the end-of-day dip.
const DIP_NEIGHBORHOOD: usize = 3;
const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub peak_kw: f64,
    pub baseline_peak_kw: f64,
    /// `(1 - peak / baseline_peak) * 100`.
    pub shaving_pct: f64,
    /// Steps whose aggregate load leaves `[L_min, L_max]`.
    pub violations: usize,
    pub max_violation_kw: f64,
    pub total_violation_kwh: f64,
    /// Sum of the realized costs of all prosumers.
    pub total_cost: f64,
    pub cost_by_prosumer: Vec<(String, f64)>,
    /// Largest `|L(last hour) - mean L(preceding hours)|` over the simulated days.
    pub eod_dip: f64,
    /// Stored charge of every prosumer at every midnight after the start, `[day][prosumer]`.
    pub midnight_soc: Vec<Vec<f64>>,
    /// `|x_t - x_bar|` over the stacked states, for `t = 0..=T`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_error: Option<Vec<f64>>,
}

fn eod_dip(loads: &[f64]) -> f64 {
    let mut dip: f64 = 0.0;
    for end in (DAY - 1..loads.len()).step_by(DAY) {
        let near = &loads[end - DIP_NEIGHBORHOOD..end];
        let mean = near.iter().sum::<f64>() / near.len() as f64;
        dip = dip.max((loads[end] - mean).abs());
    }
    dip
}

fn stacked_distance(a: &[ProsumerState], b: &[ProsumerState]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.zeta - y.zeta).powi(2) + (x.q - y.q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Summary of `trace` against `baseline` (normally the no-DSM run).
///
/// With `steady` given, also reports the distance of every state to it.
pub fn metrics(trace: &Trace, baseline: &Trace, steady: Option<&[ProsumerState]>) -> Result<MetricsReport> {
    if trace.records.len() != baseline.records.len() {
        return Err(Error::dims(
            "baseline trace length",
            trace.records.len(),
            baseline.records.len(),
        ));
    }
    if trace.records.is_empty() {
        return Err(Error::param("trace", "no executed steps"));
    }
    let peak = trace.peak();
    let baseline_peak = baseline.peak();
    let violations = trace.violations(VIOLATION_TOL);
    let loads = trace.aggregate_loads();
    let midnight_soc = (1..=trace.records.len() / DAY)
        .filter_map(|d| trace.states_at(d * DAY))
        .map(|xs| xs.iter().map(|x| x.q).collect())
        .collect();
    let stability_error = match steady {
        Some(xb) => {
            if xb.len() != trace.ids.len() {
                return Err(Error::dims("steady state", trace.ids.len(), xb.len()));
            }
            Some(
                (0..=trace.records.len())
                    .filter_map(|t| trace.states_at(t))
                    .map(|x| stacked_distance(x, xb))
                    .collect(),
            )
        }
        None => None,
    };
    Ok(MetricsReport {
        peak_kw: peak,
        baseline_peak_kw: baseline_peak,
        shaving_pct: if baseline_peak != 0.0 {
            (1.0 - peak / baseline_peak) * 100.0
        } else {
            0.0
        },
        violations: violations.len(),
        max_violation_kw: violations.iter().map(|v| v.1).fold(0.0, f64::max),
        total_violation_kwh: violations.iter().map(|v| v.1).sum(),
        total_cost: trace.costs.iter().sum(),
        cost_by_prosumer: trace.ids.iter().cloned().zip(trace.costs.iter().copied()).collect(),
        eod_dip: eod_dip(&loads),
        midnight_soc,
        stability_error,
    })
}
