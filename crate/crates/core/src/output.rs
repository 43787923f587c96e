//! Trace, aggregate and metrics files for plotting.
//!
//! Rows are ordered by step then id and numbers use the shortest
//! round-trip representation, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::sim::{MetricsReport, Scenario, Trace};

pub const TRACE_FILE: &str = "trace.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn finite(what: &str, t: usize, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numerical(format!("non-finite {what} at step {t}")))
    }
}

/// `t,id,e,s,zeta,q,l`: one row per step and prosumer plus an `aggregate`
/// row whose `l` is the aggregate load (passive load included).
pub fn trace_csv(trace: &Trace) -> Result<String> {
    let mut out = String::from("t,id,e,s,zeta,q,l\n");
    let mut order: Vec<usize> = (0..trace.ids.len()).collect();
    order.sort_by(|&a, &b| trace.ids[a].cmp(&trace.ids[b]));
    for r in &trace.records {
        let mut rows: Vec<(&str, [f64; 5])> = order
            .iter()
            .map(|&v| {
                let (e, s) = r.inputs[v];
                (
                    trace.ids[v].as_str(),
                    [e, s, r.states[v].zeta, r.states[v].q, r.loads[v]],
                )
            })
            .collect();
        let sum = |f: &dyn Fn(usize) -> f64| (0..trace.ids.len()).map(f).sum::<f64>();
        rows.push((
            "aggregate",
            [
                sum(&|v| r.inputs[v].0),
                sum(&|v| r.inputs[v].1),
                sum(&|v| r.states[v].zeta),
                sum(&|v| r.states[v].q),
                r.aggregate,
            ],
        ));
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (id, vals) in rows {
            write!(out, "{},{id}", r.t).unwrap();
            for x in vals {
                write!(out, ",{}", finite("trace value", r.t, x)?).unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// `t,L,L_min,L_max,price`.
pub fn aggregate_csv(trace: &Trace) -> Result<String> {
    let mut out = String::from("t,L,L_min,L_max,price\n");
    for r in &trace.records {
        write!(out, "{}", r.t).unwrap();
        for x in [r.aggregate, r.l_min, r.l_max, r.price] {
            write!(out, ",{}", finite("aggregate value", r.t, x)?).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn number(what: &str, x: f64) -> Result<Value> {
    if x.is_finite() {
        Ok(json!(x))
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

pub fn metrics_json(scenario: &Scenario, trace: &Trace, report: &MetricsReport) -> Result<String> {
    let mut m = Map::new();
    m.insert("scenario".into(), json!(scenario.name));
    m.insert("mode".into(), json!(trace.mode.label()));
    m.insert("profile_source".into(), json!(scenario.profile_source));
    m.insert("steps".into(), json!(trace.records.len()));
    m.insert("horizon".into(), json!(scenario.horizon));
    m.insert("peak_kw".into(), number("peak", report.peak_kw)?);
    m.insert(
        "baseline_peak_kw".into(),
        number("baseline peak", report.baseline_peak_kw)?,
    );
    m.insert("shaving_pct".into(), number("shaving", report.shaving_pct)?);
    m.insert("violations".into(), json!(report.violations));
    m.insert("max_violation_kw".into(), number("violation", report.max_violation_kw)?);
    m.insert(
        "total_violation_kwh".into(),
        number("violation", report.total_violation_kwh)?,
    );
    m.insert("total_cost".into(), number("cost", report.total_cost)?);
    let mut costs = Map::new();
    for (id, c) in &report.cost_by_prosumer {
        costs.insert(id.clone(), number("cost", *c)?);
    }
    m.insert("cost_by_prosumer".into(), Value::Object(costs));
    m.insert("eod_dip".into(), number("end-of-day dip", report.eod_dip)?);
    let soc = report
        .midnight_soc
        .iter()
        .map(|day| {
            day.iter()
                .map(|&q| number("charge", q))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        })
        .collect::<Result<Vec<_>>>()?;
    m.insert("midnight_soc".into(), Value::Array(soc));
    if let Some(err) = &report.stability_error {
        let v = err
            .iter()
            .map(|&x| number("stability error", x))
            .collect::<Result<Vec<_>>>()?;
        m.insert("stability_error".into(), Value::Array(v));
    }
    m.insert(
        "failure".into(),
        match &trace.failure {
            Some(f) => json!({"step": f.step, "reason": f.reason}),
            None => Value::Null,
        },
    );
    let mut text = serde_json::to_string_pretty(&Value::Object(m)).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Writes `trace.csv`, `aggregate.csv` and `metrics.json` into `dir`.
///
/// All contents are rendered (and checked for non-finite numbers) before
/// the first file is touched.
pub fn write_trace(dir: &Path, scenario: &Scenario, trace: &Trace, report: &MetricsReport) -> Result<Vec<PathBuf>> {
    let files = [
        (TRACE_FILE, trace_csv(trace)?),
        (AGGREGATE_FILE, aggregate_csv(trace)?),
        (METRICS_FILE, metrics_json(scenario, trace, report)?),
    ];
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
