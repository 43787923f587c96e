//! Scenario files: one JSON document plus optional CSV profile tables.
//!
//! Every schedule has a compact form for hand-written files and a
//! `per_step` form; [`save_scenario`] writes the explicit forms so that
//! loading the result reproduces the same [`Scenario`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PriceRates, ProsumerParams, ProsumerState};
use crate::output::write_atomic;
use crate::sim::{Disturbance, Scenario, SolverSettings, DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub steps: usize,
    pub horizon: usize,
    pub prosumers: Vec<ProsumerParams>,
    /// In prosumer order; all zero when omitted.
    #[serde(default)]
    pub initial_states: Option<Vec<ProsumerState>>,
    pub profiles: ProfileSpec,
    pub prices: PriceSpec,
    pub aggregate_limits: LimitSpec,
    #[serde(default)]
    pub shift_bounds: ShiftBoundSpec,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default = "default_true")]
    pub terminal_cost: bool,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Overrides the generated description of where the profiles came from.
    #[serde(default)]
    pub profile_source: Option<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Synthetic(SyntheticProfiles),
    /// CSV with columns `hour,id,e_ref_kwh[,g_kwh]`; relative paths resolve against the scenario file.
    Csv {
        path: PathBuf,
    },
    Table(ProfileTable),
}

/// Explicit profiles, `[t][prosumer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTable {
    pub e_ref: Vec<Vec<f64>>,
    pub generation: Vec<Vec<f64>>,
    pub passive: Vec<f64>,
}

/// Daily consumption `base + amp max(0, sin(2 pi (h - 7) / 24))` plus
/// Gaussian evening and morning bumps, scaled per household; solar output is a clipped
/// parabola between sunrise and sunset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticProfiles {
    pub seed: u64,
    pub base: f64,
    pub amp: f64,
    pub evening_amp: f64,
    pub evening_hour: f64,
    pub evening_width: f64,
    pub morning_amp: f64,
    pub morning_hour: f64,
    pub morning_width: f64,
    /// Solar output at noon for a generating prosumer (kWh).
    pub solar_peak: f64,
    pub sunrise: f64,
    pub sunset: f64,
    /// Households counted in the passive load.
    pub passive_consumers: usize,
    /// Household scale factors are drawn from `[1 - spread, 1 + spread]`.
    pub spread: f64,
    /// Hourly multiplicative noise amplitude.
    pub noise: f64,
}

impl Default for SyntheticProfiles {
    fn default() -> Self {
        SyntheticProfiles {
            seed: 0,
            base: 0.6,
            amp: 0.8,
            evening_amp: 1.2,
            evening_hour: 19.0,
            evening_width: 1.5,
            morning_amp: 0.0,
            morning_hour: 7.5,
            morning_width: 1.0,
            solar_peak: 2.5,
            sunrise: 7.0,
            sunset: 19.0,
            passive_consumers: 0,
            spread: 0.2,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSpec {
    /// Both rates multiplied by `multiplier` in the hour-of-day windows `[start, end)`.
    Peak {
        rho1: f64,
        rho2: f64,
        #[serde(default = "default_multiplier")]
        multiplier: f64,
        #[serde(default)]
        windows: Vec<(usize, usize)>,
    },
    /// `[t][prosumer]`.
    PerStep(Vec<Vec<PriceRates>>),
}

fn default_multiplier() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LimitSpec {
    Constant {
        l_min: f64,
        l_max: f64,
    },
    /// `(L_min, L_max)` per step.
    PerStep(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftBoundSpec {
    /// `±intermediate` (default `±q_max`) everywhere and `±midnight` on the
    /// state reached at every absolute midnight.
    Daily {
        #[serde(default)]
        intermediate: Option<f64>,
        #[serde(default)]
        midnight: Option<f64>,
    },
    /// `[t][prosumer]` bounds on the shift state reached at the end of step `t`.
    PerStep(Vec<Vec<(f64, f64)>>),
}

impl Default for ShiftBoundSpec {
    fn default() -> Self {
        ShiftBoundSpec::Daily {
            intermediate: None,
            midnight: Some(1.0),
        }
    }
}

/// Reads, schema-checks and materializes a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = parse_scenario(&text)?;
    materialize(&file, path.parent().unwrap_or(Path::new(".")))
}

/// Schema check only, with the failing field path in the error.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::validation(path, e.into_inner().to_string())
    })
}

pub fn materialize(file: &ScenarioFile, base_dir: &Path) -> Result<Scenario> {
    let m = file.prosumers.len();
    let len = file.steps + file.horizon;
    let ids: Vec<String> = file.prosumers.iter().map(|p| p.id.clone()).collect();
    let (table, source) = match &file.profiles {
        ProfileSpec::Synthetic(spec) => (synthetic_profiles(spec, &file.prosumers, len), spec.describe()),
        ProfileSpec::Csv { path } => {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            (read_profile_csv(&full, &ids, len)?, format!("csv {}", path.display()))
        }
        ProfileSpec::Table(t) => (t.clone(), "table".to_string()),
    };
    let rates = match &file.prices {
        PriceSpec::Peak {
            rho1,
            rho2,
            multiplier,
            windows,
        } => {
            for &(a, b) in windows {
                if !(a < b && b <= DAY) {
                    return Err(Error::validation(
                        "prices.peak.windows",
                        format!("[{a}, {b}) is not an hour-of-day range"),
                    ));
                }
            }
            let base = PriceRates::new(*rho1, *rho2);
            (0..len)
                .map(|t| {
                    let h = t % DAY;
                    let r = if windows.iter().any(|&(a, b)| (a..b).contains(&h)) {
                        base.scaled(*multiplier)
                    } else {
                        base
                    };
                    vec![r; m]
                })
                .collect()
        }
        PriceSpec::PerStep(r) => r.clone(),
    };
    let (l_min, l_max) = match &file.aggregate_limits {
        LimitSpec::Constant { l_min, l_max } => (vec![*l_min; len], vec![*l_max; len]),
        LimitSpec::PerStep(v) => v.iter().copied().unzip(),
    };
    let zeta_bounds = match &file.shift_bounds {
        ShiftBoundSpec::Daily { intermediate, midnight } => (0..len)
            .map(|t| {
                file.prosumers
                    .iter()
                    .map(|p| {
                        let b = match midnight {
                            Some(b) if (t + 1) % DAY == 0 => *b,
                            _ => intermediate.unwrap_or(p.battery.q_max),
                        };
                        (-b, b)
                    })
                    .collect()
            })
            .collect(),
        ShiftBoundSpec::PerStep(v) => v.clone(),
    };
    let scenario = Scenario {
        name: file.name.clone().unwrap_or_else(|| "scenario".into()),
        params: file.prosumers.clone(),
        steps: file.steps,
        horizon: file.horizon,
        e_ref: table.e_ref,
        generation: table.generation,
        l_passive: table.passive,
        rates,
        l_min,
        l_max,
        zeta_bounds,
        disturbances: file.disturbances.clone(),
        x0: file
            .initial_states
            .clone()
            .unwrap_or_else(|| vec![ProsumerState::default(); m]),
        terminal_cost: file.terminal_cost,
        solver: file.solver,
        profile_source: file.profile_source.clone().unwrap_or(source),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// The scenario with every schedule written out explicitly.
pub fn to_file(scenario: &Scenario) -> ScenarioFile {
    ScenarioFile {
        name: Some(scenario.name.clone()),
        steps: scenario.steps,
        horizon: scenario.horizon,
        prosumers: scenario.params.clone(),
        initial_states: Some(scenario.x0.clone()),
        profiles: ProfileSpec::Table(ProfileTable {
            e_ref: scenario.e_ref.clone(),
            generation: scenario.generation.clone(),
            passive: scenario.l_passive.clone(),
        }),
        prices: PriceSpec::PerStep(scenario.rates.clone()),
        aggregate_limits: LimitSpec::PerStep(
            scenario
                .l_min
                .iter()
                .copied()
                .zip(scenario.l_max.iter().copied())
                .collect(),
        ),
        shift_bounds: ShiftBoundSpec::PerStep(scenario.zeta_bounds.clone()),
        disturbances: scenario.disturbances.clone(),
        terminal_cost: scenario.terminal_cost,
        solver: scenario.solver,
        profile_source: Some(scenario.profile_source.clone()),
    }
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&to_file(scenario)).map_err(|e| Error::Numerical(e.to_string()))?;
    write_atomic(path.as_ref(), text.as_bytes())
}

impl SyntheticProfiles {
    pub fn describe(&self) -> String {
        format!(
            "synthetic seed={} base={} amp={} evening_amp={} evening_hour={} evening_width={} morning_amp={} morning_hour={} \
             morning_width={} solar_peak={} sunrise={} sunset={} passive_consumers={} spread={} noise={}",
            self.seed,
            self.base,
            self.amp,
            self.evening_amp,
            self.evening_hour,
            self.evening_width,
            self.morning_amp,
            self.morning_hour,
            self.morning_width,
            self.solar_peak,
            self.sunrise,
            self.sunset,
            self.passive_consumers,
            self.spread,
            self.noise
        )
    }

    fn shape(&self, t: usize) -> f64 {
        let h = (t % DAY) as f64;
        let day = (2.0 * std::f64::consts::PI * (t as f64 - 7.0) / DAY as f64)
            .sin()
            .max(0.0);
        let bump = |center: f64, width: f64| (-(h - center).powi(2) / (2.0 * width.powi(2))).exp();
        self.base
            + self.amp * day
            + self.evening_amp * bump(self.evening_hour, self.evening_width)
            + self.morning_amp * bump(self.morning_hour, self.morning_width)
    }

    fn solar(&self, t: usize) -> f64 {
        let h = (t % DAY) as f64;
        let mid = 0.5 * (self.sunrise + self.sunset);
        let half = 0.5 * (self.sunset - self.sunrise);
        if half <= 0.0 {
            return 0.0;
        }
        self.solar_peak * (1.0 - ((h - mid) / half).powi(2)).max(0.0)
    }
}

/// Deterministic synthetic profiles for `len` steps.
pub fn synthetic_profiles(spec: &SyntheticProfiles, params: &[ProsumerParams], len: usize) -> ProfileTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spread = spec.spread.clamp(0.0, 1.0);
    let household = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let scale = 1.0 + spread * rng.random_range(-1.0..=1.0);
        (0..len)
            .map(|t| {
                let noise = 1.0 + spec.noise * rng.random_range(-1.0..=1.0);
                (scale * spec.shape(t) * noise).max(0.0)
            })
            .collect()
    };
    let consumption: Vec<Vec<f64>> = params.iter().map(|_| household(&mut rng)).collect();
    let mut passive = vec![0.0; len];
    for _ in 0..spec.passive_consumers {
        for (acc, x) in passive.iter_mut().zip(household(&mut rng)) {
            *acc += x;
        }
    }
    let solar_scale: Vec<f64> = params
        .iter()
        .map(|p| {
            if p.has_generation {
                1.0 + spread * rng.random_range(-1.0..=1.0)
            } else {
                0.0
            }
        })
        .collect();
    ProfileTable {
        e_ref: (0..len).map(|t| consumption.iter().map(|c| c[t]).collect()).collect(),
        generation: (0..len)
            .map(|t| solar_scale.iter().map(|s| (s * spec.solar(t)).max(0.0)).collect())
            .collect(),
        passive,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRow {
    hour: usize,
    id: String,
    e_ref_kwh: f64,
    #[serde(default)]
    g_kwh: Option<f64>,
}

/// Reads a profile table; `passive` rows (if any) hold the passive load.
pub fn read_profile_csv(path: &Path, ids: &[String], len: usize) -> Result<ProfileTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut series: BTreeMap<String, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for (line, row) in reader.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let at = || format!("{}:{}", path.display(), line + 2);
        let g = row.g_kwh.unwrap_or(0.0);
        if !(row.e_ref_kwh >= 0.0 && row.e_ref_kwh.is_finite() && g >= 0.0 && g.is_finite()) {
            return Err(Error::validation(
                at(),
                "e_ref_kwh and g_kwh must be finite and nonnegative",
            ));
        }
        if row.id != "passive" && !ids.contains(&row.id) {
            return Err(Error::validation(at(), format!("unknown id `{}`", row.id)));
        }
        if row.hour >= len {
            continue;
        }
        let slot = &mut series.entry(row.id.clone()).or_insert_with(|| vec![None; len])[row.hour];
        if slot.is_some() {
            return Err(Error::validation(
                at(),
                format!("duplicate hour {} for `{}`", row.hour, row.id),
            ));
        }
        *slot = Some((row.e_ref_kwh, g));
    }
    let mut take = |id: &str, required: bool| -> Result<Vec<(f64, f64)>> {
        match series.remove(id) {
            Some(v) => v
                .into_iter()
                .enumerate()
                .map(|(h, x)| {
                    x.ok_or_else(|| {
                        Error::validation(path.display().to_string(), format!("`{id}` has no row for hour {h}"))
                    })
                })
                .collect(),
            None if required => Err(Error::validation(
                path.display().to_string(),
                format!("no rows for `{id}`"),
            )),
            None => Ok(vec![(0.0, 0.0); len]),
        }
    };
    let columns: Vec<Vec<(f64, f64)>> = ids.iter().map(|id| take(id, true)).collect::<Result<_>>()?;
    let passive = take("passive", false)?;
    Ok(ProfileTable {
        e_ref: (0..len).map(|t| columns.iter().map(|c| c[t].0).collect()).collect(),
        generation: (0..len).map(|t| columns.iter().map(|c| c[t].1).collect()).collect(),
        passive: passive.iter().map(|x| x.0).collect(),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    Error::validation(path.display().to_string(), e.to_string())
}
