//! Random feasible game instances for audits and cross-checks.
//!
//! Every instance carries a feasible plan (consumption cut halfway towards
//! `e_min`, batteries idle) so feasibility holds by construction, while the
//! aggregate limit is drawn between that plan's load and the nominal load so
//! the coupling rows frequently bind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{ScenarioWindow, WindowStep};
use crate::model::{BatteryParams, ComfortWeights, FlexParams, PriceRates, ProsumerParams, ProsumerState};

#[derive(Debug, Clone)]
pub struct Instance {
    pub x0: Vec<ProsumerState>,
    pub params: Vec<ProsumerParams>,
    pub window: ScenarioWindow,
    /// A feasible input profile, `plan[v][k] = (e, s)`.
    pub plan: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceOptions {
    pub max_prosumers: usize,
    pub max_horizon: usize,
    /// Draw rates independently per prosumer.
    pub asymmetric: bool,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        InstanceOptions {
            max_prosumers: 5,
            max_horizon: 8,
            asymmetric: false,
        }
    }
}

pub fn random_instance(seed: u64, opts: InstanceOptions) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=opts.max_prosumers.max(1));
    let n = rng.random_range(1..=opts.max_horizon.max(1));

    let params: Vec<ProsumerParams> = (0..m)
        .map(|v| {
            let q_max = rng.random_range(5.0..15.0);
            let e_min = rng.random_range(0.0..0.5);
            let e_max = e_min + rng.random_range(2.0..4.0);
            ProsumerParams {
                id: format!("p{v}"),
                battery: BatteryParams {
                    alpha: rng.random_range(0.95..=1.0),
                    beta: rng.random_range(0.85..=1.0),
                    q_max,
                    s_eff_min: -rng.random_range(0.3..0.7) * q_max,
                    s_eff_max: rng.random_range(0.3..0.7) * q_max,
                },
                flex: FlexParams {
                    e_min,
                    e_max,
                    l_max: e_max + rng.random_range(0.0..3.0),
                    gamma1: rng.random_range(0.01..0.2),
                    gamma2: rng.random_range(0.01..0.2),
                },
                has_generation: rng.random_bool(0.4),
            }
        })
        .collect();

    let x0: Vec<ProsumerState> = params
        .iter()
        .map(|p| ProsumerState::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..p.battery.q_max)))
        .collect();

    let mut plan = vec![Vec::with_capacity(n); m];
    let mut steps = Vec::with_capacity(n);
    let zeta_nominal: Vec<f64> = x0.iter().map(|x| x.zeta).collect();
    let mut zeta_plan = zeta_nominal.clone();
    let shared_rates = PriceRates::new(rng.random_range(0.01..0.05), rng.random_range(0.02..0.1));
    for _ in 0..n {
        let mut e_ref = Vec::with_capacity(m);
        let mut generation = Vec::with_capacity(m);
        let mut l_nom = 0.0;
        let mut l_plan = 0.0;
        for (v, p) in params.iter().enumerate() {
            let lo = p.flex.e_min + 0.5;
            let er = rng.random_range(lo..(p.flex.e_max - 0.5).max(lo + 1e-3));
            let ep = 0.5 * (er + p.flex.e_min);
            let g = if p.has_generation {
                rng.random_range(0.0..(p.flex.e_min + 0.3 * (er - p.flex.e_min)))
            } else {
                0.0
            };
            plan[v].push((ep, 0.0));
            zeta_plan[v] += ep - er;
            l_nom += er - g;
            l_plan += ep - g;
            e_ref.push(er);
            generation.push(g);
        }
        let l_passive = rng.random_range(0.5..5.0);
        let l_nom = l_nom + l_passive;
        let l_plan = l_plan + l_passive;
        let l_min = 0.5 * l_plan;
        let l_max = rng.random_range((l_plan + 0.05 * (l_nom - l_plan))..(1.2 * l_nom));
        let zeta_bounds = (0..m)
            .map(|v| {
                let lo = zeta_plan[v].min(zeta_nominal[v]) - rng.random_range(0.0..1.0);
                let hi = zeta_plan[v].max(zeta_nominal[v]) + rng.random_range(0.0..1.0);
                (lo, hi)
            })
            .collect();
        let rates = if opts.asymmetric {
            (0..m)
                .map(|_| PriceRates::new(rng.random_range(0.01..0.05), rng.random_range(0.02..0.1)))
                .collect()
        } else {
            vec![shared_rates; m]
        };
        let weights = params
            .iter()
            .map(|p| ComfortWeights {
                gamma1: p.flex.gamma1,
                gamma2: p.flex.gamma2,
            })
            .collect();
        steps.push(WindowStep {
            e_ref,
            generation,
            rates,
            weights,
            l_passive,
            l_min,
            l_max,
            zeta_bounds,
        });
    }

    Instance {
        x0,
        params,
        window: ScenarioWindow::new(steps),
        plan,
    }
}

impl Instance {
    /// The feasible plan as a full decision vector (states by forward simulation).
    pub fn plan_vector(&self) -> Vec<f64> {
        let n = self.window.horizon();
        let layout = crate::game::Layout::new(self.params.len(), n).expect("nonempty instance");
        let mut z = vec![0.0; layout.dim()];
        for (v, p) in self.params.iter().enumerate() {
            let mut x = self.x0[v];
            for k in 0..n {
                let (e, s) = self.plan[v][k];
                z[layout.e(v, k)] = e;
                z[layout.s(v, k)] = s;
                x = crate::model::step_state(x, e, s, self.window.steps[k].e_ref[v], p);
                z[layout.zeta(v, k + 1)] = x.zeta;
                z[layout.q(v, k + 1)] = x.q;
            }
        }
        z
    }
}
