use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::audit::{fd_potential_gradient, fd_pseudo_gradient, rel_err};
use super::*;
use crate::instances::{random_instance, InstanceOptions};
use crate::model::{BatteryParams, FlexParams, PriceRates};

pub(crate) fn unit_prosumer(id: &str, gamma: f64) -> ProsumerParams {
    ProsumerParams {
        id: id.into(),
        battery: BatteryParams {
            alpha: 1.0,
            beta: 1.0,
            q_max: 10.0,
            s_eff_min: -2.0,
            s_eff_max: 2.0,
        },
        flex: FlexParams {
            e_min: 0.0,
            e_max: 2.0,
            l_max: 5.0,
            gamma1: gamma,
            gamma2: gamma,
        },
        has_generation: false,
    }
}

fn single_step_game(m: usize, rho1: f64, gamma: f64) -> GameQP {
    let params: Vec<_> = (0..m).map(|v| unit_prosumer(&format!("p{v}"), gamma)).collect();
    let step = WindowStep::nominal(&params, vec![1.0; m], PriceRates::new(rho1, 0.0), 0.0, -100.0, 100.0);
    assemble(
        &vec![ProsumerState::default(); m],
        &params,
        &ScenarioWindow::constant(step, 1),
    )
    .unwrap()
}

fn random_point(game: &GameQP, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..game.dim()).map(|_| rng.random_range(-3.0..3.0)).collect()
}

#[test]
fn single_prosumer_hessian_block() {
    let game = single_step_game(1, 0.1, 0.0);
    let h = &game.hessian;
    for a in 0..2 {
        for b in 0..2 {
            assert_relative_eq!(h[(a, b)], 2.0 * 0.1, epsilon = 1e-15);
        }
    }
    for a in 2..4 {
        for b in 0..4 {
            assert_eq!(h[(a, b)], 0.0);
            assert_eq!(h[(b, a)], 0.0);
        }
    }
}

#[test]
fn zero_demand_rate_rejected() {
    let params = vec![unit_prosumer("p0", 0.1)];
    let step = WindowStep::nominal(&params, vec![1.0], PriceRates::new(0.0, 0.1), 0.0, 0.0, 10.0);
    let err = assemble(&[ProsumerState::default()], &params, &ScenarioWindow::constant(step, 2));
    assert!(err.is_err());
}

#[test]
fn cross_prosumer_coupling_is_rho1() {
    let game = single_step_game(2, 0.03, 0.1);
    let l = &game.layout;
    for a in [l.e(0, 0), l.s(0, 0)] {
        for b in [l.e(1, 0), l.s(1, 0)] {
            assert_relative_eq!(game.hessian[(a, b)], 0.03, epsilon = 1e-15);
            assert_relative_eq!(game.hessian[(b, a)], 0.03, epsilon = 1e-15);
        }
    }
}

#[test]
fn assemble_rejects_bad_inputs() {
    let params = vec![unit_prosumer("p0", 0.1)];
    let step = WindowStep::nominal(&params, vec![1.0], PriceRates::new(0.01, 0.1), 0.0, 5.0, 5.0);
    assert!(matches!(
        assemble(&[ProsumerState::default()], &params, &ScenarioWindow::constant(step, 1)),
        Err(Error::InconsistentBounds { .. })
    ));
    let step = WindowStep::nominal(&params, vec![1.0], PriceRates::new(0.01, 0.1), 0.0, 0.0, 5.0);
    let w = ScenarioWindow::constant(step.clone(), 2);
    assert!(matches!(
        assemble(&[ProsumerState::new(0.0, 11.0)], &params, &w),
        Err(Error::InconsistentBounds { .. })
    ));
    assert!(matches!(
        assemble(&[], &params, &w),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut gen_step = step;
    gen_step.generation[0] = 0.5;
    assert!(assemble(
        &[ProsumerState::default()],
        &params,
        &ScenarioWindow::constant(gen_step, 1)
    )
    .is_err());
}

#[test]
fn pseudo_gradient_examples() {
    let game = single_step_game(1, 0.1, 0.1);
    let f0 = game.pseudo_gradient(&[0.0; 4]).unwrap();
    assert_eq!(f0, game.offset);
    let f = game.pseudo_gradient(&[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_relative_eq!(f[0], 0.2, epsilon = 1e-15);
    assert!(game.pseudo_gradient(&[0.0; 3]).is_err());
}

#[test]
fn pseudo_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        for asymmetric in [false, true] {
            let inst = random_instance(
                seed,
                InstanceOptions {
                    asymmetric,
                    ..Default::default()
                },
            );
            let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
            for _ in 0..5 {
                let z = random_point(&game, &mut rng);
                let f = game.pseudo_gradient(&z).unwrap();
                let fd = fd_pseudo_gradient(&game, &z, 0.1);
                assert!(rel_err(&fd, f.as_slice()) < 1e-9, "seed {seed}");
            }
        }
    }
}

#[test]
fn potential_gradient_is_pseudo_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..20 {
        let inst = random_instance(seed, InstanceOptions::default());
        let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
        assert!(game.symmetric_pricing);
        assert_eq!(game.hessian, game.hessian.transpose());
        for _ in 0..5 {
            let z = random_point(&game, &mut rng);
            let f = game.pseudo_gradient(&z).unwrap();
            let fd = fd_potential_gradient(&game, &z, 0.25);
            assert!(
                rel_err(&fd, f.as_slice()) < 1e-10,
                "seed {seed}: {}",
                rel_err(&fd, f.as_slice())
            );
            let direct = game.potential_from_stage_terms(&z);
            let quad = game.potential_value(&z).unwrap();
            assert_relative_eq!(direct, quad, max_relative = 1e-11, epsilon = 1e-11);
        }
    }
}

#[test]
fn potential_requires_symmetric_pricing() {
    let inst = random_instance(
        3,
        InstanceOptions {
            max_prosumers: 4,
            asymmetric: true,
            ..Default::default()
        },
    );
    let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
    if game.prosumers() > 1 {
        assert!(!game.symmetric_pricing);
        assert!(matches!(
            game.potential_value(&vec![0.0; game.dim()]),
            Err(Error::AsymmetricPricing)
        ));
    }
}

#[test]
fn potential_at_origin_is_constant() {
    let inst = random_instance(5, InstanceOptions::default());
    let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
    assert_eq!(game.potential_value(&vec![0.0; game.dim()]).unwrap(), game.constant);
}

#[test]
fn coupling_rows_reproduce_aggregate_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..10 {
        let inst = random_instance(seed, InstanceOptions::default());
        let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
        let z = random_point(&game, &mut rng);
        let (_, aggregate) = game.loads(&z);
        for (k, st) in game.window.steps.iter().enumerate() {
            let row = &game.rows[game.coupling_start() + k];
            assert_eq!(row.kind, RowKind::Coupling { step: k });
            let from_row = row.row.dot(&z) + st.l_passive - st.total_generation();
            assert_relative_eq!(from_row, aggregate[k], epsilon = 1e-12);
            // row bounds are the aggregate limits translated the same way
            assert_relative_eq!(row.hi + st.l_passive - st.total_generation(), st.l_max, epsilon = 1e-12);
        }
    }
}

#[test]
fn plan_of_instance_is_feasible() {
    for seed in 0..30 {
        let inst = random_instance(seed, InstanceOptions::default());
        let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
        assert!(game.max_violation(&inst.plan_vector()) < 1e-12, "seed {seed}");
    }
}

#[test]
fn feasible_set_invariant_under_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..10 {
        let inst = random_instance(seed, InstanceOptions::default());
        let m = inst.params.len();
        let perm: Vec<usize> = (0..m).rev().collect();
        let mut window = inst.window.clone();
        for st in &mut window.steps {
            let p = |v: &Vec<_>| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
            st.e_ref = p(&st.e_ref);
            st.generation = p(&st.generation);
            st.rates = perm.iter().map(|&i| st.rates[i]).collect();
            st.weights = perm.iter().map(|&i| st.weights[i]).collect();
            st.zeta_bounds = perm.iter().map(|&i| st.zeta_bounds[i]).collect();
        }
        let params: Vec<_> = perm.iter().map(|&i| inst.params[i].clone()).collect();
        let x0: Vec<_> = perm.iter().map(|&i| inst.x0[i]).collect();
        let a = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
        let b = assemble(&x0, &params, &window).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        assert_eq!(a.equalities.len(), b.equalities.len());
        for _ in 0..5 {
            // a random point near the feasible plan, relabelled block-wise
            let za: Vec<f64> = inst
                .plan_vector()
                .iter()
                .map(|x| x + rng.random_range(-0.5..0.5))
                .collect();
            let mut zb = vec![0.0; za.len()];
            for (new, &old) in perm.iter().enumerate() {
                for (i, j) in a.layout.block(old).zip(b.layout.block(new)) {
                    zb[j] = za[i];
                }
            }
            assert_relative_eq!(a.max_violation(&za), b.max_violation(&zb), epsilon = 1e-12);
            assert_relative_eq!(
                a.potential_value(&za).unwrap(),
                b.potential_value(&zb).unwrap(),
                max_relative = 1e-12
            );
        }
    }
}

#[test]
fn condensed_map_satisfies_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let inst = random_instance(21, InstanceOptions::default());
    let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
    let c = game.condense();
    let u: Vec<f64> = (0..c.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let z = c.expand(&u);
    for (r, b) in game.equalities.iter().zip(&game.eq_rhs) {
        assert!((r.dot(&z) - b).abs() < 1e-12);
    }
    // condensed gradient is the pulled-back pseudo-gradient
    let f = game.pseudo_gradient(&z).unwrap();
    let pulled = c.pull_back(f.as_slice());
    let g = c.gradient(&u);
    for (x, y) in pulled.iter().zip(g.iter()) {
        assert_relative_eq!(x, y, epsilon = 1e-12, max_relative = 1e-12);
    }
    // condensed rows agree with full rows
    for (i, r) in game.rows.iter().enumerate() {
        let full = r.row.dot(&z) - r.lo;
        let cond = c.rows[i].dot(&u) - c.lo[i];
        assert_relative_eq!(full, cond, epsilon = 1e-11);
    }
}

#[test]
fn dynamics_multipliers_solve_state_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inst = random_instance(8, InstanceOptions::default());
    let game = assemble(&inst.x0, &inst.params, &inst.window).unwrap();
    let r: Vec<f64> = (0..game.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nu = game.dynamics_multipliers(&r);
    let mut at_nu = vec![0.0; game.dim()];
    for (row, &m) in game.equalities.iter().zip(&nu) {
        row.add_transpose_to(m, &mut at_nu);
    }
    for i in 0..game.dim() {
        let (_, var, _) = game.layout.decode(i);
        if matches!(var, Variable::Shift | Variable::Soc) {
            assert_relative_eq!(at_nu[i], -r[i], epsilon = 1e-12);
        }
    }
}

fn small_instances() -> impl Iterator<Item = GameQP> {
    (0..12).map(|seed| {
        let inst = random_instance(
            seed,
            InstanceOptions {
                max_prosumers: 3,
                max_horizon: 4,
                asymmetric: false,
            },
        );
        assemble(&inst.x0, &inst.params, &inst.window).unwrap()
    })
}

#[test]
fn modulus_positive_with_state_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for game in small_instances() {
        let mu = game.monotonicity_modulus();
        assert!(mu > 0.0, "mu = {mu}");
        // Rayleigh quotients of the condensed form never fall below mu
        let q = game.condense().hessian;
        for _ in 0..200 {
            let w = nalgebra::DVector::from_fn(q.nrows(), |_, _| rng.random_range(-1.0..1.0));
            assert!(w.dot(&(&q * &w)) >= mu * w.norm_squared() * (1.0 - 1e-9));
        }
    }
}

#[test]
fn modulus_vanishes_without_state_weights() {
    let game = single_step_game(1, 0.1, 0.0);
    assert!(game.monotonicity_modulus().abs() < 1e-14);
    // the kernel direction is e = -s: load unchanged
    let q = game.condense().hessian;
    let d = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
    assert!((&q * &d).norm() < 1e-15);
}

#[test]
fn modulus_vanishes_without_terminal_cost() {
    for game in small_instances() {
        let mut window = game.window.clone();
        window.terminal_cost = false;
        let g = assemble(&game.x0, &game.params, &window).unwrap();
        assert!(g.monotonicity_modulus().abs() < 1e-12);
    }
}

#[test]
fn spectrum_scales_with_demand_rate() {
    for c in [0.5, 2.0, 7.0] {
        let base = single_step_game(2, 0.02, 0.0);
        let scaled = single_step_game(2, 0.02 * c, 0.0);
        let eb = base.condense().hessian.symmetric_eigenvalues();
        let es = scaled.condense().hessian.symmetric_eigenvalues();
        let mut eb: Vec<f64> = eb.iter().copied().collect();
        let mut es: Vec<f64> = es.iter().copied().collect();
        eb.sort_by(f64::total_cmp);
        es.sort_by(f64::total_cmp);
        for (a, b) in eb.iter().zip(&es) {
            assert_relative_eq!(a * c, *b, epsilon = 1e-14, max_relative = 1e-12);
        }
        assert_relative_eq!(
            base.monotonicity_modulus() * c,
            scaled.monotonicity_modulus(),
            epsilon = 1e-14
        );
    }
}
