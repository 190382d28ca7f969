mod common;

use bptts::env::{self, Agent, Observations, System, UniformAgent, WenoAgent, GAMMA};
use bptts::grid::{ghost_extend, Boundary};
use bptts::policy::{PolicyAgent, PolicyParams};
use bptts::weno::{self, WenoConstants};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stencil() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-3.0..3.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn standard_weights_are_convex(s in stencil()) {
        let w = weno::standard_weno_weights(&weno::smoothness_indicators(&s), &WenoConstants::default());
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn smoothness_indicators_are_nonnegative(s in stencil()) {
        prop_assert!(weno::smoothness_indicators(&s).iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn substencils_reproduce_quadratics(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64) {
        // Cell averages over [x-1/2, x+1/2] of p(x) = a + b x + c x^2 at
        // x = 0..4; every sub-stencil recovers p at the face x = 2.5.
        let avg = |x: f64| a + b * x + c * (x * x + 1.0 / 12.0);
        let s: [f64; 5] = std::array::from_fn(|k| avg(k as f64));
        let want = a + b * 2.5 + c * 6.25;
        for q in weno::substencil_reconstruct(&s) {
            prop_assert!((q - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn convex_combination_is_bounded_by_substencils(s in stencil(), w in prop::array::uniform3(0.0..1.0f64)) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-6);
        let w = w.map(|v| v / total);
        let q = weno::substencil_reconstruct(&s);
        let f = weno::combine(&s, &w);
        let lo = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
    }

    #[test]
    fn ghost_extension_keeps_interior(vals in prop::collection::vec(-5.0..5.0f64, 8..40), periodic in any::<bool>()) {
        let b = if periodic { Boundary::Periodic } else { Boundary::Outflow };
        let ext = ghost_extend(&vals, b, 3).unwrap();
        prop_assert_eq!(&ext[3..3 + vals.len()], &vals[..]);
        let n = vals.len();
        for k in 0..3 {
            let (l, r) = if periodic { (vals[n - 3 + k], vals[k]) } else { (vals[0], vals[n - 1]) };
            prop_assert_eq!(ext[k], l);
            prop_assert_eq!(ext[n + 3 + k], r);
        }
    }

    #[test]
    fn weno_transition_matches_monolithic_oracle(seed in any::<u64>(), n in 8usize..48, periodic in any::<bool>(), euler in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = if euler { System::Euler } else { System::Burgers };
        let b = if periodic { Boundary::Periodic } else { Boundary::Outflow };
        let spec = common::spec(system, n, b);
        let u = if euler { common::random_euler(&mut rng, n) } else { common::random_burgers(&mut rng, n) };
        let obs = env::observe(&spec, &u).unwrap();
        let mu = WenoAgent::default().act(&obs).unwrap();
        let next = env::transition(&spec, &u, &obs, &mu, 2e-3).unwrap();
        let oracle = common::monolithic_weno_step(system, &u, periodic, spec.grid.dx(), 2e-3);
        prop_assert!(common::max_abs_diff(&next, &oracle) <= 1e-12);
    }

    #[test]
    fn periodic_transition_conserves_mass(seed in any::<u64>(), n in 8usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::spec(System::Burgers, n, Boundary::Periodic);
        let u = common::random_burgers(&mut rng, n);
        let obs = env::observe(&spec, &u).unwrap();
        let a = PolicyAgent { params: &bptts::gradcheck::random_params(Default::default(), seed), normalize: true }
            .act(&obs)
            .unwrap();
        let next = env::transition(&spec, &u, &obs, &a, 1e-3).unwrap();
        let before: f64 = u[0].iter().sum();
        let after: f64 = next[0].iter().sum();
        prop_assert!((before - after).abs() * spec.grid.dx() <= 1e-13);
    }

    #[test]
    fn rewards_are_nonpositive_and_zero_for_mu(seed in any::<u64>(), n in 8usize..32, euler in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = if euler { System::Euler } else { System::Burgers };
        let spec = common::spec(system, n, Boundary::Outflow);
        let u = if euler { common::random_euler(&mut rng, n) } else { common::random_burgers(&mut rng, n) };
        let obs = env::observe(&spec, &u).unwrap();
        let other = UniformAgent.act(&obs).unwrap();
        let r = env::reward_markovian(&spec, &obs, &other, 1e-3, false).unwrap();
        prop_assert_eq!(r.len(), n + 1);
        prop_assert!(r.iter().all(|&v| v <= 0.0));
        let mu = WenoAgent::default().act(&obs).unwrap();
        let r0 = env::reward_markovian(&spec, &obs, &mu, 1e-3, false).unwrap();
        prop_assert!(r0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn branch_difference_matches_state_difference(seed in any::<u64>(), n in 8usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::spec(System::Burgers, n, Boundary::Periodic);
        let u = common::random_burgers(&mut rng, n);
        let obs = env::observe(&spec, &u).unwrap();
        let a = UniformAgent.act(&obs).unwrap();
        let mu = WenoAgent::default().act(&obs).unwrap();
        let dt = 1e-3;
        let d = env::branch_difference(&spec, &obs, &a, &mu, dt).unwrap();
        let un = env::transition(&spec, &u, &obs, &a, dt).unwrap();
        let wn = env::transition(&spec, &u, &obs, &mu, dt).unwrap();
        for j in 0..n {
            prop_assert!((d[0][j] - (un[0][j] - wn[0][j])).abs() <= 1e-13);
        }
    }

    #[test]
    fn euler_conversions_round_trip(rho in 0.05..5.0f64, u in -3.0..3.0f64, p in 0.05..5.0f64) {
        let q = env::primitive_to_conserved(rho, u, p, GAMMA).unwrap();
        let back = env::conserved_to_primitive(q, GAMMA).unwrap();
        prop_assert!((back[0] - rho).abs() <= 1e-12 * rho);
        prop_assert!((back[1] - u).abs() <= 1e-12 * (1.0 + u.abs()));
        prop_assert!((back[2] - p).abs() <= 1e-11 * (1.0 + p));
    }

    #[test]
    fn normalized_features_are_scale_invariant(s in stencil(), k in 0.1..10.0f64) {
        let a = env::normalize_stencil(&s);
        let b = env::normalize_stencil(&s.map(|v| v * k));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn constant_stencil_gets_linear_weights() {
    let w = weno::standard_weno_weights(&weno::smoothness_indicators(&[0.7; 5]), &WenoConstants::default());
    for (a, b) in w.iter().zip([0.1, 0.6, 0.3]) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn periodic_plus_stencil_wraps() {
    // Face between cells 7 and 0 of an 8-cell periodic grid.
    let (plus, minus) = weno::stencil_cells(8, 0, true);
    assert_eq!(plus, [5, 6, 7, 0, 1]);
    assert_eq!(minus, [2, 1, 0, 7, 6]);
    let (plus, _) = weno::stencil_cells(8, 1, true);
    assert_eq!(plus, [6, 7, 0, 1, 2]);
}

#[test]
fn sod_left_state_conversion() {
    let q = env::primitive_to_conserved(1.0, 0.0, 1.0, GAMMA).unwrap();
    assert_eq!(q[0], 1.0);
    assert_eq!(q[1], 0.0);
    assert!((q[2] - 2.5).abs() < 1e-15);
}

#[test]
fn negative_pressure_is_physical_error() {
    let spec = common::spec(System::Euler, 8, Boundary::Outflow);
    let mut u = vec![vec![1.0; 8], vec![0.0; 8], vec![2.5; 8]];
    u[2][3] = -1.0;
    assert!(matches!(env::observe(&spec, &u), Err(bptts::Error::Physical(_))));
}

#[test]
fn fresh_policy_acts_uniformly() {
    let spec = common::spec(System::Burgers, 16, Boundary::Periodic);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = common::random_burgers(&mut rng, 16);
    let obs: Observations<f64> = env::observe(&spec, &u).unwrap();
    let p = PolicyParams::init(3);
    let a = PolicyAgent { params: &p, normalize: true }.act(&obs).unwrap();
    for w in a.plus.iter().chain(&a.minus) {
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
