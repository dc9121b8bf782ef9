use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soqn::gnsolver::lc_steady_state;
use soqn::instances::{random_model, random_model_with, single_node};
use soqn::netmodel::RateFunction;
use soqn::oracle::{build_generator, oracle_metrics, solve_auto, steady_state, DEFAULT_STATE_CAP};
use soqn::reduced::{approximate_external, norton_reduce, reduced_bo_distribution};
use soqn::soqn::{idle_probability_bo, lambda_eff, throughputs_bo};
use soqn::Error;

#[test]
fn single_node_distribution_is_exact() {
    for seed in 0..8 {
        let m = random_model(seed, 1, 4, true);
        let (gen, pi) = solve_auto(&m, 1e-11, DEFAULT_STATE_CAP).unwrap();
        let dist = reduced_bo_distribution(&norton_reduce(&m)).unwrap();
        for (state, p) in gen.states.iter().zip(&pi) {
            let expected = dist.probability(state.n_ex, state.counts[1]);
            assert!((p - expected).abs() <= 1e-9, "seed {seed} state {state:?}: {p} vs {expected}");
        }
        let exact = oracle_metrics(&gen, &pi);
        let approx = approximate_external(&norton_reduce(&m)).unwrap();
        assert!(approx.exact);
        assert_relative_eq!(exact.l_ex, approx.l_ex, max_relative = 1e-8);
    }
}

#[test]
fn throughputs_and_idle_match_the_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..12 {
        let m = random_model_with(&mut rng, 2, 3, false, 0.2..0.8);
        let (gen, pi) = solve_auto(&m, 1e-11, DEFAULT_STATE_CAP).unwrap();
        let exact = oracle_metrics(&gen, &pi);
        let th = throughputs_bo(&m).unwrap();
        for (a, b) in exact.throughputs.iter().zip(&th) {
            assert_relative_eq!(*a, *b, max_relative = 1e-7);
        }
        for j in 1..=m.num_inner() {
            match idle_probability_bo(&m, j) {
                Ok(p) => assert!((exact.idle[j].unwrap() - p).abs() <= 1e-7),
                Err(e) => assert!(matches!(e, Error::NotConstantRate(_))),
            }
        }
    }
}

#[test]
fn truncation_converges() {
    let m = single_node(RateFunction::constant(1.0), 2, 0.5);
    let l = |levels| {
        let gen = build_generator(&m, levels, DEFAULT_STATE_CAP).unwrap();
        oracle_metrics(&gen, &steady_state(&gen, 1e-11).unwrap()).l_ex
    };
    let (a, b) = (l(30), l(60));
    assert!((a - b).abs() < 1e-6);
    let exact = approximate_external(&norton_reduce(&m)).unwrap().l_ex;
    assert_relative_eq!(b, exact, max_relative = 1e-12);
}

#[test]
fn norton_reduction_preserves_pool_throughput() {
    for seed in 20..30 {
        let m = random_model(seed, 3, 4, false);
        for x in [0.1, 1.0, 5.0] {
            let full = lc_steady_state(&m, x, 1_000_000).unwrap();
            let th0 = x * (1.0 - full.pool_empty());
            assert_relative_eq!(lambda_eff(&m, x), th0, max_relative = 1e-10);
        }
    }
}

#[test]
fn unstable_models_are_refused() {
    let m = single_node(RateFunction::constant(1.0), 2, 1.5);
    assert!(matches!(solve_auto(&m, 1e-10, DEFAULT_STATE_CAP), Err(Error::Unstable { .. })));
}
