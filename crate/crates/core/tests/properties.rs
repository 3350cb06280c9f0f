mod common;

use adsbqp::ad::{self, AdConfig};
use adsbqp::bqp::{solve_bqp, BqpConfig};
use adsbqp::config::{self, Scenario};
use adsbqp::qp::{solve_qp, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use adsbqp::{AdStatus, BqpStatus, Error, NlpOptions, SwitchVector};
use common::*;
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qp_solutions_satisfy_kkt(n in 2usize..9, m in 0usize..6, seed in any::<u64>()) {
        let qp = random_qp(n, m, seed);
        let sol = solve_qp(&qp, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(kkt_residual(&qp, &sol) <= 1e-9);
    }

    #[test]
    fn box_bqp_returns_vertices(n in 2usize..9, seed in any::<u64>()) {
        let qp = random_bqp(n, false, seed);
        let res = solve_bqp(&qp, &BqpConfig::default()).unwrap();
        prop_assert_eq!(res.status, BqpStatus::Converged);
        prop_assert!(res.x.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn snapshot_round_trips(
        n_tx in 1usize..40,
        n_users in 1usize..40,
        seed in any::<u64>(),
        p_rf in 1e-4f64..1.0,
        eps_comp in 1e-14f64..1e-6,
        max_ad_iter in 1usize..50,
    ) {
        let mut s = Scenario::with_size(n_tx, n_users);
        s.channel.seed = seed;
        s.channel.p_rf = p_rf;
        s.solver.bqp.eps_comp = eps_comp;
        s.solver.max_ad_iter = max_ad_iter;
        let text = s.snapshot();
        let back = config::parse(&text).unwrap();
        prop_assert_eq!(&back.channel, &s.channel);
        prop_assert_eq!(back.snapshot(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ad1_meets_the_constraints(
        n in 2usize..6,
        k in 1usize..4,
        seed in 0u64..1000,
        switches in prop::collection::vec(0.3f64..1.0, 6),
    ) {
        let prob = scenario(n, k, seed);
        let x = SwitchVector::new(DVector::from_column_slice(&switches[..n]));
        match ad::ad1(&prob, &x, &NlpOptions::default()) {
            Ok(out) => {
                prop_assert!(out.power.entries.iter().all(|p| *p >= 0.0));
                prop_assert!(out.power.violation(prob.cfg.p_th) <= 1e-9 * prob.cfg.p_th);
                let rate = prob.sum_rate(&out.power, &x);
                prop_assert!(rate >= prob.r_th * (1.0 - 1e-8), "rate {rate} vs {}", prob.r_th);
                let cost = prob.economic_objective(&out.power, &x);
                let oracle = ad::water_filling_cost(&prob, &x).unwrap();
                prop_assert!((cost - oracle).abs() <= 1e-6 * oracle, "{cost} vs {oracle}");
            }
            Err(Error::Infeasible { achievable, .. }) => prop_assert!(achievable <= prob.r_th * (1.0 + 1e-9)),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn ad_runs_keep_their_invariants(n in 2usize..7, k in 1usize..4, seed in 0u64..1000) {
        let prob = scenario(n, k, seed);
        let cfg = AdConfig::default();
        let (sol, trace) = ad::solve(&prob, &cfg).unwrap();
        prop_assert!(trace.records.len() <= cfg.max_ad_iter);
        prop_assert_eq!(sol.iterations, trace.records.len());
        prop_assert!(sol.power_violation <= 1e-9 * prob.cfg.p_th);
        if sol.status == AdStatus::Converged {
            prop_assert!(sol.switches.is_boolean(1e-9));
            prop_assert!(sol.rate_residual >= -1e-6 * prob.r_th);
            let full = ad::full_activation(&prob, &cfg.nlp).unwrap();
            prop_assert!(sol.objective <= full.objective * (1.0 + 1e-9), "{} vs {}", sol.objective, full.objective);
        }
    }
}
