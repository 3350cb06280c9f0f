mod common;

use adsbqp::ad::{self, AdConfig};
use adsbqp::baselines::{self, Method};
use adsbqp::experiment;
use adsbqp::{AdStatus, ScenarioConfig};
use common::*;

#[test]
fn single_antenna_single_user() {
    let prob = scenario(1, 1, 4);
    let (sol, _) = ad::solve(&prob, &AdConfig::default()).unwrap();
    assert_eq!(sol.status, AdStatus::Converged);
    assert_eq!(sol.switches.selected(), vec![0]);
    let oracle = ad::water_filling_cost(&prob, &sol.switches).unwrap();
    assert!((sol.objective - oracle).abs() <= 1e-7 * oracle);
}

#[test]
fn enumeration_bounds_every_method_from_below() {
    let cfg = AdConfig::default();
    for seed in 0..4 {
        let prob = scenario(4, 2, seed);
        let best = baselines::enumerate_selections(&prob, 16, &cfg.nlp).unwrap().solution;
        assert!(best.switches.is_boolean(0.0));
        for method in [Method::AdSbqp, Method::AdSpen, Method::AdNspen] {
            let run = baselines::run_method(&prob, method, &cfg).unwrap();
            let sol = &run.solution;
            // Penalty baselines end on the relaxed box, up to 1e-8 outside
            // the cube, where the larger array gain saves a little power.
            assert!(
                sol.objective >= best.objective * (1.0 - 1e-7),
                "{method:?} seed {seed}: {} vs {}",
                sol.objective,
                best.objective
            );
        }
    }
}

#[test]
fn enumeration_ignores_visiting_order() {
    let prob = scenario(4, 3, 9);
    let opts = AdConfig::default().nlp;
    let forward = baselines::enumerate_selections(&prob, 16, &opts).unwrap();
    let order: Vec<u64> = (0..16).map(|i| (i * 5 + 2) % 16).collect();
    let shuffled = baselines::enumerate_in_order(&prob, &order, 16, &opts).unwrap();
    assert_eq!(forward.solution.objective, shuffled.solution.objective);
    assert_eq!(forward.solution.switches.selected(), shuffled.solution.switches.selected());
}

#[test]
fn selection_report_recomputes_the_rate() {
    let prob = scenario(6, 3, 2);
    let (sol, _) = ad::solve(&prob, &AdConfig::default()).unwrap();
    let report = experiment::emit_selection_report("AD-SBQP", &sol, &prob);
    assert_eq!(report.selected, sol.switches.selected());
    assert!((report.rate - sol.rate).abs() <= 1e-10 * sol.rate);
    assert!((report.transmit_power + report.standby_power - report.objective).abs() <= 1e-12);
    assert!(report.render().contains("selected: "));
}

#[test]
fn unreachable_threshold_is_an_error() {
    let mut cfg = ScenarioConfig::with_size(3, 2);
    cfg.r_th = adsbqp::RateThreshold::Absolute(1e3);
    let prob = adsbqp::EsrProblem::new(adsbqp::channel::generate_channel(&cfg).unwrap(), cfg);
    assert!(matches!(prob, Err(adsbqp::Error::Infeasible { .. })));
}
