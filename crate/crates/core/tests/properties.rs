mod common;

use proptest::prelude::*;

use common::*;
use routesignal::bwe::{check_equilibrium, check_obedience, solve_bwe};
use routesignal::costs::{path_cost, system_cost, AffineDelays, FlowProfile};
use routesignal::network::feasible_flow;
use routesignal::optimality::{compute_m, compute_wv, compute_wv_by_definition, theorem_condition};
use routesignal::optimum::{optimum_closed_form, system_optimum};
use routesignal::scenario::{format_sig, Scenario};
use routesignal::signaling::{posterior, SignalingRule};
use routesignal::uncertainty::{moments, Atom, StateDistribution};

fn alphas(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..10.0, n)
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_one_and_double_sum_agree(a in alphas(7)) {
        let net = five_node(&a, 1.0);
        let m = compute_m(&five_node_paths(&net), &a).unwrap();
        let (w1, v1) = compute_wv(&m);
        let (w2, v2) = compute_wv_by_definition(&m);
        for i in 0..4 {
            prop_assert!((w1[i] - w2[i]).abs() < 1e-12);
            prop_assert!(v1.row(i).sum().abs() < 1e-12);
        }
        prop_assert!((v1 - v2).abs().max() < 1e-11);
    }

    #[test]
    fn optimum_beats_any_feasible_flow(a in alphas(7), theta in prop::collection::vec(0.0f64..3.0, 7), z in simplex(4), rate in 0.5f64..3.0) {
        let net = five_node(&a, rate);
        let ps = five_node_paths(&net);
        let delays = AffineDelays::new(a.clone()).unwrap();
        let dist = StateDistribution::deterministic(theta.clone()).unwrap();
        let opt = system_optimum(&ps, &delays, &dist, 1e-12).unwrap();
        let zf: Vec<f64> = z.iter().map(|x| x * rate).collect();
        let other = FlowProfile::from_link_flows(vec![feasible_flow(&ps, &zf).unwrap()]);
        prop_assert!(opt.cost <= system_cost(&dist, &delays, &other).unwrap() + 1e-9);
    }

    #[test]
    fn closed_form_equalizes_marginal_costs(a in alphas(3), theta in prop::collection::vec(0.0f64..0.2, 3)) {
        let ps = paths(&parallel(&a, 1.0));
        let cf = optimum_closed_form(&ps, &a, &theta).unwrap();
        prop_assume!(cf.z.iter().all(|&z| z > 0.0));
        for g in 0..3 {
            // d/df [f (f/α + θ)] = 2f/α + θ
            let marginal = 2.0 * cf.z[g] / a[g] + theta[g];
            prop_assert!((marginal - cf.lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn path_covariance_is_psd(a in prop::collection::vec(prop::collection::vec(0.0f64..4.0, 7), 2..5), p in simplex(4)) {
        let atoms = a.len();
        let probs: Vec<f64> = p[..atoms].iter().map(|x| x / p[..atoms].iter().sum::<f64>()).collect();
        let dist = StateDistribution::new(
            a.into_iter().zip(probs).map(|(theta, prob)| Atom { theta, prob }).collect()
        ).unwrap();
        let ps = five_node_paths(&five_node(&[1.0; 7], 1.0));
        let m = moments(&ps, &dist);
        prop_assert!(m.path_cov.symmetric_eigenvalues().min() > -1e-10);
        prop_assert!(m.cov_k.symmetric_eigenvalues().min() > -1e-10);
    }

    #[test]
    fn equilibria_satisfy_their_conditions(
        a in alphas(3),
        t1 in prop::collection::vec(0.0f64..3.0, 3),
        t2 in prop::collection::vec(0.0f64..3.0, 3),
        q in 0.05f64..0.95,
        r in prop::collection::vec(simplex(3), 2),
    ) {
        let ps = paths(&parallel(&a, 1.0));
        let delays = AffineDelays::new(a).unwrap();
        let dist = StateDistribution::new(vec![Atom { theta: t1, prob: q }, Atom { theta: t2, prob: 1.0 - q }]).unwrap();
        let probs = r.into_iter().map(|p| vec![p]).collect();
        let rule = SignalingRule::new(&ps, &dist, vec!["a".into(), "b".into(), "c".into()], probs, false).unwrap();
        let eq = solve_bwe(&ps, &delays, &dist, &rule, 1e-12).unwrap();
        prop_assert!(check_equilibrium(&ps, &delays, &dist, &rule, &eq.y, 1e-9).pass);
    }

    #[test]
    fn posteriors_are_distributions(p in simplex(3), r in prop::collection::vec(simplex(2), 3)) {
        let ps = paths(&parallel(&[1.0, 1.0], 1.0));
        let dist = StateDistribution::new(
            p.iter().enumerate().map(|(k, &prob)| Atom { theta: vec![k as f64, 1.0], prob }).collect()
        ).unwrap();
        let probs = r.into_iter().map(|x| vec![x]).collect();
        let rule = SignalingRule::new(&ps, &dist, vec!["x".into(), "y".into()], probs, false).unwrap();
        for m in 0..2 {
            let post = posterior(&rule, &dist, 0, m);
            prop_assert!((post.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn obedience_slack_is_half_the_pair_condition(a in alphas(2), base in prop::collection::vec(1.0f64..1.2, 2), s in 0.0f64..0.5, rate in 0.5f64..2.0) {
        let ps = paths(&parallel(&a, rate));
        let dist = routesignal::uncertainty::make_twopoint(&base, &[1.0, -1.0], s).unwrap();
        let cert = theorem_condition(&ps, &a, &dist).unwrap();
        prop_assume!(cert.support.as_ref().unwrap().full_support);
        let fractions: Vec<Vec<f64>> = dist.atoms().iter()
            .map(|at| optimum_closed_form(&ps, &a, &at.theta).unwrap().z.iter().map(|z| z / rate).collect())
            .collect();
        let rule = SignalingRule::direct(&ps, &dist, &fractions).unwrap();
        let delays = AffineDelays::new(a).unwrap();
        let report = check_obedience(&ps, &delays, &dist, &rule, 1e-9).unwrap();
        for e in &report.entries {
            let lhs = cert.pairs.iter().find(|p| p.i == e.from && p.j == e.to).unwrap().value;
            prop_assert!((e.slack - lhs / (2.0 * rate)).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_round_trip(x in -1e6f64..1e6, y in 0.0f64..1.0) {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/ex2.json")).unwrap();
        let s = Scenario::from_json(&text).unwrap().with_param("w", x).with_param("extra", y);
        prop_assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn twelve_digit_format_is_accurate(x in prop::num::f64::NORMAL) {
        let parsed: f64 = format_sig(x, 12).parse().unwrap();
        prop_assert!((parsed - x).abs() <= 1e-11 * x.abs());
    }
}

#[test]
fn wardrop_path_costs_are_equal_when_used() {
    let a = [1.0, 2.0, 0.5];
    let ps = paths(&parallel(&a, 1.0));
    let delays = AffineDelays::new(a.to_vec()).unwrap();
    let dist = StateDistribution::deterministic(vec![1.0, 1.2, 1.1]).unwrap();
    let rule = routesignal::signaling::rule_no_info(&ps, &dist);
    let eq = solve_bwe(&ps, &delays, &dist, &rule, 1e-13).unwrap();
    let c = path_cost(&ps, &delays, &dist.atoms()[0].theta, &eq.flows.link[0]);
    assert!((c[0] - c[1]).abs() < 1e-9 && (c[1] - c[2]).abs() < 1e-9);
}
