#![no_main]

use libfuzzer_sys::fuzz_target;
use routesignal::scenario::{RuleSpec, Scenario};

const BASE: &str = include_str!("../../scenarios/ex1.json");

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let inst = Scenario::from_json(BASE).unwrap().build().unwrap();
    if let Ok(spec) = RuleSpec::from_json(text) {
        if let Ok(rule) = spec.build(&inst.network, &inst.paths, &inst.dist) {
            // whatever was accepted has to be a proper rule
            for k in 0..inst.dist.atoms().len() {
                let total: f64 = rule.probs(k, 0).iter().sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
});
