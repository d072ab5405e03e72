#![no_main]

use libfuzzer_sys::fuzz_target;
use routesignal::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    // Large inputs only make path enumeration slow, not more interesting.
    if data.len() > 4096 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenario) = Scenario::from_json(text) {
        let again = Scenario::from_json(&scenario.to_json()).expect("serialized scenario parses");
        assert_eq!(again, scenario);
        let _ = scenario.build();
    }
});
