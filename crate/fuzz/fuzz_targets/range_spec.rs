#![no_main]

use libfuzzer_sys::fuzz_target;
use routesignal::scenario::{parse_range, sweep_points};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((min, max)) = parse_range(text) {
        assert!(min <= max);
        let pts = sweep_points(min, max, 5);
        assert_eq!(pts.len(), 5);
    }
});
