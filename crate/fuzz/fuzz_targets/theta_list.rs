#![no_main]

use imitation_core::cli::parse_theta_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(values) = parse_theta_list(s) {
            assert!(!values.is_empty());
            assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
});
