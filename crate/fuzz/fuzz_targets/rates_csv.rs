#![no_main]

use imitation_core::data::read_rates;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = read_rates(data) {
        assert_eq!(series.dates.len(), series.rates.len());
        assert!(series.dates.windows(2).all(|w| w[0] < w[1]));
        assert!(series.rates.iter().all(|r| r.is_finite()));
    }
});
