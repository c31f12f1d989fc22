#![no_main]

use imitation_core::data::{estimate_market_params, read_prices};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = read_prices(data) {
        assert_eq!(series.dates.len(), series.closes.len());
        assert!(series.dates.windows(2).all(|w| w[0] < w[1]));
        assert!(series.closes.iter().all(|c| *c > 0.0 && c.is_finite()));
        if let Ok(est) = estimate_market_params(&series, &[0.04]) {
            assert!(est.sigma_hat > 0.0);
        }
    }
});
