#![no_main]

use bdirs::channel::{AbsorptionTable, REQUIRED_SPAN_HZ};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = text.parse::<AbsorptionTable>() else { return };
    // every accepted table interpolates finitely over the required span
    for i in 0..=20 {
        let f = REQUIRED_SPAN_HZ.0 + (REQUIRED_SPAN_HZ.1 - REQUIRED_SPAN_HZ.0) * i as f64 / 20.0;
        let tau = table.coefficient(f).expect("inside span");
        assert!(tau.is_finite() && tau >= 0.0);
    }
});
