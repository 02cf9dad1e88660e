#![no_main]

use bdirs::config::SystemConfig;
use bdirs::harness::SweepSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = text.parse::<SweepSpec>() else { return };
    let cfg = SystemConfig::default();
    for &v in &spec.values {
        let _ = spec.axis.apply(&cfg, v);
    }
});
