#![no_main]

use bdirs::config::SystemConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = text.parse::<SystemConfig>() else { return };
    // accepted configs survive a round trip and expose usable derived values
    let again: SystemConfig = toml::to_string(&cfg).unwrap().parse().unwrap();
    assert_eq!(again, cfg);
    assert_eq!(cfg.groups().len(), cfg.users);
    let _ = cfg.noise();
    let _ = cfg.solve_options();
});
