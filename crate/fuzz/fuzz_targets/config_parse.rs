#![no_main]
use flatmap::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(src) {
            // a parsed config must also build its nonlinearity without panicking
            let _ = cfg.nonlinearity.build();
            let _ = cfg.single_level();
            let _ = cfg.max_coefficient_index();
        }
    }
});
