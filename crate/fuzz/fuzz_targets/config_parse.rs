#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_toml_str(s) {
            let again = RunConfig::from_toml_str(&cfg.to_toml_string()).expect("written config parses");
            assert_eq!(cfg, again);
        }
    }
});
