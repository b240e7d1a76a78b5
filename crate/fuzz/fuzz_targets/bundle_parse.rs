#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::report::{parse_bundle, report_tables};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(b) = parse_bundle(s) {
            let _ = report_tables(std::slice::from_ref(&b));
            if let Ok(json) = b.to_json() {
                let _ = parse_bundle(&json);
            }
        }
    }
});
