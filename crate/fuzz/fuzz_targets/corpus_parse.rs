#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::corpus::parse_corpus;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = parse_corpus(s, "fuzz") {
            // Writing and reading back must preserve every record.
            let again = parse_corpus(&c.to_tsv(), "fuzz").expect("written corpus parses");
            assert_eq!(c.records(), again.records());
        }
    }
});
