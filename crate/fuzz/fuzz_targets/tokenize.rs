#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::lexical::tokenize;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    for t in tokenize(&text) {
        assert!(!t.is_empty());
        assert!(!t.chars().any(char::is_whitespace));
    }
});
