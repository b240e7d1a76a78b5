#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::embedstore::EmbeddingManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = EmbeddingManifest::from_toml_str(s) {
            let again = EmbeddingManifest::from_toml_str(&m.to_toml_string()).expect("written manifest parses");
            assert_eq!(m, again);
        }
    }
});
