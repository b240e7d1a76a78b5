#![no_main]

use libfuzzer_sys::fuzz_target;
use tierprobe::embedstore::{decode_payload, encode_payload};

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    // First two bytes pick the claimed shape, the rest is the payload.
    let count = data[0] as usize;
    let dim = data[1] as usize;
    let payload = &data[2..];
    if let Ok(m) = decode_payload(payload, count, dim) {
        assert_eq!(m.shape(), (count, dim));
        assert_eq!(encode_payload(&m), payload);
    }
});
