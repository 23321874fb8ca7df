#![no_main]

use libfuzzer_sys::fuzz_target;
use rvfuse::isa::{decode, encode};

fuzz_target!(|data: &[u8]| {
    for chunk in data.chunks_exact(4) {
        let word = u32::from_le_bytes(chunk.try_into().unwrap());
        let inst = decode(word);
        if let Ok(w) = encode(&inst) {
            assert_eq!(decode(w), inst);
        }
    }
});
