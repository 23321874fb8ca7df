#![no_main]

use libfuzzer_sys::fuzz_target;
use rvfuse::asm::{from_image, to_image};

fuzz_target!(|data: &[u8]| {
    if let Ok(prog) = from_image(data) {
        if let Ok(bytes) = to_image(&prog) {
            let back = from_image(&bytes).expect("re-encoded image decodes");
            assert_eq!(back.text, prog.text);
        }
    }
});
