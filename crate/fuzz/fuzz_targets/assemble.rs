#![no_main]

use libfuzzer_sys::fuzz_target;
use rvfuse::asm::{assemble, disassemble};
use rvfuse::isa::Variant;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(prog) = assemble(text, Variant::V4) {
        // Whatever assembles must survive a listing round trip.
        let again = assemble(&disassemble(&prog), Variant::V4).expect("disassembly reassembles");
        assert_eq!(again.text, prog.text);
        assert_eq!(again.data, prog.data);
    }
});
