#![no_main]

use libfuzzer_sys::fuzz_target;
use rvfuse::workloads::KernelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = KernelSpec::from_json(text) {
        if spec.validate().is_ok() {
            let _ = spec.mac_count();
            assert_eq!(KernelSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }
});
