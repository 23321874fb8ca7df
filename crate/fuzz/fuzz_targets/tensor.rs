#![no_main]

use libfuzzer_sys::fuzz_target;
use rvfuse::workloads::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_blob(data) {
        assert_eq!(Tensor::from_blob(&t.to_blob()).unwrap(), t);
    }
});
