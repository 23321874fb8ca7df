//! Runs the fuzz target bodies over the checked-in seeds and random bytes so
//! they stay exercised on stable toolchains.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use rvfuse::asm::{assemble, disassemble, from_image, to_image};
use rvfuse::isa::{decode, encode, Variant};
use rvfuse::workloads::{KernelSpec, Tensor};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check_assemble(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(prog) = assemble(text, Variant::V4) else { return false };
    let again = assemble(&disassemble(&prog), Variant::V4).expect("disassembly reassembles");
    assert_eq!(again.text, prog.text);
    assert_eq!(again.data, prog.data);
    true
}

fn check_decode(data: &[u8]) {
    for chunk in data.chunks_exact(4) {
        let inst = decode(u32::from_le_bytes(chunk.try_into().unwrap()));
        if let Ok(w) = encode(&inst) {
            assert_eq!(decode(w), inst);
        }
    }
}

fn check_image(data: &[u8]) -> bool {
    let Ok(prog) = from_image(data) else { return false };
    let back = from_image(&to_image(&prog).unwrap()).unwrap();
    assert_eq!(back.text, prog.text);
    true
}

fn check_spec(data: &[u8]) -> bool {
    let Ok(spec) = std::str::from_utf8(data).map_err(|_| ()).and_then(|t| KernelSpec::from_json(t).map_err(|_| ()))
    else {
        return false;
    };
    spec.validate().is_ok() && KernelSpec::from_json(&spec.to_json()).unwrap() == spec
}

fn check_tensor(data: &[u8]) -> bool {
    let Ok(t) = Tensor::from_blob(data) else { return false };
    assert_eq!(Tensor::from_blob(&t.to_blob()).unwrap(), t);
    true
}

#[test]
fn seeds_are_accepted() {
    assert!(seeds("assemble").iter().all(|s| check_assemble(s)));
    seeds("decode").iter().for_each(|s| check_decode(s));
    assert!(seeds("image").iter().all(|s| check_image(s)));
    assert!(seeds("kernel_spec").iter().all(|s| check_spec(s)));
    assert!(seeds("tensor").iter().all(|s| check_tensor(s)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        check_decode(&bytes);
        check_image(&bytes);
        check_tensor(&bytes);
        check_spec(&bytes);
        check_assemble(&bytes);
    }

    #[test]
    fn mutated_seeds_never_panic(which in 0usize..5, at in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let target = ["assemble", "decode", "image", "kernel_spec", "tensor"][which];
        for mut s in seeds(target) {
            let i = at.index(s.len());
            s[i] = byte;
            match target {
                "assemble" => { check_assemble(&s); }
                "decode" => check_decode(&s),
                "image" => { check_image(&s); }
                "kernel_spec" => { check_spec(&s); }
                _ => { check_tensor(&s); }
            }
        }
    }
}
