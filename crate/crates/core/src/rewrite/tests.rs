use proptest::prelude::*;

use super::*;
use crate::asm::{assemble, disassemble};
use crate::isa::{Instruction, Mnemonic, Reg};
use crate::sim::{run, Limits, MachineState};

fn model() -> CycleModel {
    CycleModel::default()
}

fn asm(src: &str) -> Program {
    assemble(src, Variant::V4).unwrap()
}

fn exec(p: &Program) -> MachineState {
    run(p, Variant::V4, &model(), &Limits::default()).unwrap().state
}

fn count(p: &Program, m: Mnemonic) -> usize {
    p.text.iter().filter(|i| i.mnemonic() == m).count()
}

#[test]
fn mac_in_place_operands() {
    let p = asm(".liveout x20\nli x20, 0\nli x21, 3\nli x22, 4\nli x5, 0\nli x6, 10\n\
         l: mul x23, x21, x22\nadd x20, x20, x23\naddi x5, x5, 1\nblt x5, x6, l\nhalt");
    let (q, s) = apply_mac(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text.len(), p.text.len() - 1);
    assert_eq!(q.text[5], Instruction::Mac);
    assert_eq!(exec(&q).x[20], 120);
}

#[test]
fn mac_three_moves_is_unprofitable() {
    let p = asm("li x5, 3\nli x6, 4\nli x7, 1\nmul x8, x5, x6\nadd x7, x7, x8\nhalt");
    let (q, s) = apply_mac(&p, &model()).unwrap();
    assert_eq!((s.matched, s.applied), (1, 0));
    assert_eq!(q, p);
}

#[test]
fn mac_renames_dead_webs() {
    let p = asm(".liveout x9\nli x5, 3\nli x6, 4\nli x7, 1\nmul x8, x5, x6\nadd x7, x7, x8\nmv x9, x7\nhalt");
    let (q, s) = apply_mac(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text.len(), p.text.len() - 1);
    assert_eq!(count(&q, Mnemonic::Mac), 1);
    assert_eq!(q.text[0], Instruction::addi(Reg::MAC_A, Reg::ZERO, 3));
    assert_eq!(exec(&q).x[9], 13);
}

#[test]
fn mac_moves_hoisted_to_preheader() {
    // x5 and x6 are live at exit, so they cannot be renamed; the loop runs
    // 50 times, which pays for three moves outside it.
    let src = ".liveout x5, x6, x7\nli x5, 3\nli x6, 4\nli x7, 0\nli x10, 0\nli x11, 50\n\
               l: mul x8, x5, x6\nadd x7, x7, x8\naddi x10, x10, 1\nblt x10, x11, l\nhalt";
    let p = asm(src);
    let (q, s) = apply_mac(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(count(&q, Mnemonic::Mac), 1);
    let (a, b) = (exec(&p), exec(&q));
    for r in [5, 6, 7] {
        assert_eq!(a.x[r], b.x[r], "x{r}");
    }
    assert!(b.cycles < a.cycles);
    let text = disassemble(&q);
    let body = text.split("l:").nth(1).unwrap();
    assert!(!body.lines().take(3).any(|l| l.contains("mv ")), "{text}");
}

#[test]
fn add2i_examples() {
    let fuse = |src: &str| apply_add2i(&asm(&format!("{src}\nhalt")), &model()).unwrap().0.text[0];
    assert_eq!(
        fuse("addi x5, x5, 4\naddi x6, x6, 64"),
        Instruction::Add2i { rs1: Reg::x(5), rs2: Reg::x(6), i1: 4, i2: 64 }
    );
    assert_eq!(
        fuse("addi x5, x5, 64\naddi x6, x6, 4"),
        Instruction::Add2i { rs1: Reg::x(6), rs2: Reg::x(5), i1: 4, i2: 64 }
    );
    assert_eq!(fuse("addi x5, x5, 40\naddi x6, x6, 2000"), Instruction::addi(Reg::x(5), Reg::x(5), 40));
    assert_eq!(fuse("addi x5, x5, -1\naddi x6, x6, 2"), Instruction::addi(Reg::x(5), Reg::x(5), -1));
}

#[test]
fn add2i_respects_branch_targets() {
    let p = asm("li x7, 0\naddi x5, x5, 4\nl: addi x6, x6, 8\naddi x7, x7, 1\nblt x7, x0, l\nhalt");
    let (q, s) = apply_add2i(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text[1], Instruction::addi(Reg::x(5), Reg::x(5), 4));
    assert!(matches!(q.text[2], Instruction::Add2i { .. }));
}

#[test]
fn fusedmac_examples() {
    let p = asm("mac\nadd2i x5, x6, 4, 64\nhalt");
    let (q, s) = apply_fusedmac(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text[0], Instruction::Fusedmac { rs1: Reg::x(5), rs2: Reg::x(6), i1: 4, i2: 64 });
    let p = asm("add2i x20, x6, 4, 64\nmac\nhalt");
    let (q, s) = apply_fusedmac(&p, &model()).unwrap();
    assert_eq!((s.matched, s.applied), (1, 0));
    assert_eq!(q, p);
}

const COUNTED: &str = "li x5, 0\nli x6, 10\n\
    l: addi x7, x7, 3\nslli x8, x7, 1\nadd x9, x9, x8\naddi x5, x5, 1\nblt x5, x6, l\nhalt";

#[test]
fn zol_counted_loop() {
    let p = asm(&format!(".liveout x9\n{COUNTED}"));
    let (q, s) = apply_zol(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text[2], Instruction::Dlpi { count: 10, offset: 12 });
    let (a, b) = (exec(&p), exec(&q));
    assert_eq!(a.x[9], b.x[9]);
    // 2 li, 10 x (3 + addi + blt), 9 taken backedges, halt 2.
    assert_eq!(a.cycles, 2 + 50 + 9 + 2);
    assert_eq!(b.cycles, 2 + 1 + 30 + 2);
    assert_eq!(b.retired_of(Mnemonic::Blt), 0);
}

#[test]
fn zol_needs_dead_counter() {
    let p = asm(&format!(".liveout x5, x9\n{COUNTED}"));
    let (q, s) = apply_zol(&p, &model()).unwrap();
    assert_eq!(s.applied, 0);
    assert_eq!(q, p);
}

#[test]
fn zol_large_count_uses_register() {
    let p = asm(
        ".liveout x9\nli x5, 0\nli x6, 2000\nl: addi x9, x9, 3\nxori x9, x9, 5\naddi x5, x5, 1\nblt x5, x6, l\nhalt",
    );
    let (q, s) = apply_zol(&p, &model()).unwrap();
    assert_eq!(s.applied, 1);
    assert_eq!(q.text[2], Instruction::SetZc { rs1: Reg::x(6) });
    assert!(matches!(q.text[3], Instruction::Zlp { .. }));
    assert_eq!(exec(&p).x[9], exec(&q).x[9]);
}

#[test]
fn zol_skips_bodies_with_branches() {
    let p = asm(
        ".liveout x9\nli x5, 0\nli x6, 4\nl: beq x9, x0, s\naddi x9, x9, 1\ns: addi x5, x5, 1\nblt x5, x6, l\nhalt",
    );
    assert_eq!(apply_zol(&p, &model()).unwrap().1.applied, 0);
}

#[test]
fn v0_is_identity_and_stats_serialise() {
    let p = asm(COUNTED);
    let (q, s) = retarget(&p, Variant::V0, &model()).unwrap();
    assert_eq!(q, p);
    assert!(s.rules.is_empty());
    let (_, s) = retarget(&p, Variant::V4, &model()).unwrap();
    let json = serde_json::to_value(&s).unwrap();
    assert!(json["zol_rule"]["applied"].is_u64());
    assert_eq!(serde_json::from_value::<RewriteStats>(json).unwrap(), s);
}

#[test]
fn unsupported_programs_pass_through() {
    let p = asm("la x5, f\njalr x0, 0(x5)\nf: mul x6, x7, x8\nadd x9, x9, x6\nhalt");
    let (q, s) = retarget(&p, Variant::V4, &model()).unwrap();
    assert_eq!(q, p);
    assert_eq!(s.total_applied(), 0);
}

#[test]
fn rules_never_exceed_variant() {
    let p =
        asm(".liveout x9\nli x5, 0\nli x6, 10\nl: lb x7, 0(x10)\nlb x8, 0(x11)\naddi x10, x10, 1\naddi x11, x11, 8\n\
         mul x12, x7, x8\nadd x9, x9, x12\naddi x5, x5, 1\nblt x5, x6, l\nhalt");
    for v in Variant::ALL {
        let (q, _) = retarget(&p, v, &model()).unwrap();
        assert_eq!(q.first_unsupported(v), None, "{v}");
    }
    let (q, s) = retarget(&p, Variant::V4, &model()).unwrap();
    assert_eq!(count(&q, Mnemonic::Fusedmac), 1);
    assert_eq!(count(&q, Mnemonic::Blt), 0);
    assert_eq!(s.get(RewriteRule::FusedmacRule).applied, 1);
}

/// Random counted loop around a straight-line body drawn from the shapes the
/// rules look for.
fn program_strategy() -> impl Strategy<Value = String> {
    let reg = prop_oneof![5u8..=12, Just(20u8), Just(21u8)];
    let stmt = prop_oneof![
        (reg.clone(), reg.clone(), reg.clone(), reg.clone())
            .prop_map(|(t, a, b, c)| format!("mul x{t}, x{a}, x{b}\nadd x{c}, x{c}, x{t}")),
        (reg.clone(), -8i32..40, reg.clone(), 0i32..1200)
            .prop_map(|(x, i, y, j)| format!("addi x{x}, x{x}, {i}\naddi x{y}, x{y}, {j}")),
        (reg.clone(), reg.clone(), reg.clone()).prop_map(|(d, a, b)| format!("xor x{d}, x{a}, x{b}")),
    ];
    (proptest::collection::vec(-50i32..50, 12), proptest::collection::vec(stmt, 1..6), 1u32..12, 0u32..(1 << 12))
        .prop_map(|(init, body, trip, live)| {
            let mut s = String::new();
            let live: Vec<String> = (0..12).filter(|b| live >> b & 1 == 1).map(|b| format!("x{}", b + 5)).collect();
            s.push_str(&format!(".liveout {}\n", if live.is_empty() { "none".into() } else { live.join(", ") }));
            for (r, v) in [5, 6, 7, 8, 9, 10, 11, 12, 20, 21, 22, 23].iter().zip(init) {
                s.push_str(&format!("li x{r}, {v}\n"));
            }
            s.push_str(&format!("li x30, 0\nli x31, {trip}\nloop:\n"));
            for b in body {
                s.push_str(&b);
                s.push('\n');
            }
            s.push_str("addi x30, x30, 1\nblt x30, x31, loop\nhalt\n");
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]
    #[test]
    fn retarget_is_sound_idempotent_and_monotone(src in program_strategy()) {
        let p = assemble(&src, Variant::V0).unwrap();
        let live = p.live_out.unwrap_or(!1);
        let base = exec(&p);
        let mut prev = base.cycles;
        for v in Variant::ALL {
            let (q, _) = retarget(&p, v, &model()).unwrap();
            prop_assert_eq!(q.first_unsupported(v), None);
            let st = exec(&q);
            for r in 1..32 {
                if live >> r & 1 == 1 {
                    prop_assert_eq!(st.x[r], base.x[r], "x{} at {}\n{}", r, v, disassemble(&q));
                }
            }
            prop_assert!(st.cycles <= prev, "{} got slower\n{}", v, disassemble(&q));
            prev = st.cycles;
            let (again, _) = retarget(&q, v, &model()).unwrap();
            prop_assert_eq!(disassemble(&again), disassemble(&q));
        }
    }
}
