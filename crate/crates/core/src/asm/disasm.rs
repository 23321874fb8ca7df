use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::Program;
use crate::isa::{BranchCond, ImmOp, Instruction, LoadWidth, RegOp, StoreWidth};

const MAC_COMMENT: &str = ";x20 = x20 + x21*x22";

/// Renders a program as assembly text that [`assemble`](super::assemble)
/// accepts. Branch targets use the program's label names where available and
/// `.L<index>` otherwise; data is emitted as `.byte` runs.
pub fn disassemble(prog: &Program) -> String {
    let names = label_names(prog);
    let mut out = String::new();

    if let Some(mask) = prog.live_out {
        if mask == 0 {
            out.push_str(".liveout none\n");
        } else {
            let regs: Vec<String> = (1..32).filter(|r| mask & (1 << r) != 0).map(|r| format!("x{r}")).collect();
            let _ = writeln!(out, ".liveout {}", regs.join(", "));
        }
    }
    if prog.entry != 0 {
        let _ = writeln!(out, ".entry {}", names[&prog.entry][0]);
    }
    out.push_str(".text\n");
    for index in 0..=prog.text.len() {
        if let Some(ls) = names.get(&index) {
            for l in ls {
                let _ = writeln!(out, "{l}:");
            }
        }
        if let Some(inst) = prog.text.get(index) {
            let _ = writeln!(out, "    {}", render(inst, index, &names));
        }
    }

    if !prog.data.is_empty() || !prog.data_labels.is_empty() {
        out.push_str(".data\n");
        let mut by_offset: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (name, &off) in &prog.data_labels {
            by_offset.entry(off as usize).or_default().push(name);
        }
        let mut pos = 0;
        while pos <= prog.data.len() {
            if let Some(ls) = by_offset.get(&pos) {
                for l in ls {
                    let _ = writeln!(out, "{l}:");
                }
            }
            if pos == prog.data.len() {
                break;
            }
            let next_label = by_offset.range(pos + 1..).next().map_or(usize::MAX, |(&o, _)| o);
            let end = (pos + 16).min(prog.data.len()).min(next_label);
            let bytes: Vec<String> = prog.data[pos..end].iter().map(|b| (*b as i8).to_string()).collect();
            let _ = writeln!(out, "    .byte {}", bytes.join(", "));
            pos = end;
        }
    }
    out
}

/// Names for every code index that needs one: existing labels first, then
/// generated `.L<index>` names for unlabelled branch targets and the entry.
fn label_names(prog: &Program) -> BTreeMap<usize, Vec<String>> {
    let mut names: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    for (name, &idx) in &prog.labels {
        names.entry(idx).or_default().push(name.clone());
        taken.insert(name.clone());
    }
    taken.extend(prog.data_labels.keys().cloned());

    let mut wanted: BTreeSet<usize> =
        prog.text.iter().enumerate().filter_map(|(i, inst)| resolve(inst, i, prog.text.len())).collect();
    if prog.entry != 0 {
        wanted.insert(prog.entry);
    }
    for idx in wanted {
        if names.contains_key(&idx) {
            continue;
        }
        let mut name = format!(".L{idx}");
        while taken.contains(&name) {
            name.push('_');
        }
        taken.insert(name.clone());
        names.insert(idx, vec![name]);
    }
    names
}

/// Target index of a control-flow instruction, if it lands on a nameable slot.
fn resolve(inst: &Instruction, index: usize, len: usize) -> Option<usize> {
    if inst.is_halt() && matches!(inst, Instruction::Jal { rd, .. } if rd.is_zero()) {
        return None;
    }
    let off = inst.target_offset()?;
    if off % 4 != 0 {
        return None;
    }
    let t = index as i64 + i64::from(off / 4);
    (0..=len as i64).contains(&t).then_some(t as usize)
}

fn target(inst: &Instruction, index: usize, names: &BTreeMap<usize, Vec<String>>) -> String {
    let len = usize::MAX >> 1;
    match resolve(inst, index, len).and_then(|t| names.get(&t)) {
        Some(ls) => ls[0].clone(),
        None => inst.target_offset().unwrap_or(0).to_string(),
    }
}

fn reg_op_name(op: RegOp) -> &'static str {
    match op {
        RegOp::Add => "add",
        RegOp::Sub => "sub",
        RegOp::Sll => "sll",
        RegOp::Slt => "slt",
        RegOp::Sltu => "sltu",
        RegOp::Xor => "xor",
        RegOp::Srl => "srl",
        RegOp::Sra => "sra",
        RegOp::Or => "or",
        RegOp::And => "and",
        RegOp::Mul => "mul",
        RegOp::Mulh => "mulh",
        RegOp::Mulhsu => "mulhsu",
        RegOp::Mulhu => "mulhu",
        RegOp::Div => "div",
        RegOp::Divu => "divu",
        RegOp::Rem => "rem",
        RegOp::Remu => "remu",
    }
}

fn imm_op_name(op: ImmOp) -> &'static str {
    match op {
        ImmOp::Addi => "addi",
        ImmOp::Slti => "slti",
        ImmOp::Sltiu => "sltiu",
        ImmOp::Xori => "xori",
        ImmOp::Ori => "ori",
        ImmOp::Andi => "andi",
        ImmOp::Slli => "slli",
        ImmOp::Srli => "srli",
        ImmOp::Srai => "srai",
    }
}

fn render(inst: &Instruction, index: usize, names: &BTreeMap<usize, Vec<String>>) -> String {
    use Instruction as I;
    match *inst {
        I::Lui { rd, imm } => format!("lui {rd}, {imm:#x}"),
        I::Auipc { rd, imm } => format!("auipc {rd}, {imm:#x}"),
        I::Jal { rd, offset: 0 } if rd.is_zero() => "halt".to_string(),
        I::Jal { rd, .. } if rd.is_zero() => format!("j {}", target(inst, index, names)),
        I::Jal { rd, .. } => format!("jal {rd}, {}", target(inst, index, names)),
        I::Jalr { rd, rs1, offset } => format!("jalr {rd}, {offset}({rs1})"),
        I::Branch { cond, rs1, rs2, .. } => {
            let m = match cond {
                BranchCond::Eq => "beq",
                BranchCond::Ne => "bne",
                BranchCond::Lt => "blt",
                BranchCond::Ge => "bge",
                BranchCond::Ltu => "bltu",
                BranchCond::Geu => "bgeu",
            };
            format!("{m} {rs1}, {rs2}, {}", target(inst, index, names))
        }
        I::Load { width, rd, rs1, offset } => {
            let m = match width {
                LoadWidth::B => "lb",
                LoadWidth::H => "lh",
                LoadWidth::W => "lw",
                LoadWidth::Bu => "lbu",
                LoadWidth::Hu => "lhu",
            };
            format!("{m} {rd}, {offset}({rs1})")
        }
        I::Store { width, rs1, rs2, offset } => {
            let m = match width {
                StoreWidth::B => "sb",
                StoreWidth::H => "sh",
                StoreWidth::W => "sw",
            };
            format!("{m} {rs2}, {offset}({rs1})")
        }
        I::AluImm { op: ImmOp::Addi, rd, rs1, imm } => {
            if rd.is_zero() && rs1.is_zero() && imm == 0 {
                "nop".to_string()
            } else if rs1.is_zero() {
                format!("li {rd}, {imm}")
            } else if imm == 0 {
                format!("mv {rd}, {rs1}")
            } else {
                format!("addi {rd}, {rs1}, {imm}")
            }
        }
        I::AluImm { op, rd, rs1, imm } => format!("{} {rd}, {rs1}, {imm}", imm_op_name(op)),
        I::Alu { op, rd, rs1, rs2 } => format!("{} {rd}, {rs1}, {rs2}", reg_op_name(op)),
        I::Fence { pred: 15, succ: 15 } => "fence".to_string(),
        I::Fence { pred, succ } => format!("fence {pred}, {succ}"),
        I::Ecall => "ecall".to_string(),
        I::Ebreak => "ebreak".to_string(),
        I::Mac => format!("mac {MAC_COMMENT}"),
        I::Add2i { rs1, rs2, i1, i2 } => format!("add2i {rs1}, {rs2}, {i1}, {i2}"),
        I::Fusedmac { rs1, rs2, i1, i2 } => format!("fusedmac {rs1}, {rs2}, {i1}, {i2}"),
        I::Dlp { rs1, .. } => format!("dlp {rs1}, {}", target(inst, index, names)),
        I::Dlpi { count, .. } => format!("dlpi {count}, {}", target(inst, index, names)),
        I::Zlp { .. } => format!("zlp {}", target(inst, index, names)),
        I::SetZc { rs1 } => format!("set.zc {rs1}"),
        I::SetZs { rs1 } => format!("set.zs {rs1}"),
        I::SetZe { rs1 } => format!("set.ze {rs1}"),
        I::Illegal(w) => format!(".word {w:#010x}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::isa::Variant;

    fn roundtrip(src: &str, v: Variant) -> (String, String) {
        let p = assemble(src, v).unwrap();
        let t1 = disassemble(&p);
        let p2 = assemble(&t1, v).unwrap();
        assert_eq!(p2.text, p.text);
        assert_eq!(p2.data, p.data);
        assert_eq!(p2.entry, p.entry);
        assert_eq!(p2.live_out, p.live_out);
        let t2 = disassemble(&p2);
        (t1, t2)
    }

    #[test]
    fn single_instruction() {
        let (t1, t2) = roundtrip("addi x1, x1, 1", Variant::V0);
        assert_eq!(t1, t2);
        assert!(t1.contains("addi x1, x1, 1"));
    }

    #[test]
    fn mac_carries_comment() {
        let p = assemble("mac\nhalt", Variant::V1).unwrap();
        let text = disassemble(&p);
        assert!(text.contains("mac ;x20 = x20 + x21*x22"), "{text}");
    }

    #[test]
    fn generated_labels_and_pseudos() {
        let src = ".liveout none\n.entry go\nnop\ngo: li x5, 3\nmv x6, x5\nloop: addi x5, x5, -1\nbne x5, x0, loop\nbeq x0, x0, 8\nj 4\nnop\n.word 0xffffffff\nhalt\n.data\nd: .byte 1, 2\ne:\n";
        let (t1, t2) = roundtrip(src, Variant::V0);
        assert_eq!(t1, t2);
        for needle in
            ["li x5, 3", "mv x6, x5", "bne x5, x0, loop", ".L7:", "nop", "halt", ".word 0xffffffff", ".entry go", "e:"]
        {
            assert!(t1.contains(needle), "{needle} missing from\n{t1}");
        }
    }

    #[test]
    fn colliding_generated_name() {
        let src = ".L2: nop\nj 4\nnop\nhalt";
        let (t1, t2) = roundtrip(src, Variant::V0);
        assert_eq!(t1, t2);
        assert!(t1.contains(".L2_:"));
    }

    #[test]
    fn custom_forms() {
        let src = "dlpi 5, e\nfusedmac x5, x6, 31, 1023\nadd2i x7, x8, 0, 0\ne: mac\nli x9, 7\nset.zc x9\nzlp f\nf: nop\ndlp x9, g\ng: set.zs x1\nset.ze x1\nhalt";
        let (t1, t2) = roundtrip(src, Variant::V4);
        assert_eq!(t1, t2);
    }
}
