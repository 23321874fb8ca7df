//! Instruction-accurate simulator with a configurable cycle model and the
//! zero-overhead loop unit.

mod model;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::asm::Program;
use crate::isa::{BranchCond, ImmOp, Instruction, LoadWidth, Mnemonic, RegOp, StoreWidth, Variant};

pub use model::{CostTable, CycleModel, ModelError};

/// Execution limits for one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Maximum retired instructions before giving up.
    pub budget: u64,
    /// Data memory size in bytes (grown to fit the data image if smaller).
    pub mem_size: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { budget: 200_000_000, mem_size: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrapKind {
    IllegalInstruction,
    Misaligned { addr: u32 },
    OutOfBounds { addr: u32 },
    PcOutOfRange,
    EnvironmentCall,
    Breakpoint,
    Fence,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("step budget of {0} instructions exhausted")]
    BudgetExceeded(u64),
    #[error("trap at pc {pc:#x} ({inst:?}): {kind:?}")]
    Trap { pc: u32, inst: Option<Instruction>, kind: TrapKind },
    #[error("instruction {index} (`{mnemonic}`) is not available on {variant}")]
    VariantViolation { index: usize, mnemonic: Mnemonic, variant: Variant },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One retired instruction. `cycle` is the cycle count before it executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub pc: u32,
    pub inst: Instruction,
    pub cycle: u64,
}

/// Architectural state plus counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub x: [u32; 32],
    pub pc: u32,
    pub zc: u32,
    pub zs: u32,
    pub ze: u32,
    pub mem: Vec<u8>,
    pub mem_base: u32,
    pub cycles: u64,
    /// Retired count per [`Mnemonic::index`].
    pub retired: Vec<u64>,
    /// Retired count per instruction index.
    pub pc_hist: Vec<u64>,
    pub taken_branches: u64,
    pub halted: bool,
}

/// Outcome of a single [`MachineState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub event: TraceEvent,
    pub taken: bool,
}

impl MachineState {
    pub fn new(prog: &Program, mem_size: usize) -> MachineState {
        let mut mem = vec![0; mem_size.max(prog.data.len())];
        mem[..prog.data.len()].copy_from_slice(&prog.data);
        MachineState {
            x: [0; 32],
            pc: 4 * prog.entry as u32,
            zc: 0,
            zs: 0,
            ze: 0,
            mem,
            mem_base: prog.data_base,
            cycles: 0,
            retired: vec![0; Mnemonic::COUNT],
            pc_hist: vec![0; prog.text.len()],
            taken_branches: 0,
            halted: false,
        }
    }

    /// Total retired instructions.
    pub fn instructions(&self) -> u64 {
        self.retired.iter().sum()
    }

    pub fn retired_of(&self, m: Mnemonic) -> u64 {
        self.retired[m.index()]
    }

    /// Non-zero retired counts keyed by mnemonic.
    pub fn retired_map(&self) -> BTreeMap<Mnemonic, u64> {
        Mnemonic::ALL.iter().filter(|m| self.retired[m.index()] > 0).map(|&m| (m, self.retired[m.index()])).collect()
    }

    /// Borrow `len` bytes of data memory starting at absolute address `addr`.
    pub fn bytes(&self, addr: u32, len: usize) -> Option<&[u8]> {
        let start = addr.checked_sub(self.mem_base)? as usize;
        self.mem.get(start..start.checked_add(len)?)
    }

    fn mem_index(&self, addr: u32, width: u32) -> Result<usize, TrapKind> {
        if !addr.is_multiple_of(width) {
            return Err(TrapKind::Misaligned { addr });
        }
        let off = addr.wrapping_sub(self.mem_base) as usize;
        if addr < self.mem_base || off + width as usize > self.mem.len() {
            return Err(TrapKind::OutOfBounds { addr });
        }
        Ok(off)
    }

    fn load(&self, width: LoadWidth, addr: u32) -> Result<u32, TrapKind> {
        let m = &self.mem;
        Ok(match width {
            LoadWidth::B => m[self.mem_index(addr, 1)?] as i8 as i32 as u32,
            LoadWidth::Bu => u32::from(m[self.mem_index(addr, 1)?]),
            LoadWidth::H | LoadWidth::Hu => {
                let i = self.mem_index(addr, 2)?;
                let h = u16::from_le_bytes([m[i], m[i + 1]]);
                if width == LoadWidth::H {
                    h as i16 as i32 as u32
                } else {
                    u32::from(h)
                }
            }
            LoadWidth::W => {
                let i = self.mem_index(addr, 4)?;
                u32::from_le_bytes([m[i], m[i + 1], m[i + 2], m[i + 3]])
            }
        })
    }

    fn store(&mut self, width: StoreWidth, addr: u32, value: u32) -> Result<(), TrapKind> {
        match width {
            StoreWidth::B => {
                let i = self.mem_index(addr, 1)?;
                self.mem[i] = value as u8;
            }
            StoreWidth::H => {
                let i = self.mem_index(addr, 2)?;
                self.mem[i..i + 2].copy_from_slice(&(value as u16).to_le_bytes());
            }
            StoreWidth::W => {
                let i = self.mem_index(addr, 4)?;
                self.mem[i..i + 4].copy_from_slice(&value.to_le_bytes());
            }
        }
        Ok(())
    }

    fn set(&mut self, rd: crate::isa::Reg, value: u32) {
        self.x[rd.index()] = value;
        self.x[0] = 0;
    }

    /// Executes one instruction.
    pub fn step(&mut self, prog: &Program, costs: &CostTable) -> Result<Step, SimError> {
        let pc = self.pc;
        let index = (pc / 4) as usize;
        let inst = match prog.text.get(index) {
            Some(inst) if pc.is_multiple_of(4) => *inst,
            _ => return Err(SimError::Trap { pc, inst: None, kind: TrapKind::PcOutOfRange }),
        };
        let trap = |kind| SimError::Trap { pc, inst: Some(inst), kind };
        let event = TraceEvent { pc, inst, cycle: self.cycles };
        let x = self.x;
        let r = |reg: crate::isa::Reg| x[reg.index()];
        let fall = pc.wrapping_add(4);
        let mut next = fall;
        let mut taken = false;

        use Instruction as I;
        match inst {
            I::Lui { rd, imm } => self.set(rd, imm << 12),
            I::Auipc { rd, imm } => self.set(rd, pc.wrapping_add(imm << 12)),
            I::Jal { rd, offset } => {
                self.set(rd, fall);
                next = pc.wrapping_add(offset as u32);
                taken = true;
                if offset == 0 {
                    self.halted = true;
                }
            }
            I::Jalr { rd, rs1, offset } => {
                let t = r(rs1).wrapping_add(offset as u32) & !1;
                self.set(rd, fall);
                next = t;
                taken = true;
            }
            I::Branch { cond, rs1, rs2, offset } => {
                let (a, b) = (r(rs1), r(rs2));
                let go = match cond {
                    BranchCond::Eq => a == b,
                    BranchCond::Ne => a != b,
                    BranchCond::Lt => (a as i32) < (b as i32),
                    BranchCond::Ge => (a as i32) >= (b as i32),
                    BranchCond::Ltu => a < b,
                    BranchCond::Geu => a >= b,
                };
                if go {
                    next = pc.wrapping_add(offset as u32);
                    taken = true;
                }
            }
            I::Load { width, rd, rs1, offset } => {
                let v = self.load(width, r(rs1).wrapping_add(offset as u32)).map_err(trap)?;
                self.set(rd, v);
            }
            I::Store { width, rs1, rs2, offset } => {
                self.store(width, r(rs1).wrapping_add(offset as u32), r(rs2)).map_err(trap)?;
            }
            I::AluImm { op, rd, rs1, imm } => {
                let a = r(rs1);
                let b = imm as u32;
                let v = match op {
                    ImmOp::Addi => a.wrapping_add(b),
                    ImmOp::Slti => u32::from((a as i32) < imm),
                    ImmOp::Sltiu => u32::from(a < b),
                    ImmOp::Xori => a ^ b,
                    ImmOp::Ori => a | b,
                    ImmOp::Andi => a & b,
                    ImmOp::Slli => a << (b & 31),
                    ImmOp::Srli => a >> (b & 31),
                    ImmOp::Srai => ((a as i32) >> (b & 31)) as u32,
                };
                self.set(rd, v);
            }
            I::Alu { op, rd, rs1, rs2 } => self.set(rd, alu(op, r(rs1), r(rs2))),
            I::Fence { .. } => return Err(trap(TrapKind::Fence)),
            I::Ecall => return Err(trap(TrapKind::EnvironmentCall)),
            I::Ebreak => return Err(trap(TrapKind::Breakpoint)),
            I::Illegal(_) => return Err(trap(TrapKind::IllegalInstruction)),
            I::Mac => self.mac(),
            I::Add2i { rs1, rs2, i1, i2 } => self.add2i(rs1, rs2, i1, i2),
            I::Fusedmac { rs1, rs2, i1, i2 } => {
                self.mac();
                self.add2i(rs1, rs2, i1, i2);
            }
            I::Dlp { rs1, offset } => {
                self.zc = r(rs1);
                self.zs = fall;
                self.ze = pc.wrapping_add(offset as u32);
            }
            I::Dlpi { count, offset } => {
                self.zc = u32::from(count);
                self.zs = fall;
                self.ze = pc.wrapping_add(offset as u32);
            }
            I::Zlp { offset } => {
                self.zs = fall;
                self.ze = pc.wrapping_add(offset as u32);
            }
            I::SetZc { rs1 } => self.zc = r(rs1),
            I::SetZs { rs1 } => self.zs = r(rs1),
            I::SetZe { rs1 } => self.ze = r(rs1),
        }

        // Loop unit: retiring the end instruction without a redirect closes an
        // iteration at no cycle cost.
        if next == fall && pc == self.ze && self.zc > 0 && !inst.is_loop_setup() {
            if self.zc > 1 {
                self.zc -= 1;
                next = self.zs;
            } else {
                self.zc = 0;
            }
        }

        let m = inst.mnemonic();
        self.cycles += costs.cost(m) + if taken { costs.taken_extra } else { 0 };
        self.retired[m.index()] += 1;
        self.pc_hist[index] += 1;
        if taken {
            self.taken_branches += 1;
        }
        if !self.halted {
            self.pc = next;
        }
        Ok(Step { event, taken })
    }

    fn mac(&mut self) {
        let v = self.x[20].wrapping_add(self.x[21].wrapping_mul(self.x[22]));
        self.x[20] = v;
    }

    fn add2i(&mut self, rs1: crate::isa::Reg, rs2: crate::isa::Reg, i1: u8, i2: u16) {
        let a = self.x[rs1.index()].wrapping_add(u32::from(i1));
        self.set(rs1, a);
        let b = self.x[rs2.index()].wrapping_add(u32::from(i2));
        self.set(rs2, b);
    }
}

fn alu(op: RegOp, a: u32, b: u32) -> u32 {
    let (sa, sb) = (a as i32, b as i32);
    match op {
        RegOp::Add => a.wrapping_add(b),
        RegOp::Sub => a.wrapping_sub(b),
        RegOp::Sll => a << (b & 31),
        RegOp::Slt => u32::from(sa < sb),
        RegOp::Sltu => u32::from(a < b),
        RegOp::Xor => a ^ b,
        RegOp::Srl => a >> (b & 31),
        RegOp::Sra => (sa >> (b & 31)) as u32,
        RegOp::Or => a | b,
        RegOp::And => a & b,
        RegOp::Mul => a.wrapping_mul(b),
        RegOp::Mulh => ((i64::from(sa) * i64::from(sb)) >> 32) as u32,
        RegOp::Mulhsu => ((i64::from(sa) * i64::from(b)) >> 32) as u32,
        RegOp::Mulhu => ((u64::from(a) * u64::from(b)) >> 32) as u32,
        RegOp::Div => {
            if b == 0 {
                u32::MAX
            } else {
                sa.wrapping_div(sb) as u32
            }
        }
        RegOp::Divu => a.checked_div(b).unwrap_or(u32::MAX),
        RegOp::Rem => {
            if b == 0 {
                a
            } else {
                sa.wrapping_rem(sb) as u32
            }
        }
        RegOp::Remu => a.checked_rem(b).unwrap_or(a),
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: MachineState,
    pub trace: Option<Vec<TraceEvent>>,
}

impl RunResult {
    pub fn cycles(&self) -> u64 {
        self.state.cycles
    }

    pub fn instructions(&self) -> u64 {
        self.state.instructions()
    }
}

/// Runs `prog` to its halt marker, reporting every retired instruction to
/// `observer`.
pub fn run_observed(
    prog: &Program,
    variant: Variant,
    model: &CycleModel,
    limits: &Limits,
    mut observer: impl FnMut(&TraceEvent),
) -> Result<MachineState, SimError> {
    let costs = model.cost_table()?;
    if let Some((index, mnemonic)) = prog.first_unsupported(variant) {
        return Err(SimError::VariantViolation { index, mnemonic, variant });
    }
    let mut state = MachineState::new(prog, limits.mem_size);
    let mut steps = 0u64;
    while !state.halted {
        if steps == limits.budget {
            return Err(SimError::BudgetExceeded(limits.budget));
        }
        let s = state.step(prog, &costs)?;
        observer(&s.event);
        steps += 1;
    }
    Ok(state)
}

/// Runs `prog` to its halt marker.
pub fn run(prog: &Program, variant: Variant, model: &CycleModel, limits: &Limits) -> Result<RunResult, SimError> {
    let state = run_observed(prog, variant, model, limits, |_| {})?;
    Ok(RunResult { state, trace: None })
}

/// Like [`run`], also capturing every retired instruction.
pub fn trace(prog: &Program, variant: Variant, model: &CycleModel, limits: &Limits) -> Result<RunResult, SimError> {
    let mut events = Vec::new();
    let state = run_observed(prog, variant, model, limits, |e| events.push(*e))?;
    Ok(RunResult { state, trace: Some(events) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::isa::Reg;
    use proptest::prelude::*;

    fn go(src: &str, v: Variant) -> RunResult {
        let p = assemble(src, v).unwrap();
        trace(&p, v, &CycleModel::default(), &Limits::default()).unwrap()
    }

    #[test]
    fn mac_semantics() {
        let r = go("li x21, 3\nli x22, 4\nmac\nhalt", Variant::V1);
        assert_eq!(r.state.x[20], 12);
        assert_eq!(r.cycles(), 3 + 2);
    }

    #[test]
    fn add2i_semantics() {
        let r = go("li x5, 100\nli x6, 200\nadd2i x5, x6, 4, 64\nhalt", Variant::V2);
        assert_eq!((r.state.x[5], r.state.x[6]), (104, 264));
    }

    #[test]
    fn fusedmac_semantics() {
        let r = go("li x20, 1\nli x21, -3\nli x22, 5\nfusedmac x21, x6, 2, 7\nhalt", Variant::V3);
        assert_eq!(r.state.x[20] as i32, -14);
        assert_eq!((r.state.x[21] as i32, r.state.x[6]), (-1, 7));
    }

    #[test]
    fn empty_program_costs_halt() {
        let r = go("halt", Variant::V0);
        assert_eq!(r.cycles(), 2);
        assert_eq!(r.instructions(), 1);
    }

    #[test]
    fn mul_add_vs_mac() {
        let a = go("mul x7, x5, x6\nadd x8, x8, x7\nhalt", Variant::V0);
        let b = go("mac\nhalt", Variant::V1);
        assert_eq!(a.cycles() - 2, 2);
        assert_eq!(b.cycles() - 2, 1);
    }

    #[test]
    fn dlpi_runs_body_count_times() {
        let r = go("dlpi 3, end\naddi x5, x5, 1\nend: addi x6, x6, 2\nhalt", Variant::V4);
        assert_eq!((r.state.x[5], r.state.x[6]), (3, 6));
        assert_eq!(r.state.retired_of(Mnemonic::Addi), 6);
        assert_eq!(r.state.retired_of(Mnemonic::Blt), 0);
        assert_eq!(r.state.zc, 0);
        // setup + 3 * 2 body + halt, no cost for the two back-jumps
        assert_eq!(r.cycles(), 1 + 6 + 2);
        assert_eq!(r.state.taken_branches, 1);
    }

    #[test]
    fn dlpi_trace_shape() {
        let r = go("dlpi 2, b\nb: addi x5, x5, 1\nnop\nhalt", Variant::V4);
        let pcs: Vec<u32> = r.trace.unwrap().iter().map(|e| e.pc).collect();
        assert_eq!(pcs, vec![0, 4, 4, 8, 12]);
    }

    #[test]
    fn set_zc_zlp() {
        let r = go("li x9, 5\nset.zc x9\nzlp e\ne: addi x5, x5, 2\nhalt", Variant::V4);
        assert_eq!(r.state.x[5], 10);
    }

    #[test]
    fn division_by_zero_and_overflow() {
        assert_eq!(alu(RegOp::Div, 7, 0), u32::MAX);
        assert_eq!(alu(RegOp::Divu, 7, 0), u32::MAX);
        assert_eq!(alu(RegOp::Rem, 7, 0), 7);
        assert_eq!(alu(RegOp::Remu, 7, 0), 7);
        assert_eq!(alu(RegOp::Div, i32::MIN as u32, u32::MAX), i32::MIN as u32);
        assert_eq!(alu(RegOp::Rem, i32::MIN as u32, u32::MAX), 0);
        assert_eq!(alu(RegOp::Div, (-7i32) as u32, 2) as i32, -3);
        assert_eq!(alu(RegOp::Rem, (-7i32) as u32, 2) as i32, -1);
        assert_eq!(alu(RegOp::Mulh, (-2i32) as u32, 3), u32::MAX);
        assert_eq!(alu(RegOp::Mulhu, u32::MAX, 2), 1);
        assert_eq!(alu(RegOp::Mulhsu, (-1i32) as u32, u32::MAX), u32::MAX);
    }

    #[test]
    fn memory_traps() {
        let p = assemble(".data\nd: .byte 1, 2, 3, 4, 5\n.text\nla x5, d\nlw x6, 1(x5)\nhalt", Variant::V0).unwrap();
        let err = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err();
        assert!(matches!(err, SimError::Trap { pc: 8, kind: TrapKind::Misaligned { .. }, .. }));
        let p = assemble("li x5, 16\nsw x5, 0(x5)\nhalt", Variant::V0).unwrap();
        let err = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err();
        assert!(matches!(err, SimError::Trap { kind: TrapKind::OutOfBounds { addr: 16 }, .. }));
    }

    #[test]
    fn loads_sign_extend() {
        let p = assemble(
            ".data\nd: .byte -2, -1\n.text\nla x5, d\nlb x6, 0(x5)\nlbu x7, 0(x5)\nlh x8, 0(x5)\nlhu x9, 0(x5)\nhalt",
            Variant::V0,
        )
        .unwrap();
        let r = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap();
        assert_eq!(r.state.x[6] as i32, -2);
        assert_eq!(r.state.x[7], 0xfe);
        assert_eq!(r.state.x[8] as i32, -2);
        assert_eq!(r.state.x[9], 0xfffe);
    }

    #[test]
    fn budget_and_variant_errors() {
        let p = assemble("a: nop\nj a", Variant::V0).unwrap();
        let limits = Limits { budget: 10, ..Limits::default() };
        assert_eq!(run(&p, Variant::V0, &CycleModel::default(), &limits).unwrap_err(), SimError::BudgetExceeded(10));
        let p = assemble("mac\nhalt", Variant::V1).unwrap();
        assert!(matches!(
            run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err(),
            SimError::VariantViolation { index: 0, mnemonic: Mnemonic::Mac, .. }
        ));
    }

    #[test]
    fn environment_instructions_trap() {
        for (src, kind) in
            [("ecall", TrapKind::EnvironmentCall), ("ebreak", TrapKind::Breakpoint), ("fence", TrapKind::Fence)]
        {
            let p = assemble(src, Variant::V0).unwrap();
            let err = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err();
            assert!(matches!(err, SimError::Trap { kind: k, .. } if k == kind));
        }
        let p = Program::from_text(vec![Instruction::Illegal(0)]);
        let err = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err();
        assert!(matches!(err, SimError::Trap { kind: TrapKind::IllegalInstruction, .. }));
        let p = Program::from_text(vec![Instruction::addi(Reg::x(1), Reg::ZERO, 1)]);
        let err = run(&p, Variant::V0, &CycleModel::default(), &Limits::default()).unwrap_err();
        assert!(matches!(err, SimError::Trap { pc: 4, kind: TrapKind::PcOutOfRange, .. }));
    }

    fn arb_alu() -> impl Strategy<Value = Instruction> {
        let reg = (0u8..32).prop_map(Reg::x);
        prop_oneof![
            (reg.clone(), reg.clone(), -2048i32..2048).prop_map(|(rd, rs1, imm)| Instruction::addi(rd, rs1, imm)),
            (reg.clone(), reg.clone(), reg.clone(), 0usize..18).prop_map(|(rd, rs1, rs2, k)| {
                let ops = [
                    RegOp::Add,
                    RegOp::Sub,
                    RegOp::Sll,
                    RegOp::Slt,
                    RegOp::Sltu,
                    RegOp::Xor,
                    RegOp::Srl,
                    RegOp::Sra,
                    RegOp::Or,
                    RegOp::And,
                    RegOp::Mul,
                    RegOp::Mulh,
                    RegOp::Mulhsu,
                    RegOp::Mulhu,
                    RegOp::Div,
                    RegOp::Divu,
                    RegOp::Rem,
                    RegOp::Remu,
                ];
                Instruction::Alu { op: ops[k], rd, rs1, rs2 }
            }),
            (reg.clone(), 0u32..0x10_0000).prop_map(|(rd, imm)| Instruction::Lui { rd, imm }),
            Just(Instruction::Mac),
            (reg.clone(), reg, 0u8..32, 0u16..1024).prop_map(|(rs1, rs2, i1, i2)| Instruction::Add2i {
                rs1,
                rs2,
                i1,
                i2
            }),
        ]
    }

    proptest! {
        #[test]
        fn x0_stays_zero_and_counters_add_up(body in proptest::collection::vec(arb_alu(), 0..64)) {
            let mut text = body;
            text.push(Instruction::HALT);
            let p = Program::from_text(text);
            let model = CycleModel::default();
            let r = trace(&p, Variant::V4, &model, &Limits::default()).unwrap();
            prop_assert_eq!(r.state.x[0], 0);
            let events = r.trace.as_ref().unwrap();
            prop_assert_eq!(events.len() as u64, r.instructions());
            let costs = model.cost_table().unwrap();
            let expect: u64 = events.iter().map(|e| costs.cost(e.inst.mnemonic())).sum::<u64>()
                + r.state.taken_branches * costs.taken_extra;
            prop_assert_eq!(r.cycles(), expect);
            for w in events.windows(2) {
                prop_assert!(w[0].cycle <= w[1].cycle);
            }
        }
    }
}
