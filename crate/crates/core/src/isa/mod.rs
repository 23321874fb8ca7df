//! Instruction set: RV32IM plus the custom multiply-accumulate, dual-increment,
//! fused and hardware-loop extensions.
//!
//! The custom groups live in the RISC-V custom opcode space:
//!
//! ```text
//! fusedmac  CUSTOM-0  0b0001011   [i2 lo7 | rs2 | rs1 | i2 hi3 | i1 | opcode]
//! add2i     CUSTOM-1  0b0101011   [i2 lo7 | rs2 | rs1 | i2 hi3 | i1 | opcode]
//! mac       CUSTOM-2  0b1011011   all non-opcode bits zero (x20 += x21 * x22)
//! zol       0b1110111             [offset/words (12) | rs1/count hi | funct3 | count lo | opcode]
//! ```

mod codec;
mod variant;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use codec::{decode, encode, EncodeError};
pub use variant::{extensions_of, Variant};

/// Major opcodes of the custom instruction groups.
pub mod opcode {
    pub const FUSEDMAC: u32 = 0b000_1011;
    pub const ADD2I: u32 = 0b010_1011;
    pub const MAC: u32 = 0b101_1011;
    pub const ZOL: u32 = 0b111_0111;

    /// Base RV32IM major opcodes used by this crate.
    pub const LUI: u32 = 0b011_0111;
    pub const AUIPC: u32 = 0b001_0111;
    pub const JAL: u32 = 0b110_1111;
    pub const JALR: u32 = 0b110_0111;
    pub const BRANCH: u32 = 0b110_0011;
    pub const LOAD: u32 = 0b000_0011;
    pub const STORE: u32 = 0b010_0011;
    pub const OP_IMM: u32 = 0b001_0011;
    pub const OP: u32 = 0b011_0011;
    pub const MISC_MEM: u32 = 0b000_1111;
    pub const SYSTEM: u32 = 0b111_0011;

    pub const BASE: [u32; 11] = [LUI, AUIPC, JAL, JALR, BRANCH, LOAD, STORE, OP_IMM, OP, MISC_MEM, SYSTEM];
    pub const CUSTOM: [u32; 4] = [FUSEDMAC, ADD2I, MAC, ZOL];
}

/// `funct3` selectors inside the zol opcode.
pub mod zol_funct3 {
    pub const DLP: u32 = 0;
    pub const DLPI: u32 = 1;
    pub const ZLP: u32 = 2;
    pub const SET_ZC: u32 = 4;
    pub const SET_ZS: u32 = 5;
    pub const SET_ZE: u32 = 6;
}

/// Upper bounds of the dual-increment immediates.
pub const I1_MAX: u8 = 31;
pub const I2_MAX: u16 = 1023;
/// Largest immediate trip count `dlpi` can carry.
pub const DLPI_COUNT_MAX: u16 = 1023;
/// Byte range of a hardware-loop end offset (signed 12-bit word offset).
pub const ZOL_OFFSET_MIN: i32 = -2048 * 4;
pub const ZOL_OFFSET_MAX: i32 = 2047 * 4;

/// A general-purpose register index in `0..32`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    /// Hardwired `mac` accumulator.
    pub const MAC_ACC: Reg = Reg(20);
    /// Hardwired `mac` multiplicands.
    pub const MAC_A: Reg = Reg(21);
    pub const MAC_B: Reg = Reg(22);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    /// Panics if `index >= 32`; meant for constant register names in generated code.
    pub const fn x(index: u8) -> Reg {
        assert!(index < 32, "register index out of range");
        Reg(index)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn bit(self) -> u32 {
        1 << self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Parses `xN` or an ABI name.
    pub fn parse(name: &str) -> Option<Reg> {
        if let Some(n) = name.strip_prefix('x') {
            if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) && n.len() <= 2 {
                return n.parse().ok().and_then(Reg::new);
            }
        }
        let idx = match name {
            "zero" => 0,
            "ra" => 1,
            "sp" => 2,
            "gp" => 3,
            "tp" => 4,
            "t0" => 5,
            "t1" => 6,
            "t2" => 7,
            "s0" | "fp" => 8,
            "s1" => 9,
            "a0" => 10,
            "a1" => 11,
            "a2" => 12,
            "a3" => 13,
            "a4" => 14,
            "a5" => 15,
            "a6" => 16,
            "a7" => 17,
            "s2" => 18,
            "s3" => 19,
            "s4" => 20,
            "s5" => 21,
            "s6" => 22,
            "s7" => 23,
            "s8" => 24,
            "s9" => 25,
            "s10" => 26,
            "s11" => 27,
            "t3" => 28,
            "t4" => 29,
            "t5" => 30,
            "t6" => 31,
            _ => return None,
        };
        Some(Reg(idx))
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum LoadWidth {
    B,
    H,
    W,
    Bu,
    Hu,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum StoreWidth {
    B,
    H,
    W,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum ImmOp {
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
}

impl ImmOp {
    pub fn is_shift(self) -> bool {
        matches!(self, ImmOp::Slli | ImmOp::Srli | ImmOp::Srai)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum RegOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

/// One decoded instruction.
///
/// Control-flow offsets are byte offsets relative to the instruction's own
/// address. For the hardware-loop setups the offset locates the last
/// instruction of the loop body (the `ZE` address).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Instruction {
    /// `imm` is the 20-bit upper immediate (`rd = imm << 12`).
    Lui {
        rd: Reg,
        imm: u32,
    },
    Auipc {
        rd: Reg,
        imm: u32,
    },
    Jal {
        rd: Reg,
        offset: i32,
    },
    Jalr {
        rd: Reg,
        rs1: Reg,
        offset: i32,
    },
    Branch {
        cond: BranchCond,
        rs1: Reg,
        rs2: Reg,
        offset: i32,
    },
    Load {
        width: LoadWidth,
        rd: Reg,
        rs1: Reg,
        offset: i32,
    },
    Store {
        width: StoreWidth,
        rs1: Reg,
        rs2: Reg,
        offset: i32,
    },
    AluImm {
        op: ImmOp,
        rd: Reg,
        rs1: Reg,
        imm: i32,
    },
    Alu {
        op: RegOp,
        rd: Reg,
        rs1: Reg,
        rs2: Reg,
    },
    Fence {
        pred: u8,
        succ: u8,
    },
    Ecall,
    Ebreak,
    /// `x20 += x21 * x22`
    Mac,
    /// `rs1 += i1; rs2 += i2`
    Add2i {
        rs1: Reg,
        rs2: Reg,
        i1: u8,
        i2: u16,
    },
    /// `mac` followed by `add2i rs1, rs2, i1, i2`.
    Fusedmac {
        rs1: Reg,
        rs2: Reg,
        i1: u8,
        i2: u16,
    },
    /// `ZC = rs1; ZS = pc + 4; ZE = pc + offset`
    Dlp {
        rs1: Reg,
        offset: i32,
    },
    /// `ZC = count; ZS = pc + 4; ZE = pc + offset`
    Dlpi {
        count: u16,
        offset: i32,
    },
    /// `ZS = pc + 4; ZE = pc + offset` with `ZC` set beforehand.
    Zlp {
        offset: i32,
    },
    SetZc {
        rs1: Reg,
    },
    SetZs {
        rs1: Reg,
    },
    SetZe {
        rs1: Reg,
    },
    /// A word that does not decode to any supported instruction.
    Illegal(u32),
}

macro_rules! mnemonics {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Flat instruction kind, used for counters, cost tables and gating.
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub enum Mnemonic {
            $($variant),*
        }

        impl Mnemonic {
            pub const ALL: &'static [Mnemonic] = &[$(Mnemonic::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Mnemonic::$variant => $name),*
                }
            }

            pub fn from_name(name: &str) -> Option<Mnemonic> {
                match name {
                    $($name => Some(Mnemonic::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

mnemonics! {
    Lui => "lui", Auipc => "auipc", Jal => "jal", Jalr => "jalr",
    Beq => "beq", Bne => "bne", Blt => "blt", Bge => "bge", Bltu => "bltu", Bgeu => "bgeu",
    Lb => "lb", Lh => "lh", Lw => "lw", Lbu => "lbu", Lhu => "lhu",
    Sb => "sb", Sh => "sh", Sw => "sw",
    Addi => "addi", Slti => "slti", Sltiu => "sltiu", Xori => "xori", Ori => "ori",
    Andi => "andi", Slli => "slli", Srli => "srli", Srai => "srai",
    Add => "add", Sub => "sub", Sll => "sll", Slt => "slt", Sltu => "sltu", Xor => "xor",
    Srl => "srl", Sra => "sra", Or => "or", And => "and",
    Mul => "mul", Mulh => "mulh", Mulhsu => "mulhsu", Mulhu => "mulhu",
    Div => "div", Divu => "divu", Rem => "rem", Remu => "remu",
    Fence => "fence", Ecall => "ecall", Ebreak => "ebreak",
    Mac => "mac", Add2i => "add2i", Fusedmac => "fusedmac",
    Dlp => "dlp", Dlpi => "dlpi", Zlp => "zlp",
    SetZc => "set.zc", SetZs => "set.zs", SetZe => "set.ze",
    Illegal => "illegal",
}

impl Mnemonic {
    pub const COUNT: usize = Mnemonic::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowest processor variant that implements this instruction.
    pub fn min_variant(self) -> Variant {
        match self {
            Mnemonic::Mac => Variant::V1,
            Mnemonic::Add2i => Variant::V2,
            Mnemonic::Fusedmac => Variant::V3,
            Mnemonic::Dlp | Mnemonic::Dlpi | Mnemonic::Zlp | Mnemonic::SetZc | Mnemonic::SetZs | Mnemonic::SetZe => {
                Variant::V4
            }
            _ => Variant::V0,
        }
    }

    pub fn is_custom(self) -> bool {
        self.min_variant() != Variant::V0
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Mnemonic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Mnemonic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Mnemonic::from_name(&name).ok_or_else(|| serde::de::Error::custom(format!("unknown mnemonic `{name}`")))
    }
}

impl Instruction {
    pub fn mnemonic(&self) -> Mnemonic {
        use Instruction as I;
        match *self {
            I::Lui { .. } => Mnemonic::Lui,
            I::Auipc { .. } => Mnemonic::Auipc,
            I::Jal { .. } => Mnemonic::Jal,
            I::Jalr { .. } => Mnemonic::Jalr,
            I::Branch { cond, .. } => match cond {
                BranchCond::Eq => Mnemonic::Beq,
                BranchCond::Ne => Mnemonic::Bne,
                BranchCond::Lt => Mnemonic::Blt,
                BranchCond::Ge => Mnemonic::Bge,
                BranchCond::Ltu => Mnemonic::Bltu,
                BranchCond::Geu => Mnemonic::Bgeu,
            },
            I::Load { width, .. } => match width {
                LoadWidth::B => Mnemonic::Lb,
                LoadWidth::H => Mnemonic::Lh,
                LoadWidth::W => Mnemonic::Lw,
                LoadWidth::Bu => Mnemonic::Lbu,
                LoadWidth::Hu => Mnemonic::Lhu,
            },
            I::Store { width, .. } => match width {
                StoreWidth::B => Mnemonic::Sb,
                StoreWidth::H => Mnemonic::Sh,
                StoreWidth::W => Mnemonic::Sw,
            },
            I::AluImm { op, .. } => match op {
                ImmOp::Addi => Mnemonic::Addi,
                ImmOp::Slti => Mnemonic::Slti,
                ImmOp::Sltiu => Mnemonic::Sltiu,
                ImmOp::Xori => Mnemonic::Xori,
                ImmOp::Ori => Mnemonic::Ori,
                ImmOp::Andi => Mnemonic::Andi,
                ImmOp::Slli => Mnemonic::Slli,
                ImmOp::Srli => Mnemonic::Srli,
                ImmOp::Srai => Mnemonic::Srai,
            },
            I::Alu { op, .. } => match op {
                RegOp::Add => Mnemonic::Add,
                RegOp::Sub => Mnemonic::Sub,
                RegOp::Sll => Mnemonic::Sll,
                RegOp::Slt => Mnemonic::Slt,
                RegOp::Sltu => Mnemonic::Sltu,
                RegOp::Xor => Mnemonic::Xor,
                RegOp::Srl => Mnemonic::Srl,
                RegOp::Sra => Mnemonic::Sra,
                RegOp::Or => Mnemonic::Or,
                RegOp::And => Mnemonic::And,
                RegOp::Mul => Mnemonic::Mul,
                RegOp::Mulh => Mnemonic::Mulh,
                RegOp::Mulhsu => Mnemonic::Mulhsu,
                RegOp::Mulhu => Mnemonic::Mulhu,
                RegOp::Div => Mnemonic::Div,
                RegOp::Divu => Mnemonic::Divu,
                RegOp::Rem => Mnemonic::Rem,
                RegOp::Remu => Mnemonic::Remu,
            },
            I::Fence { .. } => Mnemonic::Fence,
            I::Ecall => Mnemonic::Ecall,
            I::Ebreak => Mnemonic::Ebreak,
            I::Mac => Mnemonic::Mac,
            I::Add2i { .. } => Mnemonic::Add2i,
            I::Fusedmac { .. } => Mnemonic::Fusedmac,
            I::Dlp { .. } => Mnemonic::Dlp,
            I::Dlpi { .. } => Mnemonic::Dlpi,
            I::Zlp { .. } => Mnemonic::Zlp,
            I::SetZc { .. } => Mnemonic::SetZc,
            I::SetZs { .. } => Mnemonic::SetZs,
            I::SetZe { .. } => Mnemonic::SetZe,
            I::Illegal(_) => Mnemonic::Illegal,
        }
    }

    /// `addi rd, rs1, imm` shorthand.
    pub const fn addi(rd: Reg, rs1: Reg, imm: i32) -> Instruction {
        Instruction::AluImm { op: ImmOp::Addi, rd, rs1, imm }
    }

    /// `mv rd, rs` (an `addi` with a zero immediate).
    pub const fn mv(rd: Reg, rs: Reg) -> Instruction {
        Instruction::addi(rd, rs, 0)
    }

    /// `jal x0, 0`: the halt marker.
    pub const HALT: Instruction = Instruction::Jal { rd: Reg::ZERO, offset: 0 };

    pub fn is_halt(&self) -> bool {
        matches!(self, Instruction::Jal { offset: 0, .. })
    }

    /// Relative control-flow target, if the instruction carries one.
    pub fn target_offset(&self) -> Option<i32> {
        match *self {
            Instruction::Jal { offset, .. }
            | Instruction::Branch { offset, .. }
            | Instruction::Dlp { offset, .. }
            | Instruction::Dlpi { offset, .. }
            | Instruction::Zlp { offset } => Some(offset),
            _ => None,
        }
    }

    /// Returns the instruction with its relative target replaced.
    pub fn with_target_offset(mut self, new: i32) -> Instruction {
        match &mut self {
            Instruction::Jal { offset, .. }
            | Instruction::Branch { offset, .. }
            | Instruction::Dlp { offset, .. }
            | Instruction::Dlpi { offset, .. }
            | Instruction::Zlp { offset } => *offset = new,
            _ => {}
        }
        self
    }

    /// Whether the instruction may redirect the program counter.
    pub fn is_control_flow(&self) -> bool {
        matches!(
            self,
            Instruction::Jal { .. }
                | Instruction::Jalr { .. }
                | Instruction::Branch { .. }
                | Instruction::Ecall
                | Instruction::Ebreak
                | Instruction::Illegal(_)
        )
    }

    /// Whether the instruction programs the hardware-loop registers.
    pub fn is_loop_setup(&self) -> bool {
        matches!(
            self,
            Instruction::Dlp { .. }
                | Instruction::Dlpi { .. }
                | Instruction::Zlp { .. }
                | Instruction::SetZc { .. }
                | Instruction::SetZs { .. }
                | Instruction::SetZe { .. }
        )
    }

    /// Bit mask of registers read, including the implicit `mac` operands.
    pub fn uses(&self) -> u32 {
        use Instruction as I;
        let mask = match *self {
            I::Lui { .. } | I::Auipc { .. } | I::Jal { .. } => 0,
            I::Jalr { rs1, .. } | I::Load { rs1, .. } | I::AluImm { rs1, .. } => rs1.bit(),
            I::Branch { rs1, rs2, .. } | I::Store { rs1, rs2, .. } | I::Alu { rs1, rs2, .. } => rs1.bit() | rs2.bit(),
            I::Fence { .. } | I::Ecall | I::Ebreak | I::Illegal(_) => 0,
            I::Mac => Reg::MAC_ACC.bit() | Reg::MAC_A.bit() | Reg::MAC_B.bit(),
            I::Add2i { rs1, rs2, .. } => rs1.bit() | rs2.bit(),
            I::Fusedmac { rs1, rs2, .. } => {
                rs1.bit() | rs2.bit() | Reg::MAC_ACC.bit() | Reg::MAC_A.bit() | Reg::MAC_B.bit()
            }
            I::Dlp { rs1, .. } | I::SetZc { rs1 } | I::SetZs { rs1 } | I::SetZe { rs1 } => rs1.bit(),
            I::Dlpi { .. } | I::Zlp { .. } => 0,
        };
        mask & !1
    }

    /// Bit mask of registers written, including the implicit `mac` accumulator.
    pub fn defs(&self) -> u32 {
        use Instruction as I;
        let mask = match *self {
            I::Lui { rd, .. }
            | I::Auipc { rd, .. }
            | I::Jal { rd, .. }
            | I::Jalr { rd, .. }
            | I::Load { rd, .. }
            | I::AluImm { rd, .. }
            | I::Alu { rd, .. } => rd.bit(),
            I::Mac => Reg::MAC_ACC.bit(),
            I::Add2i { rs1, rs2, .. } => rs1.bit() | rs2.bit(),
            I::Fusedmac { rs1, rs2, .. } => rs1.bit() | rs2.bit() | Reg::MAC_ACC.bit(),
            _ => 0,
        };
        mask & !1
    }

    /// Registers the instruction references only through fixed, non-renamable slots.
    pub fn implicit_regs(&self) -> u32 {
        match self {
            Instruction::Mac | Instruction::Fusedmac { .. } => Reg::MAC_ACC.bit() | Reg::MAC_A.bit() | Reg::MAC_B.bit(),
            _ => 0,
        }
    }

    /// Replaces every explicit occurrence of `from` by `to`.
    pub fn rename(mut self, from: Reg, to: Reg) -> Instruction {
        use Instruction as I;
        let swap = |r: &mut Reg| {
            if *r == from {
                *r = to;
            }
        };
        match &mut self {
            I::Lui { rd, .. } | I::Auipc { rd, .. } | I::Jal { rd, .. } => swap(rd),
            I::Jalr { rd, rs1, .. } | I::Load { rd, rs1, .. } | I::AluImm { rd, rs1, .. } => {
                swap(rd);
                swap(rs1);
            }
            I::Branch { rs1, rs2, .. }
            | I::Store { rs1, rs2, .. }
            | I::Add2i { rs1, rs2, .. }
            | I::Fusedmac { rs1, rs2, .. } => {
                swap(rs1);
                swap(rs2);
            }
            I::Alu { rd, rs1, rs2, .. } => {
                swap(rd);
                swap(rs1);
                swap(rs2);
            }
            I::Dlp { rs1, .. } | I::SetZc { rs1 } | I::SetZs { rs1 } | I::SetZe { rs1 } => swap(rs1),
            _ => {}
        }
        self
    }

    /// `addi x, x, imm` with `x != x0`: returns `(x, imm)`.
    pub fn as_reg_increment(&self) -> Option<(Reg, i32)> {
        match *self {
            Instruction::AluImm { op: ImmOp::Addi, rd, rs1, imm } if rd == rs1 && !rd.is_zero() => Some((rd, imm)),
            _ => None,
        }
    }
}
