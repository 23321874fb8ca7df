use thiserror::Error;

use super::{
    opcode, zol_funct3, BranchCond, ImmOp, Instruction, LoadWidth, Reg, RegOp, StoreWidth, DLPI_COUNT_MAX, I1_MAX,
    I2_MAX, ZOL_OFFSET_MAX, ZOL_OFFSET_MIN,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{field} = {value} is out of range [{min}, {max}]")]
    OutOfRange { field: &'static str, value: i64, min: i64, max: i64 },
    #[error("{field} = {value} must be a multiple of {align}")]
    Misaligned { field: &'static str, value: i64, align: i64 },
    #[error("illegal instruction word {0:#010x} cannot be encoded")]
    Illegal(u32),
}

fn check(field: &'static str, value: i64, min: i64, max: i64) -> Result<(), EncodeError> {
    if value < min || value > max {
        Err(EncodeError::OutOfRange { field, value, min, max })
    } else {
        Ok(())
    }
}

fn check_aligned(field: &'static str, value: i64, align: i64) -> Result<(), EncodeError> {
    if value % align != 0 {
        Err(EncodeError::Misaligned { field, value, align })
    } else {
        Ok(())
    }
}

fn r(rd: Reg) -> u32 {
    rd.index() as u32
}

fn r_type(funct7: u32, rs2: Reg, rs1: Reg, funct3: u32, rd: Reg, op: u32) -> u32 {
    (funct7 << 25) | (r(rs2) << 20) | (r(rs1) << 15) | (funct3 << 12) | (r(rd) << 7) | op
}

fn i_type(imm: i32, rs1: Reg, funct3: u32, rd: Reg, op: u32) -> u32 {
    (((imm as u32) & 0xfff) << 20) | (r(rs1) << 15) | (funct3 << 12) | (r(rd) << 7) | op
}

fn s_type(imm: i32, rs2: Reg, rs1: Reg, funct3: u32, op: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25) | (r(rs2) << 20) | (r(rs1) << 15) | (funct3 << 12) | ((imm & 0x1f) << 7) | op
}

fn b_type(offset: i32, rs2: Reg, rs1: Reg, funct3: u32) -> u32 {
    let imm = offset as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | (r(rs2) << 20)
        | (r(rs1) << 15)
        | (funct3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | opcode::BRANCH
}

fn j_type(offset: i32, rd: Reg) -> u32 {
    let imm = offset as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | (r(rd) << 7)
        | opcode::JAL
}

fn dual_imm(rs1: Reg, rs2: Reg, i1: u8, i2: u16, op: u32) -> Result<u32, EncodeError> {
    check("i1", i1.into(), 0, I1_MAX.into())?;
    check("i2", i2.into(), 0, I2_MAX.into())?;
    let i2 = u32::from(i2);
    Ok(((i2 & 0x7f) << 25) | (r(rs2) << 20) | (r(rs1) << 15) | ((i2 >> 7) << 12) | (u32::from(i1) << 7) | op)
}

fn zol_offset(offset: i32) -> Result<u32, EncodeError> {
    check("offset", offset.into(), ZOL_OFFSET_MIN.into(), ZOL_OFFSET_MAX.into())?;
    check_aligned("offset", offset.into(), 4)?;
    Ok((((offset / 4) as u32) & 0xfff) << 20)
}

fn zol(funct3: u32, rs1: Reg, rest: u32) -> u32 {
    rest | (r(rs1) << 15) | (funct3 << 12) | opcode::ZOL
}

fn imm12(field: &'static str, imm: i32) -> Result<(), EncodeError> {
    check(field, imm.into(), -2048, 2047)
}

/// Encodes one instruction into its 32-bit word.
pub fn encode(inst: &Instruction) -> Result<u32, EncodeError> {
    use Instruction as I;
    Ok(match *inst {
        I::Lui { rd, imm } | I::Auipc { rd, imm } => {
            check("imm", imm.into(), 0, 0xf_ffff)?;
            let op = if matches!(inst, I::Lui { .. }) { opcode::LUI } else { opcode::AUIPC };
            (imm << 12) | (r(rd) << 7) | op
        }
        I::Jal { rd, offset } => {
            check("offset", offset.into(), -(1 << 20), (1 << 20) - 1)?;
            check_aligned("offset", offset.into(), 2)?;
            j_type(offset, rd)
        }
        I::Jalr { rd, rs1, offset } => {
            imm12("offset", offset)?;
            i_type(offset, rs1, 0, rd, opcode::JALR)
        }
        I::Branch { cond, rs1, rs2, offset } => {
            check("offset", offset.into(), -4096, 4095)?;
            check_aligned("offset", offset.into(), 2)?;
            let f3 = match cond {
                BranchCond::Eq => 0,
                BranchCond::Ne => 1,
                BranchCond::Lt => 4,
                BranchCond::Ge => 5,
                BranchCond::Ltu => 6,
                BranchCond::Geu => 7,
            };
            b_type(offset, rs2, rs1, f3)
        }
        I::Load { width, rd, rs1, offset } => {
            imm12("offset", offset)?;
            let f3 = match width {
                LoadWidth::B => 0,
                LoadWidth::H => 1,
                LoadWidth::W => 2,
                LoadWidth::Bu => 4,
                LoadWidth::Hu => 5,
            };
            i_type(offset, rs1, f3, rd, opcode::LOAD)
        }
        I::Store { width, rs1, rs2, offset } => {
            imm12("offset", offset)?;
            let f3 = match width {
                StoreWidth::B => 0,
                StoreWidth::H => 1,
                StoreWidth::W => 2,
            };
            s_type(offset, rs2, rs1, f3, opcode::STORE)
        }
        I::AluImm { op, rd, rs1, imm } => {
            if op.is_shift() {
                check("shamt", imm.into(), 0, 31)?;
            } else {
                imm12("imm", imm)?;
            }
            let (f3, imm) = match op {
                ImmOp::Addi => (0, imm),
                ImmOp::Slti => (2, imm),
                ImmOp::Sltiu => (3, imm),
                ImmOp::Xori => (4, imm),
                ImmOp::Ori => (6, imm),
                ImmOp::Andi => (7, imm),
                ImmOp::Slli => (1, imm),
                ImmOp::Srli => (5, imm),
                ImmOp::Srai => (5, imm | 0x400),
            };
            i_type(imm, rs1, f3, rd, opcode::OP_IMM)
        }
        I::Alu { op, rd, rs1, rs2 } => {
            let (f7, f3) = match op {
                RegOp::Add => (0, 0),
                RegOp::Sub => (0x20, 0),
                RegOp::Sll => (0, 1),
                RegOp::Slt => (0, 2),
                RegOp::Sltu => (0, 3),
                RegOp::Xor => (0, 4),
                RegOp::Srl => (0, 5),
                RegOp::Sra => (0x20, 5),
                RegOp::Or => (0, 6),
                RegOp::And => (0, 7),
                RegOp::Mul => (1, 0),
                RegOp::Mulh => (1, 1),
                RegOp::Mulhsu => (1, 2),
                RegOp::Mulhu => (1, 3),
                RegOp::Div => (1, 4),
                RegOp::Divu => (1, 5),
                RegOp::Rem => (1, 6),
                RegOp::Remu => (1, 7),
            };
            r_type(f7, rs2, rs1, f3, rd, opcode::OP)
        }
        I::Fence { pred, succ } => {
            check("pred", pred.into(), 0, 15)?;
            check("succ", succ.into(), 0, 15)?;
            (u32::from(pred) << 24) | (u32::from(succ) << 20) | opcode::MISC_MEM
        }
        I::Ecall => opcode::SYSTEM,
        I::Ebreak => (1 << 20) | opcode::SYSTEM,
        I::Mac => opcode::MAC,
        I::Add2i { rs1, rs2, i1, i2 } => dual_imm(rs1, rs2, i1, i2, opcode::ADD2I)?,
        I::Fusedmac { rs1, rs2, i1, i2 } => dual_imm(rs1, rs2, i1, i2, opcode::FUSEDMAC)?,
        I::Dlp { rs1, offset } => zol(zol_funct3::DLP, rs1, zol_offset(offset)?),
        I::Dlpi { count, offset } => {
            check("count", count.into(), 0, DLPI_COUNT_MAX.into())?;
            let count = u32::from(count);
            let hi = Reg::x((count >> 5) as u8);
            zol(zol_funct3::DLPI, hi, zol_offset(offset)? | ((count & 0x1f) << 7))
        }
        I::Zlp { offset } => zol(zol_funct3::ZLP, Reg::ZERO, zol_offset(offset)?),
        I::SetZc { rs1 } => zol(zol_funct3::SET_ZC, rs1, 0),
        I::SetZs { rs1 } => zol(zol_funct3::SET_ZS, rs1, 0),
        I::SetZe { rs1 } => zol(zol_funct3::SET_ZE, rs1, 0),
        I::Illegal(word) => return Err(EncodeError::Illegal(word)),
    })
}

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn reg(word: u32, lsb: u32) -> Reg {
    Reg::x(((word >> lsb) & 0x1f) as u8)
}

/// Decodes a 32-bit word.
///
/// Decoding is strict: any word that is not exactly the encoding of a
/// supported instruction (including nonzero reserved fields) becomes
/// [`Instruction::Illegal`], so `encode(decode(w)) == w` for every legal word.
pub fn decode(word: u32) -> Instruction {
    use Instruction as I;
    let op = word & 0x7f;
    let rd = reg(word, 7);
    let rs1 = reg(word, 15);
    let rs2 = reg(word, 20);
    let f3 = (word >> 12) & 7;
    let f7 = word >> 25;
    let imm_i = sext(word >> 20, 12);
    let illegal = I::Illegal(word);

    match op {
        opcode::LUI => I::Lui { rd, imm: word >> 12 },
        opcode::AUIPC => I::Auipc { rd, imm: word >> 12 },
        opcode::JAL => {
            let imm = (((word >> 31) & 1) << 20)
                | (((word >> 12) & 0xff) << 12)
                | (((word >> 20) & 1) << 11)
                | (((word >> 21) & 0x3ff) << 1);
            I::Jal { rd, offset: sext(imm, 21) }
        }
        opcode::JALR if f3 == 0 => I::Jalr { rd, rs1, offset: imm_i },
        opcode::BRANCH => {
            let cond = match f3 {
                0 => BranchCond::Eq,
                1 => BranchCond::Ne,
                4 => BranchCond::Lt,
                5 => BranchCond::Ge,
                6 => BranchCond::Ltu,
                7 => BranchCond::Geu,
                _ => return illegal,
            };
            let imm = (((word >> 31) & 1) << 12)
                | (((word >> 7) & 1) << 11)
                | (((word >> 25) & 0x3f) << 5)
                | (((word >> 8) & 0xf) << 1);
            I::Branch { cond, rs1, rs2, offset: sext(imm, 13) }
        }
        opcode::LOAD => {
            let width = match f3 {
                0 => LoadWidth::B,
                1 => LoadWidth::H,
                2 => LoadWidth::W,
                4 => LoadWidth::Bu,
                5 => LoadWidth::Hu,
                _ => return illegal,
            };
            I::Load { width, rd, rs1, offset: imm_i }
        }
        opcode::STORE => {
            let width = match f3 {
                0 => StoreWidth::B,
                1 => StoreWidth::H,
                2 => StoreWidth::W,
                _ => return illegal,
            };
            let imm = ((word >> 25) << 5) | ((word >> 7) & 0x1f);
            I::Store { width, rs1, rs2, offset: sext(imm, 12) }
        }
        opcode::OP_IMM => {
            let shamt = ((word >> 20) & 0x1f) as i32;
            let (op, imm) = match (f3, f7) {
                (0, _) => (ImmOp::Addi, imm_i),
                (2, _) => (ImmOp::Slti, imm_i),
                (3, _) => (ImmOp::Sltiu, imm_i),
                (4, _) => (ImmOp::Xori, imm_i),
                (6, _) => (ImmOp::Ori, imm_i),
                (7, _) => (ImmOp::Andi, imm_i),
                (1, 0) => (ImmOp::Slli, shamt),
                (5, 0) => (ImmOp::Srli, shamt),
                (5, 0x20) => (ImmOp::Srai, shamt),
                _ => return illegal,
            };
            I::AluImm { op, rd, rs1, imm }
        }
        opcode::OP => {
            let op = match (f7, f3) {
                (0, 0) => RegOp::Add,
                (0x20, 0) => RegOp::Sub,
                (0, 1) => RegOp::Sll,
                (0, 2) => RegOp::Slt,
                (0, 3) => RegOp::Sltu,
                (0, 4) => RegOp::Xor,
                (0, 5) => RegOp::Srl,
                (0x20, 5) => RegOp::Sra,
                (0, 6) => RegOp::Or,
                (0, 7) => RegOp::And,
                (1, 0) => RegOp::Mul,
                (1, 1) => RegOp::Mulh,
                (1, 2) => RegOp::Mulhsu,
                (1, 3) => RegOp::Mulhu,
                (1, 4) => RegOp::Div,
                (1, 5) => RegOp::Divu,
                (1, 6) => RegOp::Rem,
                (1, 7) => RegOp::Remu,
                _ => return illegal,
            };
            I::Alu { op, rd, rs1, rs2 }
        }
        opcode::MISC_MEM if word & 0xf00f_ff80 == 0 => {
            I::Fence { pred: ((word >> 24) & 0xf) as u8, succ: ((word >> 20) & 0xf) as u8 }
        }
        opcode::SYSTEM if word == opcode::SYSTEM => I::Ecall,
        opcode::SYSTEM if word == (1 << 20) | opcode::SYSTEM => I::Ebreak,
        opcode::MAC if word == opcode::MAC => I::Mac,
        opcode::ADD2I | opcode::FUSEDMAC => {
            let i1 = ((word >> 7) & 0x1f) as u8;
            let i2 = ((f3 << 7) | (word >> 25)) as u16;
            if op == opcode::ADD2I {
                I::Add2i { rs1, rs2, i1, i2 }
            } else {
                I::Fusedmac { rs1, rs2, i1, i2 }
            }
        }
        opcode::ZOL => decode_zol(word, f3, rs1).unwrap_or(illegal),
        _ => illegal,
    }
}

fn decode_zol(word: u32, f3: u32, rs1: Reg) -> Option<Instruction> {
    use Instruction as I;
    let low = (word >> 7) & 0x1f;
    let offset = sext(word >> 20, 12) * 4;
    let upper_zero = word >> 20 == 0;
    let inst = match f3 {
        zol_funct3::DLP if low == 0 => I::Dlp { rs1, offset },
        zol_funct3::DLPI => {
            let count = ((rs1.index() as u32) << 5) | low;
            I::Dlpi { count: count as u16, offset }
        }
        zol_funct3::ZLP if low == 0 && rs1.is_zero() => I::Zlp { offset },
        zol_funct3::SET_ZC if low == 0 && upper_zero => I::SetZc { rs1 },
        zol_funct3::SET_ZS if low == 0 && upper_zero => I::SetZs { rs1 },
        zol_funct3::SET_ZE if low == 0 && upper_zero => I::SetZe { rs1 },
        _ => return None,
    };
    Some(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mac_is_bare_opcode() {
        let w = encode(&Instruction::Mac).unwrap();
        assert_eq!(w, 0b101_1011);
        assert_eq!(decode(w), Instruction::Mac);
    }

    #[test]
    fn add2i_golden_word() {
        // i2 = 64 = 0b000_1000000: high three bits 000 at [14:12], low seven 1000000 at [31:25].
        // 1000000 << 25 | 00110 << 20 | 00101 << 15 | 000 << 12 | 00100 << 7 | 0101011
        let inst = Instruction::Add2i { rs1: Reg::x(5), rs2: Reg::x(6), i1: 4, i2: 64 };
        assert_eq!(encode(&inst).unwrap(), 0x8062_822b);
        assert_eq!(decode(0x8062_822b), inst);
    }

    #[test]
    fn fusedmac_splits_i2_high_bits_into_funct3() {
        let inst = Instruction::Fusedmac { rs1: Reg::x(1), rs2: Reg::x(2), i1: 31, i2: 1023 };
        let w = encode(&inst).unwrap();
        assert_eq!((w >> 12) & 7, 0b111);
        assert_eq!(w >> 25, 0x7f);
        assert_eq!((w >> 7) & 0x1f, 31);
        assert_eq!(w & 0x7f, opcode::FUSEDMAC);
    }

    #[test]
    fn standard_words() {
        // Cross-checked against GNU as (riscv32-unknown-elf).
        let cases = [
            (Instruction::addi(Reg::x(1), Reg::x(1), 1), 0x0010_8093),
            (Instruction::addi(Reg::ZERO, Reg::ZERO, 0), 0x0000_0013),
            (Instruction::Alu { op: RegOp::Mul, rd: Reg::x(5), rs1: Reg::x(6), rs2: Reg::x(7) }, 0x0273_02b3),
            (Instruction::Alu { op: RegOp::Sub, rd: Reg::x(10), rs1: Reg::x(11), rs2: Reg::x(12) }, 0x40c5_8533),
            (Instruction::Load { width: LoadWidth::W, rd: Reg::x(10), rs1: Reg::x(2), offset: 8 }, 0x0081_2503),
            (Instruction::Store { width: StoreWidth::W, rs1: Reg::x(2), rs2: Reg::x(10), offset: 8 }, 0x00a1_2423),
            (Instruction::Lui { rd: Reg::x(5), imm: 0x12345 }, 0x1234_52b7),
            (Instruction::Branch { cond: BranchCond::Lt, rs1: Reg::x(5), rs2: Reg::x(6), offset: -8 }, 0xfe62_cce3),
            (Instruction::Jal { rd: Reg::ZERO, offset: 0 }, 0x0000_006f),
            (Instruction::Jal { rd: Reg::x(1), offset: 2048 }, 0x0010_00ef),
            (Instruction::AluImm { op: ImmOp::Srai, rd: Reg::x(5), rs1: Reg::x(5), imm: 3 }, 0x4032_d293),
            (Instruction::Ecall, 0x0000_0073),
            (Instruction::Ebreak, 0x0010_0073),
        ];
        for (inst, word) in cases {
            assert_eq!(encode(&inst).unwrap(), word, "{inst:?}");
            assert_eq!(decode(word), inst, "{word:#010x}");
        }
    }

    #[test]
    fn unassigned_zol_slot_is_illegal() {
        let w = (3 << 12) | opcode::ZOL;
        assert_eq!(decode(w), Instruction::Illegal(w));
        let w = (7 << 12) | opcode::ZOL;
        assert_eq!(decode(w), Instruction::Illegal(w));
    }

    #[test]
    fn range_errors_name_the_field() {
        let err = encode(&Instruction::Fusedmac { rs1: Reg::x(5), rs2: Reg::x(6), i1: 1, i2: 1024 }).unwrap_err();
        assert!(matches!(err, EncodeError::OutOfRange { field: "i2", .. }));
        let err = encode(&Instruction::Add2i { rs1: Reg::x(5), rs2: Reg::x(6), i1: 32, i2: 0 }).unwrap_err();
        assert!(matches!(err, EncodeError::OutOfRange { field: "i1", .. }));
        let err = encode(&Instruction::addi(Reg::x(1), Reg::x(1), 2048)).unwrap_err();
        assert!(matches!(err, EncodeError::OutOfRange { field: "imm", .. }));
        let err = encode(&Instruction::Dlpi { count: 1024, offset: 4 }).unwrap_err();
        assert!(matches!(err, EncodeError::OutOfRange { field: "count", .. }));
        let err = encode(&Instruction::Zlp { offset: 6 }).unwrap_err();
        assert!(matches!(err, EncodeError::Misaligned { field: "offset", .. }));
    }

    #[test]
    fn mac_with_stray_bits_is_illegal() {
        assert!(matches!(decode(opcode::MAC | (1 << 7)), Instruction::Illegal(_)));
    }

    #[test]
    fn custom_opcodes_disjoint_from_base() {
        for c in opcode::CUSTOM {
            assert!(!opcode::BASE.contains(&c));
        }
        let mut seen = opcode::CUSTOM.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(opcode::ZOL >> 2, 0b11101);
    }

    proptest! {
        #[test]
        fn legal_words_reencode(word in any::<u32>()) {
            let inst = decode(word);
            if !matches!(inst, Instruction::Illegal(_)) {
                prop_assert_eq!(encode(&inst).unwrap(), word);
            }
        }
    }
}
