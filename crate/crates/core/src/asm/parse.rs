use std::collections::BTreeMap;

use super::{AsmError, AsmErrorKind, Program, DATA_BASE};
use crate::isa::{
    decode, encode, BranchCond, EncodeError, ImmOp, Instruction, LoadWidth, Mnemonic, Reg, RegOp, StoreWidth, Variant,
    DLPI_COUNT_MAX, I1_MAX, I2_MAX,
};

type Result<T> = std::result::Result<T, AsmErrorKind>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Text,
    Data,
}

enum Target {
    Label(String),
    Offset(i32),
}

enum Fixup {
    Target(Target),
    Hi(String),
    Lo(String),
}

struct Pending {
    inst: Instruction,
    fixup: Option<Fixup>,
    line: usize,
}

struct DataFixup {
    offset: usize,
    symbol: String,
    line: usize,
}

#[derive(Default)]
struct Assembler {
    pending: Vec<Pending>,
    labels: BTreeMap<String, usize>,
    data_labels: BTreeMap<String, u32>,
    data: Vec<u8>,
    data_fixups: Vec<DataFixup>,
    entry: Option<(String, usize)>,
    live_out: Option<u32>,
}

/// Assembles source text for the given processor variant.
///
/// Custom mnemonics not enabled on `variant` are rejected with the lowest
/// variant that provides them.
pub fn assemble(source: &str, variant: Variant) -> std::result::Result<Program, AsmError> {
    let mut asm = Assembler::default();
    let mut section = Section::Text;
    for (n, raw) in source.lines().enumerate() {
        let line = n + 1;
        asm.line(raw, line, variant, &mut section).map_err(|kind| AsmError { line, kind })?;
    }
    asm.finish()
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '$' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn syntax(msg: impl Into<String>) -> AsmErrorKind {
    AsmErrorKind::Syntax(msg.into())
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let value = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(bin, 2).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse().ok()?
    } else {
        return None;
    };
    Some(if neg { -value } else { value })
}

fn int(s: &str) -> Result<i64> {
    parse_int(s).ok_or_else(|| syntax(format!("expected an integer, found `{s}`")))
}

fn ranged(field: &str, value: i64, min: i64, max: i64) -> Result<i64> {
    if value < min || value > max {
        Err(AsmErrorKind::OutOfRange { field: field.to_string(), value, min, max })
    } else {
        Ok(value)
    }
}

fn reg(s: &str) -> Result<Reg> {
    Reg::parse(s).ok_or_else(|| AsmErrorKind::BadRegister(s.to_string()))
}

/// `offset(reg)` with an optional offset.
fn mem(s: &str) -> Result<(i32, Reg)> {
    let open = s.find('(').ok_or_else(|| syntax(format!("expected `offset(reg)`, found `{s}`")))?;
    let close = s.strip_suffix(')').ok_or_else(|| syntax(format!("expected `offset(reg)`, found `{s}`")))?;
    let base = reg(close[open + 1..].trim())?;
    let off = s[..open].trim();
    let off = if off.is_empty() { 0 } else { ranged("offset", int(off)?, -2048, 2047)? };
    Ok((off as i32, base))
}

fn target(s: &str) -> Result<Target> {
    if let Some(v) = parse_int(s) {
        let v = ranged("offset", v, i32::MIN.into(), i32::MAX.into())?;
        if v % 4 != 0 {
            return Err(AsmErrorKind::Misaligned { field: "offset".into(), value: v });
        }
        Ok(Target::Offset(v as i32))
    } else if is_ident(s) {
        Ok(Target::Label(s.to_string()))
    } else {
        Err(syntax(format!("expected a label or offset, found `{s}`")))
    }
}

fn expect(ops: &[&str], n: usize, mnemonic: &str) -> Result<()> {
    if ops.len() == n {
        Ok(())
    } else {
        Err(syntax(format!("`{mnemonic}` takes {n} operand(s), found {}", ops.len())))
    }
}

fn encode_error(e: EncodeError) -> AsmErrorKind {
    match e {
        EncodeError::OutOfRange { field, value, min, max } => {
            AsmErrorKind::OutOfRange { field: field.into(), value, min, max }
        }
        EncodeError::Misaligned { field, value, .. } => AsmErrorKind::Misaligned { field: field.into(), value },
        EncodeError::Illegal(w) => syntax(format!("illegal instruction {w:#010x}")),
    }
}

/// Splits a 32-bit constant into `lui`/`addi` immediates.
pub(crate) fn split_hi_lo(value: u32) -> (u32, i32) {
    let lo = ((value << 20) as i32) >> 20;
    let hi = value.wrapping_sub(lo as u32) >> 12;
    (hi, lo)
}

fn reg_op(name: &str) -> Option<RegOp> {
    Some(match name {
        "add" => RegOp::Add,
        "sub" => RegOp::Sub,
        "sll" => RegOp::Sll,
        "slt" => RegOp::Slt,
        "sltu" => RegOp::Sltu,
        "xor" => RegOp::Xor,
        "srl" => RegOp::Srl,
        "sra" => RegOp::Sra,
        "or" => RegOp::Or,
        "and" => RegOp::And,
        "mul" => RegOp::Mul,
        "mulh" => RegOp::Mulh,
        "mulhsu" => RegOp::Mulhsu,
        "mulhu" => RegOp::Mulhu,
        "div" => RegOp::Div,
        "divu" => RegOp::Divu,
        "rem" => RegOp::Rem,
        "remu" => RegOp::Remu,
        _ => return None,
    })
}

fn imm_op(name: &str) -> Option<ImmOp> {
    Some(match name {
        "addi" => ImmOp::Addi,
        "slti" => ImmOp::Slti,
        "sltiu" => ImmOp::Sltiu,
        "xori" => ImmOp::Xori,
        "ori" => ImmOp::Ori,
        "andi" => ImmOp::Andi,
        "slli" => ImmOp::Slli,
        "srli" => ImmOp::Srli,
        "srai" => ImmOp::Srai,
        _ => return None,
    })
}

fn branch_cond(name: &str) -> Option<BranchCond> {
    Some(match name {
        "beq" => BranchCond::Eq,
        "bne" => BranchCond::Ne,
        "blt" => BranchCond::Lt,
        "bge" => BranchCond::Ge,
        "bltu" => BranchCond::Ltu,
        "bgeu" => BranchCond::Geu,
        _ => return None,
    })
}

fn load_width(name: &str) -> Option<LoadWidth> {
    Some(match name {
        "lb" => LoadWidth::B,
        "lh" => LoadWidth::H,
        "lw" => LoadWidth::W,
        "lbu" => LoadWidth::Bu,
        "lhu" => LoadWidth::Hu,
        _ => return None,
    })
}

fn store_width(name: &str) -> Option<StoreWidth> {
    Some(match name {
        "sb" => StoreWidth::B,
        "sh" => StoreWidth::H,
        "sw" => StoreWidth::W,
        _ => return None,
    })
}

impl Assembler {
    fn line(&mut self, raw: &str, line: usize, variant: Variant, section: &mut Section) -> Result<()> {
        let mut rest = strip_comment(raw).trim();
        while let Some(colon) = rest.find(':') {
            let name = rest[..colon].trim();
            if !is_ident(name) {
                break;
            }
            self.define(name, *section)?;
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            return Ok(());
        }
        let (head, tail) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], rest[i..].trim()),
            None => (rest, ""),
        };
        let ops: Vec<&str> = if tail.is_empty() { Vec::new() } else { tail.split(',').map(str::trim).collect() };
        if ops.iter().any(|o| o.is_empty()) {
            return Err(syntax("empty operand"));
        }
        if head.starts_with('.') {
            return self.directive(head, &ops, line, section);
        }
        if *section != Section::Text {
            return Err(syntax(format!("instruction `{head}` outside .text")));
        }
        self.instruction(head, &ops, line, variant)
    }

    fn define(&mut self, name: &str, section: Section) -> Result<()> {
        if self.labels.contains_key(name) || self.data_labels.contains_key(name) {
            return Err(AsmErrorKind::DuplicateLabel(name.to_string()));
        }
        match section {
            Section::Text => {
                self.labels.insert(name.to_string(), self.pending.len());
            }
            Section::Data => {
                self.data_labels.insert(name.to_string(), self.data.len() as u32);
            }
        }
        Ok(())
    }

    fn directive(&mut self, name: &str, ops: &[&str], line: usize, section: &mut Section) -> Result<()> {
        match name {
            ".text" => *section = Section::Text,
            ".data" => *section = Section::Data,
            ".entry" => {
                expect(ops, 1, name)?;
                if !is_ident(ops[0]) {
                    return Err(syntax(format!("expected a label, found `{}`", ops[0])));
                }
                self.entry = Some((ops[0].to_string(), line));
            }
            ".liveout" => {
                let mut mask = 0;
                if ops.len() == 1 && ops[0].split_whitespace().eq(["none"]) {
                    self.live_out = Some(0);
                    return Ok(());
                }
                if ops.is_empty() {
                    return Err(syntax("`.liveout` needs registers or `none`"));
                }
                for op in ops {
                    mask |= reg(op)?.bit();
                }
                self.live_out = Some(mask & !1);
            }
            ".word" | ".byte" if *section == Section::Text => {
                if name == ".byte" {
                    return Err(syntax("`.byte` is not allowed in .text"));
                }
                for op in ops {
                    let w = ranged("word", int(op)?, i32::MIN.into(), u32::MAX.into())? as u32;
                    self.pending.push(Pending { inst: decode(w), fixup: None, line });
                }
            }
            ".word" => {
                if ops.is_empty() {
                    return Err(syntax("`.word` needs at least one value"));
                }
                for op in ops {
                    match parse_int(op) {
                        Some(v) => {
                            let w = ranged("word", v, i32::MIN.into(), u32::MAX.into())? as u32;
                            self.data.extend_from_slice(&w.to_le_bytes());
                        }
                        None if is_ident(op) => {
                            self.data_fixups.push(DataFixup { offset: self.data.len(), symbol: op.to_string(), line });
                            self.data.extend_from_slice(&[0; 4]);
                        }
                        None => return Err(syntax(format!("bad .word value `{op}`"))),
                    }
                }
            }
            ".byte" => {
                if ops.is_empty() {
                    return Err(syntax("`.byte` needs at least one value"));
                }
                for op in ops {
                    let b = ranged("byte", int(op)?, -128, 255)?;
                    self.data.push(b as u8);
                }
            }
            ".space" | ".zero" | ".align" => {
                if *section != Section::Data {
                    return Err(syntax(format!("`{name}` is only allowed in .data")));
                }
                expect(ops, 1, name)?;
                if name == ".align" {
                    let p = ranged("alignment", int(ops[0])?, 0, 12)?;
                    let a = 1usize << p;
                    let padded = self.data.len().div_ceil(a) * a;
                    self.data.resize(padded, 0);
                } else {
                    let n = ranged("size", int(ops[0])?, 0, 1 << 24)?;
                    self.data.resize(self.data.len() + n as usize, 0);
                }
            }
            _ => return Err(syntax(format!("unknown directive `{name}`"))),
        }
        Ok(())
    }

    fn push(&mut self, inst: Instruction, fixup: Option<Fixup>, line: usize) {
        self.pending.push(Pending { inst, fixup, line });
    }

    fn instruction(&mut self, name: &str, ops: &[&str], line: usize, variant: Variant) -> Result<()> {
        if let Some(m) = Mnemonic::from_name(name) {
            if m == Mnemonic::Illegal {
                return Err(AsmErrorKind::UnknownMnemonic(name.to_string()));
            }
            if !variant.supports(m) {
                return Err(AsmErrorKind::VariantGate { mnemonic: m, required: m.min_variant() });
            }
        }

        if let Some(op) = reg_op(name) {
            expect(ops, 3, name)?;
            let inst = Instruction::Alu { op, rd: reg(ops[0])?, rs1: reg(ops[1])?, rs2: reg(ops[2])? };
            self.push(inst, None, line);
            return Ok(());
        }
        if let Some(op) = imm_op(name) {
            expect(ops, 3, name)?;
            let imm = ranged("imm", int(ops[2])?, i32::MIN.into(), i32::MAX.into())? as i32;
            let inst = Instruction::AluImm { op, rd: reg(ops[0])?, rs1: reg(ops[1])?, imm };
            encode(&inst).map_err(encode_error)?;
            self.push(inst, None, line);
            return Ok(());
        }
        if let Some(cond) = branch_cond(name) {
            expect(ops, 3, name)?;
            let (rs1, rs2) = (reg(ops[0])?, reg(ops[1])?);
            let t = target(ops[2])?;
            self.push(Instruction::Branch { cond, rs1, rs2, offset: 0 }, Some(Fixup::Target(t)), line);
            return Ok(());
        }
        if let Some(width) = load_width(name) {
            expect(ops, 2, name)?;
            let rd = reg(ops[0])?;
            let (offset, rs1) = mem(ops[1])?;
            self.push(Instruction::Load { width, rd, rs1, offset }, None, line);
            return Ok(());
        }
        if let Some(width) = store_width(name) {
            expect(ops, 2, name)?;
            let rs2 = reg(ops[0])?;
            let (offset, rs1) = mem(ops[1])?;
            self.push(Instruction::Store { width, rs1, rs2, offset }, None, line);
            return Ok(());
        }

        match name {
            "lui" | "auipc" => {
                expect(ops, 2, name)?;
                let rd = reg(ops[0])?;
                let imm = ranged("imm", int(ops[1])?, 0, 0xf_ffff)? as u32;
                let inst = if name == "lui" { Instruction::Lui { rd, imm } } else { Instruction::Auipc { rd, imm } };
                self.push(inst, None, line);
            }
            "jal" => {
                let (rd, t) = match ops {
                    [t] => (Reg::x(1), target(t)?),
                    [rd, t] => (reg(rd)?, target(t)?),
                    _ => return Err(syntax("`jal` takes 1 or 2 operands")),
                };
                self.push(Instruction::Jal { rd, offset: 0 }, Some(Fixup::Target(t)), line);
            }
            "jalr" => {
                let inst = match ops {
                    [rs1] => Instruction::Jalr { rd: Reg::x(1), rs1: reg(rs1)?, offset: 0 },
                    [rd, m] if m.contains('(') => {
                        let (offset, rs1) = mem(m)?;
                        Instruction::Jalr { rd: reg(rd)?, rs1, offset }
                    }
                    [rd, rs1, off] => Instruction::Jalr {
                        rd: reg(rd)?,
                        rs1: reg(rs1)?,
                        offset: ranged("offset", int(off)?, -2048, 2047)? as i32,
                    },
                    _ => return Err(syntax("bad `jalr` operands")),
                };
                self.push(inst, None, line);
            }
            "fence" => {
                let (pred, succ) = match ops {
                    [] => (15, 15),
                    [p, s] => (ranged("pred", int(p)?, 0, 15)?, ranged("succ", int(s)?, 0, 15)?),
                    _ => return Err(syntax("`fence` takes 0 or 2 operands")),
                };
                self.push(Instruction::Fence { pred: pred as u8, succ: succ as u8 }, None, line);
            }
            "ecall" | "ebreak" | "mac" | "nop" | "halt" => {
                expect(ops, 0, name)?;
                let inst = match name {
                    "ecall" => Instruction::Ecall,
                    "ebreak" => Instruction::Ebreak,
                    "mac" => Instruction::Mac,
                    "nop" => Instruction::addi(Reg::ZERO, Reg::ZERO, 0),
                    _ => Instruction::HALT,
                };
                self.push(inst, None, line);
            }
            "add2i" | "fusedmac" => {
                expect(ops, 4, name)?;
                let (rs1, rs2) = (reg(ops[0])?, reg(ops[1])?);
                let i1 = ranged("i1", int(ops[2])?, 0, I1_MAX.into())? as u8;
                let i2 = ranged("i2", int(ops[3])?, 0, I2_MAX.into())? as u16;
                let inst = if name == "add2i" {
                    Instruction::Add2i { rs1, rs2, i1, i2 }
                } else {
                    Instruction::Fusedmac { rs1, rs2, i1, i2 }
                };
                self.push(inst, None, line);
            }
            "dlp" => {
                expect(ops, 2, name)?;
                let rs1 = reg(ops[0])?;
                let t = target(ops[1])?;
                self.push(Instruction::Dlp { rs1, offset: 0 }, Some(Fixup::Target(t)), line);
            }
            "dlpi" => {
                expect(ops, 2, name)?;
                let count = ranged("count", int(ops[0])?, 0, DLPI_COUNT_MAX.into())? as u16;
                let t = target(ops[1])?;
                self.push(Instruction::Dlpi { count, offset: 0 }, Some(Fixup::Target(t)), line);
            }
            "zlp" => {
                expect(ops, 1, name)?;
                let t = target(ops[0])?;
                self.push(Instruction::Zlp { offset: 0 }, Some(Fixup::Target(t)), line);
            }
            "set.zc" | "set.zs" | "set.ze" => {
                expect(ops, 1, name)?;
                let rs1 = reg(ops[0])?;
                let inst = match name {
                    "set.zc" => Instruction::SetZc { rs1 },
                    "set.zs" => Instruction::SetZs { rs1 },
                    _ => Instruction::SetZe { rs1 },
                };
                self.push(inst, None, line);
            }
            "li" | "la" => {
                expect(ops, 2, name)?;
                let rd = reg(ops[0])?;
                match parse_int(ops[1]) {
                    Some(v) => {
                        let v = ranged("imm", v, i32::MIN.into(), u32::MAX.into())?;
                        if (-2048..=2047).contains(&v) {
                            self.push(Instruction::addi(rd, Reg::ZERO, v as i32), None, line);
                        } else {
                            let (hi, lo) = split_hi_lo(v as u32);
                            self.push(Instruction::Lui { rd, imm: hi }, None, line);
                            self.push(Instruction::addi(rd, rd, lo), None, line);
                        }
                    }
                    None if is_ident(ops[1]) => {
                        let sym = ops[1].to_string();
                        self.push(Instruction::Lui { rd, imm: 0 }, Some(Fixup::Hi(sym.clone())), line);
                        self.push(Instruction::addi(rd, rd, 0), Some(Fixup::Lo(sym)), line);
                    }
                    None => return Err(syntax(format!("expected a value or symbol, found `{}`", ops[1]))),
                }
            }
            "mv" => {
                expect(ops, 2, name)?;
                self.push(Instruction::mv(reg(ops[0])?, reg(ops[1])?), None, line);
            }
            "j" => {
                expect(ops, 1, name)?;
                let t = target(ops[0])?;
                self.push(Instruction::Jal { rd: Reg::ZERO, offset: 0 }, Some(Fixup::Target(t)), line);
            }
            _ => return Err(AsmErrorKind::UnknownMnemonic(name.to_string())),
        }
        Ok(())
    }

    fn symbol(&self, name: &str) -> Result<u32> {
        if let Some(&i) = self.labels.get(name) {
            Ok(4 * i as u32)
        } else if let Some(&off) = self.data_labels.get(name) {
            Ok(DATA_BASE.wrapping_add(off))
        } else {
            Err(AsmErrorKind::UndefinedLabel(name.to_string()))
        }
    }

    fn resolve(&self, index: usize, p: &Pending) -> Result<Instruction> {
        let inst = match &p.fixup {
            None => p.inst,
            Some(Fixup::Target(Target::Offset(off))) => p.inst.with_target_offset(*off),
            Some(Fixup::Target(Target::Label(l))) => {
                let &t = self.labels.get(l).ok_or_else(|| AsmErrorKind::UndefinedLabel(l.clone()))?;
                let off = (t as i64 - index as i64) * 4;
                let off = ranged("offset", off, i32::MIN.into(), i32::MAX.into())? as i32;
                p.inst.with_target_offset(off)
            }
            Some(Fixup::Hi(sym)) => match p.inst {
                Instruction::Lui { rd, .. } => Instruction::Lui { rd, imm: split_hi_lo(self.symbol(sym)?).0 },
                other => other,
            },
            Some(Fixup::Lo(sym)) => match p.inst {
                Instruction::AluImm { op, rd, rs1, .. } => {
                    Instruction::AluImm { op, rd, rs1, imm: split_hi_lo(self.symbol(sym)?).1 }
                }
                other => other,
            },
        };
        if !matches!(inst, Instruction::Illegal(_)) {
            encode(&inst).map_err(encode_error)?;
        }
        Ok(inst)
    }

    fn finish(self) -> std::result::Result<Program, AsmError> {
        let mut text = Vec::with_capacity(self.pending.len());
        let mut lines = Vec::with_capacity(self.pending.len());
        for (i, p) in self.pending.iter().enumerate() {
            let inst = self.resolve(i, p).map_err(|kind| AsmError { line: p.line, kind })?;
            text.push(inst);
            lines.push(p.line);
        }
        let mut data = self.data.clone();
        for f in &self.data_fixups {
            let v = self.symbol(&f.symbol).map_err(|kind| AsmError { line: f.line, kind })?;
            data[f.offset..f.offset + 4].copy_from_slice(&v.to_le_bytes());
        }
        let entry = match &self.entry {
            None => 0,
            Some((name, line)) => *self
                .labels
                .get(name)
                .ok_or_else(|| AsmError { line: *line, kind: AsmErrorKind::UndefinedLabel(name.clone()) })?,
        };
        Ok(Program {
            text,
            labels: self.labels,
            data_labels: self.data_labels,
            data,
            data_base: DATA_BASE,
            entry,
            live_out: self.live_out,
            lines,
        })
    }
}
