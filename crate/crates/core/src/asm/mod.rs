//! Text assembly, disassembly and the flat binary image.

mod disasm;
mod image;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::isa::{Instruction, Mnemonic, Variant};

pub use disasm::disassemble;
pub use image::{from_image, to_image, ImageError, IMAGE_MAGIC, IMAGE_VERSION};
pub use parse::assemble;

/// Base address of the data segment.
pub const DATA_BASE: u32 = 0x1000_0000;

/// An assembled program: code, symbols and the initial data image.
///
/// Code lives in its own address space starting at 0 (instruction `i` sits at
/// byte address `4 * i`); data starts at [`Program::data_base`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub text: Vec<Instruction>,
    /// Code label to instruction index.
    pub labels: BTreeMap<String, usize>,
    /// Data label to byte offset from `data_base`.
    pub data_labels: BTreeMap<String, u32>,
    pub data: Vec<u8>,
    pub data_base: u32,
    /// Index of the first instruction executed.
    pub entry: usize,
    /// Registers observable after the program halts. `None` means all of them.
    pub live_out: Option<u32>,
    /// Source line of each instruction (0 when unknown).
    pub lines: Vec<usize>,
}

impl Default for Program {
    fn default() -> Self {
        Program {
            text: Vec::new(),
            labels: BTreeMap::new(),
            data_labels: BTreeMap::new(),
            data: Vec::new(),
            data_base: DATA_BASE,
            entry: 0,
            live_out: None,
            lines: Vec::new(),
        }
    }
}

impl Program {
    /// Builds a label-free program from bare instructions.
    pub fn from_text(text: Vec<Instruction>) -> Program {
        let lines = vec![0; text.len()];
        Program { text, lines, ..Program::default() }
    }

    /// Program memory footprint in bytes.
    pub fn pm_bytes(&self) -> usize {
        4 * self.text.len()
    }

    /// Data memory footprint in bytes (the initial data image).
    pub fn dm_bytes(&self) -> usize {
        self.data.len()
    }

    /// Absolute address of a data label.
    pub fn data_addr(&self, label: &str) -> Option<u32> {
        self.data_labels.get(label).map(|off| self.data_base + off)
    }

    /// First instruction not supported by `variant`, if any.
    pub fn first_unsupported(&self, variant: Variant) -> Option<(usize, Mnemonic)> {
        self.text.iter().enumerate().map(|(i, inst)| (i, inst.mnemonic())).find(|(_, m)| !variant.supports(*m))
    }

    /// Lowest variant able to run the program.
    pub fn required_variant(&self) -> Variant {
        self.text.iter().map(|i| i.mnemonic().min_variant()).max().unwrap_or(Variant::V0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    UnknownMnemonic(String),
    VariantGate { mnemonic: Mnemonic, required: Variant },
    OutOfRange { field: String, value: i64, min: i64, max: i64 },
    Misaligned { field: String, value: i64 },
    UndefinedLabel(String),
    DuplicateLabel(String),
    BadRegister(String),
    Syntax(String),
}

impl fmt::Display for AsmErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmErrorKind::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            AsmErrorKind::VariantGate { mnemonic, required } => {
                write!(f, "`{mnemonic}` requires variant ≥ {required}")
            }
            AsmErrorKind::OutOfRange { field, value, min, max } => {
                write!(f, "{field} = {value} is out of range [{min}, {max}]")
            }
            AsmErrorKind::Misaligned { field, value } => {
                write!(f, "{field} = {value} is not a multiple of 4")
            }
            AsmErrorKind::UndefinedLabel(l) => write!(f, "undefined label `{l}`"),
            AsmErrorKind::DuplicateLabel(l) => write!(f, "duplicate label `{l}`"),
            AsmErrorKind::BadRegister(r) => write!(f, "bad register `{r}`"),
            AsmErrorKind::Syntax(msg) => f.write_str(msg),
        }
    }
}
