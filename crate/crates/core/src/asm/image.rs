//! Flat little-endian program image.
//!
//! ```text
//! 0   magic "MRVL"
//! 4   version      u16
//! 6   text bytes   u32
//! 10  data bytes   u32
//! 14  entry index  u16
//! 16  text words, then data bytes
//! ```

use thiserror::Error;

use super::Program;
use crate::isa::{decode, encode, EncodeError, Instruction};

pub const IMAGE_MAGIC: &[u8; 4] = b"MRVL";
pub const IMAGE_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image is {0} bytes, shorter than the 16-byte header")]
    Truncated(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported image version {0}")]
    Version(u16),
    #[error("text length {0} is not a multiple of 4")]
    TextAlignment(u32),
    #[error("header declares {declared} payload bytes, image carries {actual}")]
    Length { declared: u64, actual: u64 },
    #[error("entry index {entry} is outside {len} instructions")]
    Entry { entry: u16, len: usize },
    #[error("instruction {index}: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error("program too large for the image header")]
    TooLarge,
}

/// Serialises a program to the flat image format. Labels, source lines and
/// the live-out annotation are not part of the image.
pub fn to_image(prog: &Program) -> Result<Vec<u8>, ImageError> {
    let text_len = u32::try_from(prog.text.len() * 4).map_err(|_| ImageError::TooLarge)?;
    let data_len = u32::try_from(prog.data.len()).map_err(|_| ImageError::TooLarge)?;
    let entry = u16::try_from(prog.entry).map_err(|_| ImageError::TooLarge)?;

    let mut out = Vec::with_capacity(HEADER_LEN + text_len as usize + data_len as usize);
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
    out.extend_from_slice(&text_len.to_le_bytes());
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(&entry.to_le_bytes());
    for (index, inst) in prog.text.iter().enumerate() {
        let word = match *inst {
            Instruction::Illegal(w) => w,
            _ => encode(inst).map_err(|source| ImageError::Encode { index, source })?,
        };
        out.extend_from_slice(&word.to_le_bytes());
    }
    out.extend_from_slice(&prog.data);
    Ok(out)
}

/// Parses a flat image. Words that do not decode become illegal instructions,
/// which trap only if executed.
pub fn from_image(bytes: &[u8]) -> Result<Program, ImageError> {
    if bytes.len() < HEADER_LEN {
        return Err(ImageError::Truncated(bytes.len()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);

    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if &magic != IMAGE_MAGIC {
        return Err(ImageError::BadMagic(magic));
    }
    let version = u16_at(4);
    if version != IMAGE_VERSION {
        return Err(ImageError::Version(version));
    }
    let text_len = u32_at(6);
    let data_len = u32_at(10);
    let entry = u16_at(14);
    if text_len % 4 != 0 {
        return Err(ImageError::TextAlignment(text_len));
    }
    let declared = u64::from(text_len) + u64::from(data_len);
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if declared != actual {
        return Err(ImageError::Length { declared, actual });
    }
    let body = &bytes[HEADER_LEN..];
    let (text_bytes, data) = body.split_at(text_len as usize);
    let text: Vec<Instruction> =
        text_bytes.chunks_exact(4).map(|c| decode(u32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
    let len = text.len();
    if usize::from(entry) >= len.max(1) {
        return Err(ImageError::Entry { entry, len });
    }
    let mut prog = Program::from_text(text);
    prog.data = data.to_vec();
    prog.entry = usize::from(entry);
    Ok(prog)
}
