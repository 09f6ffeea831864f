use std::io::{self, Read, Write};

use thiserror::Error;

use super::{MemoryImage, RootBlock, StructuralError, Word, MAX_WORDS, WORD_BYTES, WORD_U64S};

pub const MAGIC: [u8; 8] = *b"PCUTIMG\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not an image file (bad magic)")]
    BadMagic,
    #[error("unsupported image version {0}")]
    Version(u32),
    #[error("image file is truncated")]
    Truncated,
    #[error("image declares {0} words")]
    TooLarge(u64),
    #[error("trailing bytes after the last word")]
    TrailingData,
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ImageError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::UnexpectedEof => ImageError::Truncated,
            _ => ImageError::Io(e),
        }
    }
}

/// Writes magic, version, ruleset size, root block, word count and words,
/// all little-endian.
pub fn store_image(img: &MemoryImage, mut out: impl Write) -> io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&img.rule_count().to_le_bytes())?;
    write_word(&mut out, &img.root().to_word())?;
    out.write_all(&(img.len() as u64).to_le_bytes())?;
    for w in img.words() {
        write_word(&mut out, w)?;
    }
    out.flush()
}

/// Reads and validates an image written by [`store_image`].
pub fn load_image(mut input: impl Read) -> Result<MemoryImage, ImageError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ImageError::BadMagic);
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(ImageError::Version(version));
    }
    let rule_count = read_u32(&mut input)?;
    let root = RootBlock::from_word(&read_word(&mut input)?).map_err(StructuralError::Root)?;
    let mut n = [0u8; 8];
    input.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n);
    if n > MAX_WORDS as u64 {
        return Err(ImageError::TooLarge(n));
    }
    let words = (0..n).map(|_| read_word(&mut input)).collect::<io::Result<Vec<_>>>()?;
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(ImageError::TrailingData);
    }
    Ok(MemoryImage::from_parts(root, rule_count, words)?)
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_word(out: &mut impl Write, w: &Word) -> io::Result<()> {
    for limb in w {
        out.write_all(&limb.to_le_bytes())?;
    }
    Ok(())
}

fn read_word(input: &mut impl Read) -> io::Result<Word> {
    let mut b = [0u8; WORD_BYTES];
    input.read_exact(&mut b)?;
    let mut w = [0u64; WORD_U64S];
    for (limb, chunk) in w.iter_mut().zip(b.chunks_exact(8)) {
        *limb = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    Ok(w)
}
