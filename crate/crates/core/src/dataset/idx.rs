//! IDX container parsing and serialisation.
//!
//! The digit files ship in the classic IDX layout: big-endian 32-bit header
//! fields, then raw payload bytes. Image files (IDX3) carry magic
//! `0x00000803` followed by the image count and the two 28-pixel dimensions;
//! label files (IDX1) carry magic `0x00000801` and the label count.
//! Writing then re-parsing is lossless byte for byte.

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdxError {
    #[error("bad magic at byte {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("truncated file at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("unsupported image dimensions {rows}x{cols} at byte {offset} (expected 28x28)")]
    BadDimensions { offset: usize, rows: u32, cols: u32 },

    #[error("label {value} out of range 0..=9 at index {index}")]
    LabelOutOfRange { index: usize, value: u8 },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

/// Unscaled 8-bit images straight out of an IDX3 file, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    /// Flat pixel payload, `count * IMAGE_PIXELS` bytes.
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    let end = offset.checked_add(4).ok_or(IdxError::Truncated {
        offset,
        needed: 4,
        available: 0,
    })?;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            offset,
            needed: end - bytes.len(),
            available: bytes.len().saturating_sub(offset),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

pub fn parse_images(bytes: &[u8]) -> Result<RawImages, IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            offset: 0,
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)?;
    let cols = read_u32_be(bytes, 12)?;
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(IdxError::BadDimensions {
            offset: 8,
            rows,
            cols,
        });
    }
    let needed = count * IMAGE_PIXELS;
    let payload = &bytes[16.min(bytes.len())..];
    if payload.len() < needed {
        return Err(IdxError::Truncated {
            offset: 16 + payload.len(),
            needed: needed - payload.len(),
            available: payload.len(),
        });
    }
    Ok(RawImages {
        count,
        pixels: payload[..needed].to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            offset: 0,
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let payload = &bytes[8.min(bytes.len())..];
    if payload.len() < count {
        return Err(IdxError::Truncated {
            offset: 8 + payload.len(),
            needed: count - payload.len(),
            available: payload.len(),
        });
    }
    let labels = payload[..count].to_vec();
    for (index, &value) in labels.iter().enumerate() {
        if value > 9 {
            return Err(IdxError::LabelOutOfRange { index, value });
        }
    }
    Ok(labels)
}

pub fn write_images(raw: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + raw.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(raw.count as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&raw.pixels);
    out
}

pub fn write_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
