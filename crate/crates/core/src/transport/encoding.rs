//! Sample value codec.
//!
//! Fields are serialized in type-descriptor order: fixed-width
//! little-endian scalars, bool as one byte, strings as u16 length + UTF-8.
//! No padding. Round-trips are exact, including float NaN bit patterns.

use crate::dcps::types::{FieldKind, FieldValue, TypeDescriptor};
use crate::error::WireError;

pub fn encode_values(values: &[FieldValue], out: &mut Vec<u8>) {
    for value in values {
        match value {
            FieldValue::U32(v) => out.extend_from_slice(&v.to_le_bytes()),
            FieldValue::U64(v) => out.extend_from_slice(&v.to_le_bytes()),
            FieldValue::I64(v) => out.extend_from_slice(&v.to_le_bytes()),
            FieldValue::F32(v) => out.extend_from_slice(&v.to_bits().to_le_bytes()),
            FieldValue::F64(v) => out.extend_from_slice(&v.to_bits().to_le_bytes()),
            FieldValue::Bool(v) => out.push(*v as u8),
            FieldValue::Str(v) => {
                let bytes = v.as_bytes();
                debug_assert!(bytes.len() <= u16::MAX as usize);
                out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
                out.extend_from_slice(bytes);
            }
        }
    }
}

pub fn encoded_len(values: &[FieldValue]) -> usize {
    values
        .iter()
        .map(|v| match v {
            FieldValue::U32(_) | FieldValue::F32(_) => 4,
            FieldValue::U64(_) | FieldValue::I64(_) | FieldValue::F64(_) => 8,
            FieldValue::Bool(_) => 1,
            FieldValue::Str(s) => 2 + s.len(),
        })
        .sum()
}

/// Decodes a payload produced by [`encode_values`] for `descriptor`.
/// Rejects trailing bytes, truncation, invalid bools and invalid UTF-8.
pub fn decode_values(
    descriptor: &TypeDescriptor,
    bytes: &[u8],
) -> Result<Vec<FieldValue>, WireError> {
    let mut cursor = Cursor::new(bytes);
    let mut values = Vec::with_capacity(descriptor.fields.len());
    for field in &descriptor.fields {
        let value = match field.kind {
            FieldKind::U32 => FieldValue::U32(u32::from_le_bytes(cursor.take_array()?)),
            FieldKind::U64 => FieldValue::U64(u64::from_le_bytes(cursor.take_array()?)),
            FieldKind::I64 => FieldValue::I64(i64::from_le_bytes(cursor.take_array()?)),
            FieldKind::F32 => {
                FieldValue::F32(f32::from_bits(u32::from_le_bytes(cursor.take_array()?)))
            }
            FieldKind::F64 => {
                FieldValue::F64(f64::from_bits(u64::from_le_bytes(cursor.take_array()?)))
            }
            FieldKind::Bool => match cursor.take_byte()? {
                0 => FieldValue::Bool(false),
                1 => FieldValue::Bool(true),
                b => return Err(WireError::malformed(format!("invalid bool byte {b}"))),
            },
            FieldKind::String => {
                let len = u16::from_le_bytes(cursor.take_array()?) as usize;
                let raw = cursor.take_slice(len)?;
                let text = std::str::from_utf8(raw)
                    .map_err(|_| WireError::malformed("invalid UTF-8 in string field"))?;
                FieldValue::Str(text.to_string())
            }
        };
        values.push(value);
    }
    if !cursor.is_empty() {
        return Err(WireError::malformed("trailing bytes after sample payload"));
    }
    Ok(values)
}

/// Byte cursor shared by the sample and wire codecs.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take_byte(&mut self) -> Result<u8, WireError> {
        let slice = self.take_slice(1)?;
        Ok(slice[0])
    }

    pub fn take_slice(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < len {
            return Err(WireError::malformed(format!(
                "truncated: wanted {len} bytes, {} left",
                self.remaining()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let slice = self.take_slice(N)?;
        let mut out = [0u8; N];
        out.copy_from_slice(slice);
        Ok(out)
    }
}
