//! Keyed samples and their delivery metadata.

use crate::dcps::guid::Guid;
use crate::dcps::types::{fnv1a64, FieldValue, TypeDescriptor};
use crate::transport::encoding;

/// Instance identity: a 64-bit FNV-1a hash over the encoded key fields,
/// plus the raw key values. The hash is an index hint only — collisions are
/// resolved by comparing the encoded key bytes, so colliding keys are
/// treated as distinct instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceKey {
    pub hash: u64,
    pub key_values: Vec<FieldValue>,
    key_bytes: Vec<u8>,
}

impl InstanceKey {
    pub fn from_values(descriptor: &TypeDescriptor, values: &[FieldValue]) -> InstanceKey {
        let key_values = descriptor.key_values(values);
        let mut key_bytes = Vec::new();
        encoding::encode_values(&key_values, &mut key_bytes);
        InstanceKey {
            hash: fnv1a64(&key_bytes),
            key_values,
            key_bytes,
        }
    }

    /// Total-order cache key: hash first, raw encoded key as tie-break.
    pub fn cache_key(&self) -> (u64, Vec<u8>) {
        (self.hash, self.key_bytes.clone())
    }
}

/// One written data value.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub instance: InstanceKey,
    /// Field values encoded per the topic's type descriptor.
    pub payload: Vec<u8>,
    pub source_timestamp_us: u64,
}

/// Delivery metadata attached to every sample in a reader cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleInfo {
    pub writer_guid: Guid,
    /// Starts at 1 and increases strictly per writer.
    pub sequence_number: u64,
    /// Writer-side clock at write time, microseconds.
    pub source_timestamp_us: u64,
    pub coherent_set_id: Option<u32>,
    pub coherent_end: bool,
    /// False for marker samples carrying no data payload.
    pub valid: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcps::types::FieldKind;

    #[test]
    fn same_key_values_same_instance() {
        let d = TypeDescriptor::new(
            vec![("id", FieldKind::U64), ("x", FieldKind::F64)],
            vec!["id"],
        )
        .unwrap();
        let a = InstanceKey::from_values(&d, &[FieldValue::U64(7), FieldValue::F64(1.0)]);
        let b = InstanceKey::from_values(&d, &[FieldValue::U64(7), FieldValue::F64(2.0)]);
        let c = InstanceKey::from_values(&d, &[FieldValue::U64(8), FieldValue::F64(1.0)]);
        assert_eq!(a.cache_key(), b.cache_key());
        assert_ne!(a.cache_key(), c.cache_key());
    }
}
