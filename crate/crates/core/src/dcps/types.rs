//! Runtime-typed topic data: type descriptors, field values and instance
//! keys.
//!
//! Topic types are plain ordered field lists so endpoints negotiate types
//! by structural equality rather than by compiled-in structs. Two endpoints
//! match only when topic name and descriptor are identical.

use crate::error::DcpsError;
use serde::{Deserialize, Serialize};

/// Scalar kinds a topic field can have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    U32,
    U64,
    I64,
    F32,
    F64,
    Bool,
    String,
}

impl FieldKind {
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            FieldKind::U32 | FieldKind::U64 | FieldKind::I64 | FieldKind::F32 | FieldKind::F64
        )
    }
}

/// One runtime field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    U32(u32),
    U64(u64),
    I64(i64),
    F32(f32),
    F64(f64),
    Bool(bool),
    Str(String),
}

impl FieldValue {
    pub fn kind(&self) -> FieldKind {
        match self {
            FieldValue::U32(_) => FieldKind::U32,
            FieldValue::U64(_) => FieldKind::U64,
            FieldValue::I64(_) => FieldKind::I64,
            FieldValue::F32(_) => FieldKind::F32,
            FieldValue::F64(_) => FieldKind::F64,
            FieldValue::Bool(_) => FieldKind::Bool,
            FieldValue::Str(_) => FieldKind::String,
        }
    }

    /// Bit-exact equality; unlike `PartialEq` this treats NaN == NaN when
    /// the payload bits agree.
    pub fn bits_eq(&self, other: &FieldValue) -> bool {
        match (self, other) {
            (FieldValue::F32(a), FieldValue::F32(b)) => a.to_bits() == b.to_bits(),
            (FieldValue::F64(a), FieldValue::F64(b)) => a.to_bits() == b.to_bits(),
            _ => self == other,
        }
    }
}

/// A named field in a type descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
}

/// Ordered field list plus the subset forming the instance key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDescriptor {
    pub fields: Vec<FieldDef>,
    pub key_fields: Vec<String>,
}

impl TypeDescriptor {
    /// Builds a descriptor, checking field-name uniqueness and that the key
    /// fields are a non-empty subset of the declared fields.
    pub fn new(
        fields: Vec<(&str, FieldKind)>,
        key_fields: Vec<&str>,
    ) -> Result<TypeDescriptor, DcpsError> {
        let fields: Vec<FieldDef> = fields
            .into_iter()
            .map(|(name, kind)| FieldDef {
                name: name.to_string(),
                kind,
            })
            .collect();
        let descriptor = TypeDescriptor {
            fields,
            key_fields: key_fields.into_iter().map(|k| k.to_string()).collect(),
        };
        descriptor.validate()?;
        Ok(descriptor)
    }

    pub fn validate(&self) -> Result<(), DcpsError> {
        for (i, field) in self.fields.iter().enumerate() {
            if self.fields[..i].iter().any(|f| f.name == field.name) {
                return Err(DcpsError::precondition(format!(
                    "duplicate field name `{}`",
                    field.name
                )));
            }
        }
        if self.key_fields.is_empty() {
            return Err(DcpsError::precondition("key_fields must be non-empty"));
        }
        for key in &self.key_fields {
            if !self.fields.iter().any(|f| &f.name == key) {
                return Err(DcpsError::precondition(format!(
                    "key field `{key}` is not a declared field"
                )));
            }
        }
        Ok(())
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field_kind(&self, name: &str) -> Option<FieldKind> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.kind)
    }

    /// Checks that `values` conforms to this descriptor positionally.
    pub fn check_conformance(&self, values: &[FieldValue]) -> Result<(), DcpsError> {
        if values.len() != self.fields.len() {
            return Err(DcpsError::TypeMismatch(format!(
                "expected {} fields, got {}",
                self.fields.len(),
                values.len()
            )));
        }
        for (field, value) in self.fields.iter().zip(values) {
            if field.kind != value.kind() {
                return Err(DcpsError::TypeMismatch(format!(
                    "field `{}` expects {:?}, got {:?}",
                    field.name,
                    field.kind,
                    value.kind()
                )));
            }
        }
        Ok(())
    }

    /// The key-field values of a conforming sample, in key declaration order.
    pub fn key_values(&self, values: &[FieldValue]) -> Vec<FieldValue> {
        self.key_fields
            .iter()
            .map(|k| values[self.field_index(k).expect("validated key field")].clone())
            .collect()
    }

    /// Structural hash used by discovery to compare types across the wire.
    pub fn type_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for field in &self.fields {
            bytes.extend_from_slice(field.name.as_bytes());
            bytes.push(0);
            bytes.push(field.kind as u8);
        }
        bytes.push(0xff);
        for key in &self.key_fields {
            bytes.extend_from_slice(key.as_bytes());
            bytes.push(0);
        }
        fnv1a64(&bytes)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor() -> TypeDescriptor {
        TypeDescriptor::new(
            vec![
                ("entity_id", FieldKind::U64),
                ("region", FieldKind::U32),
                ("x", FieldKind::F64),
            ],
            vec!["entity_id"],
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_fields() {
        let result = TypeDescriptor::new(
            vec![("a", FieldKind::U32), ("a", FieldKind::U32)],
            vec!["a"],
        );
        assert!(result.is_err());
    }

    #[test]
    fn rejects_empty_or_unknown_keys() {
        assert!(TypeDescriptor::new(vec![("a", FieldKind::U32)], vec![]).is_err());
        assert!(TypeDescriptor::new(vec![("a", FieldKind::U32)], vec!["b"]).is_err());
    }

    #[test]
    fn conformance_checks_arity_and_kinds() {
        let d = descriptor();
        assert!(d
            .check_conformance(&[
                FieldValue::U64(1),
                FieldValue::U32(2),
                FieldValue::F64(0.5)
            ])
            .is_ok());
        assert!(d
            .check_conformance(&[FieldValue::U64(1), FieldValue::U32(2)])
            .is_err());
        assert!(d
            .check_conformance(&[
                FieldValue::U64(1),
                FieldValue::I64(2),
                FieldValue::F64(0.5)
            ])
            .is_err());
    }

    #[test]
    fn type_hash_distinguishes_field_order_and_keys() {
        let a = descriptor();
        let b = TypeDescriptor::new(
            vec![
                ("region", FieldKind::U32),
                ("entity_id", FieldKind::U64),
                ("x", FieldKind::F64),
            ],
            vec!["entity_id"],
        )
        .unwrap();
        let c = TypeDescriptor {
            key_fields: vec!["region".to_string()],
            ..a.clone()
        };
        assert_ne!(a.type_hash(), b.type_hash());
        assert_ne!(a.type_hash(), c.type_hash());
        assert_eq!(a.type_hash(), descriptor().type_hash());
    }

    #[test]
    fn fnv_matches_reference_vectors() {
        // Reference values for the canonical 64-bit FNV-1a test strings.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
