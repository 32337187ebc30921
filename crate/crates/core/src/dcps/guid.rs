//! Globally unique identifiers for participants and endpoints.
//!
//! A [`Guid`] is 16 bytes: a 12-byte participant prefix plus a 4-byte
//! entity id. All entities created by one participant share its prefix.

use std::fmt;

/// 12-byte participant prefix. Unique per process run.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GuidPrefix(pub [u8; 12]);

impl GuidPrefix {
    pub fn from_rng(rng: &mut impl rand::Rng) -> Self {
        let mut bytes = [0u8; 12];
        rng.fill(&mut bytes);
        GuidPrefix(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 12] {
        &self.0
    }
}

impl fmt::Debug for GuidPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

/// 4-byte entity id, unique within a participant. Id 0 is the participant
/// itself.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EntityId(pub u32);

impl EntityId {
    pub const PARTICIPANT: EntityId = EntityId(0);
}

/// Full 16-byte entity identity: participant prefix + entity id.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Guid {
    pub prefix: GuidPrefix,
    pub entity: EntityId,
}

impl Guid {
    pub fn new(prefix: GuidPrefix, entity: EntityId) -> Self {
        Guid { prefix, entity }
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..12].copy_from_slice(&self.prefix.0);
        out[12..].copy_from_slice(&self.entity.0.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; 16]) -> Self {
        let mut prefix = [0u8; 12];
        prefix.copy_from_slice(&bytes[..12]);
        let entity = u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]);
        Guid {
            prefix: GuidPrefix(prefix),
            entity: EntityId(entity),
        }
    }
}

impl fmt::Debug for Guid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}.{:08x}", self.prefix, self.entity.0)
    }
}
