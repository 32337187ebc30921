//! Bit-exact wire format.
//!
//! A message is an 18-byte header (magic `MDDS`, version, flags, sender
//! guid prefix) followed by submessages. Each submessage is one byte of id,
//! a big-endian u16 payload length, then the payload. All other multi-byte
//! integers are little-endian. Unknown submessage ids are skipped using
//! their length field but preserved for re-encoding.

use crate::dcps::guid::{EntityId, Guid, GuidPrefix};
use crate::error::WireError;
use crate::transport::encoding::Cursor;
use crate::transport::MAX_MESSAGE_SIZE;

pub const MAGIC: [u8; 4] = [0x4d, 0x44, 0x44, 0x53]; // "MDDS"
pub const VERSION: u8 = 1;
/// Header flag bit set by the network simulator on delivered messages.
pub const FLAG_SIM_INJECTED: u8 = 0x01;

pub const SUBMSG_DATA: u8 = 1;
pub const SUBMSG_HEARTBEAT: u8 = 2;
pub const SUBMSG_ACKNACK: u8 = 3;
pub const SUBMSG_GAP: u8 = 4;
pub const SUBMSG_DISCOVERY: u8 = 6;

const DATA_FLAG_COHERENT: u8 = 0x01;
const DATA_FLAG_COHERENT_END: u8 = 0x02;

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub flags: u8,
    pub sender: GuidPrefix,
    pub submessages: Vec<Submessage>,
}

impl WireMessage {
    pub fn new(sender: GuidPrefix) -> Self {
        WireMessage {
            flags: 0,
            sender,
            submessages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Submessage {
    Data(DataSubmessage),
    Heartbeat(HeartbeatSubmessage),
    AckNack(AckNackSubmessage),
    Gap(GapSubmessage),
    Discovery(DiscoveryPayload),
    /// Submessage with an unknown id, carried opaquely.
    Unknown { id: u8, payload: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSubmessage {
    pub writer_entity: EntityId,
    /// 0 = addressed to every matched reader at the destination.
    pub reader_entity: EntityId,
    pub sequence: u64,
    pub instance_hash: u64,
    pub coherent: Option<CoherentInfo>,
    pub source_timestamp_us: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherentInfo {
    pub set_id: u32,
    /// Last sample this writer contributes to the set.
    pub end: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeartbeatSubmessage {
    pub writer_entity: EntityId,
    /// Oldest sequence number still retransmittable.
    pub first_seq: u64,
    /// Newest sequence number disseminated. `last < first` means none.
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckNackSubmessage {
    pub reader_entity: EntityId,
    pub writer_entity: EntityId,
    /// Every sequence number <= this value is resolved at the reader.
    pub ack_up_to: u64,
    /// First missing sequence number the bitmap is relative to.
    pub nack_base: u64,
    /// Bit i of byte j requests retransmission of `nack_base + j*8 + i`.
    pub nack_bitmap: Vec<u8>,
}

impl AckNackSubmessage {
    pub fn nacked_sequences(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for (byte_idx, byte) in self.nack_bitmap.iter().enumerate() {
            for bit in 0..8 {
                if byte & (1 << bit) != 0 {
                    out.push(self.nack_base + (byte_idx as u64) * 8 + bit as u64);
                }
            }
        }
        out
    }

    pub fn from_sequences(
        reader_entity: EntityId,
        writer_entity: EntityId,
        ack_up_to: u64,
        missing: &[u64],
    ) -> Self {
        let mut nack_base = 0;
        let mut bitmap = Vec::new();
        if let Some(&first) = missing.first() {
            nack_base = first;
            // The one-byte count field caps the bitmap at 255 bytes; anything
            // beyond is requested on a later round.
            for &seq in missing {
                let offset = (seq - first) as usize;
                let byte_idx = offset / 8;
                if byte_idx >= 255 {
                    break;
                }
                if bitmap.len() <= byte_idx {
                    bitmap.resize(byte_idx + 1, 0);
                }
                bitmap[byte_idx] |= 1 << (offset % 8);
            }
        }
        AckNackSubmessage {
            reader_entity,
            writer_entity,
            ack_up_to,
            nack_base,
            nack_bitmap: bitmap,
        }
    }
}

/// Writer notice that a sequence range was intentionally skipped for a
/// reader (writer-side content filtering).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSubmessage {
    pub writer_entity: EntityId,
    pub reader_entity: EntityId,
    pub first_seq: u64,
    pub last_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointKind {
    Writer,
    Reader,
}

/// Compact QoS carried in discovery records; enough for the compatibility
/// matrix plus observability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QosSummary {
    pub reliable: bool,
    pub history_keep_all: bool,
    pub history_depth: u32,
    pub coherent_access: bool,
    /// 0 = INSTANCE, 1 = TOPIC, 2 = GROUP.
    pub access_scope: u8,
    pub liveliness_lease_ms: u32,
    pub max_samples_per_instance: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub entity: EntityId,
    pub kind: EndpointKind,
    pub topic_name: String,
    pub type_hash: u64,
    pub qos: QosSummary,
    pub group_data: Vec<u8>,
    /// Content filter text for readers on a filtered topic.
    pub filter: Option<String>,
}

/// Full participant announcement: presence, lease, and the complete entity
/// set. Receivers reconcile against the previous set, so absence of a
/// previously announced record means the entity was deleted.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryPayload {
    pub participant: Guid,
    pub lease_ms: u32,
    pub entities: Vec<EntityRecord>,
}

pub fn encode_message(message: &WireMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(message.flags);
    out.extend_from_slice(message.sender.as_bytes());
    for sub in &message.submessages {
        let (id, payload) = encode_submessage(sub);
        if payload.len() > u16::MAX as usize {
            return Err(WireError::TooLarge(payload.len()));
        }
        out.push(id);
        out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&payload);
    }
    if out.len() > MAX_MESSAGE_SIZE {
        return Err(WireError::TooLarge(out.len()));
    }
    Ok(out)
}

fn encode_submessage(sub: &Submessage) -> (u8, Vec<u8>) {
    let mut p = Vec::new();
    match sub {
        Submessage::Data(d) => {
            p.extend_from_slice(&d.writer_entity.0.to_le_bytes());
            p.extend_from_slice(&d.reader_entity.0.to_le_bytes());
            p.extend_from_slice(&d.sequence.to_le_bytes());
            p.extend_from_slice(&d.instance_hash.to_le_bytes());
            let mut flags = 0u8;
            if let Some(info) = &d.coherent {
                flags |= DATA_FLAG_COHERENT;
                if info.end {
                    flags |= DATA_FLAG_COHERENT_END;
                }
            }
            p.push(flags);
            if let Some(info) = &d.coherent {
                p.extend_from_slice(&info.set_id.to_le_bytes());
            }
            p.extend_from_slice(&d.source_timestamp_us.to_le_bytes());
            p.extend_from_slice(&(d.payload.len() as u16).to_le_bytes());
            p.extend_from_slice(&d.payload);
            (SUBMSG_DATA, p)
        }
        Submessage::Heartbeat(h) => {
            p.extend_from_slice(&h.writer_entity.0.to_le_bytes());
            p.extend_from_slice(&h.first_seq.to_le_bytes());
            p.extend_from_slice(&h.last_seq.to_le_bytes());
            (SUBMSG_HEARTBEAT, p)
        }
        Submessage::AckNack(a) => {
            p.extend_from_slice(&a.reader_entity.0.to_le_bytes());
            p.extend_from_slice(&a.writer_entity.0.to_le_bytes());
            p.extend_from_slice(&a.ack_up_to.to_le_bytes());
            p.extend_from_slice(&a.nack_base.to_le_bytes());
            p.push(a.nack_bitmap.len() as u8);
            p.extend_from_slice(&a.nack_bitmap);
            (SUBMSG_ACKNACK, p)
        }
        Submessage::Gap(g) => {
            p.extend_from_slice(&g.writer_entity.0.to_le_bytes());
            p.extend_from_slice(&g.reader_entity.0.to_le_bytes());
            p.extend_from_slice(&g.first_seq.to_le_bytes());
            p.extend_from_slice(&g.last_seq.to_le_bytes());
            (SUBMSG_GAP, p)
        }
        Submessage::Discovery(d) => {
            p.extend_from_slice(&d.participant.to_bytes());
            p.extend_from_slice(&d.lease_ms.to_le_bytes());
            p.extend_from_slice(&(d.entities.len() as u16).to_le_bytes());
            for record in &d.entities {
                p.extend_from_slice(&record.entity.0.to_le_bytes());
                p.push(match record.kind {
                    EndpointKind::Writer => 1,
                    EndpointKind::Reader => 2,
                });
                encode_str(&mut p, &record.topic_name);
                p.extend_from_slice(&record.type_hash.to_le_bytes());
                let q = &record.qos;
                p.push(q.reliable as u8);
                p.push(q.history_keep_all as u8);
                p.extend_from_slice(&q.history_depth.to_le_bytes());
                p.push(q.coherent_access as u8);
                p.push(q.access_scope);
                p.extend_from_slice(&q.liveliness_lease_ms.to_le_bytes());
                p.extend_from_slice(&q.max_samples_per_instance.to_le_bytes());
                p.extend_from_slice(&(record.group_data.len() as u16).to_le_bytes());
                p.extend_from_slice(&record.group_data);
                encode_str(&mut p, record.filter.as_deref().unwrap_or(""));
            }
            (SUBMSG_DISCOVERY, p)
        }
        Submessage::Unknown { id, payload } => (*id, payload.clone()),
    }
}

fn encode_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Encoded size of one submessage including its 3-byte id/length prefix.
pub fn submessage_wire_len(sub: &Submessage) -> usize {
    let (_, payload) = encode_submessage(sub);
    3 + payload.len()
}

/// Encoded message header size.
pub const HEADER_LEN: usize = 18;

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let mut cursor = Cursor::new(bytes);
    let magic = cursor.take_array::<4>()?;
    if magic != MAGIC {
        return Err(WireError::malformed(format!(
            "bad magic {:02x?}",
            magic
        )));
    }
    let version = cursor.take_byte()?;
    if version != VERSION {
        return Err(WireError::malformed(format!("bad version {version}")));
    }
    let flags = cursor.take_byte()?;
    let prefix = GuidPrefix(cursor.take_array::<12>()?);
    let mut submessages = Vec::new();
    while !cursor.is_empty() {
        let id = cursor.take_byte()?;
        let len = u16::from_be_bytes(cursor.take_array()?) as usize;
        let payload = cursor.take_slice(len)?;
        submessages.push(decode_submessage(id, payload)?);
    }
    Ok(WireMessage {
        flags,
        sender: prefix,
        submessages,
    })
}

fn decode_submessage(id: u8, payload: &[u8]) -> Result<Submessage, WireError> {
    let mut c = Cursor::new(payload);
    let sub = match id {
        SUBMSG_DATA => {
            let writer_entity = EntityId(u32::from_le_bytes(c.take_array()?));
            let reader_entity = EntityId(u32::from_le_bytes(c.take_array()?));
            let sequence = u64::from_le_bytes(c.take_array()?);
            let instance_hash = u64::from_le_bytes(c.take_array()?);
            let flags = c.take_byte()?;
            if flags & !(DATA_FLAG_COHERENT | DATA_FLAG_COHERENT_END) != 0 {
                return Err(WireError::malformed(format!("bad DATA flags {flags:#x}")));
            }
            let coherent = if flags & DATA_FLAG_COHERENT != 0 {
                Some(CoherentInfo {
                    set_id: u32::from_le_bytes(c.take_array()?),
                    end: flags & DATA_FLAG_COHERENT_END != 0,
                })
            } else if flags & DATA_FLAG_COHERENT_END != 0 {
                return Err(WireError::malformed("coherent_end without coherent flag"));
            } else {
                None
            };
            let source_timestamp_us = u64::from_le_bytes(c.take_array()?);
            let sample_len = u16::from_le_bytes(c.take_array()?) as usize;
            let sample = c.take_slice(sample_len)?.to_vec();
            Submessage::Data(DataSubmessage {
                writer_entity,
                reader_entity,
                sequence,
                instance_hash,
                coherent,
                source_timestamp_us,
                payload: sample,
            })
        }
        SUBMSG_HEARTBEAT => Submessage::Heartbeat(HeartbeatSubmessage {
            writer_entity: EntityId(u32::from_le_bytes(c.take_array()?)),
            first_seq: u64::from_le_bytes(c.take_array()?),
            last_seq: u64::from_le_bytes(c.take_array()?),
        }),
        SUBMSG_ACKNACK => {
            let reader_entity = EntityId(u32::from_le_bytes(c.take_array()?));
            let writer_entity = EntityId(u32::from_le_bytes(c.take_array()?));
            let ack_up_to = u64::from_le_bytes(c.take_array()?);
            let nack_base = u64::from_le_bytes(c.take_array()?);
            let count = c.take_byte()? as usize;
            let bitmap = c.take_slice(count)?.to_vec();
            Submessage::AckNack(AckNackSubmessage {
                reader_entity,
                writer_entity,
                ack_up_to,
                nack_base,
                nack_bitmap: bitmap,
            })
        }
        SUBMSG_GAP => Submessage::Gap(GapSubmessage {
            writer_entity: EntityId(u32::from_le_bytes(c.take_array()?)),
            reader_entity: EntityId(u32::from_le_bytes(c.take_array()?)),
            first_seq: u64::from_le_bytes(c.take_array()?),
            last_seq: u64::from_le_bytes(c.take_array()?),
        }),
        SUBMSG_DISCOVERY => {
            let participant = Guid::from_bytes(&c.take_array::<16>()?);
            let lease_ms = u32::from_le_bytes(c.take_array()?);
            let count = u16::from_le_bytes(c.take_array()?) as usize;
            let mut entities = Vec::with_capacity(count);
            for _ in 0..count {
                let entity = EntityId(u32::from_le_bytes(c.take_array()?));
                let kind = match c.take_byte()? {
                    1 => EndpointKind::Writer,
                    2 => EndpointKind::Reader,
                    k => {
                        return Err(WireError::malformed(format!("bad endpoint kind {k}")))
                    }
                };
                let topic_name = decode_str(&mut c)?;
                let type_hash = u64::from_le_bytes(c.take_array()?);
                let qos = QosSummary {
                    reliable: decode_bool(&mut c)?,
                    history_keep_all: decode_bool(&mut c)?,
                    history_depth: u32::from_le_bytes(c.take_array()?),
                    coherent_access: decode_bool(&mut c)?,
                    access_scope: {
                        let s = c.take_byte()?;
                        if s > 2 {
                            return Err(WireError::malformed(format!("bad access scope {s}")));
                        }
                        s
                    },
                    liveliness_lease_ms: u32::from_le_bytes(c.take_array()?),
                    max_samples_per_instance: u32::from_le_bytes(c.take_array()?),
                };
                let group_len = u16::from_le_bytes(c.take_array()?) as usize;
                let group_data = c.take_slice(group_len)?.to_vec();
                let filter_text = decode_str(&mut c)?;
                entities.push(EntityRecord {
                    entity,
                    kind,
                    topic_name,
                    type_hash,
                    qos,
                    group_data,
                    filter: if filter_text.is_empty() {
                        None
                    } else {
                        Some(filter_text)
                    },
                });
            }
            Submessage::Discovery(DiscoveryPayload {
                participant,
                lease_ms,
                entities,
            })
        }
        other => Submessage::Unknown {
            id: other,
            payload: payload.to_vec(),
        },
    };
    if !c.is_empty() && !matches!(sub, Submessage::Unknown { .. }) {
        return Err(WireError::malformed("trailing bytes in submessage"));
    }
    Ok(sub)
}

fn decode_str(c: &mut Cursor<'_>) -> Result<String, WireError> {
    let len = u16::from_le_bytes(c.take_array()?) as usize;
    let raw = c.take_slice(len)?;
    std::str::from_utf8(raw)
        .map(|s| s.to_string())
        .map_err(|_| WireError::malformed("invalid UTF-8 in wire string"))
}

fn decode_bool(c: &mut Cursor<'_>) -> Result<bool, WireError> {
    match c.take_byte()? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(WireError::malformed(format!("invalid bool byte {b}"))),
    }
}
