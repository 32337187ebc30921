//! Wire protocol, discovery payloads, reliability state machines, and the
//! link backends (deterministic simulator and UDP).

pub mod discovery;
pub mod encoding;
pub mod link;
pub mod netsim;
pub mod reliable;
pub mod udp;
pub mod wire;

/// Hard cap on an encoded wire message. Larger samples are rejected at
/// write() rather than fragmented.
pub const MAX_MESSAGE_SIZE: usize = 64 * 1024;

/// Default writer heartbeat period in milliseconds.
pub const DEFAULT_HEARTBEAT_PERIOD_MS: u64 = 50;
