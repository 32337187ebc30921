//! Data-centric publish-subscribe middleware for multiplayer game state.
//!
//! The crate is organized in four layers:
//!
//! - [`dcps`] — domain participants, topics, publishers/subscribers,
//!   writers/readers, QoS enforcement, history caches, content filters and
//!   status/listener dispatch.
//! - [`transport`] — the bit-exact wire protocol, discovery, best-effort and
//!   NACK-based reliable dissemination, plus a deterministic network
//!   simulator and a plain UDP backend behind the same link interface.
//! - [`game`] — entity state replication over the middleware: a microcell
//!   grid world, area-of-interest subscriptions and a last-writer-wins
//!   world view with divergence measurement.
//! - [`services`] — the loosely coupled account tier: a mini-SQL account
//!   store, a declarative process engine with parallel invokes, and
//!   HTTP/JSON endpoints issuing session tokens.

pub mod dcps;
pub mod error;
pub mod game;
pub mod services;
pub mod transport;

pub use dcps::guid::{EntityId, Guid, GuidPrefix};
pub use dcps::participant::{
    DataReader, DataWriter, DomainParticipant, Publisher, Subscriber,
};
pub use dcps::qos::{History, Presentation, PresentationScope, QosProfile, Reliability};
pub use dcps::sample::{Sample, SampleInfo};
pub use dcps::types::{FieldKind, FieldValue, TypeDescriptor};
pub use error::DcpsError;
