//! Domain participants, topics, endpoints, QoS enforcement and history
//! caches — the data-centric half of the middleware.

pub mod filter;
pub mod guid;
pub mod history;
pub mod participant;
pub mod qos;
pub mod runtime;
pub mod sample;
pub mod status;
pub mod topic;
pub mod types;
