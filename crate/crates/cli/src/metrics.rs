//! Metrics report emitted by scenario runs.
//!
//! The report is fully deterministic for a given config and seed: fixed
//! field order, ordered collections, and no wall-clock values (runtime is
//! reported separately on stderr). Running the same scenario twice must
//! produce byte-identical JSON.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubscriberMetrics {
    pub player: u32,
    /// Samples delivered into the reader cache.
    pub delivered: u64,
    /// Encoded payload bytes delivered.
    pub bytes: u64,
    pub staleness_mean_ms: f64,
    pub staleness_max_ms: u64,
    /// Entities held in the world view at the end of the run.
    pub view_entities: u64,
    pub sample_lost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAccounting {
    /// Matched reliable (writer, reader) pairs compared.
    pub pairs: u64,
    /// Pairs whose relevant-sent stream equals the delivered stream.
    pub exact: u64,
    /// Total relevant samples sent across pairs (first transmissions).
    pub sent: u64,
    /// Total samples delivered across pairs.
    pub delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDivergence {
    pub group: u32,
    pub members: Vec<u32>,
    pub pairs_compared: u32,
    pub max_count: u64,
    pub max_pos_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LivelinessDetection {
    pub silenced_player: u32,
    pub silenced_at_ms: u64,
    pub observer: u32,
    pub detected_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub preset: String,
    pub players: u32,
    pub duration_s: f64,
    pub seed: u64,
    pub qos: String,
    pub drained_at_ms: u64,
    pub subscribers: Vec<SubscriberMetrics>,
    pub reliable_pairs: PairAccounting,
    pub divergence: Vec<GroupDivergence>,
    pub retransmissions: u64,
    pub staleness_max_ms: u64,
    pub staleness_mean_ms: f64,
    pub sim: SimCounters,
    pub liveliness: Vec<LivelinessDetection>,
    pub assertions: Vec<AssertionResult>,
}

impl MetricsReport {
    pub fn all_assertions_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed_assertions(&self) -> Vec<&str> {
        self.assertions
            .iter()
            .filter(|a| !a.passed)
            .map(|a| a.name.as_str())
            .collect()
    }

    /// Canonical JSON (stable key order by construction).
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
