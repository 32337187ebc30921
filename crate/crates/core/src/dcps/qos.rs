//! Per-endpoint QoS policies and the offered/requested compatibility matrix.

use crate::error::DcpsError;
use crate::transport::wire::QosSummary;
use serde::{Deserialize, Serialize};

pub const MAX_GROUP_DATA: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    BestEffort,
    Reliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum History {
    KeepLast(u32),
    KeepAll,
}

/// Presentation access scope, ordered INSTANCE < TOPIC < GROUP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationScope {
    Instance,
    Topic,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub coherent_access: bool,
    pub access_scope: PresentationScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosProfile {
    pub reliability: Reliability,
    pub history: History,
    pub presentation: Presentation,
    #[serde(default)]
    pub group_data: Vec<u8>,
    pub liveliness_lease_ms: u64,
    pub resource_limit_max_samples_per_instance: u32,
}

impl Default for QosProfile {
    /// Cheapest-behavior defaults, mirroring game position updates.
    fn default() -> Self {
        QosProfile {
            reliability: Reliability::BestEffort,
            history: History::KeepLast(1),
            presentation: Presentation {
                coherent_access: false,
                access_scope: PresentationScope::Instance,
            },
            group_data: Vec::new(),
            liveliness_lease_ms: 1000,
            resource_limit_max_samples_per_instance: 256,
        }
    }
}

impl QosProfile {
    pub fn reliable() -> Self {
        QosProfile {
            reliability: Reliability::Reliable,
            ..QosProfile::default()
        }
    }

    pub fn reliable_keep_all() -> Self {
        QosProfile {
            reliability: Reliability::Reliable,
            history: History::KeepAll,
            ..QosProfile::default()
        }
    }

    pub fn with_history(mut self, history: History) -> Self {
        self.history = history;
        self
    }

    pub fn with_presentation(mut self, coherent_access: bool, scope: PresentationScope) -> Self {
        self.presentation = Presentation {
            coherent_access,
            access_scope: scope,
        };
        self
    }

    pub fn with_resource_limit(mut self, max_samples_per_instance: u32) -> Self {
        self.resource_limit_max_samples_per_instance = max_samples_per_instance;
        self
    }

    /// Internal consistency checks applied at endpoint creation.
    pub fn validate(&self, heartbeat_period_ms: u64) -> Result<(), DcpsError> {
        if let History::KeepLast(depth) = self.history {
            if depth < 1 {
                return Err(DcpsError::precondition("KEEP_LAST depth must be >= 1"));
            }
        }
        if self.group_data.len() > MAX_GROUP_DATA {
            return Err(DcpsError::precondition(format!(
                "group_data exceeds {MAX_GROUP_DATA} bytes"
            )));
        }
        if self.liveliness_lease_ms < 3 * heartbeat_period_ms {
            return Err(DcpsError::precondition(format!(
                "liveliness lease must be >= 3x heartbeat period ({} ms)",
                3 * heartbeat_period_ms
            )));
        }
        if self.resource_limit_max_samples_per_instance == 0 {
            return Err(DcpsError::precondition(
                "resource limit must be a positive integer",
            ));
        }
        Ok(())
    }

    pub fn summary(&self) -> QosSummary {
        QosSummary {
            reliable: self.reliability == Reliability::Reliable,
            history_keep_all: self.history == History::KeepAll,
            history_depth: match self.history {
                History::KeepLast(d) => d,
                History::KeepAll => 0,
            },
            coherent_access: self.presentation.coherent_access,
            access_scope: self.presentation.access_scope as u8,
            liveliness_lease_ms: self.liveliness_lease_ms.min(u32::MAX as u64) as u32,
            max_samples_per_instance: self.resource_limit_max_samples_per_instance,
        }
    }
}

/// Offered/requested compatibility: an offered (writer) summary satisfies a
/// requested (reader) summary when
/// - offered RELIABLE satisfies both requests, offered BEST_EFFORT only
///   BEST_EFFORT;
/// - offered access scope >= requested scope;
/// - offered coherent_access is true whenever requested.
///
/// Computed identically from both ends, so matching is symmetric.
pub fn qos_compatible(offered: &QosSummary, requested: &QosSummary) -> bool {
    if !offered.reliable && requested.reliable {
        return false;
    }
    if offered.access_scope < requested.access_scope {
        return false;
    }
    if requested.coherent_access && !offered.coherent_access {
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(reliable: bool, coherent: bool, scope: u8) -> QosSummary {
        QosSummary {
            reliable,
            history_keep_all: false,
            history_depth: 1,
            coherent_access: coherent,
            access_scope: scope,
            liveliness_lease_ms: 1000,
            max_samples_per_instance: 256,
        }
    }

    /// Independent statement of the matrix, enumerated exhaustively.
    #[test]
    fn compatibility_matrix_matches_oracle() {
        for offered_rel in [false, true] {
            for requested_rel in [false, true] {
                for offered_coh in [false, true] {
                    for requested_coh in [false, true] {
                        for offered_scope in 0..3u8 {
                            for requested_scope in 0..3u8 {
                                let offered = summary(offered_rel, offered_coh, offered_scope);
                                let requested =
                                    summary(requested_rel, requested_coh, requested_scope);
                                let expected = (offered_rel || !requested_rel)
                                    && offered_scope >= requested_scope
                                    && (offered_coh || !requested_coh);
                                assert_eq!(
                                    qos_compatible(&offered, &requested),
                                    expected,
                                    "offered={offered:?} requested={requested:?}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reliable_writer_satisfies_best_effort_reader() {
        assert!(qos_compatible(
            &summary(true, false, 0),
            &summary(false, false, 0)
        ));
    }

    #[test]
    fn best_effort_writer_rejected_by_reliable_reader() {
        assert!(!qos_compatible(
            &summary(false, false, 0),
            &summary(true, false, 0)
        ));
    }

    #[test]
    fn validation_bounds() {
        let mut qos = QosProfile::default();
        qos.history = History::KeepLast(0);
        assert!(qos.validate(50).is_err());

        let mut qos = QosProfile::default();
        qos.group_data = vec![0; MAX_GROUP_DATA + 1];
        assert!(qos.validate(50).is_err());

        let mut qos = QosProfile::default();
        qos.liveliness_lease_ms = 100;
        assert!(qos.validate(50).is_err());
        assert!(qos.validate(30).is_ok());

        let mut qos = QosProfile::default();
        qos.resource_limit_max_samples_per_instance = 0;
        assert!(qos.validate(50).is_err());
    }
}
