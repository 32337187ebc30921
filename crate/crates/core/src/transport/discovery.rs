//! Discovery bookkeeping: remote participant state and announcement
//! reconciliation.
//!
//! Announcements carry a participant's full entity set. Receivers diff the
//! new set against the previous one, so a record disappearing from an
//! announcement is an entity deletion. Re-receiving an identical
//! announcement produces no events.

use crate::dcps::guid::{EntityId, Guid, GuidPrefix};
use crate::transport::link::LinkAddr;
use crate::transport::wire::EntityRecord;
use std::collections::BTreeMap;

#[derive(Debug)]
pub struct RemoteParticipant {
    pub guid: Guid,
    pub lease_ms: u32,
    pub last_heard_ms: u64,
    pub addr: LinkAddr,
    pub entities: BTreeMap<EntityId, EntityRecord>,
}

impl RemoteParticipant {
    pub fn prefix(&self) -> GuidPrefix {
        self.guid.prefix
    }

    /// Deadline after which this participant is declared not-alive.
    pub fn liveliness_deadline_ms(&self) -> u64 {
        self.last_heard_ms + 3 * self.lease_ms as u64
    }
}

/// Difference between the previously known entity set and a fresh
/// announcement.
#[derive(Debug, Default)]
pub struct ReconcileDiff {
    pub added: Vec<EntityRecord>,
    /// (old, new) pairs whose content changed.
    pub changed: Vec<(EntityRecord, EntityRecord)>,
    pub removed: Vec<EntityRecord>,
}

impl ReconcileDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.changed.is_empty() && self.removed.is_empty()
    }
}

pub fn reconcile(
    previous: &BTreeMap<EntityId, EntityRecord>,
    announced: &[EntityRecord],
) -> ReconcileDiff {
    let mut diff = ReconcileDiff::default();
    let mut seen: BTreeMap<EntityId, &EntityRecord> = BTreeMap::new();
    for record in announced {
        seen.insert(record.entity, record);
        match previous.get(&record.entity) {
            None => diff.added.push(record.clone()),
            Some(old) if old != record => {
                diff.changed.push((old.clone(), record.clone()));
            }
            Some(_) => {}
        }
    }
    for (entity, old) in previous {
        if !seen.contains_key(entity) {
            diff.removed.push(old.clone());
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::wire::{EndpointKind, QosSummary};

    fn record(entity: u32, topic: &str, depth: u32) -> EntityRecord {
        EntityRecord {
            entity: EntityId(entity),
            kind: EndpointKind::Writer,
            topic_name: topic.to_string(),
            type_hash: 7,
            qos: QosSummary {
                reliable: false,
                history_keep_all: false,
                history_depth: depth,
                coherent_access: false,
                access_scope: 0,
                liveliness_lease_ms: 1000,
                max_samples_per_instance: 256,
            },
            group_data: Vec::new(),
            filter: None,
        }
    }

    #[test]
    fn diff_detects_add_change_remove() {
        let mut previous = BTreeMap::new();
        previous.insert(EntityId(1), record(1, "a", 1));
        previous.insert(EntityId(2), record(2, "b", 1));
        let announced = vec![record(2, "b", 5), record(3, "c", 1)];
        let diff = reconcile(&previous, &announced);
        assert_eq!(diff.added.len(), 1);
        assert_eq!(diff.added[0].entity, EntityId(3));
        assert_eq!(diff.changed.len(), 1);
        assert_eq!(diff.changed[0].1.qos.history_depth, 5);
        assert_eq!(diff.removed.len(), 1);
        assert_eq!(diff.removed[0].entity, EntityId(1));
    }

    #[test]
    fn identical_announcement_is_a_noop() {
        let mut previous = BTreeMap::new();
        previous.insert(EntityId(1), record(1, "a", 1));
        let diff = reconcile(&previous, &[record(1, "a", 1)]);
        assert!(diff.is_empty());
    }
}
