//! Reliability state machines.
//!
//! Writer side: per matched reader, tracks the last sequence number made
//! relevant to that reader (sent as DATA or covered by a GAP after
//! writer-side filtering), the cumulative acknowledgement, and per-pair
//! delivery accounting. Heartbeats flow only while a reliable reader still
//! has unacknowledged relevant data, so idle pairs are silent.
//!
//! Reader side: per matched writer, maintains the contiguous resolved
//! prefix. Sequence numbers resolve by data delivery, by GAP (writer-side
//! filtered), or as unavailable (evicted from writer history, counted as
//! sample_lost). Reliable readers deliver strictly in sequence order per
//! writer; best-effort readers deliver any forward progress and count
//! skips as lost.
//!
//! Coherent sets: samples tagged with a set id are parked until the set is
//! provably complete. Each participating writer marks its last sample of
//! the set; on the first end-marker the reader snapshots the advertised
//! frontier of every matched same-prefix writer (every message carrying
//! coherent data also carries heartbeats for the participating writers, so
//! the snapshot always covers the set). The set is released once the
//! resolved prefix of every such writer reaches the snapshot — at that
//! point all members have either arrived or been resolved missing, and a
//! set with missing members is dropped whole rather than exposed partially.

use crate::dcps::filter::FilterExpression;
use crate::dcps::guid::{Guid, GuidPrefix};
use crate::dcps::sample::InstanceKey;
use crate::dcps::types::{fnv1a64, FieldValue};
use crate::transport::wire::CoherentInfo;
use std::collections::{BTreeMap, VecDeque};

/// Order-sensitive checksum over a sequence-number stream; used by the
/// harness to compare writer-relevant and reader-delivered streams per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamChecksum {
    pub count: u64,
    pub digest: u64,
}

impl StreamChecksum {
    pub fn push(&mut self, seq: u64) {
        let mut bytes = [0u8; 16];
        bytes[..8].copy_from_slice(&self.digest.to_le_bytes());
        bytes[8..].copy_from_slice(&seq.to_le_bytes());
        self.digest = fnv1a64(&bytes);
        self.count += 1;
    }
}

/// Writer-side state for one matched remote reader.
#[derive(Debug)]
pub struct RemoteReader {
    pub guid: Guid,
    pub reliable: bool,
    /// Reader's content filter compiled against the writer's topic type.
    pub filter: Option<FilterExpression>,
    /// Last sequence number made relevant (DATA or GAP) to this reader.
    pub relevant_last: u64,
    /// Cumulative acknowledgement received from this reader.
    pub acked: u64,
    pub relevant: StreamChecksum,
}

impl RemoteReader {
    pub fn new(guid: Guid, reliable: bool, filter: Option<FilterExpression>, start: u64) -> Self {
        RemoteReader {
            guid,
            reliable,
            filter,
            relevant_last: start,
            acked: start,
            relevant: StreamChecksum::default(),
        }
    }

    pub fn fully_acknowledged(&self) -> bool {
        !self.reliable || self.acked >= self.relevant_last
    }
}

/// One decoded inbound sample before cache insertion.
#[derive(Debug, Clone)]
pub struct IncomingData {
    pub sequence: u64,
    pub values: Vec<FieldValue>,
    pub instance: InstanceKey,
    pub coherent: Option<CoherentInfo>,
    pub source_timestamp_us: u64,
    pub payload_len: usize,
}

/// A sample cleared for reader-cache insertion.
#[derive(Debug)]
pub struct ReadySample {
    pub writer: Guid,
    pub data: IncomingData,
}

#[derive(Debug)]
enum Resolved {
    Data(IncomingData),
    Gapped,
    Unavailable,
}

#[derive(Debug)]
struct RemoteWriter {
    guid: Guid,
    /// Contiguous resolved prefix: everything <= this is delivered, gapped,
    /// unavailable, or (best-effort) skipped.
    resolved: u64,
    /// Out-of-order buffer keyed by sequence (reliable only).
    pending: BTreeMap<u64, Resolved>,
    advertised_first: u64,
    advertised_last: u64,
    /// First heartbeat catch-up performed (late joiners skip history
    /// silently instead of counting it lost).
    caught_up: bool,
    /// Plain samples queued behind an unreleased coherent set to preserve
    /// per-writer order.
    held: VecDeque<IncomingData>,
    blocking_set: Option<(GuidPrefix, u32)>,
    pub delivered: StreamChecksum,
}

impl RemoteWriter {
    fn new(guid: Guid) -> Self {
        RemoteWriter {
            guid,
            resolved: 0,
            pending: BTreeMap::new(),
            advertised_first: 0,
            advertised_last: 0,
            caught_up: false,
            held: VecDeque::new(),
            blocking_set: None,
            delivered: StreamChecksum::default(),
        }
    }
}

#[derive(Debug)]
struct PendingSet {
    /// Members in arrival order.
    members: Vec<(Guid, IncomingData)>,
    /// Writers that delivered their end-marked member.
    ended_writers: Vec<Guid>,
    end_seen: bool,
    snapshot_due: bool,
    /// Advertised frontier per same-prefix writer, taken when the first
    /// end-marker's message finished processing.
    frontier: Option<BTreeMap<Guid, u64>>,
    missing_detected: bool,
    admitted_at: u64,
}

impl PendingSet {
    fn first_seq_of(&self, writer: Guid) -> Option<u64> {
        self.members
            .iter()
            .filter(|(w, _)| *w == writer)
            .map(|(_, d)| d.sequence)
            .min()
    }

    fn end_seq_of(&self, writer: Guid) -> Option<u64> {
        self.members
            .iter()
            .filter(|(w, d)| *w == writer && d.coherent.map(|c| c.end).unwrap_or(false))
            .map(|(_, d)| d.sequence)
            .next()
    }
}

/// Bound on parked coherent sets per reader; the oldest is dropped (and
/// counted lost) beyond this.
const MAX_PENDING_SETS: usize = 256;

/// Reader-side protocol engine for one data reader.
pub struct ReaderEngine {
    reliable: bool,
    filter: Option<FilterExpression>,
    writers: BTreeMap<Guid, RemoteWriter>,
    pending_sets: BTreeMap<(GuidPrefix, u32), PendingSet>,
    admission_counter: u64,
    ready: Vec<ReadySample>,
    /// (writer entity of the remote, ack submessage fields) replies due.
    acknacks: Vec<AckNackOut>,
    lost: u64,
}

/// ACKNACK reply emitted while processing a heartbeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckNackOut {
    pub writer: Guid,
    pub ack_up_to: u64,
    pub missing: Vec<u64>,
}

impl ReaderEngine {
    pub fn new(reliable: bool, filter: Option<FilterExpression>) -> Self {
        ReaderEngine {
            reliable,
            filter,
            writers: BTreeMap::new(),
            pending_sets: BTreeMap::new(),
            admission_counter: 0,
            ready: Vec::new(),
            acknacks: Vec::new(),
            lost: 0,
        }
    }

    pub fn add_writer(&mut self, guid: Guid) {
        self.writers.entry(guid).or_insert_with(|| RemoteWriter::new(guid));
    }

    pub fn remove_writer(&mut self, guid: Guid) {
        self.writers.remove(&guid);
        // Sets that were waiting on this writer can never complete.
        let dead: Vec<(GuidPrefix, u32)> = self
            .pending_sets
            .iter()
            .filter(|((prefix, _), set)| {
                *prefix == guid.prefix
                    && (set.members.iter().any(|(w, _)| *w == guid)
                        || set
                            .frontier
                            .as_ref()
                            .map(|f| f.contains_key(&guid))
                            .unwrap_or(false))
            })
            .map(|(key, _)| *key)
            .collect();
        for key in dead {
            self.drop_set(key);
        }
        self.release_eligible(guid.prefix);
    }

    pub fn matched_writers(&self) -> Vec<Guid> {
        self.writers.keys().copied().collect()
    }

    pub fn is_matched(&self, guid: Guid) -> bool {
        self.writers.contains_key(&guid)
    }

    pub fn delivered_stats(&self, guid: Guid) -> Option<StreamChecksum> {
        self.writers.get(&guid).map(|w| w.delivered)
    }

    /// Highest contiguous resolved sequence for a writer (introspection).
    pub fn resolved_prefix(&self, guid: Guid) -> Option<u64> {
        self.writers.get(&guid).map(|w| w.resolved)
    }

    pub fn on_data(&mut self, writer: Guid, data: IncomingData) {
        let Some(state) = self.writers.get_mut(&writer) else {
            return;
        };
        if self.reliable {
            if data.sequence <= state.resolved || state.pending.contains_key(&data.sequence) {
                return; // duplicate
            }
            state.pending.insert(data.sequence, Resolved::Data(data));
            Self::advance(
                state,
                &mut self.pending_sets,
                &mut self.admission_counter,
                &mut self.ready,
                &mut self.lost,
                &self.filter,
            );
        } else {
            // Best-effort: forward progress only, skips count as lost.
            if data.sequence <= state.resolved {
                return;
            }
            let skipped = data.sequence - state.resolved - 1;
            if state.caught_up {
                self.lost += skipped;
            }
            let skipped_before = skipped > 0 && state.caught_up;
            state.resolved = data.sequence;
            state.caught_up = true;
            Self::stage(
                state,
                data,
                skipped_before,
                &mut self.pending_sets,
                &mut self.admission_counter,
                &mut self.ready,
                &mut self.lost,
                &self.filter,
            );
        }
    }

    pub fn on_gap(&mut self, writer: Guid, first: u64, last: u64) {
        let Some(state) = self.writers.get_mut(&writer) else {
            return;
        };
        if !self.reliable {
            // Best-effort readers are never sent gaps; tolerate anyway.
            if last > state.resolved {
                state.resolved = last;
            }
            return;
        }
        for seq in first.max(state.resolved + 1)..=last {
            state.pending.entry(seq).or_insert(Resolved::Gapped);
        }
        Self::advance(
            state,
            &mut self.pending_sets,
            &mut self.admission_counter,
            &mut self.ready,
            &mut self.lost,
            &self.filter,
        );
    }

    pub fn on_heartbeat(&mut self, writer: Guid, first: u64, last: u64) {
        let Some(state) = self.writers.get_mut(&writer) else {
            return;
        };
        state.advertised_first = state.advertised_first.max(first);
        state.advertised_last = state.advertised_last.max(last);
        if !self.reliable {
            // Heartbeats reach best-effort readers piggybacked on data
            // bundles. Anything advertised but not yet delivered was lost
            // (there is no retransmission), which also lets parked coherent
            // sets resolve.
            if state.caught_up && state.advertised_last > state.resolved {
                self.lost += state.advertised_last - state.resolved;
                for set in self.pending_sets.values_mut() {
                    if let Some(first_member) = set.first_seq_of(state.guid) {
                        let end = set.end_seq_of(state.guid).unwrap_or(u64::MAX);
                        let lost_range = state.resolved + 1..=state.advertised_last;
                        if *lost_range.start() <= end && *lost_range.end() >= first_member {
                            set.missing_detected = true;
                        }
                    }
                }
            }
            state.caught_up = true;
            state.resolved = state.resolved.max(state.advertised_last);
            return;
        }
        if !state.caught_up {
            // Late join: history below `first` was never ours to receive.
            state.caught_up = true;
            if state.resolved == 0 && first > 1 {
                state.resolved = first - 1;
            }
        } else if first > state.resolved + 1 {
            // The writer evicted samples we still needed.
            for seq in state.resolved + 1..first {
                state.pending.entry(seq).or_insert(Resolved::Unavailable);
            }
        }
        Self::advance(
            state,
            &mut self.pending_sets,
            &mut self.admission_counter,
            &mut self.ready,
            &mut self.lost,
            &self.filter,
        );
        let mut missing = Vec::new();
        for seq in state.resolved + 1..=state.advertised_last {
            if !state.pending.contains_key(&seq) {
                missing.push(seq);
            }
        }
        // Immediate reply: cumulative ack plus the missing bitmap.
        self.acknacks.push(AckNackOut {
            writer,
            ack_up_to: state.resolved,
            missing,
        });
    }

    /// Resolves in-sequence entries and stages deliverable samples.
    fn advance(
        state: &mut RemoteWriter,
        pending_sets: &mut BTreeMap<(GuidPrefix, u32), PendingSet>,
        admission_counter: &mut u64,
        ready: &mut Vec<ReadySample>,
        lost: &mut u64,
        filter: &Option<FilterExpression>,
    ) {
        while let Some(entry) = state.pending.remove(&(state.resolved + 1)) {
            state.resolved += 1;
            state.caught_up = true;
            match entry {
                Resolved::Data(data) => Self::stage(
                    state,
                    data,
                    false,
                    pending_sets,
                    admission_counter,
                    ready,
                    lost,
                    filter,
                ),
                Resolved::Gapped => {}
                Resolved::Unavailable => {
                    *lost += 1;
                    // An eviction inside a parked set's span means that set
                    // can never be shown complete.
                    for set in pending_sets.values_mut() {
                        if let Some(first) = set.first_seq_of(state.guid) {
                            let end = set.end_seq_of(state.guid).unwrap_or(u64::MAX);
                            if state.resolved >= first && state.resolved <= end {
                                set.missing_detected = true;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Routes one resolved data sample: coherent members park in their set,
    /// plain samples deliver (behind any set currently blocking the writer).
    #[allow(clippy::too_many_arguments)]
    fn stage(
        state: &mut RemoteWriter,
        data: IncomingData,
        skipped_before: bool,
        pending_sets: &mut BTreeMap<(GuidPrefix, u32), PendingSet>,
        admission_counter: &mut u64,
        ready: &mut Vec<ReadySample>,
        lost: &mut u64,
        filter: &Option<FilterExpression>,
    ) {
        if let Some(info) = data.coherent {
            let key = (state.guid.prefix, info.set_id);
            let set = pending_sets.entry(key).or_insert_with(|| {
                *admission_counter += 1;
                PendingSet {
                    members: Vec::new(),
                    ended_writers: Vec::new(),
                    end_seen: false,
                    snapshot_due: false,
                    frontier: None,
                    missing_detected: false,
                    admitted_at: *admission_counter,
                }
            });
            if skipped_before {
                set.missing_detected = true;
            }
            if info.end {
                set.end_seen = true;
                if set.frontier.is_none() {
                    set.snapshot_due = true;
                }
                if !set.ended_writers.contains(&state.guid) {
                    set.ended_writers.push(state.guid);
                }
            }
            set.members.push((state.guid, data));
            state.blocking_set = Some(key);
            return;
        }
        if state.blocking_set.is_some() {
            state.held.push_back(data);
            return;
        }
        Self::deliver(state, data, ready, lost, filter);
    }

    fn deliver(
        state: &mut RemoteWriter,
        data: IncomingData,
        ready: &mut Vec<ReadySample>,
        _lost: &mut u64,
        filter: &Option<FilterExpression>,
    ) {
        if let Some(expr) = filter {
            if !expr.eval(&data.values) {
                return;
            }
        }
        state.delivered.push(data.sequence);
        ready.push(ReadySample {
            writer: state.guid,
            data,
        });
    }

    /// Called after a full wire message from `prefix` has been processed:
    /// snapshots frontiers for freshly ended sets and releases or drops any
    /// set whose outcome is now decided.
    pub fn finish_message(&mut self, prefix: GuidPrefix) {
        let frontiers: BTreeMap<Guid, u64> = self
            .writers
            .iter()
            .filter(|(guid, _)| guid.prefix == prefix)
            .map(|(guid, w)| (*guid, w.advertised_last))
            .collect();
        for ((set_prefix, _), set) in self.pending_sets.iter_mut() {
            if *set_prefix == prefix && set.snapshot_due {
                set.frontier = Some(frontiers.clone());
                set.snapshot_due = false;
            }
        }
        self.release_eligible(prefix);
        self.enforce_pending_cap();
    }

    fn release_eligible(&mut self, prefix: GuidPrefix) {
        loop {
            let mut decided: Option<((GuidPrefix, u32), bool)> = None;
            for (key, set) in self.pending_sets.iter() {
                if key.0 != prefix || !set.end_seen {
                    continue;
                }
                let Some(frontier) = set.frontier.as_ref() else {
                    continue;
                };
                let all_caught_up = frontier.iter().all(|(guid, &target)| {
                    self.writers
                        .get(guid)
                        .map(|w| w.resolved >= target)
                        .unwrap_or(true)
                });
                if !all_caught_up {
                    continue;
                }
                // Every participating writer must have shown its end marker.
                let participants: Vec<Guid> = {
                    let mut p: Vec<Guid> = set.members.iter().map(|(w, _)| *w).collect();
                    p.sort();
                    p.dedup();
                    p
                };
                let all_ended = participants
                    .iter()
                    .all(|w| set.ended_writers.contains(w));
                decided = Some((*key, !set.missing_detected && all_ended));
                break;
            }
            let Some((key, complete)) = decided else {
                return;
            };
            if complete {
                self.release_set(key);
            } else {
                self.drop_set(key);
            }
        }
    }

    fn release_set(&mut self, key: (GuidPrefix, u32)) {
        let Some(set) = self.pending_sets.remove(&key) else {
            return;
        };
        for (writer, data) in set.members {
            if let Some(state) = self.writers.get_mut(&writer) {
                Self::deliver(state, data, &mut self.ready, &mut self.lost, &self.filter);
            }
        }
        self.unblock(key);
    }

    fn drop_set(&mut self, key: (GuidPrefix, u32)) {
        if let Some(set) = self.pending_sets.remove(&key) {
            self.lost += set.members.len() as u64;
        }
        self.unblock(key);
    }

    fn unblock(&mut self, key: (GuidPrefix, u32)) {
        let guids: Vec<Guid> = self
            .writers
            .iter()
            .filter(|(_, w)| w.blocking_set == Some(key))
            .map(|(g, _)| *g)
            .collect();
        for guid in guids {
            let state = self.writers.get_mut(&guid).expect("known writer");
            state.blocking_set = None;
            while let Some(data) = state.held.pop_front() {
                if let Some(info) = data.coherent {
                    // Re-blocks on the next set.
                    let set_key = (guid.prefix, info.set_id);
                    let _ = set_key;
                    state.held.push_front(data);
                    break;
                }
                Self::deliver(state, data, &mut self.ready, &mut self.lost, &self.filter);
            }
            // Anything left at the head is a coherent member; re-stage it.
            let queued: Vec<IncomingData> = state.held.drain(..).collect();
            for data in queued {
                Self::stage(
                    state,
                    data,
                    false,
                    &mut self.pending_sets,
                    &mut self.admission_counter,
                    &mut self.ready,
                    &mut self.lost,
                    &self.filter,
                );
            }
        }
    }

    fn enforce_pending_cap(&mut self) {
        while self.pending_sets.len() > MAX_PENDING_SETS {
            let oldest = self
                .pending_sets
                .iter()
                .min_by_key(|(_, set)| set.admitted_at)
                .map(|(key, _)| *key)
                .expect("non-empty");
            self.drop_set(oldest);
        }
    }

    pub fn drain_ready(&mut self) -> Vec<ReadySample> {
        std::mem::take(&mut self.ready)
    }

    pub fn drain_acknacks(&mut self) -> Vec<AckNackOut> {
        std::mem::take(&mut self.acknacks)
    }

    pub fn drain_lost(&mut self) -> u64 {
        std::mem::take(&mut self.lost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcps::guid::EntityId;
    use crate::dcps::types::{FieldKind, TypeDescriptor};

    fn descriptor() -> TypeDescriptor {
        TypeDescriptor::new(
            vec![("id", FieldKind::U64), ("v", FieldKind::U32)],
            vec!["id"],
        )
        .unwrap()
    }

    fn writer(n: u8, entity: u32) -> Guid {
        Guid::new(GuidPrefix([n; 12]), EntityId(entity))
    }

    fn data(seq: u64, coherent: Option<CoherentInfo>) -> IncomingData {
        let d = descriptor();
        let values = vec![FieldValue::U64(1), FieldValue::U32(seq as u32)];
        IncomingData {
            sequence: seq,
            instance: InstanceKey::from_values(&d, &values),
            values,
            coherent,
            source_timestamp_us: seq * 1000,
            payload_len: 12,
        }
    }

    fn delivered_seqs(engine: &mut ReaderEngine) -> Vec<u64> {
        engine
            .drain_ready()
            .iter()
            .map(|r| r.data.sequence)
            .collect()
    }

    #[test]
    fn reliable_delivers_in_order_despite_reordering() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(2, None));
        engine.on_data(w, data(3, None));
        assert!(delivered_seqs(&mut engine).is_empty());
        engine.on_data(w, data(1, None));
        assert_eq!(delivered_seqs(&mut engine), vec![1, 2, 3]);
    }

    #[test]
    fn duplicates_are_dropped() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, None));
        engine.on_data(w, data(1, None));
        assert_eq!(delivered_seqs(&mut engine), vec![1]);
        engine.on_data(w, data(1, None));
        assert!(delivered_seqs(&mut engine).is_empty());
    }

    #[test]
    fn gap_advances_past_filtered_sequences() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, None));
        engine.on_gap(w, 2, 4);
        engine.on_data(w, data(5, None));
        assert_eq!(delivered_seqs(&mut engine), vec![1, 5]);
        assert_eq!(engine.drain_lost(), 0);
    }

    #[test]
    fn heartbeat_triggers_nack_for_missing() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, None));
        engine.on_data(w, data(4, None));
        engine.on_heartbeat(w, 1, 5);
        let acks = engine.drain_acknacks();
        assert_eq!(acks.len(), 1);
        assert_eq!(acks[0].ack_up_to, 1);
        assert_eq!(acks[0].missing, vec![2, 3, 5]);
    }

    #[test]
    fn eviction_resolves_as_lost() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, None));
        // Writer's history now starts at 4: 2 and 3 are unavailable.
        engine.on_heartbeat(w, 4, 5);
        engine.on_data(w, data(4, None));
        engine.on_data(w, data(5, None));
        assert_eq!(delivered_seqs(&mut engine), vec![1, 4, 5]);
        assert_eq!(engine.drain_lost(), 2);
    }

    #[test]
    fn late_joiner_catches_up_silently() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_heartbeat(w, 90, 100);
        assert_eq!(engine.drain_lost(), 0);
        let acks = engine.drain_acknacks();
        assert_eq!(acks[0].missing, (90..=100).collect::<Vec<u64>>());
    }

    #[test]
    fn best_effort_skips_count_lost_and_stay_ordered() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(false, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, None));
        engine.on_data(w, data(4, None));
        engine.on_data(w, data(2, None)); // stale, dropped
        assert_eq!(delivered_seqs(&mut engine), vec![1, 4]);
        assert_eq!(engine.drain_lost(), 2);
    }

    fn coherent(set: u32, end: bool) -> Option<CoherentInfo> {
        Some(CoherentInfo { set_id: set, end })
    }

    #[test]
    fn coherent_set_released_only_when_complete() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, coherent(1, false)));
        engine.finish_message(w.prefix);
        assert!(delivered_seqs(&mut engine).is_empty());
        engine.on_data(w, data(2, coherent(1, true)));
        engine.on_heartbeat(w, 1, 2);
        engine.finish_message(w.prefix);
        assert_eq!(delivered_seqs(&mut engine), vec![1, 2]);
    }

    #[test]
    fn coherent_set_holds_until_other_writer_catches_up() {
        let w1 = writer(1, 10);
        let w2 = writer(1, 11);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w1);
        engine.add_writer(w2);
        // w2's member (the end marker) arrives with a heartbeat showing w1
        // also contributed seq 1 which has not arrived yet.
        engine.on_data(w2, data(1, coherent(7, true)));
        engine.on_heartbeat(w1, 1, 1);
        engine.on_heartbeat(w2, 1, 1);
        engine.finish_message(w1.prefix);
        assert!(delivered_seqs(&mut engine).is_empty());
        // w1's member arrives (also end-marked for w1): set completes.
        engine.on_data(w1, data(1, coherent(7, true)));
        engine.finish_message(w1.prefix);
        assert_eq!(delivered_seqs(&mut engine), vec![1, 1]);
    }

    #[test]
    fn coherent_set_with_evicted_member_is_dropped_whole() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, coherent(3, false)));
        engine.finish_message(w.prefix);
        // Seq 2 (the end marker we never saw) was evicted; frontier reaches 3.
        engine.on_data(w, data(3, coherent(3, true)));
        engine.on_heartbeat(w, 3, 3);
        engine.finish_message(w.prefix);
        // Member seq 2 resolved unavailable inside the set span: dropped.
        assert!(delivered_seqs(&mut engine).is_empty());
        assert_eq!(engine.drain_lost(), 1 + 2); // unavailable + 2 members
    }

    #[test]
    fn plain_samples_queue_behind_pending_set() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, coherent(1, false)));
        engine.on_data(w, data(2, coherent(1, true)));
        engine.on_data(w, data(3, None));
        engine.finish_message(w.prefix);
        // Set incomplete until the heartbeat confirms the frontier…
        engine.on_heartbeat(w, 1, 3);
        engine.finish_message(w.prefix);
        assert_eq!(delivered_seqs(&mut engine), vec![1, 2, 3]);
    }

    #[test]
    fn reader_filter_applies_at_release() {
        let d = descriptor();
        let expr = FilterExpression::parse("v <= 1", &d).unwrap();
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, Some(expr));
        engine.add_writer(w);
        engine.on_data(w, data(1, coherent(1, false)));
        engine.on_data(w, data(2, coherent(1, true)));
        engine.on_heartbeat(w, 1, 2);
        engine.finish_message(w.prefix);
        // Member with v=2 fails the filter: only seq 1 shows.
        assert_eq!(delivered_seqs(&mut engine), vec![1]);
    }

    #[test]
    fn unmatched_writer_kills_its_pending_sets() {
        let w = writer(1, 10);
        let mut engine = ReaderEngine::new(true, None);
        engine.add_writer(w);
        engine.on_data(w, data(1, coherent(1, false)));
        engine.finish_message(w.prefix);
        engine.remove_writer(w);
        assert_eq!(engine.drain_lost(), 1);
        assert!(delivered_seqs(&mut engine).is_empty());
    }
}
