//! Participant core: entity registries, matching, the write/take paths and
//! the protocol tick pipeline.
//!
//! The core is single-threaded per participant: public API calls mutate it
//! under one lock, and `tick(now)` drives inbound processing, discovery,
//! dissemination, heartbeats and liveliness. Virtual time is advanced
//! explicitly by the caller; realtime mode just passes wall-clock
//! milliseconds instead.

use crate::dcps::guid::{EntityId, Guid, GuidPrefix};
use crate::dcps::history::{CachedSample, ReaderCache, RetainedSample, WriterHistory};
use crate::dcps::qos::{qos_compatible, Presentation, QosProfile};
use crate::dcps::sample::{InstanceKey, Sample, SampleInfo};
use crate::dcps::status::{StatusEventKind, StatusSet};
use crate::dcps::topic::{Topic, TopicRef};
use crate::dcps::types::{FieldValue, TypeDescriptor};
use crate::error::DcpsError;
use crate::transport::discovery::{reconcile, RemoteParticipant};
use crate::transport::encoding;
use crate::transport::link::{Link, LinkAddr};
use crate::transport::reliable::{
    IncomingData, ReaderEngine, RemoteReader, StreamChecksum,
};
use crate::transport::wire::{
    self, AckNackSubmessage, CoherentInfo, DataSubmessage, DiscoveryPayload, EndpointKind,
    EntityRecord, GapSubmessage, HeartbeatSubmessage, Submessage, WireMessage,
};
use crate::transport::MAX_MESSAGE_SIZE;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Status event pending listener dispatch.
pub type PendingEvent = (EntityId, StatusEventKind);

#[derive(Debug)]
struct OpenCoherentSet {
    id: u32,
    /// (writer entity, sequence) in write order.
    members: Vec<(EntityId, u64)>,
}

#[derive(Debug)]
pub(crate) struct PublisherState {
    group_data: Vec<u8>,
    presentation: Presentation,
    suspended: bool,
    open_set: Option<OpenCoherentSet>,
    next_set_id: u32,
    writers: BTreeSet<EntityId>,
}

#[derive(Debug)]
pub(crate) struct SubscriberState {
    #[allow(dead_code)]
    entity: EntityId,
    group_data: Vec<u8>,
    presentation: Presentation,
    readers: BTreeSet<EntityId>,
}

pub(crate) struct WriterState {
    entity: EntityId,
    publisher: EntityId,
    topic: Topic,
    qos: QosProfile,
    history: WriterHistory,
    next_seq: u64,
    last_flushed: u64,
    pending: VecDeque<u64>,
    /// First sequence belonging to the publisher's open coherent set;
    /// flushing stops there until the set closes.
    open_set_first: Option<u64>,
    remote_readers: BTreeMap<Guid, RemoteReader>,
    any_filtered: bool,
    local_readers: BTreeSet<EntityId>,
    incompatible_with: BTreeSet<Guid>,
    next_heartbeat_ms: u64,
    retransmissions: u64,
    status: StatusSet,
}

pub(crate) struct ReaderState {
    entity: EntityId,
    subscriber: EntityId,
    topic_ref: TopicRef,
    qos: QosProfile,
    cache: ReaderCache,
    engine: ReaderEngine,
    local_writers: BTreeSet<EntityId>,
    incompatible_with: BTreeSet<Guid>,
    status: StatusSet,
    delivered: u64,
    delivered_bytes: u64,
    staleness_sum_ms: u64,
    staleness_max_ms: u64,
}

/// Remote endpoint visible through a matched status.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedEndpoint {
    pub guid: Guid,
    pub group_data: Vec<u8>,
}

/// Per-reader delivery counters for metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeliveryStats {
    pub delivered: u64,
    pub bytes: u64,
    pub staleness_sum_ms: u64,
    pub staleness_max_ms: u64,
}

/// One side of a writer/reader pair stream (for replay comparison).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStream {
    pub peer: Guid,
    pub checksum: StreamChecksum,
}

pub(crate) struct ParticipantCore {
    guid_prefix: GuidPrefix,
    domain_id: u8,
    lease_ms: u64,
    heartbeat_period_ms: u64,
    realtime_clock: bool,
    alive: bool,
    link: Box<dyn Link>,
    now_ms: u64,
    next_entity: u32,
    topics: BTreeMap<String, Topic>,
    publishers: BTreeMap<EntityId, PublisherState>,
    subscribers: BTreeMap<EntityId, SubscriberState>,
    writers: BTreeMap<EntityId, WriterState>,
    readers: BTreeMap<EntityId, ReaderState>,
    remotes: BTreeMap<GuidPrefix, RemoteParticipant>,
    announce_dirty: bool,
    next_announce_ms: u64,
    pending_hello: BTreeSet<LinkAddr>,
    outbox: BTreeMap<LinkAddr, Vec<Submessage>>,
    events: Vec<PendingEvent>,
}

fn push_event(events: &mut Vec<PendingEvent>, entity: EntityId, kind: StatusEventKind) {
    if !events.contains(&(entity, kind)) {
        events.push((entity, kind));
    }
}

impl ParticipantCore {
    pub fn new(
        guid_prefix: GuidPrefix,
        domain_id: u8,
        lease_ms: u64,
        heartbeat_period_ms: u64,
        realtime_clock: bool,
        link: Box<dyn Link>,
    ) -> ParticipantCore {
        ParticipantCore {
            guid_prefix,
            domain_id,
            lease_ms,
            heartbeat_period_ms,
            realtime_clock,
            alive: true,
            link,
            now_ms: 0,
            next_entity: 1,
            topics: BTreeMap::new(),
            publishers: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            writers: BTreeMap::new(),
            readers: BTreeMap::new(),
            remotes: BTreeMap::new(),
            announce_dirty: true,
            next_announce_ms: 0,
            pending_hello: BTreeSet::new(),
            outbox: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn guid(&self) -> Guid {
        Guid::new(self.guid_prefix, EntityId::PARTICIPANT)
    }

    pub fn domain_id(&self) -> u8 {
        self.domain_id
    }

    pub fn lease_ms(&self) -> u64 {
        self.lease_ms
    }

    pub fn heartbeat_period_ms(&self) -> u64 {
        self.heartbeat_period_ms
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn link_addr(&self) -> LinkAddr {
        self.link.local_addr()
    }

    /// Current clock in microseconds: virtual tick time, or wall clock in
    /// realtime mode.
    pub fn now_us(&self) -> u64 {
        if self.realtime_clock {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_micros() as u64)
                .unwrap_or(0)
        } else {
            self.now_ms * 1000
        }
    }

    fn ensure_alive(&self) -> Result<(), DcpsError> {
        if self.alive {
            Ok(())
        } else {
            Err(DcpsError::EntityDeleted)
        }
    }

    fn alloc_entity(&mut self) -> EntityId {
        let id = EntityId(self.next_entity);
        self.next_entity += 1;
        id
    }

    // ------------------------------------------------------------------
    // Entity lifecycle
    // ------------------------------------------------------------------

    pub fn create_topic(
        &mut self,
        name: &str,
        descriptor: TypeDescriptor,
    ) -> Result<Topic, DcpsError> {
        self.ensure_alive()?;
        descriptor.validate()?;
        if let Some(existing) = self.topics.get(name) {
            if existing.descriptor() == &descriptor {
                return Ok(existing.clone());
            }
            return Err(DcpsError::precondition(format!(
                "topic `{name}` already registered with a different type"
            )));
        }
        let topic = Topic::new(name.to_string(), descriptor);
        self.topics.insert(name.to_string(), topic.clone());
        Ok(topic)
    }

    pub fn create_publisher(
        &mut self,
        group_data: Vec<u8>,
        presentation: Presentation,
    ) -> Result<EntityId, DcpsError> {
        self.ensure_alive()?;
        if group_data.len() > crate::dcps::qos::MAX_GROUP_DATA {
            return Err(DcpsError::precondition("group_data exceeds 1024 bytes"));
        }
        let entity = self.alloc_entity();
        self.publishers.insert(
            entity,
            PublisherState {
                group_data,
                presentation,
                suspended: false,
                open_set: None,
                next_set_id: 1,
                writers: BTreeSet::new(),
            },
        );
        Ok(entity)
    }

    pub fn create_subscriber(
        &mut self,
        group_data: Vec<u8>,
        presentation: Presentation,
    ) -> Result<EntityId, DcpsError> {
        self.ensure_alive()?;
        if group_data.len() > crate::dcps::qos::MAX_GROUP_DATA {
            return Err(DcpsError::precondition("group_data exceeds 1024 bytes"));
        }
        let entity = self.alloc_entity();
        self.subscribers.insert(
            entity,
            SubscriberState {
                entity,
                group_data,
                presentation,
                readers: BTreeSet::new(),
            },
        );
        Ok(entity)
    }

    pub fn create_writer(
        &mut self,
        publisher: EntityId,
        topic: &Topic,
        qos: QosProfile,
        now_hint: Option<u64>,
    ) -> Result<EntityId, DcpsError> {
        self.ensure_alive()?;
        qos.validate(self.heartbeat_period_ms)?;
        let publisher_state = self
            .publishers
            .get(&publisher)
            .ok_or(DcpsError::EntityDeleted)?;
        if qos.presentation != publisher_state.presentation {
            return Err(DcpsError::precondition(
                "writer presentation QoS must equal its publisher's",
            ));
        }
        if publisher_state.open_set.is_some() {
            return Err(DcpsError::precondition(
                "cannot create writer while a coherent set is open",
            ));
        }
        match self.topics.get(topic.name()) {
            Some(registered) if registered.type_hash() == topic.type_hash() => {}
            _ => {
                return Err(DcpsError::precondition(
                    "topic not registered on this participant",
                ))
            }
        }
        let entity = self.alloc_entity();
        let state = WriterState {
            entity,
            publisher,
            topic: topic.clone(),
            history: WriterHistory::new(
                qos.history,
                qos.resource_limit_max_samples_per_instance,
            ),
            qos,
            next_seq: 1,
            last_flushed: 0,
            pending: VecDeque::new(),
            open_set_first: None,
            remote_readers: BTreeMap::new(),
            any_filtered: false,
            local_readers: BTreeSet::new(),
            incompatible_with: BTreeSet::new(),
            next_heartbeat_ms: 0,
            retransmissions: 0,
            status: StatusSet::default(),
        };
        self.writers.insert(entity, state);
        self.publishers
            .get_mut(&publisher)
            .expect("just read")
            .writers
            .insert(entity);
        self.match_local_pairs_for_writer(entity);
        self.match_remote_records_for_writer(entity);
        self.announce_dirty = true;
        if let Some(now) = now_hint {
            self.now_ms = self.now_ms.max(now);
        }
        Ok(entity)
    }

    pub fn create_reader(
        &mut self,
        subscriber: EntityId,
        topic_ref: TopicRef,
        qos: QosProfile,
    ) -> Result<EntityId, DcpsError> {
        self.ensure_alive()?;
        qos.validate(self.heartbeat_period_ms)?;
        let subscriber_state = self
            .subscribers
            .get(&subscriber)
            .ok_or(DcpsError::EntityDeleted)?;
        if qos.presentation != subscriber_state.presentation {
            return Err(DcpsError::precondition(
                "reader presentation QoS must equal its subscriber's",
            ));
        }
        let topic = topic_ref.topic();
        match self.topics.get(topic.name()) {
            Some(registered) if registered.type_hash() == topic.type_hash() => {}
            _ => {
                return Err(DcpsError::precondition(
                    "topic not registered on this participant",
                ))
            }
        }
        let reliable = qos.reliability == crate::dcps::qos::Reliability::Reliable;
        let filter_expr = topic_ref.filter().map(|f| f.expression.clone());
        let entity = self.alloc_entity();
        let state = ReaderState {
            entity,
            subscriber,
            cache: ReaderCache::new(qos.history, qos.resource_limit_max_samples_per_instance),
            engine: ReaderEngine::new(reliable, filter_expr),
            topic_ref,
            qos,
            local_writers: BTreeSet::new(),
            incompatible_with: BTreeSet::new(),
            status: StatusSet::default(),
            delivered: 0,
            delivered_bytes: 0,
            staleness_sum_ms: 0,
            staleness_max_ms: 0,
        };
        self.readers.insert(entity, state);
        self.subscribers
            .get_mut(&subscriber)
            .expect("just read")
            .readers
            .insert(entity);
        self.match_local_pairs_for_reader(entity);
        self.match_remote_records_for_reader(entity);
        self.announce_dirty = true;
        Ok(entity)
    }

    pub fn delete_writer(&mut self, entity: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let state = self.writers.remove(&entity).ok_or(DcpsError::EntityDeleted)?;
        if let Some(publisher) = self.publishers.get_mut(&state.publisher) {
            publisher.writers.remove(&entity);
            if let Some(open) = publisher.open_set.as_mut() {
                open.members.retain(|(w, _)| *w != entity);
            }
        }
        let writer_guid = Guid::new(self.guid_prefix, entity);
        for reader_entity in state.local_readers {
            if let Some(reader) = self.readers.get_mut(&reader_entity) {
                reader.local_writers.remove(&entity);
                reader.engine.remove_writer(writer_guid);
                reader.status.subscription_matched.current_count -= 1;
                reader.status.subscription_matched.changes += 1;
                reader.status.liveliness_changed.alive_count -= 1;
                reader.status.liveliness_changed.changes += 1;
                push_event(
                    &mut self.events,
                    reader_entity,
                    StatusEventKind::SubscriptionMatched,
                );
            }
        }
        self.announce_dirty = true;
        Ok(())
    }

    pub fn delete_reader(&mut self, entity: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let state = self.readers.remove(&entity).ok_or(DcpsError::EntityDeleted)?;
        if let Some(subscriber) = self.subscribers.get_mut(&state.subscriber) {
            subscriber.readers.remove(&entity);
        }
        for writer_entity in state.local_writers {
            if let Some(writer) = self.writers.get_mut(&writer_entity) {
                writer.local_readers.remove(&entity);
                writer.status.publication_matched.current_count -= 1;
                writer.status.publication_matched.changes += 1;
                push_event(
                    &mut self.events,
                    writer_entity,
                    StatusEventKind::PublicationMatched,
                );
            }
        }
        self.announce_dirty = true;
        Ok(())
    }

    pub fn delete_publisher(&mut self, entity: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let writers: Vec<EntityId> = self
            .publishers
            .get(&entity)
            .ok_or(DcpsError::EntityDeleted)?
            .writers
            .iter()
            .copied()
            .collect();
        for writer in writers {
            self.delete_writer(writer)?;
        }
        self.publishers.remove(&entity);
        Ok(())
    }

    pub fn delete_subscriber(&mut self, entity: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let readers: Vec<EntityId> = self
            .subscribers
            .get(&entity)
            .ok_or(DcpsError::EntityDeleted)?
            .readers
            .iter()
            .copied()
            .collect();
        for reader in readers {
            self.delete_reader(reader)?;
        }
        self.subscribers.remove(&entity);
        Ok(())
    }

    /// Deletes the participant and all children; a farewell announcement
    /// with an empty entity set lets peers unmatch immediately.
    pub fn delete_participant(&mut self) {
        if !self.alive {
            return;
        }
        self.writers.clear();
        self.readers.clear();
        self.publishers.clear();
        self.subscribers.clear();
        let farewell = Submessage::Discovery(DiscoveryPayload {
            participant: self.guid(),
            lease_ms: self.lease_ms.min(u32::MAX as u64) as u32,
            entities: Vec::new(),
        });
        for addr in self.peer_addrs() {
            self.outbox.entry(addr).or_default().push(farewell.clone());
        }
        self.flush_outbox();
        self.alive = false;
    }

    // ------------------------------------------------------------------
    // Matching
    // ------------------------------------------------------------------

    fn summary_for_writer(writer: &WriterState, publishers: &BTreeMap<EntityId, PublisherState>) -> wire::QosSummary {
        let mut summary = writer.qos.summary();
        if let Some(publisher) = publishers.get(&writer.publisher) {
            summary.coherent_access = publisher.presentation.coherent_access;
            summary.access_scope = publisher.presentation.access_scope as u8;
        }
        summary
    }

    fn match_local_pairs_for_writer(&mut self, writer_entity: EntityId) {
        let reader_entities: Vec<EntityId> = self.readers.keys().copied().collect();
        for reader_entity in reader_entities {
            self.try_match_local(writer_entity, reader_entity);
        }
    }

    fn match_local_pairs_for_reader(&mut self, reader_entity: EntityId) {
        let writer_entities: Vec<EntityId> = self.writers.keys().copied().collect();
        for writer_entity in writer_entities {
            self.try_match_local(writer_entity, reader_entity);
        }
    }

    fn try_match_local(&mut self, writer_entity: EntityId, reader_entity: EntityId) {
        let (Some(writer), Some(reader)) =
            (self.writers.get(&writer_entity), self.readers.get(&reader_entity))
        else {
            return;
        };
        let topic = reader.topic_ref.topic();
        if writer.topic.name() != topic.name()
            || writer.topic.type_hash() != topic.type_hash()
        {
            return;
        }
        let offered = Self::summary_for_writer(writer, &self.publishers);
        let requested = reader.qos.summary();
        let prefix = self.guid_prefix;
        if !qos_compatible(&offered, &requested) {
            let writer = self.writers.get_mut(&writer_entity).expect("present");
            if writer
                .incompatible_with
                .insert(Guid::new(prefix, reader_entity))
            {
                writer.status.incompatible_qos += 1;
            }
            let reader = self.readers.get_mut(&reader_entity).expect("present");
            if reader
                .incompatible_with
                .insert(Guid::new(prefix, writer_entity))
            {
                reader.status.incompatible_qos += 1;
            }
            return;
        }
        let writer = self.writers.get_mut(&writer_entity).expect("present");
        if !writer.local_readers.insert(reader_entity) {
            return; // already matched
        }
        writer.status.publication_matched.current_count += 1;
        writer.status.publication_matched.changes += 1;
        push_event(
            &mut self.events,
            writer_entity,
            StatusEventKind::PublicationMatched,
        );
        let reader = self.readers.get_mut(&reader_entity).expect("present");
        reader.local_writers.insert(writer_entity);
        reader.status.subscription_matched.current_count += 1;
        reader.status.subscription_matched.changes += 1;
        reader.status.liveliness_changed.alive_count += 1;
        reader.status.liveliness_changed.changes += 1;
        push_event(
            &mut self.events,
            reader_entity,
            StatusEventKind::SubscriptionMatched,
        );
    }

    fn match_remote_records_for_writer(&mut self, writer_entity: EntityId) {
        let records: Vec<(GuidPrefix, EntityRecord)> = self
            .remotes
            .values()
            .flat_map(|remote| {
                remote
                    .entities
                    .values()
                    .map(move |record| (remote.prefix(), record.clone()))
            })
            .collect();
        for (prefix, record) in records {
            self.try_match_writer_remote(writer_entity, prefix, &record);
        }
    }

    fn match_remote_records_for_reader(&mut self, reader_entity: EntityId) {
        let records: Vec<(GuidPrefix, EntityRecord)> = self
            .remotes
            .values()
            .flat_map(|remote| {
                remote
                    .entities
                    .values()
                    .map(move |record| (remote.prefix(), record.clone()))
            })
            .collect();
        for (prefix, record) in records {
            self.try_match_reader_remote(reader_entity, prefix, &record);
        }
    }

    fn try_match_writer_remote(
        &mut self,
        writer_entity: EntityId,
        prefix: GuidPrefix,
        record: &EntityRecord,
    ) {
        if record.kind != EndpointKind::Reader {
            return;
        }
        let Some(writer) = self.writers.get(&writer_entity) else {
            return;
        };
        if writer.topic.name() != record.topic_name
            || writer.topic.type_hash() != record.type_hash
        {
            return;
        }
        let offered = Self::summary_for_writer(writer, &self.publishers);
        let guid = Guid::new(prefix, record.entity);
        if !qos_compatible(&offered, &record.qos) {
            let writer = self.writers.get_mut(&writer_entity).expect("present");
            if writer.incompatible_with.insert(guid) {
                writer.status.incompatible_qos += 1;
            }
            return;
        }
        let descriptor = writer.topic.descriptor().clone();
        let filter = record.filter.as_deref().and_then(|text| {
            crate::dcps::filter::FilterExpression::parse(text, &descriptor).ok()
        });
        let writer = self.writers.get_mut(&writer_entity).expect("present");
        if writer.remote_readers.contains_key(&guid) {
            return;
        }
        let start = writer.last_flushed;
        writer.remote_readers.insert(
            guid,
            RemoteReader::new(guid, record.qos.reliable, filter, start),
        );
        writer.any_filtered = writer.remote_readers.values().any(|r| r.filter.is_some());
        writer.status.publication_matched.current_count += 1;
        writer.status.publication_matched.changes += 1;
        push_event(
            &mut self.events,
            writer_entity,
            StatusEventKind::PublicationMatched,
        );
    }

    fn try_match_reader_remote(
        &mut self,
        reader_entity: EntityId,
        prefix: GuidPrefix,
        record: &EntityRecord,
    ) {
        if record.kind != EndpointKind::Writer {
            return;
        }
        let Some(reader) = self.readers.get(&reader_entity) else {
            return;
        };
        let topic = reader.topic_ref.topic();
        if topic.name() != record.topic_name || topic.type_hash() != record.type_hash {
            return;
        }
        let guid = Guid::new(prefix, record.entity);
        let requested = reader.qos.summary();
        if !qos_compatible(&record.qos, &requested) {
            let reader = self.readers.get_mut(&reader_entity).expect("present");
            if reader.incompatible_with.insert(guid) {
                reader.status.incompatible_qos += 1;
            }
            return;
        }
        let reader = self.readers.get_mut(&reader_entity).expect("present");
        if reader.engine.is_matched(guid) {
            return;
        }
        reader.engine.add_writer(guid);
        reader.status.subscription_matched.current_count += 1;
        reader.status.subscription_matched.changes += 1;
        reader.status.liveliness_changed.alive_count += 1;
        reader.status.liveliness_changed.changes += 1;
        push_event(
            &mut self.events,
            reader_entity,
            StatusEventKind::SubscriptionMatched,
        );
    }

    /// Unmatches everything previously matched to a departed remote record.
    fn unmatch_remote_record(
        &mut self,
        prefix: GuidPrefix,
        record: &EntityRecord,
        liveliness_loss: bool,
    ) {
        let guid = Guid::new(prefix, record.entity);
        match record.kind {
            EndpointKind::Writer => {
                for (entity, reader) in self.readers.iter_mut() {
                    reader.incompatible_with.remove(&guid);
                    if reader.engine.is_matched(guid) {
                        reader.engine.remove_writer(guid);
                        reader.status.subscription_matched.current_count -= 1;
                        reader.status.subscription_matched.changes += 1;
                        reader.status.liveliness_changed.alive_count -= 1;
                        reader.status.liveliness_changed.changes += 1;
                        if liveliness_loss {
                            reader.status.liveliness_changed.not_alive_count += 1;
                            push_event(
                                &mut self.events,
                                *entity,
                                StatusEventKind::LivelinessChanged,
                            );
                        }
                        push_event(
                            &mut self.events,
                            *entity,
                            StatusEventKind::SubscriptionMatched,
                        );
                        let lost = reader.engine.drain_lost();
                        if lost > 0 {
                            reader.status.sample_lost += lost;
                            push_event(&mut self.events, *entity, StatusEventKind::SampleLost);
                        }
                    }
                }
            }
            EndpointKind::Reader => {
                for (entity, writer) in self.writers.iter_mut() {
                    writer.incompatible_with.remove(&guid);
                    if writer.remote_readers.remove(&guid).is_some() {
                        writer.any_filtered =
                            writer.remote_readers.values().any(|r| r.filter.is_some());
                        writer.status.publication_matched.current_count -= 1;
                        writer.status.publication_matched.changes += 1;
                        push_event(
                            &mut self.events,
                            *entity,
                            StatusEventKind::PublicationMatched,
                        );
                        let min = Self::min_acked(writer);
                        writer.history.release_acknowledged(min);
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Write path
    // ------------------------------------------------------------------

    /// Highest sequence acknowledged by every matched reliable reader;
    /// 0 when no reliable reader is matched (nothing may be evicted under
    /// KEEP_ALL then).
    fn min_acked(writer: &WriterState) -> u64 {
        writer
            .remote_readers
            .values()
            .filter(|r| r.reliable)
            .map(|r| r.acked)
            .min()
            .unwrap_or(0)
    }

    pub fn write(
        &mut self,
        writer_entity: EntityId,
        values: &[FieldValue],
        timestamp_us: Option<u64>,
    ) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let default_ts = self.now_us();
        let writer = self
            .writers
            .get_mut(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        writer.topic.descriptor().check_conformance(values)?;
        let mut payload = Vec::with_capacity(encoding::encoded_len(values));
        encoding::encode_values(values, &mut payload);
        // Header + data submessage overhead must fit one datagram.
        if payload.len() + 128 > MAX_MESSAGE_SIZE {
            return Err(DcpsError::resource(format!(
                "sample of {} bytes exceeds the maximum message size",
                payload.len()
            )));
        }
        let instance = InstanceKey::from_values(writer.topic.descriptor(), values);
        let coherent = self
            .publishers
            .get_mut(&writer.publisher)
            .and_then(|p| p.open_set.as_mut())
            .map(|set| {
                set.members.push((writer_entity, writer.next_seq));
                CoherentInfo {
                    set_id: set.id,
                    end: false,
                }
            });
        let seq = writer.next_seq;
        let retained = RetainedSample {
            sample: Sample {
                instance,
                payload,
                source_timestamp_us: timestamp_us.unwrap_or(default_ts),
            },
            values: values.to_vec(),
            coherent,
        };
        let min_acked = Self::min_acked(writer).min(writer.last_flushed);
        writer.history.insert(seq, retained, min_acked)?;
        writer.next_seq += 1;
        writer.pending.push_back(seq);
        if coherent.is_some() && writer.open_set_first.is_none() {
            writer.open_set_first = Some(seq);
        }
        Ok(())
    }

    pub fn suspend_publication(&mut self, publisher: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let state = self
            .publishers
            .get_mut(&publisher)
            .ok_or(DcpsError::EntityDeleted)?;
        state.suspended = true;
        Ok(())
    }

    pub fn resume_publication(&mut self, publisher: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let state = self
            .publishers
            .get_mut(&publisher)
            .ok_or(DcpsError::EntityDeleted)?;
        state.suspended = false;
        Ok(())
    }

    pub fn begin_coherent_changes(&mut self, publisher: EntityId) -> Result<u32, DcpsError> {
        self.ensure_alive()?;
        let state = self
            .publishers
            .get_mut(&publisher)
            .ok_or(DcpsError::EntityDeleted)?;
        if !state.presentation.coherent_access {
            return Err(DcpsError::precondition(
                "publisher does not offer coherent access",
            ));
        }
        if state.open_set.is_some() {
            return Err(DcpsError::precondition("coherent sets do not nest"));
        }
        let id = state.next_set_id;
        state.next_set_id += 1;
        state.open_set = Some(OpenCoherentSet {
            id,
            members: Vec::new(),
        });
        Ok(id)
    }

    pub fn end_coherent_changes(&mut self, publisher: EntityId) -> Result<(), DcpsError> {
        self.ensure_alive()?;
        let state = self
            .publishers
            .get_mut(&publisher)
            .ok_or(DcpsError::EntityDeleted)?;
        let Some(open) = state.open_set.take() else {
            return Err(DcpsError::precondition("no coherent set is open"));
        };
        // Mark each participating writer's final member as its end marker.
        let mut last_per_writer: BTreeMap<EntityId, u64> = BTreeMap::new();
        for (writer, seq) in &open.members {
            last_per_writer.insert(*writer, *seq);
        }
        for (writer_entity, seq) in last_per_writer {
            if let Some(writer) = self.writers.get_mut(&writer_entity) {
                if let Some(retained) = writer.history.get_mut(seq) {
                    if let Some(info) = retained.coherent.as_mut() {
                        info.end = true;
                    }
                }
                writer.open_set_first = None;
            }
        }
        // Writers that wrote nothing still carry the barrier; clear it.
        let member_writers: BTreeSet<EntityId> =
            open.members.iter().map(|(w, _)| *w).collect();
        let publisher_writers: Vec<EntityId> = self
            .publishers
            .get(&publisher)
            .map(|p| p.writers.iter().copied().collect())
            .unwrap_or_default();
        for writer_entity in publisher_writers {
            if !member_writers.contains(&writer_entity) {
                if let Some(writer) = self.writers.get_mut(&writer_entity) {
                    writer.open_set_first = None;
                }
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Read path
    // ------------------------------------------------------------------

    pub fn fetch_samples(
        &mut self,
        reader_entity: EntityId,
        max_samples: usize,
        remove: bool,
    ) -> Result<Vec<(Vec<FieldValue>, SampleInfo)>, DcpsError> {
        self.ensure_alive()?;
        if max_samples == 0 {
            return Err(DcpsError::precondition("max_samples must be >= 1"));
        }
        let reader = self
            .readers
            .get_mut(&reader_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        Ok(reader
            .cache
            .fetch(max_samples, remove)
            .into_iter()
            .map(|s| (s.values, s.info))
            .collect())
    }

    pub fn status_of(&self, entity: EntityId) -> Result<StatusSet, DcpsError> {
        self.ensure_alive()?;
        if let Some(writer) = self.writers.get(&entity) {
            return Ok(writer.status);
        }
        if let Some(reader) = self.readers.get(&entity) {
            return Ok(reader.status);
        }
        Err(DcpsError::EntityDeleted)
    }

    // ------------------------------------------------------------------
    // Introspection
    // ------------------------------------------------------------------

    pub fn matched_subscriptions(&self, writer_entity: EntityId) -> Result<Vec<MatchedEndpoint>, DcpsError> {
        self.ensure_alive()?;
        let writer = self
            .writers
            .get(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        let mut out = Vec::new();
        for reader_entity in &writer.local_readers {
            if let Some(reader) = self.readers.get(reader_entity) {
                let group = self
                    .subscribers
                    .get(&reader.subscriber)
                    .map(|s| s.group_data.clone())
                    .unwrap_or_default();
                out.push(MatchedEndpoint {
                    guid: Guid::new(self.guid_prefix, *reader_entity),
                    group_data: group,
                });
            }
        }
        for guid in writer.remote_readers.keys() {
            let group = self
                .remotes
                .get(&guid.prefix)
                .and_then(|r| r.entities.get(&guid.entity))
                .map(|record| record.group_data.clone())
                .unwrap_or_default();
            out.push(MatchedEndpoint {
                guid: *guid,
                group_data: group,
            });
        }
        Ok(out)
    }

    pub fn matched_publications(&self, reader_entity: EntityId) -> Result<Vec<MatchedEndpoint>, DcpsError> {
        self.ensure_alive()?;
        let reader = self
            .readers
            .get(&reader_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        let mut out = Vec::new();
        for writer_entity in &reader.local_writers {
            if let Some(writer) = self.writers.get(writer_entity) {
                let group = self
                    .publishers
                    .get(&writer.publisher)
                    .map(|p| p.group_data.clone())
                    .unwrap_or_default();
                out.push(MatchedEndpoint {
                    guid: Guid::new(self.guid_prefix, *writer_entity),
                    group_data: group,
                });
            }
        }
        for guid in reader.engine.matched_writers() {
            if guid.prefix == self.guid_prefix {
                continue;
            }
            let group = self
                .remotes
                .get(&guid.prefix)
                .and_then(|r| r.entities.get(&guid.entity))
                .map(|record| record.group_data.clone())
                .unwrap_or_default();
            out.push(MatchedEndpoint {
                guid,
                group_data: group,
            });
        }
        Ok(out)
    }

    pub fn writer_fully_acknowledged(&self, writer_entity: EntityId) -> Result<bool, DcpsError> {
        self.ensure_alive()?;
        let writer = self
            .writers
            .get(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        Ok(writer.pending.is_empty()
            && writer
                .remote_readers
                .values()
                .all(|proxy| proxy.fully_acknowledged()))
    }

    pub fn writer_history_sequences(&self, writer_entity: EntityId) -> Result<Vec<u64>, DcpsError> {
        self.ensure_alive()?;
        Ok(self
            .writers
            .get(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?
            .history
            .sequences())
    }

    pub fn writer_retransmissions(&self, writer_entity: EntityId) -> Result<u64, DcpsError> {
        self.ensure_alive()?;
        Ok(self
            .writers
            .get(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?
            .retransmissions)
    }

    pub fn writer_pair_streams(&self, writer_entity: EntityId) -> Result<Vec<PairStream>, DcpsError> {
        self.ensure_alive()?;
        let writer = self
            .writers
            .get(&writer_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        Ok(writer
            .remote_readers
            .iter()
            .map(|(guid, proxy)| PairStream {
                peer: *guid,
                checksum: proxy.relevant,
            })
            .collect())
    }

    pub fn reader_pair_streams(&self, reader_entity: EntityId) -> Result<Vec<PairStream>, DcpsError> {
        self.ensure_alive()?;
        let reader = self
            .readers
            .get(&reader_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        Ok(reader
            .engine
            .matched_writers()
            .into_iter()
            .filter_map(|guid| {
                reader.engine.delivered_stats(guid).map(|checksum| PairStream {
                    peer: guid,
                    checksum,
                })
            })
            .collect())
    }

    pub fn reader_delivery_stats(&self, reader_entity: EntityId) -> Result<DeliveryStats, DcpsError> {
        self.ensure_alive()?;
        let reader = self
            .readers
            .get(&reader_entity)
            .ok_or(DcpsError::EntityDeleted)?;
        Ok(DeliveryStats {
            delivered: reader.delivered,
            bytes: reader.delivered_bytes,
            staleness_sum_ms: reader.staleness_sum_ms,
            staleness_max_ms: reader.staleness_max_ms,
        })
    }

    pub fn reader_cache_depths(&self, reader_entity: EntityId) -> Result<Vec<usize>, DcpsError> {
        self.ensure_alive()?;
        Ok(self
            .readers
            .get(&reader_entity)
            .ok_or(DcpsError::EntityDeleted)?
            .cache
            .instance_depths())
    }

    // ------------------------------------------------------------------
    // Tick pipeline
    // ------------------------------------------------------------------

    pub fn tick(&mut self, now: u64) -> Vec<PendingEvent> {
        if !self.alive {
            return Vec::new();
        }
        self.now_ms = self.now_ms.max(now);
        let now = self.now_ms;
        let inbound = self.link.poll(now);
        for (src, bytes) in inbound {
            match wire::decode_message(&bytes) {
                Ok(message) => self.process_message(src, message, now),
                Err(_) => continue,
            }
        }
        self.expire_liveliness(now);
        self.run_discovery(now);
        self.flush_writers(now);
        self.emit_heartbeats(now);
        self.flush_outbox();
        std::mem::take(&mut self.events)
    }

    fn process_message(&mut self, src: LinkAddr, message: WireMessage, now: u64) {
        let prefix = message.sender;
        if prefix == self.guid_prefix {
            return;
        }
        if let Some(remote) = self.remotes.get_mut(&prefix) {
            remote.last_heard_ms = now;
            remote.addr = src;
        }
        for submessage in message.submessages {
            match submessage {
                Submessage::Data(data) => self.handle_data(prefix, data),
                Submessage::Heartbeat(hb) => self.handle_heartbeat(prefix, hb),
                Submessage::AckNack(ack) => self.handle_acknack(prefix, src, ack),
                Submessage::Gap(gap) => self.handle_gap(prefix, gap),
                Submessage::Discovery(payload) => {
                    self.handle_discovery(src, payload, now)
                }
                Submessage::Unknown { .. } => {}
            }
        }
        self.finish_inbound(prefix, src, now);
    }

    fn handle_data(&mut self, prefix: GuidPrefix, data: DataSubmessage) {
        let writer_guid = Guid::new(prefix, data.writer_entity);
        let targets: Vec<EntityId> = self
            .readers
            .iter()
            .filter(|(entity, reader)| {
                (data.reader_entity.0 == 0 || data.reader_entity == **entity)
                    && reader.engine.is_matched(writer_guid)
            })
            .map(|(entity, _)| *entity)
            .collect();
        if targets.is_empty() {
            return;
        }
        let descriptor = self
            .readers
            .get(&targets[0])
            .expect("present")
            .topic_ref
            .topic()
            .descriptor()
            .clone();
        let Ok(values) = encoding::decode_values(&descriptor, &data.payload) else {
            return;
        };
        let instance = InstanceKey::from_values(&descriptor, &values);
        for target in targets {
            let reader = self.readers.get_mut(&target).expect("present");
            reader.engine.on_data(
                writer_guid,
                IncomingData {
                    sequence: data.sequence,
                    values: values.clone(),
                    instance: instance.clone(),
                    coherent: data.coherent,
                    source_timestamp_us: data.source_timestamp_us,
                    payload_len: data.payload.len(),
                },
            );
        }
    }

    fn handle_heartbeat(&mut self, prefix: GuidPrefix, hb: HeartbeatSubmessage) {
        let writer_guid = Guid::new(prefix, hb.writer_entity);
        for reader in self.readers.values_mut() {
            if reader.engine.is_matched(writer_guid) {
                reader.engine.on_heartbeat(writer_guid, hb.first_seq, hb.last_seq);
            }
        }
    }

    fn handle_gap(&mut self, prefix: GuidPrefix, gap: GapSubmessage) {
        let writer_guid = Guid::new(prefix, gap.writer_entity);
        for (entity, reader) in self.readers.iter_mut() {
            if (gap.reader_entity.0 == 0 || gap.reader_entity == *entity)
                && reader.engine.is_matched(writer_guid)
            {
                reader.engine.on_gap(writer_guid, gap.first_seq, gap.last_seq);
            }
        }
    }

    fn handle_acknack(&mut self, prefix: GuidPrefix, src: LinkAddr, ack: AckNackSubmessage) {
        let reader_guid = Guid::new(prefix, ack.reader_entity);
        let Some(writer) = self.writers.get_mut(&ack.writer_entity) else {
            return;
        };
        let Some(proxy) = writer.remote_readers.get_mut(&reader_guid) else {
            return;
        };
        proxy.acked = proxy.acked.max(ack.ack_up_to);
        let min = Self::min_acked(writer).min(writer.last_flushed);
        writer.history.release_acknowledged(min);
        let nacked = ack.nacked_sequences();
        if nacked.is_empty() {
            return;
        }
        let mut need_heartbeat = false;
        let mut gap_ranges: Vec<(u64, u64)> = Vec::new();
        let mut resend: Vec<u64> = Vec::new();
        for seq in nacked {
            match writer.history.get(seq) {
                Some(retained) => {
                    let proxy = writer.remote_readers.get(&reader_guid).expect("present");
                    let relevant = retained.coherent.is_some()
                        || proxy
                            .filter
                            .as_ref()
                            .map(|f| f.eval(&retained.values))
                            .unwrap_or(true);
                    if relevant {
                        resend.push(seq);
                    } else {
                        match gap_ranges.last_mut() {
                            Some((_, last)) if *last + 1 == seq => *last = seq,
                            _ => gap_ranges.push((seq, seq)),
                        }
                    }
                }
                None => need_heartbeat = true,
            }
        }
        let writer_entity = ack.writer_entity;
        let mut subs: Vec<Submessage> = Vec::new();
        for seq in resend {
            let retained = writer.history.get(seq).expect("checked above");
            writer.retransmissions += 1;
            subs.push(Submessage::Data(DataSubmessage {
                writer_entity,
                reader_entity: ack.reader_entity,
                sequence: seq,
                instance_hash: retained.sample.instance.hash,
                coherent: retained.coherent,
                source_timestamp_us: retained.sample.source_timestamp_us,
                payload: retained.sample.payload.clone(),
            }));
        }
        for (first, last) in gap_ranges {
            subs.push(Submessage::Gap(GapSubmessage {
                writer_entity,
                reader_entity: ack.reader_entity,
                first_seq: first,
                last_seq: last,
            }));
            if let Some(proxy) = writer.remote_readers.get_mut(&reader_guid) {
                proxy.relevant_last = proxy.relevant_last.max(last);
            }
        }
        if need_heartbeat {
            let first = writer.history.first_seq().unwrap_or(writer.next_seq);
            let last = writer
                .remote_readers
                .get(&reader_guid)
                .map(|p| p.relevant_last)
                .unwrap_or(writer.last_flushed);
            subs.push(Submessage::Heartbeat(HeartbeatSubmessage {
                writer_entity,
                first_seq: first,
                last_seq: last,
            }));
        }
        self.outbox.entry(src).or_default().extend(subs);
    }

    fn handle_discovery(&mut self, src: LinkAddr, payload: DiscoveryPayload, now: u64) {
        let prefix = payload.participant.prefix;
        if prefix == self.guid_prefix {
            return;
        }
        let is_new = !self.remotes.contains_key(&prefix);
        if is_new {
            self.remotes.insert(
                prefix,
                RemoteParticipant {
                    guid: payload.participant,
                    lease_ms: payload.lease_ms,
                    last_heard_ms: now,
                    addr: src,
                    entities: BTreeMap::new(),
                },
            );
            // Introduce ourselves directly so the new peer matches fast.
            self.pending_hello.insert(src);
        }
        let previous = self
            .remotes
            .get(&prefix)
            .map(|r| r.entities.clone())
            .unwrap_or_default();
        let diff = reconcile(&previous, &payload.entities);
        {
            let remote = self.remotes.get_mut(&prefix).expect("present");
            remote.lease_ms = payload.lease_ms;
            remote.last_heard_ms = now;
            remote.addr = src;
            remote.entities = payload
                .entities
                .iter()
                .map(|record| (record.entity, record.clone()))
                .collect();
        }
        for record in &diff.removed {
            self.unmatch_remote_record(prefix, record, false);
        }
        for (old, _new) in &diff.changed {
            self.unmatch_remote_record(prefix, old, false);
        }
        let added_or_changed: Vec<EntityRecord> = diff
            .added
            .iter()
            .cloned()
            .chain(diff.changed.iter().map(|(_, new)| new.clone()))
            .collect();
        for record in added_or_changed {
            let writer_entities: Vec<EntityId> = self.writers.keys().copied().collect();
            for writer in writer_entities {
                self.try_match_writer_remote(writer, prefix, &record);
            }
            let reader_entities: Vec<EntityId> = self.readers.keys().copied().collect();
            for reader in reader_entities {
                self.try_match_reader_remote(reader, prefix, &record);
            }
        }
    }

    /// Post-message step: snapshot coherent frontiers, release decided
    /// sets, move ready samples into caches, and send ACKNACK replies.
    fn finish_inbound(&mut self, prefix: GuidPrefix, src: LinkAddr, now: u64) {
        let reader_entities: Vec<EntityId> = self.readers.keys().copied().collect();
        for entity in reader_entities {
            let reader = self.readers.get_mut(&entity).expect("present");
            reader.engine.finish_message(prefix);
            let ready = reader.engine.drain_ready();
            if !ready.is_empty() {
                for sample in ready {
                    Self::insert_into_cache(reader, sample.writer, sample.data, now);
                }
                push_event(&mut self.events, entity, StatusEventKind::DataAvailable);
            }
            let lost = reader.engine.drain_lost();
            if lost > 0 {
                reader.status.sample_lost += lost;
                push_event(&mut self.events, entity, StatusEventKind::SampleLost);
            }
            for reply in reader.engine.drain_acknacks() {
                let sub = Submessage::AckNack(AckNackSubmessage::from_sequences(
                    entity,
                    reply.writer.entity,
                    reply.ack_up_to,
                    &reply.missing,
                ));
                self.outbox.entry(src).or_default().push(sub);
            }
        }
    }

    fn insert_into_cache(reader: &mut ReaderState, writer: Guid, data: IncomingData, now: u64) {
        let info = SampleInfo {
            writer_guid: writer,
            sequence_number: data.sequence,
            source_timestamp_us: data.source_timestamp_us,
            coherent_set_id: data.coherent.map(|c| c.set_id),
            coherent_end: data.coherent.map(|c| c.end).unwrap_or(false),
            valid: true,
        };
        let staleness_ms = now.saturating_sub(data.source_timestamp_us / 1000);
        reader.delivered += 1;
        reader.delivered_bytes += data.payload_len as u64;
        reader.staleness_sum_ms += staleness_ms;
        reader.staleness_max_ms = reader.staleness_max_ms.max(staleness_ms);
        reader.cache.insert(
            &data.instance,
            CachedSample {
                values: data.values,
                info,
                payload_len: data.payload_len,
            },
        );
    }

    fn expire_liveliness(&mut self, now: u64) {
        let expired: Vec<GuidPrefix> = self
            .remotes
            .values()
            .filter(|remote| now > remote.liveliness_deadline_ms())
            .map(|remote| remote.prefix())
            .collect();
        for prefix in expired {
            let remote = self.remotes.remove(&prefix).expect("present");
            for record in remote.entities.values() {
                self.unmatch_remote_record(prefix, record, true);
            }
        }
    }

    fn peer_addrs(&self) -> Vec<LinkAddr> {
        let mut peers: BTreeSet<LinkAddr> = self.link.bootstrap_peers().into_iter().collect();
        for remote in self.remotes.values() {
            peers.insert(remote.addr);
        }
        peers.remove(&self.link.local_addr());
        peers.into_iter().collect()
    }

    fn build_announcement(&self) -> Submessage {
        let mut entities = Vec::new();
        for writer in self.writers.values() {
            let mut qos = Self::summary_for_writer(writer, &self.publishers);
            qos.liveliness_lease_ms = writer.qos.liveliness_lease_ms.min(u32::MAX as u64) as u32;
            entities.push(EntityRecord {
                entity: writer.entity,
                kind: EndpointKind::Writer,
                topic_name: writer.topic.name().to_string(),
                type_hash: writer.topic.type_hash(),
                qos,
                group_data: self
                    .publishers
                    .get(&writer.publisher)
                    .map(|p| p.group_data.clone())
                    .unwrap_or_default(),
                filter: None,
            });
        }
        for reader in self.readers.values() {
            entities.push(EntityRecord {
                entity: reader.entity,
                kind: EndpointKind::Reader,
                topic_name: reader.topic_ref.topic().name().to_string(),
                type_hash: reader.topic_ref.topic().type_hash(),
                qos: reader.qos.summary(),
                group_data: self
                    .subscribers
                    .get(&reader.subscriber)
                    .map(|s| s.group_data.clone())
                    .unwrap_or_default(),
                filter: reader.topic_ref.filter().map(|f| f.text.clone()),
            });
        }
        Submessage::Discovery(DiscoveryPayload {
            participant: self.guid(),
            lease_ms: self.lease_ms.min(u32::MAX as u64) as u32,
            entities,
        })
    }

    fn run_discovery(&mut self, now: u64) {
        let periodic_due = self.announce_dirty || now >= self.next_announce_ms;
        if !periodic_due && self.pending_hello.is_empty() {
            return;
        }
        let announcement = self.build_announcement();
        let targets: Vec<LinkAddr> = if periodic_due {
            self.announce_dirty = false;
            self.next_announce_ms = now + (self.lease_ms / 3).max(1);
            self.pending_hello.clear();
            self.peer_addrs()
        } else {
            std::mem::take(&mut self.pending_hello).into_iter().collect()
        };
        for addr in targets {
            self.outbox
                .entry(addr)
                .or_default()
                .push(announcement.clone());
        }
    }

    fn flush_writers(&mut self, now: u64) {
        let publisher_entities: Vec<EntityId> = self.publishers.keys().copied().collect();
        for publisher_entity in publisher_entities {
            let (suspended, writer_list) = {
                let publisher = self.publishers.get(&publisher_entity).expect("present");
                (
                    publisher.suspended,
                    publisher.writers.iter().copied().collect::<Vec<_>>(),
                )
            };
            if suspended {
                continue;
            }
            for writer_entity in writer_list {
                self.flush_one_writer(writer_entity, now);
            }
        }
    }

    fn flush_one_writer(&mut self, writer_entity: EntityId, now: u64) {
        loop {
            let writer = match self.writers.get_mut(&writer_entity) {
                Some(w) => w,
                None => return,
            };
            let Some(&seq) = writer.pending.front() else {
                return;
            };
            if let Some(first) = writer.open_set_first {
                if seq >= first {
                    return; // held until the coherent set closes
                }
            }
            writer.pending.pop_front();
            let Some(retained) = writer.history.get(seq) else {
                // Evicted before dissemination (KEEP_LAST depth); readers
                // skip it via the proactive gap on the next relevant sample.
                writer.last_flushed = writer.last_flushed.max(seq);
                continue;
            };
            let retained = retained.clone();
            writer.last_flushed = seq;
            let writer_guid = Guid::new(self.guid_prefix, writer_entity);

            // Local fast path: matched readers in this participant receive
            // the sample directly, without touching the wire.
            let local_targets: Vec<EntityId> =
                writer.local_readers.iter().copied().collect();
            let coherent = retained.coherent;
            for reader_entity in local_targets {
                let Some(reader) = self.readers.get_mut(&reader_entity) else {
                    continue;
                };
                let passes = reader
                    .topic_ref
                    .filter()
                    .map(|f| f.expression.eval(&retained.values))
                    .unwrap_or(true);
                if !passes {
                    continue;
                }
                Self::insert_into_cache(
                    reader,
                    writer_guid,
                    IncomingData {
                        sequence: seq,
                        values: retained.values.clone(),
                        instance: retained.sample.instance.clone(),
                        coherent,
                        source_timestamp_us: retained.sample.source_timestamp_us,
                        payload_len: retained.sample.payload.len(),
                    },
                    now,
                );
                push_event(
                    &mut self.events,
                    reader_entity,
                    StatusEventKind::DataAvailable,
                );
            }

            // Remote dissemination.
            let writer = self.writers.get_mut(&writer_entity).expect("present");
            if writer.remote_readers.is_empty() {
                continue;
            }
            let data_template = DataSubmessage {
                writer_entity,
                reader_entity: EntityId(0),
                sequence: seq,
                instance_hash: retained.sample.instance.hash,
                coherent,
                source_timestamp_us: retained.sample.source_timestamp_us,
                payload: retained.sample.payload.clone(),
            };
            if !writer.any_filtered {
                let mut dests: BTreeSet<GuidPrefix> = BTreeSet::new();
                for (guid, proxy) in writer.remote_readers.iter_mut() {
                    proxy.relevant_last = seq;
                    proxy.relevant.push(seq);
                    dests.insert(guid.prefix);
                }
                for prefix in dests {
                    if let Some(remote) = self.remotes.get(&prefix) {
                        self.outbox
                            .entry(remote.addr)
                            .or_default()
                            .push(Submessage::Data(data_template.clone()));
                    }
                }
            } else {
                let mut sends: Vec<(GuidPrefix, Submessage)> = Vec::new();
                for (guid, proxy) in writer.remote_readers.iter_mut() {
                    let relevant = coherent.is_some()
                        || proxy
                            .filter
                            .as_ref()
                            .map(|f| f.eval(&retained.values))
                            .unwrap_or(true);
                    if !relevant {
                        continue;
                    }
                    if proxy.reliable && proxy.relevant_last + 1 < seq {
                        sends.push((
                            guid.prefix,
                            Submessage::Gap(GapSubmessage {
                                writer_entity,
                                reader_entity: guid.entity,
                                first_seq: proxy.relevant_last + 1,
                                last_seq: seq - 1,
                            }),
                        ));
                    }
                    let mut data = data_template.clone();
                    data.reader_entity = guid.entity;
                    sends.push((guid.prefix, Submessage::Data(data)));
                    proxy.relevant_last = seq;
                    proxy.relevant.push(seq);
                }
                for (prefix, sub) in sends {
                    if let Some(remote) = self.remotes.get(&prefix) {
                        self.outbox.entry(remote.addr).or_default().push(sub);
                    }
                }
            }
        }
    }

    fn emit_heartbeats(&mut self, now: u64) {
        let writer_entities: Vec<EntityId> = self.writers.keys().copied().collect();
        for writer_entity in writer_entities {
            let writer = self.writers.get_mut(&writer_entity).expect("present");
            if now < writer.next_heartbeat_ms {
                continue;
            }
            let mut dests: BTreeSet<GuidPrefix> = BTreeSet::new();
            for (guid, proxy) in &writer.remote_readers {
                if proxy.reliable && proxy.acked < proxy.relevant_last {
                    dests.insert(guid.prefix);
                }
            }
            if dests.is_empty() {
                continue;
            }
            writer.next_heartbeat_ms = now + self.heartbeat_period_ms;
            let first = writer.history.first_seq().unwrap_or(writer.next_seq);
            let mut subs: Vec<(LinkAddr, Submessage)> = Vec::new();
            for prefix in dests {
                let last = writer
                    .remote_readers
                    .iter()
                    .filter(|(guid, _)| guid.prefix == prefix)
                    .map(|(_, proxy)| proxy.relevant_last)
                    .max()
                    .unwrap_or(writer.last_flushed);
                if let Some(remote) = self.remotes.get(&prefix) {
                    subs.push((
                        remote.addr,
                        Submessage::Heartbeat(HeartbeatSubmessage {
                            writer_entity,
                            first_seq: first,
                            last_seq: last,
                        }),
                    ));
                }
            }
            for (addr, sub) in subs {
                self.outbox.entry(addr).or_default().push(sub);
            }
        }
    }

    /// Heartbeats appended to any data-carrying bundle: one per writer with
    /// matched readers at the destination, advertising the writer's current
    /// frontier. These piggybacked heartbeats are what make coherent-set
    /// completion detection sound.
    fn bundle_heartbeats(&self, dest: LinkAddr) -> Vec<Submessage> {
        let dest_prefixes: BTreeSet<GuidPrefix> = self
            .remotes
            .values()
            .filter(|remote| remote.addr == dest)
            .map(|remote| remote.prefix())
            .collect();
        if dest_prefixes.is_empty() {
            return Vec::new();
        }
        let mut subs = Vec::new();
        for writer in self.writers.values() {
            let relevant: Vec<u64> = writer
                .remote_readers
                .iter()
                .filter(|(guid, _)| dest_prefixes.contains(&guid.prefix))
                .map(|(_, proxy)| proxy.relevant_last)
                .collect();
            if relevant.is_empty() {
                continue;
            }
            let last = relevant.into_iter().max().unwrap_or(0);
            if last == 0 {
                continue;
            }
            subs.push(Submessage::Heartbeat(HeartbeatSubmessage {
                writer_entity: writer.entity,
                first_seq: writer.history.first_seq().unwrap_or(writer.next_seq),
                last_seq: last,
            }));
        }
        subs
    }

    fn flush_outbox(&mut self) {
        let outbox = std::mem::take(&mut self.outbox);
        let now = self.now_ms;
        for (dest, subs) in outbox {
            let hb_set = if subs.iter().any(|s| matches!(s, Submessage::Data(_))) {
                self.bundle_heartbeats(dest)
            } else {
                Vec::new()
            };
            let hb_len: usize = hb_set.iter().map(wire::submessage_wire_len).sum();
            let budget = MAX_MESSAGE_SIZE - wire::HEADER_LEN - hb_len;
            let mut segments: Vec<(Vec<Submessage>, bool)> = Vec::new();
            let mut current: Vec<Submessage> = Vec::new();
            let mut current_len = 0usize;
            let mut current_has_data = false;
            for sub in subs {
                let len = wire::submessage_wire_len(&sub);
                if current_len + len > budget && !current.is_empty() {
                    segments.push((std::mem::take(&mut current), current_has_data));
                    current_len = 0;
                    current_has_data = false;
                }
                current_len += len;
                current_has_data |= matches!(sub, Submessage::Data(_));
                current.push(sub);
            }
            if !current.is_empty() {
                segments.push((current, current_has_data));
            }
            for (mut segment, has_data) in segments {
                if has_data {
                    segment.extend(hb_set.iter().cloned());
                }
                let message = WireMessage {
                    flags: 0,
                    sender: self.guid_prefix,
                    submessages: segment,
                };
                if let Ok(bytes) = wire::encode_message(&message) {
                    self.link.send(dest, &bytes, now);
                }
            }
        }
    }
}
