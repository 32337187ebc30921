//! Public entity handles.
//!
//! All handles are cheap clones sharing one participant core behind a
//! mutex, so every operation is safe from any context and entities can be
//! handed between threads. Listener callbacks run on whichever context
//! drives `tick`, after the core lock is released; mutating calls back into
//! the API from a callback are rejected with a reentrancy error.

use crate::dcps::filter::FilterExpression;
use crate::dcps::guid::{EntityId, Guid, GuidPrefix};
use crate::dcps::qos::{Presentation, PresentationScope, QosProfile};
use crate::dcps::runtime::{
    DeliveryStats, MatchedEndpoint, PairStream, ParticipantCore, PendingEvent,
};
use crate::dcps::sample::SampleInfo;
use crate::dcps::status::{ListenerHooks, StatusSet};
use crate::dcps::topic::{FilteredTopic, Topic, TopicRef};
use crate::dcps::types::{FieldValue, TypeDescriptor};
use crate::error::DcpsError;
use crate::transport::link::{Link, LinkAddr};
use crate::transport::netsim::SharedSimNetwork;
use crate::transport::udp::{UdpConfig, UdpLink};
use crate::transport::DEFAULT_HEARTBEAT_PERIOD_MS;
use rand::RngCore;
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread::ThreadId;

#[derive(Debug, Clone)]
pub struct ParticipantConfig {
    pub domain_id: u8,
    pub lease_ms: u64,
    pub heartbeat_period_ms: u64,
    /// Timestamps come from the wall clock instead of tick time.
    pub realtime_clock: bool,
    /// Fixed guid prefix for deterministic runs; random when absent.
    pub guid_prefix: Option<[u8; 12]>,
}

impl Default for ParticipantConfig {
    fn default() -> Self {
        ParticipantConfig {
            domain_id: 0,
            lease_ms: 1000,
            heartbeat_period_ms: DEFAULT_HEARTBEAT_PERIOD_MS,
            realtime_clock: false,
            guid_prefix: None,
        }
    }
}

struct Shared {
    core: Mutex<ParticipantCore>,
    listeners: Mutex<BTreeMap<EntityId, ListenerHooks>>,
    dispatching: Mutex<Option<ThreadId>>,
}

/// Factory and owner of all entities in one domain.
#[derive(Clone)]
pub struct DomainParticipant {
    shared: Arc<Shared>,
}

impl DomainParticipant {
    /// Creates a participant over an arbitrary link.
    pub fn create(config: ParticipantConfig, link: Box<dyn Link>) -> Result<Self, DcpsError> {
        if config.lease_ms < 100 {
            return Err(DcpsError::precondition("lease must be >= 100 ms"));
        }
        let prefix = match config.guid_prefix {
            Some(bytes) => GuidPrefix(bytes),
            None => {
                let mut bytes = [0u8; 12];
                rand::thread_rng().fill_bytes(&mut bytes);
                GuidPrefix(bytes)
            }
        };
        let core = ParticipantCore::new(
            prefix,
            config.domain_id,
            config.lease_ms,
            config.heartbeat_period_ms,
            config.realtime_clock,
            link,
        );
        Ok(DomainParticipant {
            shared: Arc::new(Shared {
                core: Mutex::new(core),
                listeners: Mutex::new(BTreeMap::new()),
                dispatching: Mutex::new(None),
            }),
        })
    }

    /// Creates a participant attached to a simulated network.
    pub fn create_sim(
        config: ParticipantConfig,
        net: &SharedSimNetwork,
    ) -> Result<Self, DcpsError> {
        let link = net.endpoint(config.domain_id);
        Self::create(config, Box::new(link))
    }

    /// Creates a participant over a UDP socket; the domain's well-known
    /// port is `base_port + domain_id`.
    pub fn create_udp(config: ParticipantConfig, udp: &UdpConfig) -> Result<Self, DcpsError> {
        let link = UdpLink::open(config.domain_id, udp)
            .map_err(|e| DcpsError::DomainUnavailable(e.to_string()))?;
        Self::create(config, Box::new(link))
    }

    fn core(&self) -> std::sync::MutexGuard<'_, ParticipantCore> {
        self.shared.core.lock().expect("participant lock")
    }

    fn guard_reentrancy(&self) -> Result<(), DcpsError> {
        let dispatching = self.shared.dispatching.lock().expect("dispatch lock");
        if *dispatching == Some(std::thread::current().id()) {
            return Err(DcpsError::Reentrancy);
        }
        Ok(())
    }

    pub fn guid(&self) -> Guid {
        self.core().guid()
    }

    pub fn domain_id(&self) -> u8 {
        self.core().domain_id()
    }

    pub fn lease_ms(&self) -> u64 {
        self.core().lease_ms()
    }

    pub fn heartbeat_period_ms(&self) -> u64 {
        self.core().heartbeat_period_ms()
    }

    pub fn is_alive(&self) -> bool {
        self.core().is_alive()
    }

    /// Link-level address (simulator endpoint id or socket address).
    pub fn link_addr(&self) -> LinkAddr {
        self.core().link_addr()
    }

    /// Current participant clock in microseconds.
    pub fn now_us(&self) -> u64 {
        self.core().now_us()
    }

    pub fn create_topic(
        &self,
        name: &str,
        descriptor: TypeDescriptor,
    ) -> Result<Topic, DcpsError> {
        self.guard_reentrancy()?;
        self.core().create_topic(name, descriptor)
    }

    pub fn create_publisher(&self, group_data: Vec<u8>) -> Result<Publisher, DcpsError> {
        self.create_publisher_with_presentation(
            group_data,
            Presentation {
                coherent_access: false,
                access_scope: PresentationScope::Instance,
            },
        )
    }

    pub fn create_publisher_with_presentation(
        &self,
        group_data: Vec<u8>,
        presentation: Presentation,
    ) -> Result<Publisher, DcpsError> {
        self.guard_reentrancy()?;
        let entity = self.core().create_publisher(group_data, presentation)?;
        Ok(Publisher {
            participant: self.clone(),
            entity,
        })
    }

    pub fn create_subscriber(&self, group_data: Vec<u8>) -> Result<Subscriber, DcpsError> {
        self.create_subscriber_with_presentation(
            group_data,
            Presentation {
                coherent_access: false,
                access_scope: PresentationScope::Instance,
            },
        )
    }

    pub fn create_subscriber_with_presentation(
        &self,
        group_data: Vec<u8>,
        presentation: Presentation,
    ) -> Result<Subscriber, DcpsError> {
        self.guard_reentrancy()?;
        let entity = self.core().create_subscriber(group_data, presentation)?;
        Ok(Subscriber {
            participant: self.clone(),
            entity,
        })
    }

    /// Parses and type-checks a filter expression against a topic.
    pub fn create_content_filtered_topic(
        &self,
        topic: &Topic,
        filter_text: &str,
    ) -> Result<FilteredTopic, DcpsError> {
        let expression = FilterExpression::parse(filter_text, topic.descriptor())?;
        Ok(FilteredTopic {
            topic: topic.clone(),
            expression,
            text: filter_text.to_string(),
        })
    }

    /// Deletes the participant and every child entity.
    pub fn delete(&self) -> Result<(), DcpsError> {
        self.guard_reentrancy()?;
        self.core().delete_participant();
        self.shared.listeners.lock().expect("listener lock").clear();
        Ok(())
    }

    /// Drives the protocol engine to `now_ms` (virtual or wall-clock
    /// milliseconds) and dispatches any listener callbacks that fired.
    pub fn tick(&self, now_ms: u64) {
        let events = self.core().tick(now_ms);
        self.dispatch(events);
    }

    fn dispatch(&self, events: Vec<PendingEvent>) {
        if events.is_empty() {
            return;
        }
        {
            let mut dispatching = self.shared.dispatching.lock().expect("dispatch lock");
            *dispatching = Some(std::thread::current().id());
        }
        for (entity, kind) in events {
            let snapshot = match self.core().status_of(entity) {
                Ok(status) => status,
                Err(_) => continue, // entity deleted since the event fired
            };
            let mut listeners = self.shared.listeners.lock().expect("listener lock");
            if let Some(hooks) = listeners.get_mut(&entity) {
                if let Some(hook) = hooks.hook_for(kind) {
                    hook(&snapshot);
                }
            }
        }
        let mut dispatching = self.shared.dispatching.lock().expect("dispatch lock");
        *dispatching = None;
    }

    /// Spawns a background thread ticking this participant on the wall
    /// clock (realtime mode). The thread stops when the participant is
    /// deleted or all handles are dropped.
    pub fn spawn_ticker(&self, period_ms: u64) {
        let weak = Arc::downgrade(&self.shared);
        std::thread::spawn(move || {
            let start = std::time::Instant::now();
            loop {
                let Some(shared) = weak.upgrade() else { break };
                let participant = DomainParticipant { shared };
                if !participant.is_alive() {
                    break;
                }
                participant.tick(start.elapsed().as_millis() as u64);
                std::thread::sleep(std::time::Duration::from_millis(period_ms));
            }
        });
    }
}

/// Factory for data writers; owns suspension and coherent-set scope.
#[derive(Clone)]
pub struct Publisher {
    participant: DomainParticipant,
    entity: EntityId,
}

impl Publisher {
    pub fn entity(&self) -> EntityId {
        self.entity
    }

    pub fn create_writer(
        &self,
        topic: &Topic,
        qos: QosProfile,
        listener: Option<ListenerHooks>,
    ) -> Result<DataWriter, DcpsError> {
        self.participant.guard_reentrancy()?;
        let entity = self
            .participant
            .core()
            .create_writer(self.entity, topic, qos, None)?;
        if let Some(hooks) = listener {
            self.participant
                .shared
                .listeners
                .lock()
                .expect("listener lock")
                .insert(entity, hooks);
        }
        Ok(DataWriter {
            participant: self.participant.clone(),
            entity,
        })
    }

    pub fn suspend_publication(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().suspend_publication(self.entity)
    }

    pub fn resume_publication(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().resume_publication(self.entity)
    }

    pub fn begin_coherent_changes(&self) -> Result<u32, DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().begin_coherent_changes(self.entity)
    }

    pub fn end_coherent_changes(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().end_coherent_changes(self.entity)
    }

    pub fn delete(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().delete_publisher(self.entity)
    }
}

/// Factory for data readers.
#[derive(Clone)]
pub struct Subscriber {
    participant: DomainParticipant,
    entity: EntityId,
}

impl Subscriber {
    pub fn entity(&self) -> EntityId {
        self.entity
    }

    pub fn create_reader(
        &self,
        topic: impl Into<TopicRef>,
        qos: QosProfile,
        listener: Option<ListenerHooks>,
    ) -> Result<DataReader, DcpsError> {
        self.participant.guard_reentrancy()?;
        let entity =
            self.participant
                .core()
                .create_reader(self.entity, topic.into(), qos)?;
        if let Some(hooks) = listener {
            self.participant
                .shared
                .listeners
                .lock()
                .expect("listener lock")
                .insert(entity, hooks);
        }
        Ok(DataReader {
            participant: self.participant.clone(),
            entity,
        })
    }

    pub fn delete(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().delete_subscriber(self.entity)
    }
}

#[derive(Clone)]
pub struct DataWriter {
    participant: DomainParticipant,
    entity: EntityId,
}

impl DataWriter {
    pub fn guid(&self) -> Guid {
        Guid::new(self.participant.guid().prefix, self.entity)
    }

    pub fn entity(&self) -> EntityId {
        self.entity
    }

    /// Writes one sample. The timestamp defaults to the participant clock.
    pub fn write(
        &self,
        values: &[FieldValue],
        timestamp_us: Option<u64>,
    ) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant
            .core()
            .write(self.entity, values, timestamp_us)
    }

    pub fn get_status(&self) -> Result<StatusSet, DcpsError> {
        self.participant.core().status_of(self.entity)
    }

    pub fn matched_subscriptions(&self) -> Result<Vec<MatchedEndpoint>, DcpsError> {
        self.participant.core().matched_subscriptions(self.entity)
    }

    /// True when every matched reliable reader has acknowledged everything
    /// relevant this writer has disseminated.
    pub fn is_fully_acknowledged(&self) -> Result<bool, DcpsError> {
        self.participant.core().writer_fully_acknowledged(self.entity)
    }

    /// Sequence numbers currently retained in the writer history.
    pub fn history_sequences(&self) -> Result<Vec<u64>, DcpsError> {
        self.participant.core().writer_history_sequences(self.entity)
    }

    pub fn retransmission_count(&self) -> Result<u64, DcpsError> {
        self.participant.core().writer_retransmissions(self.entity)
    }

    /// Per matched reader: the relevant-sample stream checksum.
    pub fn pair_streams(&self) -> Result<Vec<PairStream>, DcpsError> {
        self.participant.core().writer_pair_streams(self.entity)
    }

    pub fn delete(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().delete_writer(self.entity)
    }
}

#[derive(Clone)]
pub struct DataReader {
    participant: DomainParticipant,
    entity: EntityId,
}

impl DataReader {
    pub fn guid(&self) -> Guid {
        Guid::new(self.participant.guid().prefix, self.entity)
    }

    pub fn entity(&self) -> EntityId {
        self.entity
    }

    /// Removes and returns up to `max_samples` from the reader cache.
    pub fn take(
        &self,
        max_samples: usize,
    ) -> Result<Vec<(Vec<FieldValue>, SampleInfo)>, DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant
            .core()
            .fetch_samples(self.entity, max_samples, true)
    }

    /// Like `take` but leaves the samples in the cache.
    pub fn read(
        &self,
        max_samples: usize,
    ) -> Result<Vec<(Vec<FieldValue>, SampleInfo)>, DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant
            .core()
            .fetch_samples(self.entity, max_samples, false)
    }

    pub fn get_status(&self) -> Result<StatusSet, DcpsError> {
        self.participant.core().status_of(self.entity)
    }

    pub fn matched_publications(&self) -> Result<Vec<MatchedEndpoint>, DcpsError> {
        self.participant.core().matched_publications(self.entity)
    }

    pub fn delivery_stats(&self) -> Result<DeliveryStats, DcpsError> {
        self.participant.core().reader_delivery_stats(self.entity)
    }

    /// Per matched writer: the delivered-sample stream checksum.
    pub fn pair_streams(&self) -> Result<Vec<PairStream>, DcpsError> {
        self.participant.core().reader_pair_streams(self.entity)
    }

    /// Per-instance cache depths (history-bound checks).
    pub fn cache_depths(&self) -> Result<Vec<usize>, DcpsError> {
        self.participant.core().reader_cache_depths(self.entity)
    }

    pub fn delete(&self) -> Result<(), DcpsError> {
        self.participant.guard_reentrancy()?;
        self.participant.core().delete_reader(self.entity)
    }
}
