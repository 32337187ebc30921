//! One player's game session: entity ownership, publication, and the
//! area-of-interest subscription feeding its world view.

use crate::dcps::participant::{DataReader, DataWriter, DomainParticipant, Publisher, Subscriber};
use crate::dcps::qos::{Presentation, PresentationScope, QosProfile};
use crate::dcps::topic::Topic;
use crate::game::view::{EntityState, WorldView, ENTITY_TOPIC};
use crate::game::world::{GameError, WorldConfig};
use std::collections::{BTreeMap, BTreeSet};

/// Default staleness window: entities quiet for this long leave the view.
pub const DEFAULT_STALENESS_TIMEOUT_US: u64 = 2_000_000;

pub struct GameSession {
    participant: DomainParticipant,
    #[allow(dead_code)]
    topic: Topic,
    publisher: Publisher,
    writer: DataWriter,
    subscriber: Subscriber,
    reader: Option<DataReader>,
    /// Replaced readers linger until the replacement has matched at least
    /// as many publications, then are deleted.
    retiring: Vec<(DataReader, u32)>,
    world: WorldConfig,
    reader_qos: QosProfile,
    view: WorldView,
    owned: BTreeMap<u64, EntityState>,
    session_id: u32,
    next_entity: u32,
    staleness_timeout_us: u64,
}

impl GameSession {
    /// Builds a session on an existing participant. The entity-state writer
    /// offers coherent GROUP presentation so region handoffs publish
    /// atomically; readers request coherent TOPIC presentation.
    pub fn new(
        participant: DomainParticipant,
        world: WorldConfig,
        session_id: u32,
        qos: QosProfile,
    ) -> Result<GameSession, GameError> {
        world.validate()?;
        let topic = participant.create_topic(ENTITY_TOPIC, EntityState::descriptor())?;
        let writer_presentation = Presentation {
            coherent_access: true,
            access_scope: PresentationScope::Group,
        };
        let reader_presentation = Presentation {
            coherent_access: true,
            access_scope: PresentationScope::Topic,
        };
        let publisher =
            participant.create_publisher_with_presentation(Vec::new(), writer_presentation)?;
        let writer_qos = QosProfile {
            presentation: writer_presentation,
            ..qos.clone()
        };
        let writer = publisher.create_writer(&topic, writer_qos, None)?;
        let subscriber = participant
            .create_subscriber_with_presentation(Vec::new(), reader_presentation)?;
        let reader_qos = QosProfile {
            presentation: reader_presentation,
            ..qos
        };
        Ok(GameSession {
            participant,
            topic,
            publisher,
            writer,
            subscriber,
            reader: None,
            retiring: Vec::new(),
            world,
            reader_qos,
            view: WorldView::new(BTreeSet::new()),
            owned: BTreeMap::new(),
            session_id,
            next_entity: 1,
            staleness_timeout_us: DEFAULT_STALENESS_TIMEOUT_US,
        })
    }

    pub fn set_staleness_timeout_us(&mut self, timeout_us: u64) {
        self.staleness_timeout_us = timeout_us;
    }

    pub fn participant(&self) -> &DomainParticipant {
        &self.participant
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn view(&self) -> &WorldView {
        &self.view
    }

    pub fn reader(&self) -> Option<&DataReader> {
        self.reader.as_ref()
    }

    pub fn writer(&self) -> &DataWriter {
        &self.writer
    }

    pub fn owned_state(&self, entity_id: u64) -> Option<&EntityState> {
        self.owned.get(&entity_id)
    }

    /// Creates a new owned entity at a position and publishes its first
    /// state (version 1).
    pub fn spawn(&mut self, kind: u32, x: f64, y: f64) -> Result<u64, GameError> {
        let region = self.world.region_of(x, y)?;
        let entity_id = ((self.session_id as u64) << 32) | self.next_entity as u64;
        self.next_entity += 1;
        let state = EntityState {
            entity_id,
            kind,
            region,
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            version: 0,
        };
        self.owned.insert(entity_id, state);
        self.publish_update(state)?;
        Ok(entity_id)
    }

    /// Publishes a same-region state update for an owned entity. The
    /// version counter is writer-local: it always increments from the held
    /// state regardless of what the caller passed.
    pub fn publish_update(&mut self, state: EntityState) -> Result<(), GameError> {
        let held = *self
            .owned
            .get(&state.entity_id)
            .ok_or(GameError::NotOwner(state.entity_id))?;
        let actual = self.world.region_of(state.x, state.y)?;
        if state.region != actual {
            return Err(GameError::RegionMismatch {
                stated: state.region,
                actual,
            });
        }
        if held.version > 0 && state.region != held.region {
            return Err(GameError::RegionChanged {
                from: held.region,
                to: state.region,
            });
        }
        let next = EntityState {
            version: held.version + 1,
            ..state
        };
        self.writer.write(&next.to_values(), None)?;
        self.owned.insert(next.entity_id, next);
        Ok(())
    }

    /// Moves an owned entity across a region boundary, publishing the
    /// region/position change as one coherent set so no subscriber can
    /// observe a stale region/position pair.
    pub fn handoff(&mut self, entity_id: u64, new_x: f64, new_y: f64) -> Result<(), GameError> {
        let held = *self
            .owned
            .get(&entity_id)
            .ok_or(GameError::NotOwner(entity_id))?;
        let new_region = self.world.region_of(new_x, new_y)?;
        if new_region == held.region {
            return Err(GameError::SameRegion(held.region));
        }
        let next = EntityState {
            region: new_region,
            x: new_x,
            y: new_y,
            version: held.version + 1,
            ..held
        };
        self.publisher.begin_coherent_changes()?;
        let result = self.writer.write(&next.to_values(), None);
        self.publisher.end_coherent_changes()?;
        result?;
        self.owned.insert(entity_id, next);
        Ok(())
    }

    /// Convenience dispatcher: same-region moves publish plainly, region
    /// crossings go through the coherent handoff.
    pub fn move_to(
        &mut self,
        entity_id: u64,
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
    ) -> Result<(), GameError> {
        let held = *self
            .owned
            .get(&entity_id)
            .ok_or(GameError::NotOwner(entity_id))?;
        let region = self.world.region_of(x, y)?;
        if region == held.region {
            self.publish_update(EntityState {
                region,
                x,
                y,
                vx,
                vy,
                ..held
            })
        } else {
            // Velocity rides along on the handoff sample.
            self.owned.insert(
                entity_id,
                EntityState {
                    vx,
                    vy,
                    ..held
                },
            );
            self.handoff(entity_id, x, y)
        }
    }

    /// Subscribes to a set of regions through one content-filtered reader.
    /// Resubscribing replaces the filter: the new reader is created first
    /// and the old one retires once the new one has matched as widely.
    pub fn subscribe_aoi(&mut self, regions: &BTreeSet<u32>) -> Result<(), GameError> {
        if regions.is_empty() {
            return Err(GameError::InvalidRegion("empty region set".to_string()));
        }
        let count = self.world.region_count();
        if let Some(&bad) = regions.iter().find(|&&r| r >= count) {
            return Err(GameError::InvalidRegion(format!(
                "region {bad} outside 0..{count}"
            )));
        }
        let text = regions
            .iter()
            .map(|r| format!("region == {r}"))
            .collect::<Vec<_>>()
            .join(" OR ");
        let filtered = self
            .participant
            .create_content_filtered_topic(&self.topic, &text)?;
        let new_reader =
            self.subscriber
                .create_reader(filtered, self.reader_qos.clone(), None)?;
        if let Some(old) = self.reader.take() {
            let target = old
                .get_status()
                .map(|s| s.subscription_matched.current_count)
                .unwrap_or(0);
            self.retiring.push((old, target));
        }
        self.reader = Some(new_reader);
        self.view.set_regions(regions.clone());
        Ok(())
    }

    /// Drains delivered samples into the world view, retires replaced
    /// readers, and expires stale entities. Call after ticking the
    /// participant.
    pub fn pump(&mut self) -> Result<(), GameError> {
        let now_us = self.participant.now_us();
        let mut drained: Vec<(Vec<crate::dcps::types::FieldValue>, crate::dcps::sample::SampleInfo)> =
            Vec::new();
        if let Some(reader) = &self.reader {
            loop {
                let batch = reader.take(256)?;
                if batch.is_empty() {
                    break;
                }
                drained.extend(batch);
            }
        }
        let new_matched = self
            .reader
            .as_ref()
            .and_then(|r| r.get_status().ok())
            .map(|s| s.subscription_matched.current_count)
            .unwrap_or(0);
        let mut still_retiring = Vec::new();
        for (old, target) in self.retiring.drain(..) {
            loop {
                let batch = old.take(256)?;
                if batch.is_empty() {
                    break;
                }
                drained.extend(batch);
            }
            if new_matched >= target {
                old.delete()?;
            } else {
                still_retiring.push((old, target));
            }
        }
        self.retiring = still_retiring;
        for (values, info) in drained {
            if let Some(state) = EntityState::from_values(&values) {
                self.view
                    .apply_update(state, info.source_timestamp_us, info.writer_guid);
            }
        }
        self.view.expire_stale(now_us, self.staleness_timeout_us);
        Ok(())
    }
}
