//! Two-participant scenarios over the simulated network: discovery and
//! matching, QoS enforcement, group data, suspension, coherent sets,
//! liveliness, and listener dispatch.

use mdds_core::dcps::qos::{History, Presentation, PresentationScope};
use mdds_core::dcps::status::ListenerHooks;
use mdds_core::transport::netsim::{NetSimConfig, SharedSimNetwork, SimNetwork};
use mdds_core::{
    DcpsError, DomainParticipant, FieldKind, FieldValue, QosProfile,
    TypeDescriptor,
};
use mdds_core::dcps::participant::ParticipantConfig;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

fn entity_descriptor() -> TypeDescriptor {
    TypeDescriptor::new(
        vec![
            ("entity_id", FieldKind::U64),
            ("region", FieldKind::U32),
            ("x", FieldKind::F64),
        ],
        vec!["entity_id"],
    )
    .unwrap()
}

fn participant(net: &SharedSimNetwork, n: u8) -> DomainParticipant {
    DomainParticipant::create_sim(
        ParticipantConfig {
            lease_ms: 300,
            guid_prefix: Some([n; 12]),
            ..ParticipantConfig::default()
        },
        net,
    )
    .unwrap()
}

fn advance(net: &SharedSimNetwork, participants: &[&DomainParticipant], from: u64, to: u64) {
    for now in from..=to {
        net.pump(now);
        for p in participants {
            p.tick(now);
        }
    }
}

fn sample(id: u64, region: u32, x: f64) -> Vec<FieldValue> {
    vec![
        FieldValue::U64(id),
        FieldValue::U32(region),
        FieldValue::F64(x),
    ]
}

#[test]
fn participants_match_and_deliver_within_one_lease() {
    let net = SimNetwork::new(NetSimConfig {
        latency_mean_ms: 5,
        ..NetSimConfig::default()
    });
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic_a, QosProfile::reliable(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber
        .create_reader(topic_b, QosProfile::reliable(), None)
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 300);
    assert_eq!(writer.get_status().unwrap().publication_matched.current_count, 1);
    assert_eq!(reader.get_status().unwrap().subscription_matched.current_count, 1);

    writer.write(&sample(7, 3, 1.5), None).unwrap();
    advance(&net, &[&alice, &bob], 301, 330);
    let taken = reader.take(10).unwrap();
    assert_eq!(taken.len(), 1);
    assert_eq!(taken[0].0, sample(7, 3, 1.5));
    assert_eq!(taken[0].1.sequence_number, 1);
    assert_eq!(taken[0].1.writer_guid, writer.guid());
}

#[test]
fn group_data_is_visible_on_the_remote_side() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let guild_tag = vec![0xabu8; 32];
    let publisher = alice.create_publisher(guild_tag.clone()).unwrap();
    let _writer = publisher
        .create_writer(&topic_a, QosProfile::default(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(b"squad".to_vec()).unwrap();
    let reader = subscriber
        .create_reader(topic_b, QosProfile::default(), None)
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 200);
    let matched = reader.matched_publications().unwrap();
    assert_eq!(matched.len(), 1);
    assert_eq!(matched[0].group_data, guild_tag);
    let matched_subs = _writer.matched_subscriptions().unwrap();
    assert_eq!(matched_subs.len(), 1);
    assert_eq!(matched_subs[0].group_data, b"squad".to_vec());
}

#[test]
fn incompatible_qos_is_reported_not_matched() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    // BEST_EFFORT writer cannot satisfy a RELIABLE reader.
    let writer = publisher
        .create_writer(&topic_a, QosProfile::default(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber
        .create_reader(topic_b, QosProfile::reliable(), None)
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 200);
    assert_eq!(writer.get_status().unwrap().publication_matched.current_count, 0);
    assert_eq!(reader.get_status().unwrap().subscription_matched.current_count, 0);
    assert_eq!(writer.get_status().unwrap().incompatible_qos, 1);
    assert_eq!(reader.get_status().unwrap().incompatible_qos, 1);
}

#[test]
fn different_type_descriptors_never_match() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let other = TypeDescriptor::new(
        vec![("entity_id", FieldKind::U64), ("hp", FieldKind::U32)],
        vec!["entity_id"],
    )
    .unwrap();
    let topic_b = bob.create_topic("EntityState", other).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic_a, QosProfile::default(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber
        .create_reader(topic_b, QosProfile::default(), None)
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 300);
    assert_eq!(writer.get_status().unwrap().publication_matched.current_count, 0);
    assert_eq!(reader.get_status().unwrap().subscription_matched.current_count, 0);
    // Not a QoS problem either: types simply differ.
    assert_eq!(writer.get_status().unwrap().incompatible_qos, 0);
}

#[test]
fn subscriber_deletion_unmatches_within_three_heartbeat_periods() {
    let net = SimNetwork::new(NetSimConfig {
        latency_mean_ms: 2,
        ..NetSimConfig::default()
    });
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic_a, QosProfile::reliable(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let _reader = subscriber
        .create_reader(topic_b, QosProfile::reliable(), None)
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 200);
    assert_eq!(writer.get_status().unwrap().publication_matched.current_count, 1);

    subscriber.delete().unwrap();
    let hb = alice.heartbeat_period_ms();
    advance(&net, &[&alice, &bob], 201, 200 + 3 * hb);
    assert_eq!(writer.get_status().unwrap().publication_matched.current_count, 0);
}

#[test]
fn lifecycle_errors_after_deletion() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let topic = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic, QosProfile::default(), None)
        .unwrap();
    publisher.delete().unwrap();
    assert_eq!(
        writer.write(&sample(1, 0, 0.0), None),
        Err(DcpsError::EntityDeleted)
    );
    alice.delete().unwrap();
    assert_eq!(
        alice.create_publisher(Vec::new()).err(),
        Some(DcpsError::EntityDeleted)
    );
}

#[test]
fn participant_preconditions() {
    let net = SimNetwork::new(NetSimConfig::default());
    let result = DomainParticipant::create_sim(
        ParticipantConfig {
            lease_ms: 50,
            ..ParticipantConfig::default()
        },
        &net,
    );
    assert!(matches!(result, Err(DcpsError::Precondition(_))));

    let a = participant(&net, 1);
    let b = participant(&net, 2);
    assert_ne!(a.guid(), b.guid());
}

#[test]
fn suspend_buffers_and_resume_flushes_in_order() {
    let net = SimNetwork::new(NetSimConfig {
        latency_mean_ms: 2,
        ..NetSimConfig::default()
    });
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let qos = QosProfile::reliable().with_history(History::KeepAll);
    let writer = publisher.create_writer(&topic_a, qos.clone(), None).unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber.create_reader(topic_b, qos, None).unwrap();
    advance(&net, &[&alice, &bob], 0, 200);

    publisher.suspend_publication().unwrap();
    publisher.suspend_publication().unwrap(); // idempotent
    writer.write(&sample(1, 0, 1.0), Some(201_000)).unwrap();
    writer.write(&sample(1, 0, 2.0), Some(202_000)).unwrap();
    let hb = alice.heartbeat_period_ms();
    advance(&net, &[&alice, &bob], 201, 200 + 10 * hb);
    assert!(reader.take(10).unwrap().is_empty());

    publisher.resume_publication().unwrap();
    advance(&net, &[&alice, &bob], 201 + 10 * hb, 300 + 10 * hb);
    let taken = reader.take(10).unwrap();
    let xs: Vec<f64> = taken
        .iter()
        .map(|(values, _)| match values[2] {
            FieldValue::F64(x) => x,
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(xs, vec![1.0, 2.0]);
    // Resume without suspend is a no-op.
    publisher.resume_publication().unwrap();
}

#[test]
fn coherent_set_is_all_or_nothing_under_loss() {
    let net = SimNetwork::new(NetSimConfig {
        latency_mean_ms: 2,
        ..NetSimConfig::default()
    });
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let presentation = Presentation {
        coherent_access: true,
        access_scope: PresentationScope::Group,
    };
    let publisher = alice
        .create_publisher_with_presentation(Vec::new(), presentation)
        .unwrap();
    let qos = QosProfile::reliable()
        .with_history(History::KeepAll)
        .with_presentation(true, PresentationScope::Group);
    let writer1 = publisher.create_writer(&topic_a, qos.clone(), None).unwrap();
    let writer2 = publisher.create_writer(&topic_a, qos.clone(), None).unwrap();
    let subscriber = bob
        .create_subscriber_with_presentation(
            Vec::new(),
            Presentation {
                coherent_access: true,
                access_scope: PresentationScope::Topic,
            },
        )
        .unwrap();
    let reader_qos = QosProfile::reliable()
        .with_history(History::KeepAll)
        .with_presentation(true, PresentationScope::Topic);
    let reader = subscriber.create_reader(topic_b, reader_qos, None).unwrap();
    advance(&net, &[&alice, &bob], 0, 200);

    // Empty set: no samples, no error.
    publisher.begin_coherent_changes().unwrap();
    publisher.end_coherent_changes().unwrap();

    // Block the link mid-set so the initial bundle is lost entirely, then
    // let retransmission recover it: the reader must show both or none.
    let set_id = publisher.begin_coherent_changes().unwrap();
    assert!(set_id > 0);
    writer1.write(&sample(1, 0, 10.0), Some(201_000)).unwrap();
    writer2.write(&sample(2, 0, 20.0), Some(201_500)).unwrap();
    if let mdds_core::transport::link::LinkAddr::Sim(id) = alice.link_addr() {
        net.set_blocked(id, true);
        publisher.end_coherent_changes().unwrap();
        advance(&net, &[&alice, &bob], 201, 220);
        assert!(reader.take(10).unwrap().is_empty());
        net.set_blocked(id, false);
    } else {
        panic!("expected sim link");
    }
    advance(&net, &[&alice, &bob], 221, 500);
    let taken = reader.take(10).unwrap();
    assert_eq!(taken.len(), 2, "both members or none");
    assert!(taken.iter().all(|(_, info)| info.coherent_set_id == Some(set_id)));

    // Nested begin is rejected.
    publisher.begin_coherent_changes().unwrap();
    assert!(matches!(
        publisher.begin_coherent_changes(),
        Err(DcpsError::Precondition(_))
    ));
    publisher.end_coherent_changes().unwrap();
}

#[test]
fn coherent_requires_publisher_offering_it() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    assert!(matches!(
        publisher.begin_coherent_changes(),
        Err(DcpsError::Precondition(_))
    ));
}

#[test]
fn silenced_participant_detected_not_alive_at_exact_tick() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1); // lease 300 ms
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic_a, QosProfile::reliable(), None)
        .unwrap();
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber
        .create_reader(topic_b, QosProfile::reliable(), None)
        .unwrap();
    advance(&net, &[&alice, &bob], 0, 400);
    assert_eq!(reader.get_status().unwrap().liveliness_changed.alive_count, 1);

    // Keep traffic flowing so bob's last-heard tracks alice tightly, then
    // silence alice right after a write.
    writer.write(&sample(1, 0, 1.0), None).unwrap();
    advance(&net, &[&alice, &bob], 401, 410);
    let silence_at = 410u64;
    if let mdds_core::transport::link::LinkAddr::Sim(id) = alice.link_addr() {
        net.set_blocked(id, true);
    }
    // Bob heard alice last at some tick t0 <= 410; detection happens at the
    // first tick strictly past t0 + 3*lease. Scan for the transition.
    let mut detected_at = None;
    for now in silence_at + 1..silence_at + 3 * 300 + 100 {
        net.pump(now);
        alice.tick(now);
        bob.tick(now);
        let status = reader.get_status().unwrap();
        if status.liveliness_changed.not_alive_count == 1 {
            detected_at = Some(now);
            break;
        }
    }
    let detected_at = detected_at.expect("liveliness loss detected");
    // Bound: within 3x lease + one heartbeat period of the silencing.
    assert!(detected_at <= silence_at + 3 * 300 + alice.heartbeat_period_ms());
    let status = reader.get_status().unwrap();
    assert_eq!(status.liveliness_changed.alive_count, 0);
    assert_eq!(status.subscription_matched.current_count, 0);
}

#[test]
fn listeners_fire_once_per_match_and_reject_reentrancy() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let bob = participant(&net, 2);
    let topic_a = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let topic_b = bob.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic_a, QosProfile::default(), None)
        .unwrap();

    let match_count = Arc::new(AtomicU64::new(0));
    let data_count = Arc::new(AtomicU64::new(0));
    let reentrancy_errors = Arc::new(AtomicU64::new(0));
    let subscriber = bob.create_subscriber(Vec::new()).unwrap();
    let bob_for_hook = bob.clone();
    let hooks = ListenerHooks::none()
        .on_subscription_matched({
            let count = match_count.clone();
            move |status| {
                assert_eq!(status.subscription_matched.current_count, 1);
                count.fetch_add(1, Ordering::SeqCst);
            }
        })
        .on_data_available({
            let count = data_count.clone();
            let errors = reentrancy_errors.clone();
            move |_| {
                count.fetch_add(1, Ordering::SeqCst);
                // Mutating API calls from a callback are rejected.
                if bob_for_hook.create_publisher(Vec::new()).err()
                    == Some(DcpsError::Reentrancy)
                {
                    errors.fetch_add(1, Ordering::SeqCst);
                }
            }
        });
    let reader = subscriber
        .create_reader(topic_b, QosProfile::default(), Some(hooks))
        .unwrap();

    advance(&net, &[&alice, &bob], 0, 200);
    assert_eq!(match_count.load(Ordering::SeqCst), 1);

    writer.write(&sample(5, 1, 0.0), None).unwrap();
    advance(&net, &[&alice, &bob], 201, 260);
    assert!(data_count.load(Ordering::SeqCst) >= 1);
    assert_eq!(
        reentrancy_errors.load(Ordering::SeqCst),
        data_count.load(Ordering::SeqCst)
    );
    assert_eq!(reader.take(5).unwrap().len(), 1);
}

#[test]
fn read_is_repeatable_take_consumes() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let topic = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic, QosProfile::default().with_history(History::KeepLast(4)), None)
        .unwrap();
    let subscriber = alice.create_subscriber(Vec::new()).unwrap();
    let reader = subscriber
        .create_reader(
            topic.clone(),
            QosProfile::default().with_history(History::KeepLast(4)),
            None,
        )
        .unwrap();
    // Local match: no wire involved.
    writer.write(&sample(1, 0, 1.0), Some(1_000)).unwrap();
    writer.write(&sample(1, 0, 2.0), Some(2_000)).unwrap();
    alice.tick(10);
    let read = reader.read(10).unwrap();
    let taken = reader.take(10).unwrap();
    assert_eq!(read, taken);
    assert!(reader.take(10).unwrap().is_empty());
    assert!(matches!(reader.take(0), Err(DcpsError::Precondition(_))));
}

#[test]
fn keep_last_writer_history_and_sequence_numbers() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let topic = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let writer = publisher
        .create_writer(&topic, QosProfile::default(), None)
        .unwrap();
    for x in 1..=3 {
        writer.write(&sample(9, 0, x as f64), None).unwrap();
    }
    // KEEP_LAST(1): only the third remains retained.
    assert_eq!(writer.history_sequences().unwrap(), vec![3]);
}

#[test]
fn keep_all_resource_limit_hits_at_bound() {
    let net = SimNetwork::new(NetSimConfig::default());
    let alice = participant(&net, 1);
    let topic = alice.create_topic("EntityState", entity_descriptor()).unwrap();
    let publisher = alice.create_publisher(Vec::new()).unwrap();
    let qos = QosProfile::default()
        .with_history(History::KeepAll)
        .with_resource_limit(256);
    let writer = publisher.create_writer(&topic, qos, None).unwrap();
    for i in 0..256 {
        writer.write(&sample(9, 0, i as f64), None).unwrap();
    }
    assert!(matches!(
        writer.write(&sample(9, 0, 999.0), None),
        Err(DcpsError::ResourceLimit(_))
    ));
}
