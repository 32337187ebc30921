//! Scenario execution: bot sessions over the simulated (or real) network,
//! deterministic virtual-time driving, drain-to-quiescence, and metrics
//! assembly.

use crate::metrics::{
    AssertionResult, GroupDivergence, LivelinessDetection, MetricsReport, PairAccounting,
    SimCounters, SubscriberMetrics,
};
use crate::scenario::ScenarioConfig;
use mdds_core::dcps::guid::GuidPrefix;
use mdds_core::dcps::participant::{DomainParticipant, ParticipantConfig};
use mdds_core::game::session::GameSession;
use mdds_core::transport::link::LinkAddr;
use mdds_core::transport::netsim::{SharedSimNetwork, SimNetwork};
use mdds_core::transport::udp::UdpConfig;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

#[derive(Debug)]
pub enum ScenarioError {
    Config(String),
    Internal(String),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::Config(message) => write!(f, "config error: {message}"),
            ScenarioError::Internal(message) => write!(f, "scenario failed: {message}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

pub struct RunOutput {
    pub report: MetricsReport,
    pub wall_ms: u64,
}

const BOT_SPEED_MAX: f64 = 40.0; // world units per second
const BOT_ACCEL: f64 = 15.0;

struct Bot {
    entity_id: u64,
    rng: ChaCha8Rng,
    vx: f64,
    vy: f64,
}

impl Bot {
    fn step(&mut self, session: &mut GameSession, dt_s: f64) {
        let held = *session
            .owned_state(self.entity_id)
            .expect("bot owns its entity");
        self.vx = (self.vx + self.rng.gen_range(-BOT_ACCEL..BOT_ACCEL) * dt_s)
            .clamp(-BOT_SPEED_MAX, BOT_SPEED_MAX);
        self.vy = (self.vy + self.rng.gen_range(-BOT_ACCEL..BOT_ACCEL) * dt_s)
            .clamp(-BOT_SPEED_MAX, BOT_SPEED_MAX);
        let world = *session.world();
        let x = (held.x + self.vx * dt_s).clamp(0.0, world.width - 1e-6);
        let y = (held.y + self.vy * dt_s).clamp(0.0, world.height - 1e-6);
        session
            .move_to(self.entity_id, x, y, self.vx, self.vy)
            .expect("bot moves stay in bounds");
    }
}

fn player_prefix(seed: u64, index: u32) -> [u8; 12] {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(index as u64 + 1),
    );
    let mut bytes = [0u8; 12];
    rng.fill(&mut bytes);
    bytes
}

fn group_regions(config: &ScenarioConfig, group: u32) -> BTreeSet<u32> {
    let count = config.world.region_count();
    let mut rng = ChaCha8Rng::seed_from_u64(
        config
            .seed
            .wrapping_mul(0xa076_1d64_78bd_642f)
            .wrapping_add(group as u64 + 1),
    );
    let mut regions: Vec<u32> = (0..count).collect();
    let take = (config.aoi_regions_per_player as usize).min(regions.len());
    for k in 0..take {
        let j = rng.gen_range(k..regions.len());
        regions.swap(k, j);
    }
    regions.into_iter().take(take).collect()
}

/// One virtual-time step: network pump, participant ticks, view pumps,
/// and liveliness-loss observation when faults are active.
#[allow(clippy::too_many_arguments)]
fn step_once(
    net: &SharedSimNetwork,
    now: u64,
    sessions: &mut [GameSession],
    track_liveliness: bool,
    prev_not_alive: &mut [u64],
    silenced_time: &BTreeMap<u32, u64>,
    detections: &mut Vec<LivelinessDetection>,
) {
    net.pump(now);
    for session in sessions.iter() {
        session.participant().tick(now);
    }
    for session in sessions.iter_mut() {
        session.pump().expect("pump");
    }
    if track_liveliness {
        for (i, session) in sessions.iter().enumerate() {
            if let Some(reader) = session.reader() {
                if let Ok(status) = reader.get_status() {
                    let count = status.liveliness_changed.not_alive_count;
                    if count > prev_not_alive[i] {
                        prev_not_alive[i] = count;
                        // Attribute to the most recent silencing.
                        if let Some((&player, &at)) = silenced_time.iter().next_back() {
                            detections.push(LivelinessDetection {
                                silenced_player: player,
                                silenced_at_ms: at,
                                observer: i as u32,
                                detected_at_ms: now,
                            });
                        }
                    }
                }
            }
        }
    }
}

/// Runs a scenario on virtual time: fully deterministic for a fixed
/// config, including the serialized report.
pub fn run_scenario(config: &ScenarioConfig, preset_name: &str) -> Result<RunOutput, ScenarioError> {
    config.validate().map_err(ScenarioError::Config)?;
    let wall_start = std::time::Instant::now();
    let net = SimNetwork::new(config.net.clone());
    let internal = |e: &dyn std::fmt::Display| ScenarioError::Internal(e.to_string());

    let mut sessions: Vec<GameSession> = Vec::with_capacity(config.players as usize);
    let mut bots: Vec<Bot> = Vec::new();
    let mut addrs: Vec<u32> = Vec::new();
    for i in 0..config.players {
        let participant = DomainParticipant::create_sim(
            ParticipantConfig {
                domain_id: 0,
                lease_ms: config.lease_ms,
                guid_prefix: Some(player_prefix(config.seed, i)),
                ..ParticipantConfig::default()
            },
            &net,
        )
        .map_err(|e| internal(&e))?;
        match participant.link_addr() {
            LinkAddr::Sim(id) => addrs.push(id),
            LinkAddr::Udp(_) => unreachable!("sim link"),
        }
        let mut session = GameSession::new(participant, config.world, i, config.qos.profile())
            .map_err(|e| internal(&e))?;
        let group = i / config.aoi_group_size;
        session
            .subscribe_aoi(&group_regions(config, group))
            .map_err(|e| internal(&e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_mul(0x2545_f491_4f6c_dd1d)
                .wrapping_add(i as u64 + 1),
        );
        let x = rng.gen_range(0.0..config.world.width);
        let y = rng.gen_range(0.0..config.world.height);
        let entity_id = session.spawn(0, x, y).map_err(|e| internal(&e))?;
        bots.push(Bot {
            entity_id,
            rng,
            vx: 0.0,
            vy: 0.0,
        });
        sessions.push(session);
    }

    let duration_ms = (config.duration_s * 1000.0).round() as u64;
    let update_period_ms = ((1000.0 / config.update_hz).round() as u64).max(1);
    let dt_s = update_period_ms as f64 / 1000.0;
    let mut silence_at: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for fault in &config.silence {
        silence_at
            .entry((fault.at_s * 1000.0).round() as u64)
            .or_default()
            .push(fault.player);
    }
    let mut silenced: BTreeSet<u32> = BTreeSet::new();
    let mut silenced_time: BTreeMap<u32, u64> = BTreeMap::new();
    let mut detections: Vec<LivelinessDetection> = Vec::new();
    let mut prev_not_alive: Vec<u64> = vec![0; config.players as usize];
    let track_liveliness = !config.silence.is_empty();


    for now in 1..=duration_ms {
        if let Some(players) = silence_at.get(&now) {
            for &player in players {
                net.set_blocked(addrs[player as usize], true);
                silenced.insert(player);
                silenced_time.insert(player, now);
            }
        }
        for (i, bot) in bots.iter_mut().enumerate() {
            if silenced.contains(&(i as u32)) {
                continue;
            }
            let phase = (i as u64 * update_period_ms) / config.players.max(1) as u64;
            if (now + phase) % update_period_ms == 0 {
                bot.step(&mut sessions[i], dt_s);
            }
        }
        step_once(
            &net,
            now,
            &mut sessions,
            track_liveliness,
            &mut prev_not_alive,
            &silenced_time,
            &mut detections,
        );
    }

    // Drain until every live writer is fully acknowledged (reliable), or a
    // fixed settle window (best effort).
    let mut now = duration_ms;
    let drain_deadline = duration_ms + 60_000;
    let mut drain_ok = true;
    if config.qos.is_reliable() {
        loop {
            let pending = sessions.iter().enumerate().any(|(i, session)| {
                !silenced.contains(&(i as u32))
                    && !session.writer().is_fully_acknowledged().unwrap_or(true)
            });
            if !pending && net.in_flight() == 0 {
                break;
            }
            if now >= drain_deadline {
                drain_ok = false;
                break;
            }
            now += 1;
            step_once(
                &net,
                now,
                &mut sessions,
                track_liveliness,
                &mut prev_not_alive,
                &silenced_time,
                &mut detections,
            );
        }
    } else {
        let settle = config.net.latency_mean_ms + config.net.latency_jitter_ms + 1000;
        for _ in 0..settle {
            now += 1;
            step_once(
                &net,
                now,
                &mut sessions,
                track_liveliness,
                &mut prev_not_alive,
                &silenced_time,
                &mut detections,
            );
        }
    }
    let drained_at_ms = now;

    // ------------------------------------------------------------------
    // Metrics
    // ------------------------------------------------------------------
    let prefix_to_player: BTreeMap<GuidPrefix, u32> = (0..config.players)
        .map(|i| (GuidPrefix(player_prefix(config.seed, i)), i))
        .collect();

    let mut subscribers = Vec::new();
    let mut staleness_max = 0u64;
    let mut staleness_weighted_sum = 0u64;
    let mut delivered_total = 0u64;
    for (i, session) in sessions.iter().enumerate() {
        let reader = session.reader().expect("subscribed");
        let stats = reader.delivery_stats().map_err(|e| internal(&e))?;
        let status = reader.get_status().map_err(|e| internal(&e))?;
        staleness_max = staleness_max.max(stats.staleness_max_ms);
        staleness_weighted_sum += stats.staleness_sum_ms;
        delivered_total += stats.delivered;
        subscribers.push(SubscriberMetrics {
            player: i as u32,
            delivered: stats.delivered,
            bytes: stats.bytes,
            staleness_mean_ms: if stats.delivered > 0 {
                stats.staleness_sum_ms as f64 / stats.delivered as f64
            } else {
                0.0
            },
            staleness_max_ms: stats.staleness_max_ms,
            view_entities: session.view().len() as u64,
            sample_lost: status.sample_lost,
        });
    }

    let mut pairs = PairAccounting {
        pairs: 0,
        exact: 0,
        sent: 0,
        delivered: 0,
    };
    let mut retransmissions = 0u64;
    if config.qos.is_reliable() {
        // Reader-side delivered streams indexed by (reader player, writer guid).
        let mut delivered_streams = BTreeMap::new();
        for (j, session) in sessions.iter().enumerate() {
            if silenced.contains(&(j as u32)) {
                continue;
            }
            let reader = session.reader().expect("subscribed");
            for pair in reader.pair_streams().map_err(|e| internal(&e))? {
                delivered_streams.insert((j as u32, pair.peer), pair.checksum);
            }
        }
        for (i, session) in sessions.iter().enumerate() {
            if silenced.contains(&(i as u32)) {
                continue;
            }
            let writer = session.writer();
            retransmissions += writer.retransmission_count().map_err(|e| internal(&e))?;
            for pair in writer.pair_streams().map_err(|e| internal(&e))? {
                let Some(&reader_player) = prefix_to_player.get(&pair.peer.prefix) else {
                    continue;
                };
                if silenced.contains(&reader_player) {
                    continue;
                }
                let delivered = delivered_streams.get(&(reader_player, writer.guid()));
                pairs.pairs += 1;
                pairs.sent += pair.checksum.count;
                if let Some(delivered) = delivered {
                    pairs.delivered += delivered.count;
                    if *delivered == pair.checksum {
                        pairs.exact += 1;
                    }
                }
            }
        }
    } else {
        for (i, session) in sessions.iter().enumerate() {
            if !silenced.contains(&(i as u32)) {
                retransmissions += session
                    .writer()
                    .retransmission_count()
                    .map_err(|e| internal(&e))?;
            }
        }
    }

    let group_count = (config.players + config.aoi_group_size - 1) / config.aoi_group_size;
    let mut divergence = Vec::new();
    for group in 0..group_count {
        let members: Vec<u32> = (0..config.players)
            .filter(|i| i / config.aoi_group_size == group && !silenced.contains(i))
            .collect();
        let mut max_count = 0u64;
        let mut max_pos_error = 0.0f64;
        let mut compared = 0u32;
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                let d = sessions[members[a] as usize]
                    .view()
                    .divergence(sessions[members[b] as usize].view());
                max_count = max_count.max(d.count);
                max_pos_error = max_pos_error.max(d.max_pos_error);
                compared += 1;
            }
        }
        divergence.push(GroupDivergence {
            group,
            members,
            pairs_compared: compared,
            max_count,
            max_pos_error,
        });
    }

    let sim_metrics = net.metrics();
    let staleness_mean = if delivered_total > 0 {
        staleness_weighted_sum as f64 / delivered_total as f64
    } else {
        0.0
    };

    let mut assertions = Vec::new();
    assertions.push(AssertionResult {
        name: "drain_quiesced".to_string(),
        passed: drain_ok,
        detail: format!("drained at {drained_at_ms} ms"),
    });
    if config.qos.is_reliable() {
        assertions.push(AssertionResult {
            name: "reliable_exact_delivery".to_string(),
            passed: pairs.pairs > 0 && pairs.exact == pairs.pairs,
            detail: format!("{}/{} pairs exact", pairs.exact, pairs.pairs),
        });
    } else {
        assertions.push(AssertionResult {
            name: "best_effort_delivered_le_sent".to_string(),
            passed: sim_metrics.delivered <= sim_metrics.sent,
            detail: format!(
                "{} delivered of {} sent",
                sim_metrics.delivered, sim_metrics.sent
            ),
        });
    }
    let convergence_applicable =
        config.qos.is_reliable() || config.net.drop_probability == 0.0;
    if convergence_applicable {
        let worst = divergence
            .iter()
            .map(|g| (g.max_count, g.max_pos_error))
            .fold((0u64, 0.0f64), |acc, v| (acc.0.max(v.0), acc.1.max(v.1)));
        let nonempty = subscribers.iter().any(|s| s.view_entities > 0);
        assertions.push(AssertionResult {
            name: "convergence".to_string(),
            passed: worst == (0, 0.0) && nonempty,
            detail: format!(
                "max divergence ({}, {}), views non-empty: {nonempty}",
                worst.0, worst.1
            ),
        });
    }
    if config.net.drop_probability == 0.0 && config.silence.is_empty() {
        let hb = mdds_core::transport::DEFAULT_HEARTBEAT_PERIOD_MS;
        let bound = config.net.latency_mean_ms + config.net.latency_jitter_ms + hb;
        assertions.push(AssertionResult {
            name: "staleness_bound".to_string(),
            passed: staleness_max <= bound,
            detail: format!("max {staleness_max} ms <= bound {bound} ms"),
        });
    }
    if !config.silence.is_empty() {
        let bound = 3 * config.lease_ms + mdds_core::transport::DEFAULT_HEARTBEAT_PERIOD_MS;
        let all_detected = config.silence.iter().all(|fault| {
            detections
                .iter()
                .any(|d| d.silenced_player == fault.player)
        });
        let within = detections
            .iter()
            .all(|d| d.detected_at_ms.saturating_sub(d.silenced_at_ms) <= bound);
        assertions.push(AssertionResult {
            name: "liveliness_detection".to_string(),
            passed: all_detected && within,
            detail: format!("{} detections, bound {bound} ms", detections.len()),
        });
    }

    let report = MetricsReport {
        preset: preset_name.to_string(),
        players: config.players,
        duration_s: config.duration_s,
        seed: config.seed,
        qos: match config.qos {
            crate::scenario::QosPreset::Reliable => "reliable".to_string(),
            crate::scenario::QosPreset::BestEffort => "best_effort".to_string(),
        },
        drained_at_ms,
        subscribers,
        reliable_pairs: pairs,
        divergence,
        retransmissions,
        staleness_max_ms: staleness_max,
        staleness_mean_ms: staleness_mean,
        sim: SimCounters {
            sent: sim_metrics.sent,
            delivered: sim_metrics.delivered,
            dropped: sim_metrics.dropped,
            bytes_delivered: sim_metrics.bytes_delivered,
        },
        liveliness: detections,
        assertions,
    };
    Ok(RunOutput {
        report,
        wall_ms: wall_start.elapsed().as_millis() as u64,
    })
}

/// Realtime demo mode: wall clock, real UDP sockets on loopback, one
/// thread per player. Reports are not deterministic in this mode.
pub fn run_scenario_realtime(
    config: &ScenarioConfig,
    preset_name: &str,
    base_port: u16,
) -> Result<RunOutput, ScenarioError> {
    config.validate().map_err(ScenarioError::Config)?;
    if !config.silence.is_empty() {
        return Err(ScenarioError::Config(
            "silence faults are simulator-only".to_string(),
        ));
    }
    let wall_start = std::time::Instant::now();
    let internal = |e: &dyn std::fmt::Display| ScenarioError::Internal(e.to_string());
    let udp = UdpConfig {
        base_port,
        ..UdpConfig::default()
    };
    let mut handles = Vec::new();
    for i in 0..config.players {
        let participant = DomainParticipant::create_udp(
            ParticipantConfig {
                domain_id: 0,
                lease_ms: config.lease_ms,
                realtime_clock: true,
                guid_prefix: Some(player_prefix(config.seed, i)),
                ..ParticipantConfig::default()
            },
            &udp,
        )
        .map_err(|e| internal(&e))?;
        participant.spawn_ticker(2);
        let mut session = GameSession::new(participant, config.world, i, config.qos.profile())
            .map_err(|e| internal(&e))?;
        let group = i / config.aoi_group_size;
        session
            .subscribe_aoi(&group_regions(config, group))
            .map_err(|e| internal(&e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
        let x = rng.gen_range(0.0..config.world.width);
        let y = rng.gen_range(0.0..config.world.height);
        let entity_id = session.spawn(0, x, y).map_err(|e| internal(&e))?;
        let mut bot = Bot {
            entity_id,
            rng,
            vx: 0.0,
            vy: 0.0,
        };
        let duration = std::time::Duration::from_secs_f64(config.duration_s);
        let period = std::time::Duration::from_secs_f64(1.0 / config.update_hz);
        handles.push(std::thread::spawn(move || {
            let start = std::time::Instant::now();
            while start.elapsed() < duration {
                bot.step(&mut session, period.as_secs_f64());
                session.pump().expect("pump");
                std::thread::sleep(period);
            }
            // Drain window: keep pumping while retransmissions settle.
            let drain_until = std::time::Instant::now() + std::time::Duration::from_secs(2);
            while std::time::Instant::now() < drain_until {
                session.pump().expect("pump");
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            session
        }));
    }
    let sessions: Vec<GameSession> = handles
        .into_iter()
        .map(|h| h.join().expect("player thread"))
        .collect();

    let mut subscribers = Vec::new();
    for (i, session) in sessions.iter().enumerate() {
        let reader = session.reader().expect("subscribed");
        let stats = reader.delivery_stats().map_err(|e| internal(&e))?;
        let status = reader.get_status().map_err(|e| internal(&e))?;
        subscribers.push(SubscriberMetrics {
            player: i as u32,
            delivered: stats.delivered,
            bytes: stats.bytes,
            staleness_mean_ms: 0.0,
            staleness_max_ms: 0,
            view_entities: session.view().len() as u64,
            sample_lost: status.sample_lost,
        });
    }
    let report = MetricsReport {
        preset: format!("{preset_name} (realtime)"),
        players: config.players,
        duration_s: config.duration_s,
        seed: config.seed,
        qos: match config.qos {
            crate::scenario::QosPreset::Reliable => "reliable".to_string(),
            crate::scenario::QosPreset::BestEffort => "best_effort".to_string(),
        },
        drained_at_ms: 0,
        subscribers,
        reliable_pairs: PairAccounting {
            pairs: 0,
            exact: 0,
            sent: 0,
            delivered: 0,
        },
        divergence: Vec::new(),
        retransmissions: 0,
        staleness_max_ms: 0,
        staleness_mean_ms: 0.0,
        sim: SimCounters {
            sent: 0,
            delivered: 0,
            dropped: 0,
            bytes_delivered: 0,
        },
        liveliness: Vec::new(),
        assertions: vec![AssertionResult {
            name: "realtime_smoke".to_string(),
            passed: true,
            detail: "realtime mode reports raw counters only".to_string(),
        }],
    };
    Ok(RunOutput {
        report,
        wall_ms: wall_start.elapsed().as_millis() as u64,
    })
}
