//! Scenario configuration: player count, world, update rate, network
//! conditions, QoS preset and AOI layout. Loaded from JSON; CLI flags
//! override individual fields.

use mdds_core::dcps::qos::{History, QosProfile};
use mdds_core::game::world::WorldConfig;
use mdds_core::transport::netsim::NetSimConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosPreset {
    /// RELIABLE + KEEP_ALL: exactly-once per-pair delivery, replay-checked.
    Reliable,
    /// BEST_EFFORT + KEEP_LAST(1): cheapest, loss shows as skips.
    BestEffort,
}

impl QosPreset {
    pub fn profile(self) -> QosProfile {
        match self {
            QosPreset::Reliable => QosProfile::reliable_keep_all().with_resource_limit(8192),
            QosPreset::BestEffort => QosProfile::default().with_history(History::KeepLast(1)),
        }
    }

    pub fn is_reliable(self) -> bool {
        self == QosPreset::Reliable
    }
}

/// Silences one player's link at a point in scenario time (crash/departure
/// injection for liveliness measurements).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilenceFault {
    pub player: u32,
    pub at_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub players: u32,
    pub world: WorldConfig,
    pub update_hz: f64,
    pub duration_s: f64,
    pub net: NetSimConfig,
    pub qos: QosPreset,
    pub aoi_regions_per_player: u32,
    pub seed: u64,
    /// Participant discovery lease.
    #[serde(default = "default_lease_ms")]
    pub lease_ms: u64,
    /// Players per AOI group; group members share an identical region set.
    #[serde(default = "default_aoi_group_size")]
    pub aoi_group_size: u32,
    #[serde(default)]
    pub silence: Vec<SilenceFault>,
}

fn default_lease_ms() -> u64 {
    10_000
}

fn default_aoi_group_size() -> u32 {
    4
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.players < 1 {
            return Err("players must be >= 1".to_string());
        }
        if !(self.update_hz > 0.0) {
            return Err("update_hz must be > 0".to_string());
        }
        if !(self.duration_s > 0.0) {
            return Err("duration_s must be > 0".to_string());
        }
        self.world.validate().map_err(|e| e.to_string())?;
        self.net.validate()?;
        if self.aoi_regions_per_player < 1
            || self.aoi_regions_per_player > self.world.region_count()
        {
            return Err(format!(
                "aoi_regions_per_player must be in 1..={}",
                self.world.region_count()
            ));
        }
        if self.aoi_group_size < 1 {
            return Err("aoi_group_size must be >= 1".to_string());
        }
        if self.lease_ms < 100 {
            return Err("lease_ms must be >= 100".to_string());
        }
        for fault in &self.silence {
            if fault.player >= self.players {
                return Err(format!("silence fault references player {}", fault.player));
            }
            if fault.at_s < 0.0 || fault.at_s > self.duration_s {
                return Err("silence fault outside scenario duration".to_string());
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<ScenarioConfig, String> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| format!("bad scenario JSON: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<ScenarioConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// The multiplayer band: a handful of players, clean link, best effort.
    pub fn mp32() -> ScenarioConfig {
        ScenarioConfig {
            players: 32,
            world: WorldConfig {
                width: 1024.0,
                height: 1024.0,
                cell_size: 64.0,
            },
            update_hz: 10.0,
            duration_s: 15.0,
            net: NetSimConfig {
                drop_probability: 0.0,
                latency_mean_ms: 20,
                latency_jitter_ms: 0,
                reorder: false,
                rng_seed: 1,
            },
            qos: QosPreset::BestEffort,
            aoi_regions_per_player: 16,
            seed: 1,
            lease_ms: default_lease_ms(),
            aoi_group_size: default_aoi_group_size(),
            silence: Vec::new(),
        }
    }

    /// Desk-scale stand-in for hundreds of players, clean link.
    pub fn mmog256() -> ScenarioConfig {
        ScenarioConfig {
            players: 256,
            duration_s: 30.0,
            qos: QosPreset::Reliable,
            aoi_regions_per_player: 8,
            seed: 2,
            net: NetSimConfig {
                drop_probability: 0.0,
                latency_mean_ms: 30,
                latency_jitter_ms: 10,
                reorder: false,
                rng_seed: 2,
            },
            ..ScenarioConfig::mp32()
        }
    }

    /// The lossy variant used by the convergence acceptance run.
    pub fn mmog256_lossy() -> ScenarioConfig {
        ScenarioConfig {
            players: 256,
            duration_s: 60.0,
            qos: QosPreset::Reliable,
            aoi_regions_per_player: 8,
            seed: 3,
            net: NetSimConfig {
                drop_probability: 0.05,
                latency_mean_ms: 50,
                latency_jitter_ms: 20,
                reorder: false,
                rng_seed: 3,
            },
            ..ScenarioConfig::mp32()
        }
    }
}
