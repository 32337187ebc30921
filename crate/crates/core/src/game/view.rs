//! Replicated entity state and the last-writer-wins world view.

use crate::dcps::guid::Guid;
use crate::dcps::types::{FieldKind, FieldValue, TypeDescriptor};
use std::collections::{BTreeMap, BTreeSet};

pub const ENTITY_TOPIC: &str = "EntityState";

/// One game object's replicated state. `entity_id` is the instance key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityState {
    pub entity_id: u64,
    pub kind: u32,
    pub region: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub version: u64,
}

impl EntityState {
    pub fn descriptor() -> TypeDescriptor {
        TypeDescriptor::new(
            vec![
                ("entity_id", FieldKind::U64),
                ("kind", FieldKind::U32),
                ("region", FieldKind::U32),
                ("x", FieldKind::F64),
                ("y", FieldKind::F64),
                ("vx", FieldKind::F64),
                ("vy", FieldKind::F64),
                ("version", FieldKind::U64),
            ],
            vec!["entity_id"],
        )
        .expect("static descriptor is valid")
    }

    pub fn to_values(&self) -> Vec<FieldValue> {
        vec![
            FieldValue::U64(self.entity_id),
            FieldValue::U32(self.kind),
            FieldValue::U32(self.region),
            FieldValue::F64(self.x),
            FieldValue::F64(self.y),
            FieldValue::F64(self.vx),
            FieldValue::F64(self.vy),
            FieldValue::U64(self.version),
        ]
    }

    pub fn from_values(values: &[FieldValue]) -> Option<EntityState> {
        match values {
            [FieldValue::U64(entity_id), FieldValue::U32(kind), FieldValue::U32(region), FieldValue::F64(x), FieldValue::F64(y), FieldValue::F64(vx), FieldValue::F64(vy), FieldValue::U64(version)] => {
                Some(EntityState {
                    entity_id: *entity_id,
                    kind: *kind,
                    region: *region,
                    x: *x,
                    y: *y,
                    vx: *vx,
                    vy: *vy,
                    version: *version,
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ViewEntry {
    state: EntityState,
    timestamp_us: u64,
    writer: Guid,
}

/// Per-subscriber map of the freshest known entity states within its
/// regions of interest. Merging keeps the maximum under the
/// (source timestamp, writer guid) order, so any delivery order of the
/// same sample set converges to the same view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldView {
    regions: BTreeSet<u32>,
    entries: BTreeMap<u64, ViewEntry>,
}

/// Divergence between two views over their common region set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    /// Entities present in exactly one view, plus entities whose version
    /// differs.
    pub count: u64,
    /// Largest positional distance among entities present in both.
    pub max_pos_error: f64,
}

impl WorldView {
    pub fn new(regions: BTreeSet<u32>) -> Self {
        WorldView {
            regions,
            entries: BTreeMap::new(),
        }
    }

    pub fn regions(&self) -> &BTreeSet<u32> {
        &self.regions
    }

    pub fn set_regions(&mut self, regions: BTreeSet<u32>) {
        self.regions = regions;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entity_id: u64) -> Option<&EntityState> {
        self.entries.get(&entity_id).map(|e| &e.state)
    }

    pub fn states(&self) -> impl Iterator<Item = &EntityState> {
        self.entries.values().map(|e| &e.state)
    }

    /// Merges one delivered sample; keeps whichever of held/new is larger
    /// under (timestamp, writer guid). Returns true when the view changed.
    pub fn apply_update(
        &mut self,
        state: EntityState,
        timestamp_us: u64,
        writer: Guid,
    ) -> bool {
        let candidate = ViewEntry {
            state,
            timestamp_us,
            writer,
        };
        match self.entries.get_mut(&state.entity_id) {
            Some(held) => {
                let held_key = (held.timestamp_us, held.writer.to_bytes());
                let new_key = (timestamp_us, writer.to_bytes());
                if new_key > held_key {
                    *held = candidate;
                    true
                } else {
                    false
                }
            }
            None => {
                self.entries.insert(state.entity_id, candidate);
                true
            }
        }
    }

    /// Removes entities whose last update is older than the staleness
    /// timeout (entities that left the area of interest stop updating and
    /// age out).
    pub fn expire_stale(&mut self, now_us: u64, staleness_timeout_us: u64) {
        self.entries
            .retain(|_, entry| now_us.saturating_sub(entry.timestamp_us) <= staleness_timeout_us);
    }

    /// Compares two views restricted to their common region set.
    pub fn divergence(&self, other: &WorldView) -> Divergence {
        let common: BTreeSet<u32> = self.regions.intersection(&other.regions).copied().collect();
        let mine: BTreeMap<u64, &ViewEntry> = self
            .entries
            .iter()
            .filter(|(_, e)| common.contains(&e.state.region))
            .map(|(id, e)| (*id, e))
            .collect();
        let theirs: BTreeMap<u64, &ViewEntry> = other
            .entries
            .iter()
            .filter(|(_, e)| common.contains(&e.state.region))
            .map(|(id, e)| (*id, e))
            .collect();
        let mut count = 0u64;
        let mut max_pos_error = 0.0f64;
        for (id, mine_entry) in &mine {
            match theirs.get(id) {
                None => count += 1,
                Some(their_entry) => {
                    if mine_entry.state.version != their_entry.state.version {
                        count += 1;
                    }
                    let dx = mine_entry.state.x - their_entry.state.x;
                    let dy = mine_entry.state.y - their_entry.state.y;
                    max_pos_error = max_pos_error.max((dx * dx + dy * dy).sqrt());
                }
            }
        }
        for id in theirs.keys() {
            if !mine.contains_key(id) {
                count += 1;
            }
        }
        Divergence {
            count,
            max_pos_error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcps::guid::{EntityId, GuidPrefix};

    fn guid(n: u8) -> Guid {
        Guid::new(GuidPrefix([n; 12]), EntityId(1))
    }

    fn state(id: u64, region: u32, x: f64, y: f64, version: u64) -> EntityState {
        EntityState {
            entity_id: id,
            kind: 0,
            region,
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            version,
        }
    }

    fn all_regions() -> BTreeSet<u32> {
        (0..=10).collect()
    }

    #[test]
    fn values_roundtrip() {
        let s = state(42, 5, 1.5, -2.5, 7);
        assert_eq!(EntityState::from_values(&s.to_values()), Some(s));
        EntityState::descriptor().check_conformance(&s.to_values()).unwrap();
    }

    #[test]
    fn insert_and_stale_discard() {
        let mut view = WorldView::new(all_regions());
        assert!(view.apply_update(state(1, 0, 1.0, 1.0, 1), 100, guid(1)));
        // Older timestamp: held state unchanged.
        assert!(!view.apply_update(state(1, 0, 9.0, 9.0, 2), 50, guid(2)));
        assert_eq!(view.get(1).unwrap().x, 1.0);
    }

    #[test]
    fn equal_timestamps_break_ties_by_writer_guid_on_both_orders() {
        let a_first = {
            let mut view = WorldView::new(all_regions());
            view.apply_update(state(1, 0, 1.0, 0.0, 1), 100, guid(1));
            view.apply_update(state(1, 0, 2.0, 0.0, 1), 100, guid(2));
            view
        };
        let b_first = {
            let mut view = WorldView::new(all_regions());
            view.apply_update(state(1, 0, 2.0, 0.0, 1), 100, guid(2));
            view.apply_update(state(1, 0, 1.0, 0.0, 1), 100, guid(1));
            view
        };
        assert_eq!(a_first, b_first);
        assert_eq!(a_first.get(1).unwrap().x, 2.0); // higher guid wins
    }

    #[test]
    fn divergence_counts_and_distance() {
        let mut a = WorldView::new(all_regions());
        let mut b = WorldView::new(all_regions());
        assert_eq!(a.divergence(&b), Divergence { count: 0, max_pos_error: 0.0 });

        a.apply_update(state(1, 0, 0.0, 0.0, 1), 100, guid(1));
        assert_eq!(a.divergence(&b).count, 1);

        b.apply_update(state(1, 0, 0.0, 0.0, 1), 100, guid(1));
        assert_eq!(a.divergence(&b), Divergence { count: 0, max_pos_error: 0.0 });

        // 3-4-5 triangle, same version: pure positional error.
        a.apply_update(state(2, 0, 0.0, 0.0, 1), 200, guid(1));
        b.apply_update(state(2, 0, 3.0, 4.0, 1), 300, guid(1));
        let d = a.divergence(&b);
        assert_eq!(d.count, 0);
        assert_eq!(d.max_pos_error, 5.0);
    }

    #[test]
    fn divergence_restricted_to_common_regions() {
        let mut a = WorldView::new([0, 1].into_iter().collect());
        let mut b = WorldView::new([1, 2].into_iter().collect());
        a.apply_update(state(1, 0, 0.0, 0.0, 1), 100, guid(1)); // region 0: only a's AOI
        b.apply_update(state(2, 2, 0.0, 0.0, 1), 100, guid(1)); // region 2: only b's AOI
        assert_eq!(a.divergence(&b).count, 0);
        a.apply_update(state(3, 1, 0.0, 0.0, 1), 100, guid(1));
        assert_eq!(a.divergence(&b).count, 1);
    }

    #[test]
    fn expiry_drops_quiet_entities() {
        let mut view = WorldView::new(all_regions());
        view.apply_update(state(1, 0, 0.0, 0.0, 1), 1_000_000, guid(1));
        view.apply_update(state(2, 0, 0.0, 0.0, 1), 3_500_000, guid(1));
        view.expire_stale(4_000_000, 2_000_000);
        assert!(view.get(1).is_none());
        assert!(view.get(2).is_some());
    }

    /// Merge is order-insensitive: any permutation of the same delivered
    /// sample set produces the same view.
    #[test]
    fn merge_order_insensitive_over_permutations() {
        let samples = vec![
            (state(1, 0, 1.0, 0.0, 1), 100u64, guid(1)),
            (state(1, 0, 2.0, 0.0, 2), 200, guid(1)),
            (state(2, 1, 5.0, 5.0, 1), 150, guid(2)),
            (state(1, 0, 3.0, 0.0, 2), 200, guid(3)),
            (state(2, 1, 6.0, 5.0, 2), 150, guid(1)),
        ];
        let reference = {
            let mut view = WorldView::new(all_regions());
            for (s, t, g) in &samples {
                view.apply_update(*s, *t, *g);
            }
            view
        };
        // Exhaustive permutations of 5 samples.
        let mut indices = vec![0, 1, 2, 3, 4];
        let mut checked = 0;
        permute(&mut indices, 0, &mut |perm| {
            let mut view = WorldView::new(all_regions());
            for &i in perm {
                let (s, t, g) = &samples[i];
                view.apply_update(*s, *t, *g);
            }
            assert_eq!(view, reference);
            checked += 1;
        });
        assert_eq!(checked, 120);
    }

    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }
}
