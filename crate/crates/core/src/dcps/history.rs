//! Writer history and reader caches.
//!
//! Both sides bound retention per instance: KEEP_LAST(d) keeps the most
//! recent d samples of each instance, KEEP_ALL keeps everything up to the
//! per-instance resource limit. Writer-side KEEP_ALL additionally refuses
//! to evict samples that are not yet acknowledged by every matched
//! reliable reader — a full history then rejects the write.

use crate::dcps::qos::History;
use crate::dcps::sample::{InstanceKey, Sample, SampleInfo};
use crate::dcps::types::FieldValue;
use crate::error::DcpsError;
use crate::transport::wire::CoherentInfo;
use std::collections::{BTreeMap, VecDeque};

type CacheKey = (u64, Vec<u8>);

/// One sample retained by a writer for dissemination and retransmission.
#[derive(Debug, Clone)]
pub struct RetainedSample {
    pub sample: Sample,
    pub values: Vec<FieldValue>,
    pub coherent: Option<CoherentInfo>,
}

#[derive(Debug)]
pub struct WriterHistory {
    history: History,
    max_samples_per_instance: u32,
    retained: BTreeMap<u64, RetainedSample>,
    per_instance: BTreeMap<CacheKey, VecDeque<u64>>,
}

impl WriterHistory {
    pub fn new(history: History, max_samples_per_instance: u32) -> Self {
        WriterHistory {
            history,
            max_samples_per_instance,
            retained: BTreeMap::new(),
            per_instance: BTreeMap::new(),
        }
    }

    /// Inserts a freshly written sample. `min_acked` is the highest sequence
    /// number acknowledged by every matched reliable reader; only samples at
    /// or below it may be evicted under KEEP_ALL.
    pub fn insert(
        &mut self,
        seq: u64,
        retained: RetainedSample,
        min_acked: u64,
    ) -> Result<(), DcpsError> {
        let key = retained.sample.instance.cache_key();
        let queue = self.per_instance.entry(key.clone()).or_default();
        let limit = self.max_samples_per_instance as usize;
        match self.history {
            History::KeepLast(depth) => {
                let depth = (depth as usize).min(limit);
                while queue.len() >= depth {
                    let evicted = queue.pop_front().expect("non-empty queue");
                    self.retained.remove(&evicted);
                }
            }
            History::KeepAll => {
                if queue.len() >= limit {
                    let oldest = *queue.front().expect("non-empty queue");
                    if oldest > min_acked {
                        return Err(DcpsError::resource(format!(
                            "history full: {limit} unacknowledged samples for instance"
                        )));
                    }
                    queue.pop_front();
                    self.retained.remove(&oldest);
                }
            }
        }
        queue.push_back(seq);
        self.retained.insert(seq, retained);
        Ok(())
    }

    /// Drops samples acknowledged by all matched reliable readers
    /// (KEEP_ALL only; KEEP_LAST retention is depth-driven).
    pub fn release_acknowledged(&mut self, min_acked: u64) {
        if self.history != History::KeepAll {
            return;
        }
        let to_remove: Vec<u64> = self
            .retained
            .range(..=min_acked)
            .map(|(&seq, _)| seq)
            .collect();
        for seq in to_remove {
            if let Some(retained) = self.retained.remove(&seq) {
                let key = retained.sample.instance.cache_key();
                if let Some(queue) = self.per_instance.get_mut(&key) {
                    queue.retain(|&s| s != seq);
                    if queue.is_empty() {
                        self.per_instance.remove(&key);
                    }
                }
            }
        }
    }

    pub fn get(&self, seq: u64) -> Option<&RetainedSample> {
        self.retained.get(&seq)
    }

    pub fn get_mut(&mut self, seq: u64) -> Option<&mut RetainedSample> {
        self.retained.get_mut(&seq)
    }

    /// Oldest retained sequence number, if any.
    pub fn first_seq(&self) -> Option<u64> {
        self.retained.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    /// Retained sequence numbers in order (test introspection).
    pub fn sequences(&self) -> Vec<u64> {
        self.retained.keys().copied().collect()
    }
}

/// One decoded sample as stored in a reader cache.
#[derive(Debug, Clone)]
pub struct CachedSample {
    pub values: Vec<FieldValue>,
    pub info: SampleInfo,
    /// Encoded payload size, for bandwidth accounting.
    pub payload_len: usize,
}

#[derive(Debug, Default)]
struct InstanceCache {
    samples: VecDeque<CachedSample>,
}

/// Reader-side sample cache, grouped by instance.
#[derive(Debug)]
pub struct ReaderCache {
    history: History,
    max_samples_per_instance: u32,
    instances: BTreeMap<CacheKey, InstanceCache>,
}

impl ReaderCache {
    pub fn new(history: History, max_samples_per_instance: u32) -> Self {
        ReaderCache {
            history,
            max_samples_per_instance,
            instances: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, instance: &InstanceKey, sample: CachedSample) {
        let cache = self.instances.entry(instance.cache_key()).or_default();
        let depth = match self.history {
            History::KeepLast(d) => (d as usize).min(self.max_samples_per_instance as usize),
            History::KeepAll => self.max_samples_per_instance as usize,
        };
        while cache.samples.len() >= depth {
            cache.samples.pop_front();
        }
        cache.samples.push_back(sample);
    }

    /// Returns up to `max_samples`, instances in key order, samples within
    /// an instance in delivery order. `remove` distinguishes take from read.
    pub fn fetch(&mut self, max_samples: usize, remove: bool) -> Vec<CachedSample> {
        let mut out = Vec::new();
        if !remove {
            'read: for cache in self.instances.values() {
                for sample in &cache.samples {
                    if out.len() >= max_samples {
                        break 'read;
                    }
                    out.push(sample.clone());
                }
            }
            return out;
        }
        let mut emptied = Vec::new();
        for (key, cache) in self.instances.iter_mut() {
            while out.len() < max_samples {
                match cache.samples.pop_front() {
                    Some(sample) => out.push(sample),
                    None => break,
                }
            }
            if cache.samples.is_empty() {
                emptied.push(key.clone());
            }
            if out.len() >= max_samples {
                break;
            }
        }
        for key in emptied {
            self.instances.remove(&key);
        }
        out
    }

    /// Per-instance cache depths (invariant checks).
    pub fn instance_depths(&self) -> Vec<usize> {
        self.instances.values().map(|c| c.samples.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.instances.values().map(|c| c.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
