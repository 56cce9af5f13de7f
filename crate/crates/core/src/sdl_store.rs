//! In-memory shared data layer.
//!
//! Stands in for the RIC database: the simulator appends per-tick analytics,
//! the exposure producer reads them back. Each cell key owns an append-only
//! ring of samples; one writer and any number of readers may operate
//! concurrently.

use std::collections::VecDeque;
use std::sync::RwLock;

use indexmap::IndexMap;
use thiserror::Error;

use crate::ran_sim::AnalyticsSample;

/// Identity of one analytics time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub pci: u32,
    pub carrier_id: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("tick {tick} is not after latest stored tick {latest}")]
    NonMonotonicTick { tick: u64, latest: u64 },
    #[error("invalid range: from {from} > to {to}")]
    InvalidRange { from: u64, to: u64 },
}

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Default)]
struct SampleSeries {
    samples: VecDeque<AnalyticsSample>,
}

/// Keyed sample store with bounded per-key retention (oldest evicted first).
#[derive(Debug)]
pub struct SdlStore {
    inner: RwLock<IndexMap<CellKey, SampleSeries>>,
    capacity: usize,
}

impl Default for SdlStore {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl SdlStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            inner: RwLock::new(IndexMap::new()),
            capacity,
        }
    }

    /// Appends a sample. Ticks must be strictly increasing per key; stored
    /// samples are never overwritten.
    pub fn put_sample(&self, key: CellKey, sample: AnalyticsSample) -> Result<(), StoreError> {
        let mut map = self.inner.write().unwrap();
        let series = map.entry(key).or_default();
        if let Some(last) = series.samples.back() {
            if sample.tick <= last.tick {
                return Err(StoreError::NonMonotonicTick {
                    tick: sample.tick,
                    latest: last.tick,
                });
            }
        }
        series.samples.push_back(sample);
        while series.samples.len() > self.capacity {
            series.samples.pop_front();
        }
        Ok(())
    }

    /// Highest-tick sample for the key, `None` when the series is absent or
    /// empty.
    pub fn latest(&self, key: CellKey) -> Option<AnalyticsSample> {
        let map = self.inner.read().unwrap();
        map.get(&key).and_then(|s| s.samples.back().cloned())
    }

    /// Stored samples with `from_tick <= tick <= to_tick`, ascending.
    pub fn range(
        &self,
        key: CellKey,
        from_tick: u64,
        to_tick: u64,
    ) -> Result<Vec<AnalyticsSample>, StoreError> {
        if from_tick > to_tick {
            return Err(StoreError::InvalidRange {
                from: from_tick,
                to: to_tick,
            });
        }
        let map = self.inner.read().unwrap();
        Ok(map
            .get(&key)
            .map(|s| {
                s.samples
                    .iter()
                    .filter(|x| x.tick >= from_tick && x.tick <= to_tick)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default())
    }

    pub fn len(&self, key: CellKey) -> usize {
        let map = self.inner.read().unwrap();
        map.get(&key).map(|s| s.samples.len()).unwrap_or(0)
    }

    pub fn is_empty(&self, key: CellKey) -> bool {
        self.len(key) == 0
    }

    /// Debug dump of one series, same header style as the scenario CSV.
    pub fn write_csv<W: std::io::Write>(&self, key: CellKey, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "tick",
            "dl_cqi",
            "dl_mcs",
            "dl_bitrate_bps",
            "dl_bler_pct",
            "dl_latency_s",
            "dl_bytes",
            "pci",
            "carrier_id",
            "num_rach",
        ])?;
        let map = self.inner.read().unwrap();
        if let Some(series) = map.get(&key) {
            for s in &series.samples {
                wtr.write_record([
                    s.tick.to_string(),
                    s.dl_cqi.to_string(),
                    s.dl_mcs.to_string(),
                    s.dl_bitrate_bps.to_string(),
                    s.dl_bler_pct.to_string(),
                    s.dl_latency_s.to_string(),
                    s.dl_bytes.to_string(),
                    s.pci.to_string(),
                    s.carrier_id.to_string(),
                    s.num_rach.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}
