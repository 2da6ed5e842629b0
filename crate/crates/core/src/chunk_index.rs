//! The dedup index: chunk hash → stored location, bounded by a time
//! window.
//!
//! The index answers one question during recording: "was a chunk with
//! this content stored recently enough to reference instead of storing
//! again?" Entries older than the window are expired before each batch
//! of lookups, so the index's size tracks the traffic volume of the
//! last `window` of capture time rather than the whole archive.
//!
//! Two rules keep behavior predictable and make the window's effect on
//! dedup monotonic:
//!
//! * An entry's insertion time is set when its chunk is **stored** and
//!   never refreshed by later hits. A popular chunk therefore expires a
//!   fixed interval after it was written, not after its last use.
//! * Expiry is driven by a clock that callers must never rewind; the
//!   recorder clamps its clock to the maximum flow end time seen. With
//!   a monotone clock and insertion-ordered entries, a larger window
//!   keeps strictly more entries alive at every lookup, so it can only
//!   convert misses into hits — never the reverse.
//!
//! The trait exists so an archive could later swap in a disk-backed
//! table; recording code only sees these four operations.

use std::collections::{BTreeMap, HashMap};

use crate::chunk::{ChunkHash, ChunkLocation};

/// Hash-to-location map with time-based expiry.
pub trait ChunkIndex {
    /// Looks up a chunk by content hash. A hit does not refresh the
    /// entry's age.
    fn get(&self, hash: &ChunkHash) -> Option<ChunkLocation>;

    /// Records a newly stored chunk at time `now` (microseconds of
    /// capture time). Call only on a miss.
    fn put(&mut self, hash: ChunkHash, location: ChunkLocation, now: u64);

    /// Drops every entry strictly older than `now - window`. Entries
    /// inserted exactly at the window edge survive.
    fn expire(&mut self, now: u64, window: u64);

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    location: ChunkLocation,
    inserted: u64,
}

/// In-memory implementation: a hash map for lookups plus an
/// insertion-time ordering for expiry scans. Each entry costs the
/// 20-byte hash, an 8-byte location, and an 8-byte timestamp, plus map
/// overhead.
#[derive(Default)]
pub struct InMemoryChunkIndex {
    map: HashMap<ChunkHash, Entry>,
    // Keyed by (inserted, tiebreak) so same-microsecond insertions
    // coexist; scanned in time order until the cutoff.
    by_time: BTreeMap<(u64, u64), ChunkHash>,
    counter: u64,
}

impl InMemoryChunkIndex {
    pub fn new() -> InMemoryChunkIndex {
        InMemoryChunkIndex::default()
    }
}

impl ChunkIndex for InMemoryChunkIndex {
    fn get(&self, hash: &ChunkHash) -> Option<ChunkLocation> {
        self.map.get(hash).map(|e| e.location)
    }

    fn put(&mut self, hash: ChunkHash, location: ChunkLocation, now: u64) {
        self.counter += 1;
        let key = (now, self.counter);
        if let Some(old) = self.map.insert(hash, Entry { location, inserted: now }) {
            // Defensive: a re-put of a live hash replaces its entry;
            // drop the stale time key so the old slot cannot expire the
            // new entry early.
            self.by_time.retain(|&(t, _), h| !(t == old.inserted && *h == hash));
        }
        self.by_time.insert(key, hash);
    }

    fn expire(&mut self, now: u64, window: u64) {
        let cutoff = now.saturating_sub(window);
        loop {
            let Some((&(t, c), _)) = self.by_time.first_key_value() else {
                break;
            };
            if t >= cutoff {
                break;
            }
            let hash = self.by_time.remove(&(t, c)).expect("key just observed");
            // Only remove the map entry if this time slot still owns it.
            if let Some(e) = self.map.get(&hash) {
                if e.inserted == t {
                    self.map.remove(&hash);
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}
