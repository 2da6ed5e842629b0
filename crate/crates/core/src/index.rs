//! Per-epoch flow indexes: hashed field values → flow locations.
//!
//! Each sealed epoch gets one index per queryable field (IP address,
//! port). An index is a fixed table of 65,536 buckets; a value's bucket
//! is its 64-bit FNV-1a hash over big-endian bytes, mod 65,536. Buckets
//! hold the locations of flows whose key contained the value — both
//! directions feed the same index (src and dst addresses; source and
//! destination ports), so direction-specific queries oversample and the
//! verification step filters.
//!
//! Lookups can return **false positives** (other values hashing into
//! the bucket, or wrong-direction matches) but never false negatives:
//! every indexed flow appears in the bucket of each of its values.
//! Queries verify candidates against the flow key stored beside the
//! compressed headers.
//!
//! Sealed indexes are immutable. On disk a sealed index is: a header,
//! an 8 KiB presence bitmap (one bit per bucket), then for each
//! non-empty bucket in ascending order an entry count and the sorted,
//! deduplicated locations as varint deltas — the first entry absolute,
//! each subsequent entry a positive gap. Because locations within an
//! epoch are assigned in increasing order, gaps are small and the
//! per-flow cost stays near a handful of bytes.

use std::hash::Hasher;
use std::net::Ipv4Addr;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::packet::FlowKey;
use crate::varint::{self, Reader};

/// Fixed bucket count; changing it would invalidate every archive.
pub const BUCKET_COUNT: usize = 65_536;

/// Bytes of the presence bitmap: one bit per bucket.
pub const BITMAP_LEN: usize = BUCKET_COUNT / 8;

/// Magic prefix of a serialized epoch index file.
pub const INDEX_MAGIC: &[u8; 4] = b"FVIX";

/// Serialization version.
pub const INDEX_VERSION: u8 = 1;

/// Which field of the flow key an index covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexField {
    IpAddr,
    Port,
}

impl IndexField {
    pub fn tag(self) -> u8 {
        match self {
            IndexField::IpAddr => 0,
            IndexField::Port => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<IndexField> {
        Some(match tag {
            0 => IndexField::IpAddr,
            1 => IndexField::Port,
            _ => return None,
        })
    }

    /// File-name component: `epoch_<id>.<name>.idx`.
    pub fn file_name(self) -> &'static str {
        match self {
            IndexField::IpAddr => "ip",
            IndexField::Port => "port",
        }
    }
}

/// Bucket for a value's big-endian bytes: FNV-1a 64 mod bucket count.
pub fn bucket_for(value_bytes: &[u8]) -> u16 {
    let mut h = FnvHasher::default();
    h.write(value_bytes);
    (h.finish() % BUCKET_COUNT as u64) as u16
}

pub fn bucket_for_ip(ip: Ipv4Addr) -> u16 {
    bucket_for(&ip.octets())
}

pub fn bucket_for_port(port: u16) -> u16 {
    bucket_for(&port.to_be_bytes())
}

/// Accumulates (bucket, location) pairs for one epoch and field.
/// Sealing consumes the builder, so post-seal insertion is impossible
/// by construction.
pub struct EpochIndexBuilder {
    epoch_id: u64,
    field: IndexField,
    buckets: Vec<Vec<u64>>,
}

impl EpochIndexBuilder {
    pub fn new(epoch_id: u64, field: IndexField) -> EpochIndexBuilder {
        EpochIndexBuilder { epoch_id, field, buckets: vec![Vec::new(); BUCKET_COUNT] }
    }

    /// Records that the flow at `location` carried `value_bytes`.
    pub fn insert(&mut self, value_bytes: &[u8], location: u64) {
        self.buckets[bucket_for(value_bytes) as usize].push(location);
    }

    /// Sorts, deduplicates, and freezes every bucket.
    pub fn seal(self) -> EpochIndex {
        let buckets = self
            .buckets
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        EpochIndex { epoch_id: self.epoch_id, field: self.field, buckets, serialized_len: 0 }
    }
}

/// Both per-epoch indexes, fed together from flow keys.
pub struct EpochIndexSet {
    pub ip: EpochIndexBuilder,
    pub port: EpochIndexBuilder,
}

impl EpochIndexSet {
    pub fn new(epoch_id: u64) -> EpochIndexSet {
        EpochIndexSet {
            ip: EpochIndexBuilder::new(epoch_id, IndexField::IpAddr),
            port: EpochIndexBuilder::new(epoch_id, IndexField::Port),
        }
    }

    /// Indexes one flow under all four of its key values.
    pub fn insert_flow(&mut self, key: &FlowKey, location: u64) {
        self.ip.insert(&key.src_ip.octets(), location);
        self.ip.insert(&key.dst_ip.octets(), location);
        self.port.insert(&key.src_port.to_be_bytes(), location);
        self.port.insert(&key.dst_port.to_be_bytes(), location);
    }
}

/// A sealed, immutable epoch index.
#[derive(Debug, Clone)]
pub struct EpochIndex {
    pub epoch_id: u64,
    pub field: IndexField,
    buckets: Vec<Vec<u64>>,
    /// Byte length of the file this index was decoded from; zero for
    /// indexes that were built in memory and never serialized.
    serialized_len: u64,
}

impl PartialEq for EpochIndex {
    fn eq(&self, other: &Self) -> bool {
        self.epoch_id == other.epoch_id
            && self.field == other.field
            && self.buckets == other.buckets
    }
}

impl Eq for EpochIndex {}

impl EpochIndex {
    /// Candidate flow locations for a value: its bucket's decoded list.
    /// A superset of the true matches; may contain false positives.
    pub fn lookup(&self, value_bytes: &[u8]) -> &[u64] {
        &self.buckets[bucket_for(value_bytes) as usize]
    }

    /// Count of stored (bucket, location) pairs.
    pub fn entry_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    /// Byte length of the serialized form this index was loaded from.
    pub fn serialized_len(&self) -> u64 {
        self.serialized_len
    }

    /// Deterministic serialization; see module docs for the layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BITMAP_LEN + 64 + self.entry_count() * 3);
        out.extend_from_slice(INDEX_MAGIC);
        out.push(INDEX_VERSION);
        out.push(self.field.tag());
        out.extend_from_slice(&self.epoch_id.to_le_bytes());
        let bitmap_start = out.len();
        out.resize(bitmap_start + BITMAP_LEN, 0);
        for (b, locations) in self.buckets.iter().enumerate() {
            if !locations.is_empty() {
                out[bitmap_start + b / 8] |= 1 << (b % 8);
            }
        }
        for locations in &self.buckets {
            if locations.is_empty() {
                continue;
            }
            varint::put_u64(&mut out, locations.len() as u64);
            let mut prev = 0u64;
            for (i, &loc) in locations.iter().enumerate() {
                if i == 0 {
                    varint::put_u64(&mut out, loc);
                } else {
                    varint::put_u64(&mut out, loc - prev);
                }
                prev = loc;
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EpochIndex> {
        let corrupt = |offset: usize, reason: String| Error::Corrupt {
            context: "epoch index".to_string(),
            offset: offset as u64,
            reason,
        };
        let mut r = Reader::new(bytes);
        let magic = r.bytes(4).map_err(|e| corrupt(0, e.to_string()))?;
        if magic != INDEX_MAGIC {
            return Err(corrupt(0, "bad index magic".to_string()));
        }
        let version = r.byte().map_err(|e| corrupt(r.pos(), e.to_string()))?;
        if version != INDEX_VERSION {
            return Err(corrupt(4, format!("unsupported index version {version}")));
        }
        let tag = r.byte().map_err(|e| corrupt(r.pos(), e.to_string()))?;
        let field =
            IndexField::from_tag(tag).ok_or_else(|| corrupt(5, format!("bad field tag {tag}")))?;
        let id_bytes = r.bytes(8).map_err(|e| corrupt(r.pos(), e.to_string()))?;
        let epoch_id = u64::from_le_bytes(id_bytes.try_into().expect("fixed length"));
        let bitmap = r.bytes(BITMAP_LEN).map_err(|e| corrupt(r.pos(), e.to_string()))?.to_vec();

        let mut buckets = vec![Vec::new(); BUCKET_COUNT];
        for (b, bucket) in buckets.iter_mut().enumerate() {
            if bitmap[b / 8] >> (b % 8) & 1 == 0 {
                continue;
            }
            let count = r.u64().map_err(|e| corrupt(r.pos(), e.to_string()))?;
            if count == 0 || count > (r.remaining() as u64 + 1) {
                return Err(corrupt(r.pos(), format!("implausible bucket entry count {count}")));
            }
            let mut prev = 0u64;
            for i in 0..count {
                let v = r.u64().map_err(|e| corrupt(r.pos(), e.to_string()))?;
                let loc = if i == 0 {
                    v
                } else {
                    if v == 0 {
                        return Err(corrupt(
                            r.pos(),
                            "zero gap: bucket locations must strictly increase".to_string(),
                        ));
                    }
                    prev.checked_add(v)
                        .ok_or_else(|| corrupt(r.pos(), "location overflow".to_string()))?
                };
                bucket.push(loc);
                prev = loc;
            }
        }
        if !r.is_empty() {
            return Err(corrupt(r.pos(), format!("{} trailing bytes", r.remaining())));
        }
        Ok(EpochIndex { epoch_id, field, buckets, serialized_len: bytes.len() as u64 })
    }
}

/// Intersection of candidate lists, each strictly increasing. With no
/// lists the intersection is empty.
pub fn intersect(lists: &[&[u64]]) -> Vec<u64> {
    let Some((first, rest)) = lists.split_first() else {
        return Vec::new();
    };
    let mut acc: Vec<u64> = first.to_vec();
    for list in rest {
        let mut out = Vec::with_capacity(acc.len().min(list.len()));
        let (mut i, mut j) = (0, 0);
        while i < acc.len() && j < list.len() {
            match acc[i].cmp(&list[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(acc[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc = out;
        if acc.is_empty() {
            break;
        }
    }
    acc
}
