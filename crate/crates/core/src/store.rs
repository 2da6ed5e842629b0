//! Two-tier log-structured persistence.
//!
//! The **fast tier** holds everything queries touch first: the
//! manifest, per-epoch header logs (compressed flow blocks), and
//! per-epoch field indexes. The **bulk tier** holds payload chunk
//! segments. Both tiers are plain directories; the split is a placement
//! policy (small hot files vs large sequential ones), not a device
//! requirement.
//!
//! ```text
//! <fast>/manifest                     JSON, atomically replaced
//! <fast>/headers/epoch_<id>.log      "FVHL": flow header blocks
//! <fast>/index/epoch_<id>.ip.idx     "FVIX": address index
//! <fast>/index/epoch_<id>.port.idx   "FVIX": port index
//! <bulk>/chunks/seg_<id>.dat         "FVSG": chunk records
//! ```
//!
//! Every file is append-then-immutable; there are no in-place updates
//! anywhere. Recording stages an epoch in memory and commits it as a
//! unit ("sealing"): data files are written and fsynced first, then the
//! manifest is atomically replaced to reference them. A crash therefore
//! loses at most the in-progress epoch; everything the manifest names
//! is complete on disk.
//!
//! Eviction removes whole epochs (header log + indexes) from the front
//! of the timeline, plus any chunk segment whose **reference horizon**
//! — the newest epoch referencing a chunk in it — falls before the
//! retained range. Because dedup can make later flows reference earlier
//! segments, a segment may outlive its own epoch; it is deleted only
//! when no retained flow can reach it.
//!
//! Flow locations are byte offsets in a single logical header log
//! spanning all epochs (file headers excluded), so locations increase
//! monotonically forever and index delta-coding stays cheap. Each
//! epoch's manifest entry records its `[start_offset, end_offset)`
//! slice; the block for a location lives in exactly one epoch file.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunk::{self, ChunkLocation};
use crate::compress::{self, Compressor};
use crate::error::{Error, Result};
use crate::header_codec::CompressedHeaderBlock;
use crate::index::{EpochIndex, EpochIndexSet, IndexField};
use crate::packet::FlowKey;
use crate::varint::Reader;

pub const HEADER_LOG_MAGIC: &[u8; 4] = b"FVHL";
pub const SEGMENT_MAGIC: &[u8; 4] = b"FVSG";
pub const FILE_VERSION: u8 = 1;
pub const MANIFEST_VERSION: u32 = 1;

/// Bytes of the fixed header opening a header-log or segment file:
/// magic (4), version (1), id (8, little-endian).
pub const FILE_HEADER_LEN: u64 = 13;

/// Identity string for the hash/fingerprint choices baked into an
/// archive. Opening an archive with an unexpected value fails loudly
/// rather than silently mis-deduplicating.
pub const HASH_SPEC: &str = "sha256-20 rabin64-bfe6b8a5bf378d83 fnv1a64";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EpochMeta {
    pub id: u64,
    /// Global header-log offsets covered by this epoch: [start, end).
    pub start_offset: u64,
    pub end_offset: u64,
    pub flows: u64,
    pub packets: u64,
    /// Serialized bytes of this epoch's two index files.
    pub index_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SegmentMeta {
    /// Segment id == the epoch that created it.
    pub id: u64,
    pub bytes: u64,
    pub chunks: u64,
    /// Newest epoch with a flow referencing any chunk in this segment.
    pub horizon: u64,
}

/// Record-time totals, persisted so `stats` can report without
/// re-reading data files. Byte counts refer to the original capture
/// unless stated otherwise.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArchiveCounters {
    pub packets: u64,
    pub flows: u64,
    /// Total capture-file bytes: global header + per-packet records.
    pub raw_pcap_bytes: u64,
    /// Per-packet record headers plus packet header regions.
    pub raw_header_bytes: u64,
    pub raw_payload_bytes: u64,
    /// Fast tier: total header-log block bytes.
    pub header_log_bytes: u64,
    /// Fast tier: total serialized index bytes.
    pub index_bytes: u64,
    /// Bulk tier: chunk record bytes as stored (compressed + framing).
    pub segment_bytes: u64,
    pub chunks_stored: u64,
    pub chunk_raw_bytes_stored: u64,
    pub dedup_hit_chunks: u64,
    /// Raw payload bytes satisfied by existing chunks.
    pub dedup_hit_bytes: u64,
    pub tcp_packets: u64,
    pub udp_packets: u64,
    pub other_ip_packets: u64,
    pub non_ip_packets: u64,
    pub timestamp_regressions: u64,
    /// Flows whose end time fell in an already-sealed epoch (extreme
    /// timestamp regression); they are carried in the next open epoch.
    pub late_flows: u64,
    pub truncated_tail: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub format_version: u32,
    /// pcap link type of the recorded capture (queries re-emit it).
    pub link_type: u32,
    pub hash_spec: String,
    pub header_compressor: String,
    pub chunk_compressor: String,
    /// Epoch length, microseconds of trace time.
    pub epoch_len: u64,
    /// Chunking configuration label, e.g. "cdc:4096".
    pub chunking: String,
    /// Dedup window, microseconds; 0 disables dedup.
    pub dedup_window: u64,
    pub max_flow_duration: u64,
    pub idle_timeout: u64,
    /// Bulk tier path as given at record time.
    pub bulk_dir: String,
    pub epochs: Vec<EpochMeta>,
    pub segments: Vec<SegmentMeta>,
    pub counters: ArchiveCounters,
}

impl Manifest {
    /// Fast-tier data bytes: header logs and index files, including
    /// their fixed file headers (the manifest itself is excluded).
    pub fn fast_tier_bytes(&self) -> u64 {
        self.epochs
            .iter()
            .map(|e| (e.end_offset - e.start_offset) + FILE_HEADER_LEN + e.index_bytes)
            .sum()
    }

    /// Bulk-tier data bytes: chunk segment files.
    pub fn bulk_tier_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.bytes).sum()
    }
}

/// What goes into a sealed epoch: one entry per committed flow, in
/// commit order.
pub struct StagedFlow {
    pub key: FlowKey,
    pub packets: u64,
    pub block_bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvictReport {
    pub epochs_removed: u64,
    pub segments_removed: u64,
    pub bytes_freed: u64,
}

fn fsync_dir(path: &Path) -> Result<()> {
    File::open(path)?.sync_all()?;
    Ok(())
}

fn headers_dir(fast: &Path) -> PathBuf {
    fast.join("headers")
}

fn index_dir(fast: &Path) -> PathBuf {
    fast.join("index")
}

fn chunks_dir(bulk: &Path) -> PathBuf {
    bulk.join("chunks")
}

fn epoch_log_path(fast: &Path, epoch: u64) -> PathBuf {
    headers_dir(fast).join(format!("epoch_{epoch}.log"))
}

fn index_path(fast: &Path, epoch: u64, field: IndexField) -> PathBuf {
    index_dir(fast).join(format!("epoch_{epoch}.{}.idx", field.file_name()))
}

fn segment_path(bulk: &Path, segment: u64) -> PathBuf {
    chunks_dir(bulk).join(format!("seg_{segment}.dat"))
}

fn manifest_path(fast: &Path) -> PathBuf {
    fast.join("manifest")
}

fn write_manifest(fast: &Path, manifest: &Manifest) -> Result<()> {
    let tmp = fast.join("manifest.tmp");
    let bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::Archive(format!("manifest serialization failed: {e}")))?;
    let mut f = File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, manifest_path(fast))?;
    fsync_dir(fast)?;
    Ok(())
}

fn read_manifest(fast: &Path) -> Result<Manifest> {
    let path = manifest_path(fast);
    let bytes = fs::read(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.clone())
        } else {
            Error::Io(e)
        }
    })?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Archive(format!("manifest is not readable: {e}")))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Archive(format!(
            "manifest format version {} is not supported (expected {MANIFEST_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.hash_spec != HASH_SPEC {
        return Err(Error::Archive(format!(
            "archive was built with hash spec '{}'; this build expects '{HASH_SPEC}'",
            manifest.hash_spec
        )));
    }
    Ok(manifest)
}

fn file_header(magic: &[u8; 4], id: u64) -> [u8; FILE_HEADER_LEN as usize] {
    let mut h = [0u8; FILE_HEADER_LEN as usize];
    h[..4].copy_from_slice(magic);
    h[4] = FILE_VERSION;
    h[5..].copy_from_slice(&id.to_le_bytes());
    h
}

fn check_file_header(bytes: &[u8], magic: &[u8; 4], id: u64, what: &str) -> Result<()> {
    let corrupt = |reason: String| Error::Corrupt { context: what.to_string(), offset: 0, reason };
    if bytes.len() < FILE_HEADER_LEN as usize {
        return Err(corrupt("file shorter than its header".into()));
    }
    if &bytes[..4] != magic {
        return Err(corrupt("bad file magic".into()));
    }
    if bytes[4] != FILE_VERSION {
        return Err(corrupt(format!("unsupported file version {}", bytes[4])));
    }
    let found = u64::from_le_bytes(bytes[5..13].try_into().expect("fixed length"));
    if found != id {
        return Err(corrupt(format!("file id {found} does not match expected {id}")));
    }
    Ok(())
}

struct SegmentWriter {
    file: File,
    offset: u64,
    chunks: u64,
}

/// Write side of an archive: owns the manifest, assigns locations, and
/// enforces the seal-then-publish discipline. Created fresh; recording
/// into an existing archive is not supported (one capture, one archive).
pub struct ArchiveWriter {
    fast_dir: PathBuf,
    bulk_dir: PathBuf,
    manifest: Manifest,
    next_offset: u64,
    open_segments: HashMap<u64, SegmentWriter>,
    /// Authoritative horizons, including growth after a segment sealed.
    horizons: HashMap<u64, u64>,
}

#[allow(clippy::too_many_arguments)]
impl ArchiveWriter {
    pub fn create(
        fast_dir: &Path,
        bulk_dir: &Path,
        link_type: u32,
        epoch_len: u64,
        chunking_label: String,
        dedup_window: u64,
        max_flow_duration: u64,
        idle_timeout: u64,
        header_compressor: Compressor,
        chunk_compressor: Compressor,
    ) -> Result<ArchiveWriter> {
        if epoch_len == 0 {
            return Err(Error::InvalidConfig("epoch length must be positive".into()));
        }
        if manifest_path(fast_dir).exists() {
            return Err(Error::Archive(format!(
                "refusing to overwrite existing archive at {}",
                fast_dir.display()
            )));
        }
        fs::create_dir_all(headers_dir(fast_dir))?;
        fs::create_dir_all(index_dir(fast_dir))?;
        fs::create_dir_all(chunks_dir(bulk_dir))?;
        let manifest = Manifest {
            format_version: MANIFEST_VERSION,
            link_type,
            hash_spec: HASH_SPEC.to_string(),
            header_compressor: header_compressor.name().to_string(),
            chunk_compressor: chunk_compressor.name().to_string(),
            epoch_len,
            chunking: chunking_label,
            dedup_window,
            max_flow_duration,
            idle_timeout,
            bulk_dir: bulk_dir.to_string_lossy().into_owned(),
            epochs: Vec::new(),
            segments: Vec::new(),
            counters: ArchiveCounters::default(),
        };
        Ok(ArchiveWriter {
            fast_dir: fast_dir.to_path_buf(),
            bulk_dir: bulk_dir.to_path_buf(),
            manifest,
            next_offset: 0,
            open_segments: HashMap::new(),
            horizons: HashMap::new(),
        })
    }

    pub fn counters_mut(&mut self) -> &mut ArchiveCounters {
        &mut self.manifest.counters
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Appends one chunk record to the segment owned by `epoch`,
    /// creating the segment file on first use.
    pub fn append_chunk(
        &mut self,
        epoch: u64,
        raw_len: u32,
        compressor_id: u8,
        stored: &[u8],
    ) -> Result<ChunkLocation> {
        if !self.open_segments.contains_key(&epoch) {
            let path = segment_path(&self.bulk_dir, epoch);
            let mut file = OpenOptions::new().create_new(true).write(true).open(&path).map_err(
                |e| Error::Archive(format!("cannot create segment {}: {e}; if storage is full, evict old epochs", path.display())),
            )?;
            file.write_all(&file_header(SEGMENT_MAGIC, epoch))?;
            self.open_segments
                .insert(epoch, SegmentWriter { file, offset: FILE_HEADER_LEN, chunks: 0 });
        }
        let seg = self.open_segments.get_mut(&epoch).expect("just inserted");
        let mut record = Vec::with_capacity(stored.len() + 16);
        chunk::write_chunk_record(&mut record, raw_len, compressor_id, stored);
        let offset = u32::try_from(seg.offset).map_err(|_| {
            Error::Archive(format!("segment {epoch} exceeds the 4 GiB addressing limit"))
        })?;
        seg.file.write_all(&record).map_err(|e| {
            Error::Archive(format!("segment append failed: {e}; if storage is full, evict old epochs"))
        })?;
        seg.offset += record.len() as u64;
        seg.chunks += 1;
        Ok(ChunkLocation { segment: epoch as u32, offset })
    }

    /// Notes that a flow ending in `referencing_epoch` references a
    /// chunk in `segment`, pushing the segment's horizon forward.
    pub fn note_reference(&mut self, segment: u64, referencing_epoch: u64) {
        let h = self.horizons.entry(segment).or_insert(referencing_epoch);
        *h = (*h).max(referencing_epoch);
    }

    /// Seals one epoch: writes its header log and indexes, closes its
    /// segment, refreshes horizons, and publishes all of it in the
    /// manifest. Epochs must seal in increasing id order.
    pub fn seal_epoch(&mut self, epoch: u64, flows: &[StagedFlow]) -> Result<&EpochMeta> {
        if let Some(last) = self.manifest.epochs.last() {
            if epoch <= last.id {
                return Err(Error::Archive(format!(
                    "epoch {epoch} sealed out of order (last sealed {})",
                    last.id
                )));
            }
        }

        // Header log: assign locations in commit order.
        let start_offset = self.next_offset;
        let mut log = Vec::new();
        log.extend_from_slice(&file_header(HEADER_LOG_MAGIC, epoch));
        let mut indexes = EpochIndexSet::new(epoch);
        let mut packets = 0u64;
        for flow in flows {
            let location = start_offset + (log.len() as u64 - FILE_HEADER_LEN);
            indexes.insert_flow(&flow.key, location);
            log.extend_from_slice(&flow.block_bytes);
            packets += flow.packets;
        }
        let end_offset = start_offset + (log.len() as u64 - FILE_HEADER_LEN);

        let log_path = epoch_log_path(&self.fast_dir, epoch);
        let mut f = OpenOptions::new().create_new(true).write(true).open(&log_path)?;
        f.write_all(&log)?;
        f.sync_all()?;

        let ip_bytes = indexes.ip.seal().to_bytes();
        let port_bytes = indexes.port.seal().to_bytes();
        let mut index_bytes = 0u64;
        for (field, bytes) in [(IndexField::IpAddr, &ip_bytes), (IndexField::Port, &port_bytes)] {
            let path = index_path(&self.fast_dir, epoch, field);
            let mut f = OpenOptions::new().create_new(true).write(true).open(&path)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            index_bytes += bytes.len() as u64;
        }

        // Close this epoch's segment if it stored any chunks.
        if let Some(seg) = self.open_segments.remove(&epoch) {
            seg.file.sync_all()?;
            self.manifest.segments.push(SegmentMeta {
                id: epoch,
                bytes: seg.offset,
                chunks: seg.chunks,
                horizon: self.horizons.get(&epoch).copied().unwrap_or(epoch),
            });
            self.manifest.counters.segment_bytes += seg.offset - FILE_HEADER_LEN;
        }
        fsync_dir(&headers_dir(self.fast_dir.as_path()))?;
        fsync_dir(&index_dir(self.fast_dir.as_path()))?;
        fsync_dir(&chunks_dir(self.bulk_dir.as_path()))?;

        // Horizons may have grown for older (already sealed) segments.
        for seg in &mut self.manifest.segments {
            if let Some(&h) = self.horizons.get(&seg.id) {
                seg.horizon = seg.horizon.max(h);
            }
        }

        self.next_offset = end_offset;
        self.manifest.counters.flows += flows.len() as u64;
        self.manifest.counters.header_log_bytes += end_offset - start_offset;
        self.manifest.counters.index_bytes += index_bytes;
        self.manifest.epochs.push(EpochMeta {
            id: epoch,
            start_offset,
            end_offset,
            flows: flows.len() as u64,
            packets,
            index_bytes,
        });

        // Publish: everything above is durable before the manifest
        // names it.
        write_manifest(&self.fast_dir, &self.manifest)?;
        Ok(self.manifest.epochs.last().expect("just pushed"))
    }

    /// Commits the final manifest and returns it. All epochs must
    /// already be sealed; open segments indicate a recorder bug.
    pub fn finish(self) -> Result<Manifest> {
        if !self.open_segments.is_empty() {
            return Err(Error::Archive("segments left open at finish".into()));
        }
        write_manifest(&self.fast_dir, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Read side: an immutable view of an archive, plus eviction (which is
/// the one mutating operation and rewrites the manifest).
pub struct Archive {
    pub fast_dir: PathBuf,
    pub bulk_dir: PathBuf,
    pub manifest: Manifest,
}

impl Archive {
    /// Opens an archive. `bulk_override` replaces the bulk path stored
    /// in the manifest (for archives that moved between machines).
    pub fn open(fast_dir: &Path, bulk_override: Option<&Path>) -> Result<Archive> {
        let manifest = read_manifest(fast_dir)?;
        let bulk_dir =
            bulk_override.map_or_else(|| PathBuf::from(&manifest.bulk_dir), Path::to_path_buf);
        Ok(Archive { fast_dir: fast_dir.to_path_buf(), bulk_dir, manifest })
    }

    /// End of the newest sealed epoch in trace time (µs), if any.
    pub fn newest_sealed_end(&self) -> Option<u64> {
        self.manifest.epochs.last().map(|e| (e.id + 1) * self.manifest.epoch_len)
    }

    pub fn epoch(&self, id: u64) -> Option<&EpochMeta> {
        self.manifest.epochs.iter().find(|e| e.id == id)
    }

    /// Epoch owning a global header-log offset.
    pub fn epoch_for_location(&self, location: u64) -> Option<&EpochMeta> {
        // Epochs are sorted by id and by offset (both monotone).
        let idx = self
            .manifest
            .epochs
            .partition_point(|e| e.end_offset <= location);
        let e = self.manifest.epochs.get(idx)?;
        (e.start_offset <= location).then_some(e)
    }

    /// Reads and validates one epoch's header log; returns the block
    /// bytes (file header stripped), indexable by `loc - start_offset`.
    pub fn read_epoch_log(&self, epoch: u64) -> Result<Vec<u8>> {
        let meta = self
            .epoch(epoch)
            .ok_or_else(|| Error::Archive(format!("epoch {epoch} is not in the archive")))?;
        let path = epoch_log_path(&self.fast_dir, epoch);
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.clone())
            } else {
                Error::Io(e)
            }
        })?;
        check_file_header(&bytes, HEADER_LOG_MAGIC, epoch, "header log")?;
        let body = bytes[FILE_HEADER_LEN as usize..].to_vec();
        if body.len() as u64 != meta.end_offset - meta.start_offset {
            return Err(Error::Corrupt {
                context: "header log".to_string(),
                offset: 0,
                reason: format!(
                    "epoch {epoch} log holds {} block bytes, manifest says {}",
                    body.len(),
                    meta.end_offset - meta.start_offset
                ),
            });
        }
        Ok(body)
    }

    /// Parses the block at a global location out of its epoch's log
    /// bytes (as returned by [`Archive::read_epoch_log`]).
    pub fn block_at(
        &self,
        meta: &EpochMeta,
        log_body: &[u8],
        location: u64,
    ) -> Result<CompressedHeaderBlock> {
        if location < meta.start_offset || location >= meta.end_offset {
            return Err(Error::Corrupt {
                context: "header log".to_string(),
                offset: location,
                reason: format!("location outside epoch {}", meta.id),
            });
        }
        let rel = (location - meta.start_offset) as usize;
        let mut r = Reader::new(&log_body[rel..]);
        CompressedHeaderBlock::read_from(&mut r, location)
    }

    /// All blocks of an epoch with their locations, in storage order.
    pub fn blocks_of_epoch(
        &self,
        meta: &EpochMeta,
        log_body: &[u8],
    ) -> Result<Vec<(u64, CompressedHeaderBlock)>> {
        let mut out = Vec::with_capacity(meta.flows as usize);
        let mut r = Reader::new(log_body);
        while !r.is_empty() {
            let location = meta.start_offset + r.pos() as u64;
            let block = CompressedHeaderBlock::read_from(&mut r, location)?;
            out.push((location, block));
        }
        Ok(out)
    }

    pub fn read_index(&self, epoch: u64, field: IndexField) -> Result<EpochIndex> {
        let path = index_path(&self.fast_dir, epoch, field);
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.clone())
            } else {
                Error::Io(e)
            }
        })?;
        let idx = EpochIndex::from_bytes(&bytes)?;
        if idx.epoch_id != epoch || idx.field != field {
            return Err(Error::Corrupt {
                context: "epoch index".to_string(),
                offset: 0,
                reason: format!(
                    "index file identifies as epoch {} field {:?}, expected {epoch} {field:?}",
                    idx.epoch_id, idx.field
                ),
            });
        }
        Ok(idx)
    }

    pub fn chunk_reader(&self) -> ChunkReader<'_> {
        ChunkReader { archive: self, files: HashMap::new() }
    }

    /// Removes all epochs with `id < retain_until` and every segment
    /// whose reference horizon lies before the retained range. The
    /// manifest is updated first, so a crash mid-delete leaves only
    /// unreferenced files, never dangling manifest entries.
    pub fn evict_oldest(&mut self, retain_until: u64) -> Result<EvictReport> {
        let mut report = EvictReport::default();
        let (removed_epochs, kept_epochs): (Vec<EpochMeta>, Vec<EpochMeta>) =
            self.manifest.epochs.drain(..).partition(|e| e.id < retain_until);
        let (removed_segments, kept_segments): (Vec<SegmentMeta>, Vec<SegmentMeta>) =
            self.manifest.segments.drain(..).partition(|s| s.horizon < retain_until);
        self.manifest.epochs = kept_epochs;
        self.manifest.segments = kept_segments;
        if removed_epochs.is_empty() && removed_segments.is_empty() {
            return Ok(report);
        }
        write_manifest(&self.fast_dir, &self.manifest)?;

        for e in &removed_epochs {
            report.epochs_removed += 1;
            report.bytes_freed += (e.end_offset - e.start_offset) + FILE_HEADER_LEN + e.index_bytes;
            let _ = fs::remove_file(epoch_log_path(&self.fast_dir, e.id));
            let _ = fs::remove_file(index_path(&self.fast_dir, e.id, IndexField::IpAddr));
            let _ = fs::remove_file(index_path(&self.fast_dir, e.id, IndexField::Port));
        }
        for s in &removed_segments {
            report.segments_removed += 1;
            report.bytes_freed += s.bytes;
            let _ = fs::remove_file(segment_path(&self.bulk_dir, s.id));
        }
        Ok(report)
    }
}

/// Random-access chunk reads with per-segment file handle caching.
pub struct ChunkReader<'a> {
    archive: &'a Archive,
    files: HashMap<u64, File>,
}

impl ChunkReader<'_> {
    /// Reads and decompresses one chunk. Evicted or never-recorded
    /// segments yield [`Error::DataUnavailable`]; a live segment with a
    /// bad offset or broken record yields [`Error::Corrupt`].
    pub fn read_chunk(&mut self, location: ChunkLocation) -> Result<Vec<u8>> {
        let seg_id = u64::from(location.segment);
        let unavailable = || Error::DataUnavailable {
            segment: seg_id,
            offset: u64::from(location.offset),
        };
        if !self.archive.manifest.segments.iter().any(|s| s.id == seg_id) {
            return Err(unavailable());
        }
        if !self.files.contains_key(&seg_id) {
            let path = segment_path(&self.archive.bulk_dir, seg_id);
            let mut file = match File::open(&path) {
                Ok(f) => f,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(unavailable()),
                Err(e) => return Err(Error::Io(e)),
            };
            let mut header = [0u8; FILE_HEADER_LEN as usize];
            file.read_exact(&mut header).map_err(|_| Error::Corrupt {
                context: "chunk segment".to_string(),
                offset: 0,
                reason: "file shorter than its header".to_string(),
            })?;
            check_file_header(&header, SEGMENT_MAGIC, seg_id, "chunk segment")?;
            self.files.insert(seg_id, file);
        }
        let file = self.files.get_mut(&seg_id).expect("just inserted");

        // Two reads: a bounded probe for the record framing, then the
        // stored bytes it declares.
        let mut probe = [0u8; 32];
        file.seek(SeekFrom::Start(u64::from(location.offset)))?;
        let got = read_up_to(file, &mut probe)?;
        let (raw_len, compressor_id, framing_len, stored_len) =
            chunk::read_chunk_record_header(&probe[..got], u64::from(location.offset))?;
        let mut stored = Vec::with_capacity(stored_len);
        stored.extend_from_slice(&probe[framing_len..got.min(framing_len + stored_len)]);
        if stored.len() < stored_len {
            let mut rest = vec![0u8; stored_len - stored.len()];
            file.read_exact(&mut rest).map_err(|_| Error::Corrupt {
                context: "chunk record".to_string(),
                offset: u64::from(location.offset),
                reason: "record extends past end of segment".to_string(),
            })?;
            stored.extend_from_slice(&rest);
        }
        let compressor = Compressor::from_id(compressor_id).ok_or_else(|| Error::Corrupt {
            context: "chunk record".to_string(),
            offset: u64::from(location.offset),
            reason: format!("unknown compressor id {compressor_id}"),
        })?;
        compress::unpack(compressor, &stored, raw_len as usize).map_err(|e| Error::Corrupt {
            context: "chunk record".to_string(),
            offset: u64::from(location.offset),
            reason: e.to_string(),
        })
    }
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = file.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::ChunkRef;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::net::Ipv4Addr;

    fn test_writer(dir: &Path) -> ArchiveWriter {
        ArchiveWriter::create(
            &dir.join("fast"),
            &dir.join("bulk"),
            1,
            60_000_000,
            "cdc:4096".to_string(),
            10_000_000_000,
            300_000_000,
            15_000_000,
            Compressor::Deflate,
            Compressor::Deflate,
        )
        .unwrap()
    }

    fn key(n: u8) -> FlowKey {
        FlowKey {
            src_ip: Ipv4Addr::new(10, 0, 0, n),
            dst_ip: Ipv4Addr::new(10, 0, 1, n),
            protocol: 6,
            src_port: 1000 + u16::from(n),
            dst_port: 443,
        }
    }

    fn block(n: u8, refs: Vec<ChunkRef>) -> CompressedHeaderBlock {
        CompressedHeaderBlock {
            key: key(n),
            packet_count: u32::from(n),
            first_ts: u64::from(n) * 1000,
            chunk_refs: refs,
            residual: vec![0, n, 0], // stored-raw escape, tiny payload
        }
    }

    fn staged(n: u8, refs: Vec<ChunkRef>) -> StagedFlow {
        StagedFlow { key: key(n), packets: u64::from(n), block_bytes: block(n, refs).to_bytes() }
    }

    #[test]
    fn blocks_roundtrip_with_monotone_locations() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let flows = vec![staged(1, vec![]), staged(2, vec![]), staged(3, vec![])];
        let sizes: Vec<u64> = flows.iter().map(|f| f.block_bytes.len() as u64).collect();
        let meta = w.seal_epoch(0, &flows).unwrap().clone();
        assert_eq!(meta.start_offset, 0, "first block sits at offset zero");
        assert_eq!(meta.end_offset, sizes.iter().sum::<u64>());
        w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        let log = archive.read_epoch_log(0).unwrap();
        let all = archive.blocks_of_epoch(&meta, &log).unwrap();
        assert_eq!(all.len(), 3);
        // Second offset = first offset + first serialized size.
        assert_eq!(all[0].0, 0);
        assert_eq!(all[1].0, sizes[0]);
        assert_eq!(all[2].0, sizes[0] + sizes[1]);
        for (i, (loc, b)) in all.iter().enumerate() {
            assert_eq!(*b, block((i + 1) as u8, vec![]));
            let direct = archive.block_at(&meta, &log, *loc).unwrap();
            assert_eq!(direct, *b);
        }
        assert_eq!(archive.epoch_for_location(sizes[0]).unwrap().id, 0);
        assert_eq!(archive.epoch_for_location(meta.end_offset), None);
    }

    #[test]
    fn locations_stay_global_across_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let m0 = w.seal_epoch(0, &[staged(1, vec![]), staged(2, vec![])]).unwrap().clone();
        let m1 = w.seal_epoch(1, &[staged(3, vec![])]).unwrap().clone();
        assert_eq!(m1.start_offset, m0.end_offset);
        w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        assert_eq!(archive.epoch_for_location(m1.start_offset).unwrap().id, 1);
        let log = archive.read_epoch_log(1).unwrap();
        let b = archive.block_at(&m1, &log, m1.start_offset).unwrap();
        assert_eq!(b, block(3, vec![]));
        assert_eq!(archive.newest_sealed_end(), Some(120_000_000));
    }

    #[test]
    fn sealing_out_of_order_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        w.seal_epoch(5, &[]).unwrap();
        assert!(w.seal_epoch(5, &[]).is_err());
        assert!(w.seal_epoch(3, &[]).is_err());
    }

    #[test]
    fn empty_epoch_seals_with_empty_indexes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let meta = w.seal_epoch(0, &[]).unwrap().clone();
        assert_eq!(meta.start_offset, meta.end_offset);
        w.finish().unwrap();
        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        assert!(archive.read_epoch_log(0).unwrap().is_empty());
        let idx = archive.read_index(0, IndexField::IpAddr).unwrap();
        assert_eq!(idx.entry_count(), 0);
    }

    #[test]
    fn chunks_roundtrip_through_segments() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut written: Vec<(ChunkLocation, Vec<u8>)> = Vec::new();
        for epoch in 0..3u64 {
            let mut flows = Vec::new();
            for f in 0..5u8 {
                let mut refs = Vec::new();
                for _ in 0..rng.random_range(1..4) {
                    let raw: Vec<u8> = (0..rng.random_range(1..5000))
                        .map(|_| if rng.random_bool(0.5) { 0x11 } else { rng.random() })
                        .collect();
                    let (eff, stored) = compress::pack(Compressor::Deflate, &raw);
                    let loc =
                        w.append_chunk(epoch, raw.len() as u32, eff.id(), &stored).unwrap();
                    w.note_reference(epoch, epoch);
                    refs.push(ChunkRef { location: loc, raw_len: raw.len() as u32 });
                    written.push((loc, raw));
                }
                flows.push(staged(f + 1, refs));
            }
            w.seal_epoch(epoch, &flows).unwrap();
        }
        w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        let mut reader = archive.chunk_reader();
        for (loc, raw) in &written {
            assert_eq!(&reader.read_chunk(*loc).unwrap(), raw);
        }
    }

    #[test]
    fn many_random_chunk_records_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut written = Vec::new();
        for _ in 0..10_000 {
            let mut raw = vec![0u8; rng.random_range(0..600)];
            rng.fill_bytes(&mut raw);
            let (eff, stored) = compress::pack(Compressor::Deflate, &raw);
            let loc = w.append_chunk(0, raw.len() as u32, eff.id(), &stored).unwrap();
            written.push((loc, raw));
        }
        w.note_reference(0, 0);
        w.seal_epoch(0, &[]).unwrap();
        w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        let mut reader = archive.chunk_reader();
        for (loc, raw) in &written {
            assert_eq!(&reader.read_chunk(*loc).unwrap(), raw, "chunk at {loc:?}");
        }
    }

    #[test]
    fn bad_chunk_reads_error_rather_than_return_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let loc = w.append_chunk(0, 4, 0, b"abcd").unwrap();
        w.note_reference(0, 0);
        w.seal_epoch(0, &[]).unwrap();
        w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        let mut reader = archive.chunk_reader();
        assert!(reader.read_chunk(loc).is_ok());
        // Past the end of the segment.
        let past = ChunkLocation { segment: 0, offset: 10_000 };
        assert!(matches!(reader.read_chunk(past), Err(Error::Corrupt { .. })));
        // Offset pointing into the middle of a record.
        let mid = ChunkLocation { segment: 0, offset: loc.offset + 1 };
        assert!(matches!(reader.read_chunk(mid), Err(Error::Corrupt { .. })));
        // A segment that never existed.
        let missing = ChunkLocation { segment: 99, offset: 13 };
        assert!(matches!(reader.read_chunk(missing), Err(Error::DataUnavailable { .. })));
    }

    #[test]
    fn manifest_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        w.append_chunk(0, 3, 0, b"xyz").unwrap();
        w.note_reference(0, 2);
        w.seal_epoch(0, &[staged(1, vec![])]).unwrap();
        w.counters_mut().packets = 123;
        let manifest = w.finish().unwrap();

        let archive = Archive::open(&dir.path().join("fast"), None).unwrap();
        assert_eq!(archive.manifest, manifest);
        assert_eq!(archive.manifest.counters.packets, 123);
        assert_eq!(archive.manifest.segments[0].horizon, 2);
        assert_eq!(archive.manifest.link_type, 1);
    }

    #[test]
    fn create_refuses_to_clobber() {
        let dir = tempfile::tempdir().unwrap();
        let w = test_writer(dir.path());
        w.finish().unwrap();
        let again = ArchiveWriter::create(
            &dir.path().join("fast"),
            &dir.path().join("bulk"),
            1,
            60_000_000,
            "none".to_string(),
            0,
            300_000_000,
            15_000_000,
            Compressor::Deflate,
            Compressor::Deflate,
        );
        assert!(again.is_err());
    }

    #[test]
    fn eviction_removes_epochs_and_unreferenced_segments() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = test_writer(dir.path());
        let mut locs = Vec::new();
        for epoch in 0..4u64 {
            let raw = vec![epoch as u8; 100];
            let loc = w.append_chunk(epoch, raw.len() as u32, 0, &raw).unwrap();
            w.note_reference(epoch, epoch);
            locs.push(loc);
            // Epoch 2's flow also references epoch 0's chunk (dedup).
            let refs = if epoch == 2 {
                w.note_reference(0, 2);
                vec![
                    ChunkRef { location: locs[0], raw_len: 100 },
                    ChunkRef { location: loc, raw_len: 100 },
                ]
            } else {
                vec![ChunkRef { location: loc, raw_len: 100 }]
            };
            let flows = vec![staged(epoch as u8 + 1, refs)];
            w.seal_epoch(epoch, &flows).unwrap();
        }
        w.finish().unwrap();

        let fast = dir.path().join("fast");
        let mut archive = Archive::open(&fast, None).unwrap();
        let noop = archive.evict_oldest(0).unwrap();
        assert_eq!(noop.epochs_removed, 0, "retain boundary 0 keeps everything");
        assert_eq!(noop.segments_removed, 0);

        let report = archive.evict_oldest(2).unwrap();
        assert_eq!(report.epochs_removed, 2);
        // Segment 0 survives: epoch 2 still references it. Segment 1 goes.
        assert_eq!(report.segments_removed, 1);
        assert!(report.bytes_freed > 0);

        let reopened = Archive::open(&fast, None).unwrap();
        assert_eq!(reopened.manifest.epochs.len(), 2);
        assert!(reopened.manifest.segments.iter().any(|s| s.id == 0));
        assert!(!reopened.manifest.segments.iter().any(|s| s.id == 1));
        assert!(!epoch_log_path(&fast, 0).exists());
        assert!(!index_path(&fast, 1, IndexField::Port).exists());
        assert!(epoch_log_path(&fast, 2).exists());

        // Retained chunk readable; evicted chunk is an explicit error.
        let mut reader = reopened.chunk_reader();
        assert!(reader.read_chunk(locs[0]).is_ok());
        assert!(matches!(reader.read_chunk(locs[1]), Err(Error::DataUnavailable { .. })));

        // Evict everything: empty archive.
        let mut archive = Archive::open(&fast, None).unwrap();
        archive.evict_oldest(100).unwrap();
        let empty = Archive::open(&fast, None).unwrap();
        assert!(empty.manifest.epochs.is_empty());
        assert!(empty.manifest.segments.is_empty());
        assert_eq!(empty.newest_sealed_end(), None);
    }
}
