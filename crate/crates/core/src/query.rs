//! Query engine: time-range and flow-key criteria over a sealed
//! archive, with bounded work and checkpointable execution.
//!
//! A query runs as a sequence of **work units**. Each unit does at most
//! one epoch's index lookups or at most [`PROCESS_BATCH`] flow
//! reconstructions, and between units the task can be serialized to a
//! checkpoint and resumed later — that is what lets a live system
//! interleave query progress with ingest without dropping packets.
//! Results are identical whether the task runs straight through or is
//! checkpointed at every step, because a unit never commits partial
//! work.
//!
//! Index lookups return bucket-level candidates (supersets); every
//! candidate's flow key is verified against the full criteria before
//! anything is decompressed. Header residuals are decoded only for
//! verified matches, so work stays proportional to matches plus bucket
//! collisions, never to archive size — except where no predicate is
//! indexed (e.g. protocol-only queries), which fall back to an
//! exhaustive scan of the selected epochs and say so in the stats.
//!
//! Time ranges select whole epochs: a flow belongs to the epoch
//! containing its **end** timestamp, and a range covers every epoch it
//! overlaps. Time filtering is deliberately epoch-granular — header
//! blocks are never decoded just to apply a finer time cut.

use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::header_codec::DecodedPacket;
use crate::index::{intersect, IndexField};
use crate::packet::{FlowKey, Packet};
use crate::payload;
use crate::store::{Archive, Manifest};

/// Max flow reconstructions per process unit.
pub const PROCESS_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeRange {
    /// The trailing span (µs) ending at the newest sealed epoch's end.
    Last(u64),
    Entire,
    /// Half-open interval `[t0, t1)` in trace-time microseconds.
    Interval(u64, u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criteria {
    pub src_ip: Option<Ipv4Addr>,
    pub dst_ip: Option<Ipv4Addr>,
    /// Matches flows with this address on either side.
    pub any_ip: Option<Ipv4Addr>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    /// Matches flows with this port on either side.
    pub any_port: Option<u16>,
    pub protocol: Option<u8>,
}

impl Criteria {
    pub fn is_empty(&self) -> bool {
        self.src_ip.is_none()
            && self.dst_ip.is_none()
            && self.any_ip.is_none()
            && self.src_port.is_none()
            && self.dst_port.is_none()
            && self.any_port.is_none()
            && self.protocol.is_none()
    }

    /// Exact conjunction over a flow key (the verification step).
    pub fn matches(&self, key: &FlowKey) -> bool {
        self.src_ip.map_or(true, |v| key.src_ip == v)
            && self.dst_ip.map_or(true, |v| key.dst_ip == v)
            && self.any_ip.map_or(true, |v| key.src_ip == v || key.dst_ip == v)
            && self.src_port.map_or(true, |v| key.src_port == v)
            && self.dst_port.map_or(true, |v| key.dst_port == v)
            && self.any_port.map_or(true, |v| key.src_port == v || key.dst_port == v)
            && self.protocol.map_or(true, |v| key.protocol == v)
    }

    /// Values each index can narrow by. Protocol has no index.
    fn index_values(&self) -> (Vec<[u8; 4]>, Vec<[u8; 2]>) {
        let ips = [self.src_ip, self.dst_ip, self.any_ip]
            .into_iter()
            .flatten()
            .map(|ip| ip.octets())
            .collect();
        let ports = [self.src_port, self.dst_port, self.any_port]
            .into_iter()
            .flatten()
            .map(|p| p.to_be_bytes())
            .collect();
        (ips, ports)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retrieval {
    /// Does anything match? Stops at the first verified flow.
    Existence,
    /// Reconstructed packet headers only; original lengths preserved.
    Headers,
    /// Byte-exact packets, payloads included.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub time: Option<TimeRange>,
    pub criteria: Criteria,
    pub retrieve: Retrieval,
}

impl Default for Query {
    fn default() -> Self {
        Query { time: None, criteria: Criteria::default(), retrieve: Retrieval::Headers }
    }
}

impl Query {
    pub fn validate(&self) -> Result<()> {
        if self.time.is_none() && self.criteria.is_empty() {
            return Err(Error::InvalidQuery(
                "a query needs a time range, at least one criterion, or both".into(),
            ));
        }
        if let Some(TimeRange::Interval(t0, t1)) = self.time {
            if t0 >= t1 {
                return Err(Error::InvalidQuery(format!(
                    "empty time interval: start {t0} must precede end {t1}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub epochs_selected: u64,
    pub lookup_units: u64,
    pub process_units: u64,
    /// Epochs scanned exhaustively because no predicate was indexed.
    pub full_scan_epochs: u64,
    /// Index candidates examined (bucket hits before verification).
    pub candidates: u64,
    pub verified_matches: u64,
    /// Candidates whose key failed verification (bucket collisions).
    pub false_positives: u64,
    /// Blocks whose framing was parsed (key checks; no decompression).
    pub blocks_parsed: u64,
    /// Blocks whose header residual was actually decompressed.
    pub blocks_decompressed: u64,
    pub header_log_bytes_read: u64,
    pub index_bytes_read: u64,
    pub chunks_read: u64,
    /// Raw payload bytes reassembled from the bulk tier.
    pub chunk_bytes_read: u64,
    pub flows_emitted: u64,
    pub packets_emitted: u64,
    /// Flows that matched but whose payload chunks were evicted; one
    /// entry per flow naming the missing segment.
    pub data_unavailable: Vec<String>,
    pub wall_ms: u64,
}

/// Final result of a query run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    /// For existence queries: whether any flow matched.
    pub found: bool,
    /// Matched packets, globally ordered by (timestamp, ingest order).
    /// Empty for existence queries.
    pub packets: Vec<Packet>,
    pub stats: QueryStats,
}

/// Epochs a time range selects, against a given manifest snapshot.
fn select_epochs(manifest: &Manifest, time: Option<TimeRange>) -> Vec<u64> {
    let epoch_len = manifest.epoch_len;
    let ids = manifest.epochs.iter().map(|m| m.id);
    match time.unwrap_or(TimeRange::Entire) {
        TimeRange::Entire => ids.collect(),
        TimeRange::Last(span) => {
            let Some(end) = manifest.epochs.last().map(|m| (m.id + 1) * epoch_len) else {
                return Vec::new();
            };
            let start = end.saturating_sub(span);
            ids.filter(|id| (id + 1) * epoch_len > start).collect()
        }
        TimeRange::Interval(t0, t1) => {
            ids.filter(|id| (id + 1) * epoch_len > t0 && id * epoch_len < t1).collect()
        }
    }
}

/// A resumable query execution. Drive it with [`QueryTask::run_unit`]
/// until it returns `false`; between any two units the task may be
/// serialized with [`QueryTask::checkpoint`] and revived later with
/// [`QueryTask::restore`] — the outcome is the same either way. The
/// sealed-epoch set is snapshotted at construction, so epochs sealed
/// while the task runs stay invisible to it.
#[derive(Serialize, Deserialize)]
pub struct QueryTask {
    query: Query,
    snapshot: Manifest,
    fast_dir: PathBuf,
    bulk_dir: PathBuf,
    epoch_queue: Vec<u64>,
    next_epoch: usize,
    current_epoch: Option<u64>,
    candidates: Vec<u64>,
    next_candidate: usize,
    found: bool,
    done: bool,
    packets: Vec<Packet>,
    stats: QueryStats,
    /// Epochs whose log load has been counted in the stats already (so
    /// a resume-forced reload is not double-counted).
    counted_log_loads: Vec<u64>,
    #[serde(skip)]
    log_cache: Option<(u64, Vec<u8>)>,
}

impl QueryTask {
    pub fn new(archive: &Archive, query: Query) -> Result<QueryTask> {
        query.validate()?;
        let snapshot = archive.manifest.clone();
        let epoch_queue = select_epochs(&snapshot, query.time);
        let stats =
            QueryStats { epochs_selected: epoch_queue.len() as u64, ..QueryStats::default() };
        Ok(QueryTask {
            query,
            snapshot,
            fast_dir: archive.fast_dir.clone(),
            bulk_dir: archive.bulk_dir.clone(),
            epoch_queue,
            next_epoch: 0,
            current_epoch: None,
            candidates: Vec::new(),
            next_candidate: 0,
            found: false,
            done: false,
            packets: Vec::new(),
            stats,
            counted_log_loads: Vec::new(),
            log_cache: None,
        })
    }

    pub fn stats(&self) -> &QueryStats {
        &self.stats
    }

    /// Serializes the task between work units.
    pub fn checkpoint(&self) -> Result<String> {
        serde_json::to_string(self)
            .map_err(|e| Error::Archive(format!("query checkpoint failed: {e}")))
    }

    pub fn restore(checkpoint: &str) -> Result<QueryTask> {
        serde_json::from_str(checkpoint)
            .map_err(|e| Error::Archive(format!("query checkpoint is not readable: {e}")))
    }

    /// A read view consistent with this task's snapshot.
    fn archive(&self) -> Archive {
        Archive {
            fast_dir: self.fast_dir.clone(),
            bulk_dir: self.bulk_dir.clone(),
            manifest: self.snapshot.clone(),
        }
    }

    /// Runs one bounded work unit. Returns `true` while work remains.
    pub fn run_unit(&mut self) -> Result<bool> {
        if self.done {
            return Ok(false);
        }
        let started = Instant::now();
        let outcome = if self.current_epoch.is_some() && self.next_candidate < self.candidates.len()
        {
            self.process_unit()
        } else if self.next_epoch < self.epoch_queue.len() {
            self.lookup_unit()
        } else {
            self.done = true;
            Ok(false)
        };
        self.stats.wall_ms += started.elapsed().as_millis() as u64;
        outcome
    }

    /// Loads one epoch's indexes and computes its candidate locations.
    fn lookup_unit(&mut self) -> Result<bool> {
        let archive = self.archive();
        let epoch = self.epoch_queue[self.next_epoch];
        self.next_epoch += 1;
        self.current_epoch = Some(epoch);
        self.next_candidate = 0;
        self.stats.lookup_units += 1;

        let (ips, ports) = self.query.criteria.index_values();
        if ips.is_empty() && ports.is_empty() {
            // Nothing indexed narrows this query: exhaustive scan.
            self.stats.full_scan_epochs += 1;
            let meta = archive
                .epoch(epoch)
                .ok_or_else(|| Error::Archive(format!("epoch {epoch} vanished from snapshot")))?
                .clone();
            let locations = {
                let log = self.epoch_log(&archive, epoch)?;
                let mut locations = Vec::new();
                let mut r = crate::varint::Reader::new(log);
                while !r.is_empty() {
                    let location = meta.start_offset + r.pos() as u64;
                    crate::header_codec::CompressedHeaderBlock::read_from(&mut r, location)?;
                    locations.push(location);
                }
                locations
            };
            self.stats.blocks_parsed += locations.len() as u64;
            self.candidates = locations;
        } else {
            let mut lists: Vec<Vec<u64>> = Vec::new();
            if !ips.is_empty() {
                let idx = archive.read_index(epoch, IndexField::IpAddr)?;
                self.stats.index_bytes_read += idx.serialized_len();
                for ip in &ips {
                    lists.push(idx.lookup(ip).to_vec());
                }
            }
            if !ports.is_empty() {
                let idx = archive.read_index(epoch, IndexField::Port)?;
                self.stats.index_bytes_read += idx.serialized_len();
                for port in &ports {
                    lists.push(idx.lookup(port).to_vec());
                }
            }
            let slices: Vec<&[u64]> = lists.iter().map(Vec::as_slice).collect();
            self.candidates = intersect(&slices);
            self.stats.candidates += self.candidates.len() as u64;
        }
        Ok(true)
    }

    /// Verifies and reconstructs up to [`PROCESS_BATCH`] candidates.
    fn process_unit(&mut self) -> Result<bool> {
        let archive = self.archive();
        let epoch = self.current_epoch.expect("process unit needs an epoch");
        let meta = archive
            .epoch(epoch)
            .ok_or_else(|| Error::Archive(format!("epoch {epoch} vanished from snapshot")))?
            .clone();
        self.stats.process_units += 1;
        let end = (self.next_candidate + PROCESS_BATCH).min(self.candidates.len());
        let batch: Vec<u64> = self.candidates[self.next_candidate..end].to_vec();
        self.next_candidate = end;

        let full_scan = {
            let (ips, ports) = self.query.criteria.index_values();
            ips.is_empty() && ports.is_empty()
        };
        for location in batch {
            let block = {
                let log = self.epoch_log(&archive, epoch)?;
                archive.block_at(&meta, log, location)?
            };
            if !full_scan {
                self.stats.blocks_parsed += 1;
            }
            if !self.query.criteria.matches(&block.key) {
                if !full_scan {
                    self.stats.false_positives += 1;
                }
                continue;
            }
            self.stats.verified_matches += 1;
            match self.query.retrieve {
                Retrieval::Existence => {
                    self.found = true;
                    self.stats.flows_emitted += 1;
                    self.done = true;
                    return Ok(false);
                }
                Retrieval::Headers => {
                    let decoded = self.decode(&block)?;
                    for d in &decoded {
                        self.push_packet(d, d.header_bytes.clone())?;
                    }
                    self.stats.flows_emitted += 1;
                }
                Retrieval::Full => {
                    let decoded = self.decode(&block)?;
                    let mut reader = archive.chunk_reader();
                    let stream = match payload::reassemble(&block.chunk_refs, &mut reader) {
                        Ok(stream) => stream,
                        Err(Error::DataUnavailable { segment, offset }) => {
                            self.stats.data_unavailable.push(format!(
                                "flow {} at location {location}: chunk segment {segment} (offset {offset}) has been evicted",
                                block.key
                            ));
                            continue;
                        }
                        Err(other) => return Err(other),
                    };
                    self.stats.chunks_read += block.chunk_refs.len() as u64;
                    self.stats.chunk_bytes_read += stream.len() as u64;
                    let payloads = payload::packet_payloads(&stream, &decoded)?;
                    for (d, pay) in decoded.iter().zip(payloads) {
                        let mut data = d.header_bytes.clone();
                        data.extend_from_slice(pay);
                        self.push_packet(d, data)?;
                    }
                    self.stats.flows_emitted += 1;
                }
            }
        }
        Ok(true)
    }

    fn decode(&mut self, block: &crate::header_codec::CompressedHeaderBlock) -> Result<Vec<DecodedPacket>> {
        self.stats.blocks_decompressed += 1;
        crate::header_codec::decompress_headers(block)
    }

    fn push_packet(&mut self, d: &DecodedPacket, data: Vec<u8>) -> Result<()> {
        let packet = Packet::new(d.ts_sec(), d.ts_frac(), d.original_len, data, d.seq)?;
        self.stats.packets_emitted += 1;
        self.packets.push(packet);
        Ok(())
    }

    fn epoch_log(&mut self, archive: &Archive, epoch: u64) -> Result<&[u8]> {
        if self.log_cache.as_ref().map(|(id, _)| *id) != Some(epoch) {
            let body = archive.read_epoch_log(epoch)?;
            if !self.counted_log_loads.contains(&epoch) {
                self.counted_log_loads.push(epoch);
                self.stats.header_log_bytes_read += body.len() as u64;
            }
            self.log_cache = Some((epoch, body));
        }
        Ok(&self.log_cache.as_ref().expect("just filled").1)
    }

    /// Finishes the task and hands back ordered results.
    pub fn into_outcome(mut self) -> QueryOutcome {
        self.packets.sort_by_key(|p| (p.ts_micros(), p.seq));
        QueryOutcome { found: self.found, packets: self.packets, stats: self.stats }
    }
}

/// Runs a query start to finish in one call.
pub fn execute(archive: &Archive, query: Query) -> Result<QueryOutcome> {
    let mut task = QueryTask::new(archive, query)?;
    while task.run_unit()? {}
    Ok(task.into_outcome())
}

/// Runs a query checkpointing after every unit, exercising the same
/// serialization a live deployment would; results must equal
/// [`execute`]'s.
pub fn execute_checkpointed(archive: &Archive, query: Query) -> Result<QueryOutcome> {
    let mut task = QueryTask::new(archive, query)?;
    loop {
        let more = task.run_unit()?;
        let saved = task.checkpoint()?;
        task = QueryTask::restore(&saved)?;
        if !more {
            break;
        }
    }
    Ok(task.into_outcome())
}
