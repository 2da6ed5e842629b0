//! The record pipeline: packets in, sealed archive out.
//!
//! Stages, in data order:
//!
//! 1. **Group** — packets accumulate into flows ([`crate::flow`]).
//! 2. **Prepare** — per emitted flow: assemble the payload stream, cut
//!    and compress chunks, compress headers. Pure per-flow work, fanned
//!    out to worker threads when `workers > 1`.
//! 3. **Commit** — dedup decisions and segment appends, strictly in
//!    flow-emission order on one thread. A reorder buffer puts worker
//!    results back in sequence first, so the archive's bytes do not
//!    depend on the worker count or scheduling.
//! 4. **Seal** — when trace time passes an epoch's end by the idle
//!    timeout, no open flow can end inside it anymore; its staged
//!    blocks and indexes are written out and published.
//!
//! Epochs are half-open trace-time intervals `[k·E, (k+1)·E)` keyed by
//! flow **end** time; a flow spanning a boundary belongs to the epoch
//! where it ends. Sealing waits the extra idle timeout because a flow
//! last active just inside an epoch keeps its buffer open exactly that
//! long; a flow whose end still lands in a sealed epoch (possible only
//! under timestamp regression beyond the idle timeout) is carried into
//! the oldest unsealed epoch with a warning rather than dropped.
//!
//! All clocks here are trace time from packet timestamps — never wall
//! time — so recording a capture file and replaying it live produce the
//! same archive.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chunk::ChunkingConfig;
use crate::chunk_index::InMemoryChunkIndex;
use crate::compress::Compressor;
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowGrouper, GrouperConfig};
use crate::header_codec::{self, CompressedHeaderBlock};
use crate::packet::{Packet, ParseClass};
use crate::payload;
use crate::pcap::PcapReader;
use crate::store::{Archive, ArchiveCounters, ArchiveWriter, Manifest, StagedFlow};

#[derive(Debug, Clone, Copy)]
pub struct RecorderConfig {
    /// Epoch length in microseconds of trace time.
    pub epoch_len: u64,
    pub grouper: GrouperConfig,
    pub chunking: ChunkingConfig,
    /// Dedup window in microseconds; 0 disables dedup.
    pub dedup_window: u64,
    pub header_compressor: Compressor,
    pub chunk_compressor: Compressor,
    /// Prepare-stage threads; 1 runs everything inline.
    pub workers: usize,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        RecorderConfig {
            epoch_len: 60_000_000,
            grouper: GrouperConfig::default(),
            chunking: ChunkingConfig::cdc(4096),
            dedup_window: 600_000_000,
            header_compressor: Compressor::Deflate,
            chunk_compressor: Compressor::Deflate,
            workers: 1,
        }
    }
}

impl RecorderConfig {
    fn validate(&self) -> Result<()> {
        if self.epoch_len == 0 {
            return Err(Error::InvalidConfig("epoch length must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("worker count must be at least 1".into()));
        }
        self.chunking.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageTimings {
    /// Reading and decoding capture input.
    pub read_ms: u64,
    /// Flow grouping.
    pub group_ms: u64,
    /// Per-flow chunking + compression (summed across workers, so this
    /// can exceed wall time).
    pub prepare_ms: u64,
    /// Dedup decisions and tier writes.
    pub commit_ms: u64,
    /// Epoch sealing (index build, fsync, manifest).
    pub seal_ms: u64,
    pub wall_ms: u64,
}

/// Everything `record` reports when it finishes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecordReport {
    pub counters: ArchiveCounters,
    pub epochs_sealed: u64,
    pub fast_tier_bytes: u64,
    pub bulk_tier_bytes: u64,
    pub timings: StageTimings,
    /// Raw capture megabytes per wall second.
    pub throughput_mbps: f64,
    // The toggles this run used, echoed for the report.
    pub epoch_len: u64,
    pub chunking: String,
    pub dedup_window: u64,
    pub workers: usize,
    pub header_compressor: String,
    pub chunk_compressor: String,
}

/// Result of the pure per-flow prepare stage.
struct FlowArtifacts {
    epoch: u64,
    end_ts: u64,
    packets: u64,
    block: CompressedHeaderBlock,
    chunks: Vec<payload::PreparedChunk>,
    class_counts: [u64; 4],
    raw_header_bytes: u64,
    raw_payload_bytes: u64,
    prepare_micros: u64,
}

fn prepare_flow(flow: &Flow, config: &RecorderConfig) -> FlowArtifacts {
    let started = Instant::now();
    let stream = payload::assemble(flow);
    let chunks = payload::prepare_chunks(&stream.bytes, config.chunking, config.chunk_compressor);
    let block = header_codec::compress_headers(flow, config.header_compressor);
    let mut class_counts = [0u64; 4];
    let mut raw_header_bytes = 0u64;
    for fp in &flow.packets {
        class_counts[fp.parsed.class().as_u8() as usize] += 1;
        raw_header_bytes += crate::pcap::RECORD_HEADER_LEN as u64 + fp.parsed.payload_offset() as u64;
    }
    let end_ts = flow.end_ts();
    FlowArtifacts {
        epoch: end_ts / config.epoch_len,
        end_ts,
        packets: flow.packets.len() as u64,
        block,
        chunks,
        class_counts,
        raw_header_bytes,
        raw_payload_bytes: stream.bytes.len() as u64,
        prepare_micros: started.elapsed().as_micros() as u64,
    }
}

struct WorkerPool {
    job_tx: Option<mpsc::SyncSender<(u64, Flow)>>,
    result_rx: mpsc::Receiver<(u64, FlowArtifacts)>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    fn spawn(config: RecorderConfig) -> WorkerPool {
        let (job_tx, job_rx) = mpsc::sync_channel::<(u64, Flow)>(config.workers * 4);
        let (result_tx, result_rx) = mpsc::channel();
        let job_rx = Arc::new(Mutex::new(job_rx));
        let handles = (0..config.workers)
            .map(|_| {
                let job_rx = Arc::clone(&job_rx);
                let result_tx = result_tx.clone();
                std::thread::spawn(move || loop {
                    let job = job_rx.lock().expect("job queue poisoned").recv();
                    match job {
                        Ok((seq, flow)) => {
                            let artifacts = prepare_flow(&flow, &config);
                            if result_tx.send((seq, artifacts)).is_err() {
                                return;
                            }
                        }
                        Err(_) => return,
                    }
                })
            })
            .collect();
        WorkerPool { job_tx: Some(job_tx), result_rx, handles }
    }
}

pub struct Recorder {
    writer: ArchiveWriter,
    config: RecorderConfig,
    link_type: u32,
    grouper: FlowGrouper,
    chunk_index: InMemoryChunkIndex,
    /// Blocks awaiting their epoch's seal, in commit order per epoch.
    staged: BTreeMap<u64, Vec<StagedFlow>>,
    pool: Option<WorkerPool>,
    /// Worker results that arrived ahead of their turn.
    reorder: BTreeMap<u64, FlowArtifacts>,
    next_seq: u64,
    next_commit: u64,
    in_flight: usize,
    sealed_through: Option<u64>,
    /// Largest packet timestamp ingested so far (trace time).
    max_ts: u64,
    started: Instant,
    group_micros: u64,
    prepare_micros: u64,
    commit_micros: u64,
    seal_micros: u64,
    read_micros: u64,
}

impl Recorder {
    pub fn new(writer: ArchiveWriter, config: RecorderConfig) -> Result<Recorder> {
        config.validate()?;
        let link_type = writer.manifest().link_type;
        let pool = (config.workers > 1).then(|| WorkerPool::spawn(config));
        Ok(Recorder {
            writer,
            config,
            link_type,
            grouper: FlowGrouper::new(config.grouper),
            chunk_index: InMemoryChunkIndex::new(),
            staged: BTreeMap::new(),
            pool,
            reorder: BTreeMap::new(),
            next_seq: 0,
            next_commit: 0,
            in_flight: 0,
            sealed_through: None,
            max_ts: 0,
            started: Instant::now(),
            group_micros: 0,
            prepare_micros: 0,
            commit_micros: 0,
            seal_micros: 0,
            read_micros: 0,
        })
    }

    /// Newest sealed epoch id, if any epoch has sealed yet.
    pub fn sealed_through(&self) -> Option<u64> {
        self.sealed_through
    }

    pub fn ingest(&mut self, packet: Packet) -> Result<()> {
        let ts = packet.ts_micros();
        self.max_ts = self.max_ts.max(ts);
        let counters = self.writer.counters_mut();
        counters.packets += 1;
        counters.raw_pcap_bytes +=
            crate::pcap::RECORD_HEADER_LEN as u64 + u64::from(packet.captured_len());

        let grouped_at = Instant::now();
        let emitted = self.grouper.ingest(packet, self.link_type);
        self.group_micros += grouped_at.elapsed().as_micros() as u64;

        for (flow, _cause) in emitted {
            self.dispatch(flow)?;
        }
        self.drain_ready()?;
        self.maybe_seal()
    }

    fn dispatch(&mut self, flow: Flow) -> Result<()> {
        let seq = self.next_seq;
        self.next_seq += 1;
        match &self.pool {
            Some(pool) => {
                pool.job_tx
                    .as_ref()
                    .expect("pool alive while recording")
                    .send((seq, flow))
                    .map_err(|_| Error::Archive("prepare worker exited early".into()))?;
                self.in_flight += 1;
                Ok(())
            }
            None => {
                let artifacts = prepare_flow(&flow, &self.config);
                debug_assert_eq!(seq, self.next_commit);
                self.commit(artifacts)
            }
        }
    }

    /// Commits whatever worker results are already waiting, in order.
    fn drain_ready(&mut self) -> Result<()> {
        let Some(pool) = &self.pool else { return Ok(()) };
        while let Ok((seq, artifacts)) = pool.result_rx.try_recv() {
            self.in_flight -= 1;
            self.reorder.insert(seq, artifacts);
        }
        self.commit_in_order()
    }

    /// Blocks until every dispatched flow is committed.
    fn drain_all(&mut self) -> Result<()> {
        while self.in_flight > 0 {
            let pool = self.pool.as_ref().expect("in-flight jobs imply a pool");
            let (seq, artifacts) = pool
                .result_rx
                .recv()
                .map_err(|_| Error::Archive("prepare worker exited early".into()))?;
            self.in_flight -= 1;
            self.reorder.insert(seq, artifacts);
        }
        self.commit_in_order()?;
        debug_assert!(self.reorder.is_empty());
        Ok(())
    }

    fn commit_in_order(&mut self) -> Result<()> {
        while let Some(artifacts) = self.reorder.remove(&self.next_commit) {
            self.commit(artifacts)?;
        }
        Ok(())
    }

    fn commit(&mut self, mut artifacts: FlowArtifacts) -> Result<()> {
        let started = Instant::now();
        self.next_commit += 1;
        self.prepare_micros += artifacts.prepare_micros;

        // A flow may end inside an already-sealed epoch only after a
        // timestamp regression larger than the idle timeout; carry it
        // into the oldest epoch that can still accept flows.
        let mut epoch = artifacts.epoch;
        if let Some(sealed) = self.sealed_through {
            if epoch <= sealed {
                epoch = sealed + 1;
                log::warn!(
                    "flow ending at {}us belongs to sealed epoch {}; carrying it in epoch {epoch}",
                    artifacts.end_ts,
                    artifacts.epoch
                );
                self.writer.counters_mut().late_flows += 1;
            }
        }

        let (refs, outcome) = payload::dedup_and_store(
            &artifacts.chunks,
            epoch,
            artifacts.end_ts,
            self.config.dedup_window,
            &mut self.chunk_index,
            &mut self.writer,
        )?;
        artifacts.block.chunk_refs = refs;

        let counters = self.writer.counters_mut();
        counters.raw_header_bytes += artifacts.raw_header_bytes;
        counters.raw_payload_bytes += artifacts.raw_payload_bytes;
        counters.tcp_packets += artifacts.class_counts[ParseClass::Tcp.as_u8() as usize];
        counters.udp_packets += artifacts.class_counts[ParseClass::Udp.as_u8() as usize];
        counters.other_ip_packets += artifacts.class_counts[ParseClass::OtherIp.as_u8() as usize];
        counters.non_ip_packets += artifacts.class_counts[ParseClass::NonIp.as_u8() as usize];
        counters.dedup_hit_chunks += outcome.hit_chunks;
        counters.dedup_hit_bytes += outcome.hit_bytes;
        counters.chunks_stored += outcome.stored_chunks;
        counters.chunk_raw_bytes_stored += outcome.stored_raw_bytes;

        self.staged.entry(epoch).or_default().push(StagedFlow {
            key: artifacts.block.key,
            packets: artifacts.packets,
            block_bytes: artifacts.block.to_bytes(),
        });
        self.commit_micros += started.elapsed().as_micros() as u64;
        Ok(())
    }

    /// Seals every epoch that trace time has safely passed.
    fn maybe_seal(&mut self) -> Result<()> {
        loop {
            let candidate = match self.sealed_through {
                Some(sealed) => sealed + 1,
                None => match self.staged.keys().next() {
                    Some(&first) => first,
                    None => return Ok(()),
                },
            };
            let safe_after = (candidate + 1)
                .saturating_mul(self.config.epoch_len)
                .saturating_add(self.config.grouper.idle_timeout);
            if self.max_ts < safe_after {
                return Ok(());
            }
            // In-flight flows were emitted earlier and may belong to
            // the candidate; land them all before cutting it off.
            self.drain_all()?;
            self.seal(candidate)?;
        }
    }

    fn seal(&mut self, epoch: u64) -> Result<()> {
        let started = Instant::now();
        let flows = self.staged.remove(&epoch).unwrap_or_default();
        self.writer.seal_epoch(epoch, &flows)?;
        self.sealed_through = Some(epoch);
        self.seal_micros += started.elapsed().as_micros() as u64;
        Ok(())
    }

    pub fn add_read_micros(&mut self, micros: u64) {
        self.read_micros += micros;
    }

    pub fn set_truncated_tail(&mut self) {
        self.writer.counters_mut().truncated_tail = true;
    }

    /// Flushes all open flows, seals every remaining epoch (including
    /// empty ones between occupied ones), and publishes the final
    /// manifest.
    pub fn finish(mut self) -> Result<(RecordReport, Manifest)> {
        let flushed_at = Instant::now();
        let emitted = self.grouper.flush_all();
        self.group_micros += flushed_at.elapsed().as_micros() as u64;
        for (flow, _cause) in emitted {
            self.dispatch(flow)?;
        }
        self.drain_all()?;
        if let Some(pool) = &mut self.pool {
            pool.job_tx.take();
        }
        if let Some(pool) = self.pool.take() {
            for handle in pool.handles {
                handle.join().map_err(|_| Error::Archive("prepare worker panicked".into()))?;
            }
        }

        while let Some((&first, _)) = self.staged.first_key_value() {
            let next = match self.sealed_through {
                Some(sealed) => sealed + 1,
                None => first,
            };
            self.seal(next)?;
        }
        self.writer.counters_mut().timestamp_regressions = self.grouper.regressions();

        let config = self.config;
        let wall_ms = self.started.elapsed().as_millis() as u64;
        let timings = StageTimings {
            read_ms: self.read_micros / 1000,
            group_ms: self.group_micros / 1000,
            prepare_ms: self.prepare_micros / 1000,
            commit_ms: self.commit_micros / 1000,
            seal_ms: self.seal_micros / 1000,
            wall_ms,
        };
        let manifest = self.writer.finish()?;
        let report = RecordReport {
            counters: manifest.counters.clone(),
            epochs_sealed: manifest.epochs.len() as u64,
            fast_tier_bytes: manifest.fast_tier_bytes(),
            bulk_tier_bytes: manifest.bulk_tier_bytes(),
            timings,
            throughput_mbps: if wall_ms == 0 {
                0.0
            } else {
                manifest.counters.raw_pcap_bytes as f64 / 1e6 / (wall_ms as f64 / 1e3)
            },
            epoch_len: config.epoch_len,
            chunking: config.chunking.label(),
            dedup_window: config.dedup_window,
            workers: config.workers,
            header_compressor: config.header_compressor.name().to_string(),
            chunk_compressor: config.chunk_compressor.name().to_string(),
        };
        Ok((report, manifest))
    }
}

/// Records a capture stream into a fresh archive. This is the whole
/// record path in one call: used by the command-line tool and tests.
pub fn record_stream<R: Read>(
    input: R,
    fast_dir: &Path,
    bulk_dir: &Path,
    config: RecorderConfig,
) -> Result<RecordReport> {
    config.validate()?;
    let mut reader = PcapReader::new(input)?;
    let writer = ArchiveWriter::create(
        fast_dir,
        bulk_dir,
        reader.link_type(),
        config.epoch_len,
        config.chunking.label(),
        config.dedup_window,
        config.grouper.max_flow_duration,
        config.grouper.idle_timeout,
        config.header_compressor,
        config.chunk_compressor,
    )?;
    let mut recorder = Recorder::new(writer, config)?;
    recorder.writer.counters_mut().raw_pcap_bytes = crate::pcap::GLOBAL_HEADER_LEN as u64;
    loop {
        let read_at = Instant::now();
        let next = reader.next_packet();
        recorder.add_read_micros(read_at.elapsed().as_micros() as u64);
        match next {
            Ok(Some(packet)) => recorder.ingest(packet)?,
            Ok(None) => break,
            Err(e) => return Err(e),
        }
    }
    if reader.truncated_tail() {
        recorder.set_truncated_tail();
    }
    let (report, _manifest) = recorder.finish()?;
    Ok(report)
}

/// [`record_stream`] over a file path.
pub fn record_file(
    input: &Path,
    fast_dir: &Path,
    bulk_dir: &Path,
    config: RecorderConfig,
) -> Result<RecordReport> {
    let file = std::fs::File::open(input).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(input.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;
    record_stream(std::io::BufReader::new(file), fast_dir, bulk_dir, config)
}

/// Reopens a finished archive for reading.
pub fn open_archive(fast_dir: &Path, bulk_dir: Option<&Path>) -> Result<Archive> {
    Archive::open(fast_dir, bulk_dir)
}
