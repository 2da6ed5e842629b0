//! Lossless, flow-oriented packet archival.
//!
//! The library turns a pcap stream into a two-tier archive that can be
//! queried fast and replayed byte-for-byte:
//!
//! * [`pcap`] reads and writes classic capture files.
//! * [`packet`] and [`flow`] parse protocol headers and regroup packets
//!   into flows with bounded buffering.
//! * [`header_codec`] stores each flow's protocol headers as predicted
//!   fields plus compressed residuals; [`chunk`] and [`payload`] cut
//!   payload bytes into content-defined chunks and deduplicate them
//!   against a time-windowed [`chunk_index`].
//! * [`store`] owns the on-disk layout — an append-only header log,
//!   per-epoch flow [`index`]es, and bulk payload segments — with
//!   crash-safe epoch seals and oldest-first eviction.
//! * [`recorder`] drives ingest end to end; [`query`] answers
//!   five-tuple/time questions in bounded work units that can be
//!   checkpointed and resumed.
//! * [`workload`] generates synthetic traces with known ground truth,
//!   prices the result, and sweeps dedup windows offline; [`cli`] wraps
//!   everything in a command-line tool.

pub mod chunk;
pub mod chunk_index;
pub mod cli;
pub mod compress;
pub mod error;
pub mod flow;
pub mod header_codec;
pub mod index;
pub mod packet;
pub mod payload;
pub mod pcap;
pub mod query;
pub mod recorder;
pub mod store;
pub mod varint;
pub mod wire;
pub mod workload;

pub use error::{Error, Result};
