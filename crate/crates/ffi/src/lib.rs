//! C ABI over the flowvault archive engine.
//!
//! Every function returns an `int32_t` status: `0` success, `1` invalid
//! arguments or configuration, `2` data errors (missing or corrupt
//! archives, evicted payloads a query needed), `3` an internal fault.
//! On any nonzero status, [`fv_last_error_message`] returns a
//! heap-allocated, thread-local description of what went wrong; free it
//! (and every other string this library hands out) with
//! [`fv_string_free`].
//!
//! Archives are exposed as opaque [`FvArchive`] handles created by
//! [`fv_archive_open`] and released by [`fv_archive_close`]. A handle
//! snapshots the manifest at open time; reopen to observe epochs sealed
//! afterwards.
//!
//! The generated header lives at `include/flowvault.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use serde::Deserialize;

use flowvault::chunk::ChunkingConfig;
use flowvault::compress::Compressor;
use flowvault::error::Error;
use flowvault::flow::GrouperConfig;
use flowvault::pcap::PcapWriter;
use flowvault::query::{self, Criteria, Query, Retrieval, TimeRange};
use flowvault::recorder::{self, RecorderConfig};
use flowvault::store::Archive;

pub const FV_OK: i32 = 0;
pub const FV_ERR_INVALID: i32 = 1;
pub const FV_ERR_DATA: i32 = 2;
pub const FV_ERR_INTERNAL: i32 = 3;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?"))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(code: i32, msg: String) -> i32 {
    set_error(msg);
    code
}

fn fail_with(e: &Error) -> i32 {
    let code = match e {
        Error::InvalidConfig(_) | Error::InvalidQuery(_) => FV_ERR_INVALID,
        _ => FV_ERR_DATA,
    };
    fail(code, e.to_string())
}

/// Runs `f` with panics converted into `FV_ERR_INTERNAL`; a panic must
/// never unwind across the C boundary.
fn guarded(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(FV_ERR_INTERNAL, "internal fault (panic caught at the C boundary)".into()),
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail(FV_ERR_INVALID, format!("{what} must not be null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(FV_ERR_INVALID, format!("{what} is not valid UTF-8")))
}

fn export_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "?"))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// An open archive (opaque to C callers).
pub struct FvArchive {
    inner: Archive,
}

/// How [`FvTimeRange`] is interpreted.
#[repr(u32)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum FvRangeKind {
    /// The whole archive; `t0`/`t1` are ignored.
    Entire = 0,
    /// The trailing `t0` microseconds of the capture; `t1` is ignored.
    Last = 1,
    /// Capture-time microseconds `[t0, t1)`.
    Interval = 2,
}

/// Time selection for queries. Granularity is the epoch: the range
/// selects every epoch it overlaps.
#[repr(C)]
pub struct FvTimeRange {
    pub kind: FvRangeKind,
    pub t0_micros: u64,
    pub t1_micros: u64,
}

/// Flow predicates, ANDed together. Each value participates only when
/// its `has_*` flag is set. Addresses are IPv4 in host integer form:
/// `a.b.c.d` is `(a<<24) | (b<<16) | (c<<8) | d`.
#[repr(C)]
#[derive(Default)]
pub struct FvCriteria {
    pub has_src_ip: bool,
    pub src_ip: u32,
    pub has_dst_ip: bool,
    pub dst_ip: u32,
    /// Matches the address on either side.
    pub has_any_ip: bool,
    pub any_ip: u32,
    pub has_src_port: bool,
    pub src_port: u16,
    pub has_dst_port: bool,
    pub dst_port: u16,
    /// Matches the port on either side.
    pub has_any_port: bool,
    pub any_port: u16,
    /// IP protocol number (6 TCP, 17 UDP).
    pub has_protocol: bool,
    pub protocol: u8,
}

/// # Safety
/// `range` and `criteria` must each be null or valid for reads.
unsafe fn build_query(
    range: *const FvTimeRange,
    criteria: *const FvCriteria,
    retrieve: Retrieval,
) -> Query {
    let time = if range.is_null() {
        None
    } else {
        let r = unsafe { &*range };
        Some(match r.kind {
            FvRangeKind::Entire => TimeRange::Entire,
            FvRangeKind::Last => TimeRange::Last(r.t0_micros),
            FvRangeKind::Interval => TimeRange::Interval(r.t0_micros, r.t1_micros),
        })
    };
    let criteria = if criteria.is_null() {
        Criteria::default()
    } else {
        let c = unsafe { &*criteria };
        Criteria {
            src_ip: c.has_src_ip.then(|| Ipv4Addr::from(c.src_ip)),
            dst_ip: c.has_dst_ip.then(|| Ipv4Addr::from(c.dst_ip)),
            any_ip: c.has_any_ip.then(|| Ipv4Addr::from(c.any_ip)),
            src_port: c.has_src_port.then_some(c.src_port),
            dst_port: c.has_dst_port.then_some(c.dst_port),
            any_port: c.has_any_port.then_some(c.any_port),
            protocol: c.has_protocol.then_some(c.protocol),
        }
    };
    Query { time, criteria, retrieve }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn fv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the calling thread's last error message, or null if the last
/// call on this thread succeeded. Free with [`fv_string_free`].
#[no_mangle]
pub extern "C" fn fv_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

fn default_epoch_seconds() -> f64 {
    60.0
}
fn default_mfd_seconds() -> f64 {
    300.0
}
fn default_idle_seconds() -> f64 {
    15.0
}
fn default_chunking() -> String {
    "cdc:4096".into()
}
fn default_window_seconds() -> f64 {
    600.0
}
fn default_workers() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordOptions {
    /// Input pcap path.
    input: String,
    fast_dir: String,
    bulk_dir: String,
    #[serde(default = "default_epoch_seconds")]
    epoch_seconds: f64,
    #[serde(default = "default_mfd_seconds")]
    max_flow_seconds: f64,
    #[serde(default = "default_idle_seconds")]
    idle_seconds: f64,
    #[serde(default = "default_chunking")]
    chunking: String,
    #[serde(default = "default_window_seconds")]
    dedup_window_seconds: f64,
    #[serde(default = "default_workers")]
    workers: usize,
}

fn seconds_to_micros(v: f64, what: &str) -> Result<u64, Error> {
    if !v.is_finite() || v < 0.0 || v > 4e12 {
        return Err(Error::InvalidConfig(format!("{what} out of range: {v}")));
    }
    Ok((v * 1e6).round() as u64)
}

fn run_record(options: &str) -> Result<(), Error> {
    let opt: RecordOptions = serde_json::from_str(options)
        .map_err(|e| Error::InvalidConfig(format!("record options JSON: {e}")))?;
    let config = RecorderConfig {
        epoch_len: seconds_to_micros(opt.epoch_seconds, "epoch_seconds")?,
        grouper: GrouperConfig {
            max_flow_duration: seconds_to_micros(opt.max_flow_seconds, "max_flow_seconds")?,
            idle_timeout: seconds_to_micros(opt.idle_seconds, "idle_seconds")?,
            ..GrouperConfig::default()
        },
        chunking: ChunkingConfig::parse_label(&opt.chunking)?,
        dedup_window: seconds_to_micros(opt.dedup_window_seconds, "dedup_window_seconds")?,
        header_compressor: Compressor::Deflate,
        chunk_compressor: Compressor::Deflate,
        workers: opt.workers,
    };
    recorder::record_file(
        Path::new(&opt.input),
        Path::new(&opt.fast_dir),
        Path::new(&opt.bulk_dir),
        config,
    )?;
    Ok(())
}

/// Records a pcap file into a new archive. `options_json` holds an
/// object with `input`, `fast_dir`, and `bulk_dir` (required), plus
/// optional `epoch_seconds`, `max_flow_seconds`, `idle_seconds`,
/// `chunking` ("cdc:4096", "fixed:4096", or "none"),
/// `dedup_window_seconds`, and `workers`.
///
/// # Safety
/// `options_json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fv_record(options_json: *const c_char) -> i32 {
    guarded(|| {
        clear_error();
        let options = match unsafe { str_arg(options_json, "options_json") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        match run_record(options) {
            Ok(()) => FV_OK,
            Err(e) => fail_with(&e),
        }
    })
}

/// Opens an archive rooted at `fast_dir`. `bulk_dir` overrides the
/// bulk-tier path stored in the manifest and may be null. On success
/// writes a handle to `out` (release with [`fv_archive_close`]).
///
/// # Safety
/// `fast_dir` must be a valid NUL-terminated string, `bulk_dir` null or
/// the same, and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fv_archive_open(
    fast_dir: *const c_char,
    bulk_dir: *const c_char,
    out: *mut *mut FvArchive,
) -> i32 {
    guarded(|| {
        clear_error();
        if out.is_null() {
            return fail(FV_ERR_INVALID, "out must not be null".into());
        }
        let fast = match unsafe { str_arg(fast_dir, "fast_dir") } {
            Ok(s) => PathBuf::from(s),
            Err(code) => return code,
        };
        let bulk = if bulk_dir.is_null() {
            None
        } else {
            match unsafe { str_arg(bulk_dir, "bulk_dir") } {
                Ok(s) => Some(PathBuf::from(s)),
                Err(code) => return code,
            }
        };
        match Archive::open(&fast, bulk.as_deref()) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(FvArchive { inner })) };
                FV_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases an archive handle. Null is ignored.
///
/// # Safety
/// `archive` must be null or an unreleased handle from
/// [`fv_archive_open`].
#[no_mangle]
pub unsafe extern "C" fn fv_archive_close(archive: *mut FvArchive) {
    if !archive.is_null() {
        drop(unsafe { Box::from_raw(archive) });
    }
}

/// Tests whether any flow matches. At least one of `range` and
/// `criteria` must be given (non-null and non-empty). Writes the answer
/// to `out_found`.
///
/// # Safety
/// `archive` must be a live handle; `range`/`criteria` null or valid
/// for reads; `out_found` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fv_query_exists(
    archive: *const FvArchive,
    range: *const FvTimeRange,
    criteria: *const FvCriteria,
    out_found: *mut bool,
) -> i32 {
    guarded(|| {
        clear_error();
        if archive.is_null() || out_found.is_null() {
            return fail(FV_ERR_INVALID, "archive and out_found must not be null".into());
        }
        let a = unsafe { &*archive };
        let q = unsafe { build_query(range, criteria, Retrieval::Existence) };
        match query::execute(&a.inner, q) {
            Ok(outcome) => {
                unsafe { *out_found = outcome.found };
                FV_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Retrieves matching traffic into a pcap file at `out_path`.
/// `headers_only` selects header retrieval (payload bytes omitted,
/// original lengths preserved); otherwise payloads are reassembled and
/// packets are byte-identical to capture. Writes the number of packets
/// retrieved to `out_packets` (may be null). Matching flows whose
/// payload was evicted make the call fail with `FV_ERR_DATA` after
/// writing the packets that survived.
///
/// # Safety
/// `archive` must be a live handle; `range`/`criteria` null or valid
/// for reads; `out_path` a valid NUL-terminated string; `out_packets`
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fv_query_to_pcap(
    archive: *const FvArchive,
    range: *const FvTimeRange,
    criteria: *const FvCriteria,
    headers_only: bool,
    out_path: *const c_char,
    out_packets: *mut u64,
) -> i32 {
    guarded(|| {
        clear_error();
        if archive.is_null() {
            return fail(FV_ERR_INVALID, "archive must not be null".into());
        }
        let path = match unsafe { str_arg(out_path, "out_path") } {
            Ok(s) => PathBuf::from(s),
            Err(code) => return code,
        };
        let a = unsafe { &*archive };
        let retrieve = if headers_only { Retrieval::Headers } else { Retrieval::Full };
        let q = unsafe { build_query(range, criteria, retrieve) };
        let outcome = match query::execute(&a.inner, q) {
            Ok(o) => o,
            Err(e) => return fail_with(&e),
        };
        let write = || -> Result<(), Error> {
            let file = std::fs::File::create(&path)?;
            let mut w = PcapWriter::new(std::io::BufWriter::new(file), a.inner.manifest.link_type)?;
            for p in &outcome.packets {
                w.write_packet(p)?;
            }
            w.flush()?;
            Ok(())
        };
        if let Err(e) = write() {
            return fail_with(&e);
        }
        if !out_packets.is_null() {
            unsafe { *out_packets = outcome.packets.len() as u64 };
        }
        if !outcome.stats.data_unavailable.is_empty() {
            return fail(
                FV_ERR_DATA,
                format!(
                    "payload unavailable for {} matching flow(s): {}",
                    outcome.stats.data_unavailable.len(),
                    outcome.stats.data_unavailable.join("; ")
                ),
            );
        }
        FV_OK
    })
}

/// Returns archive statistics as a JSON object string via `out_json`
/// (epoch count, tier sizes, and ingest counters). Free the string with
/// [`fv_string_free`].
///
/// # Safety
/// `archive` must be a live handle and `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fv_stats_json(
    archive: *const FvArchive,
    out_json: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        clear_error();
        if archive.is_null() || out_json.is_null() {
            return fail(FV_ERR_INVALID, "archive and out_json must not be null".into());
        }
        let m = unsafe { &(*archive).inner.manifest };
        #[derive(serde::Serialize)]
        struct Stats<'a> {
            epochs: usize,
            oldest_epoch: Option<u64>,
            newest_epoch: Option<u64>,
            epoch_len_micros: u64,
            fast_tier_bytes: u64,
            bulk_tier_bytes: u64,
            counters: &'a flowvault::store::ArchiveCounters,
        }
        let stats = Stats {
            epochs: m.epochs.len(),
            oldest_epoch: m.epochs.first().map(|e| e.id),
            newest_epoch: m.epochs.last().map(|e| e.id),
            epoch_len_micros: m.epoch_len,
            fast_tier_bytes: m.fast_tier_bytes(),
            bulk_tier_bytes: m.bulk_tier_bytes(),
            counters: &m.counters,
        };
        match serde_json::to_string_pretty(&stats) {
            Ok(json) => {
                unsafe { *out_json = export_string(json) };
                FV_OK
            }
            Err(e) => fail(FV_ERR_INTERNAL, format!("stats serialization failed: {e}")),
        }
    })
}

/// Drops the oldest epochs of the archive at `fast_dir`, keeping the
/// newest `retain_epochs`. `bulk_dir` may be null (manifest path is
/// used). Writes the number of removed epochs to `out_epochs_removed`
/// (may be null). Open handles keep reading their snapshot; reopen to
/// observe the eviction.
///
/// # Safety
/// `fast_dir` must be a valid NUL-terminated string, `bulk_dir` null or
/// the same, `out_epochs_removed` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fv_evict(
    fast_dir: *const c_char,
    bulk_dir: *const c_char,
    retain_epochs: u64,
    out_epochs_removed: *mut u64,
) -> i32 {
    guarded(|| {
        clear_error();
        let fast = match unsafe { str_arg(fast_dir, "fast_dir") } {
            Ok(s) => PathBuf::from(s),
            Err(code) => return code,
        };
        let bulk = if bulk_dir.is_null() {
            None
        } else {
            match unsafe { str_arg(bulk_dir, "bulk_dir") } {
                Ok(s) => Some(PathBuf::from(s)),
                Err(code) => return code,
            }
        };
        let mut archive = match Archive::open(&fast, bulk.as_deref()) {
            Ok(a) => a,
            Err(e) => return fail_with(&e),
        };
        let next = archive.manifest.epochs.last().map_or(0, |e| e.id + 1);
        let retain_until = next.saturating_sub(retain_epochs);
        match archive.evict_oldest(retain_until) {
            Ok(report) => {
                if !out_epochs_removed.is_null() {
                    unsafe { *out_epochs_removed = report.epochs_removed };
                }
                FV_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowvault::packet::LINKTYPE_ETHERNET;
    use flowvault::workload::{self, ClassMix, GenSpec};

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn take_error() -> String {
        let p = fv_last_error_message();
        assert!(!p.is_null(), "an error message was expected");
        let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
        unsafe { fv_string_free(p) };
        s
    }

    fn recorded_archive(dir: &Path) -> (PathBuf, PathBuf, Vec<flowvault::packet::Packet>) {
        let trace = workload::generate(&GenSpec {
            seed: 77,
            flows: 60,
            duration: 6_000_000,
            mix: ClassMix { tcp: 70, udp: 30, other_ip: 0, non_ip: 0 },
            ..GenSpec::default()
        });
        let pcap_path = dir.join("in.pcap");
        flowvault::pcap::write_file(&pcap_path, LINKTYPE_ETHERNET, &trace.packets).unwrap();
        let fast = dir.join("fast");
        let bulk = dir.join("bulk");
        let options = format!(
            r#"{{"input": {:?}, "fast_dir": {:?}, "bulk_dir": {:?}, "epoch_seconds": 2}}"#,
            pcap_path.to_str().unwrap(),
            fast.to_str().unwrap(),
            bulk.to_str().unwrap()
        );
        let code = unsafe { fv_record(cstr(&options).as_ptr()) };
        assert_eq!(code, FV_OK);
        (fast, bulk, trace.packets)
    }

    #[test]
    fn version_is_a_static_string() {
        let v = unsafe { CStr::from_ptr(fv_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn record_open_query_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (fast, _bulk, mut original) = recorded_archive(dir.path());

        let mut handle: *mut FvArchive = ptr::null_mut();
        let code = unsafe {
            fv_archive_open(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), &mut handle)
        };
        assert_eq!(code, FV_OK);
        assert!(!handle.is_null());

        // Existence over the whole archive.
        let range = FvTimeRange { kind: FvRangeKind::Entire, t0_micros: 0, t1_micros: 0 };
        let mut found = false;
        let code = unsafe { fv_query_exists(handle, &range, ptr::null(), &mut found) };
        assert_eq!(code, FV_OK);
        assert!(found);

        // A port nothing uses.
        let mut criteria = FvCriteria::default();
        criteria.has_any_port = true;
        criteria.any_port = 9_999;
        let mut found = true;
        let code = unsafe { fv_query_exists(handle, &range, &criteria, &mut found) };
        assert_eq!(code, FV_OK);
        assert!(!found);

        // Full retrieval reproduces the capture byte for byte (modulo
        // global timestamp ordering).
        let out_path = dir.path().join("out.pcap");
        let mut n = 0u64;
        let code = unsafe {
            fv_query_to_pcap(
                handle,
                &range,
                ptr::null(),
                false,
                cstr(out_path.to_str().unwrap()).as_ptr(),
                &mut n,
            )
        };
        assert_eq!(code, FV_OK);
        assert_eq!(n, original.len() as u64);
        let (restored, _) = flowvault::pcap::read_file(&out_path).unwrap();
        original.sort_by_key(|p| (p.ts_micros(), p.seq));
        for (i, p) in original.iter_mut().enumerate() {
            p.seq = i as u64;
        }
        assert_eq!(restored, original);

        // Stats parse and agree with the trace.
        let mut json: *mut c_char = ptr::null_mut();
        let code = unsafe { fv_stats_json(handle, &mut json) };
        assert_eq!(code, FV_OK);
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
        unsafe { fv_string_free(json) };
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["counters"]["packets"].as_u64().unwrap(), original.len() as u64);

        unsafe { fv_archive_close(handle) };
    }

    #[test]
    fn eviction_is_observable_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (fast, _bulk, _) = recorded_archive(dir.path());
        let before = {
            let mut handle: *mut FvArchive = ptr::null_mut();
            let code = unsafe {
                fv_archive_open(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), &mut handle)
            };
            assert_eq!(code, FV_OK);
            let epochs = unsafe { (*handle).inner.manifest.epochs.len() };
            unsafe { fv_archive_close(handle) };
            epochs
        };
        assert!(before > 1, "fixture needs several epochs, got {before}");

        let mut removed = 0u64;
        let code = unsafe {
            fv_evict(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), 1, &mut removed)
        };
        assert_eq!(code, FV_OK);
        assert_eq!(removed, before as u64 - 1);

        let mut handle: *mut FvArchive = ptr::null_mut();
        let code = unsafe {
            fv_archive_open(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), &mut handle)
        };
        assert_eq!(code, FV_OK);
        assert_eq!(unsafe { (*handle).inner.manifest.epochs.len() }, 1);
        unsafe { fv_archive_close(handle) };
    }

    #[test]
    fn errors_set_codes_and_messages() {
        // Missing archive directory: data error.
        let mut handle: *mut FvArchive = ptr::null_mut();
        let code =
            unsafe { fv_archive_open(cstr("/nonexistent/fv").as_ptr(), ptr::null(), &mut handle) };
        assert_eq!(code, FV_ERR_DATA);
        assert!(handle.is_null());
        assert!(!take_error().is_empty());

        // Null pointer: invalid.
        let code = unsafe { fv_archive_open(ptr::null(), ptr::null(), &mut handle) };
        assert_eq!(code, FV_ERR_INVALID);
        assert!(take_error().contains("fast_dir"));

        // Unparseable options: invalid.
        let code = unsafe { fv_record(cstr("{not json").as_ptr()) };
        assert_eq!(code, FV_ERR_INVALID);
        assert!(take_error().contains("JSON"));

        // Success clears the error slot.
        let dir = tempfile::tempdir().unwrap();
        let (fast, _bulk, _) = recorded_archive(dir.path());
        let mut h2: *mut FvArchive = ptr::null_mut();
        let code =
            unsafe { fv_archive_open(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), &mut h2) };
        assert_eq!(code, FV_OK);
        assert!(fv_last_error_message().is_null());
        unsafe { fv_archive_close(h2) };
    }

    #[test]
    fn queries_without_constraints_are_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let (fast, _bulk, _) = recorded_archive(dir.path());
        let mut handle: *mut FvArchive = ptr::null_mut();
        let code = unsafe {
            fv_archive_open(cstr(fast.to_str().unwrap()).as_ptr(), ptr::null(), &mut handle)
        };
        assert_eq!(code, FV_OK);
        let mut found = false;
        let code = unsafe { fv_query_exists(handle, ptr::null(), ptr::null(), &mut found) };
        assert_eq!(code, FV_ERR_INVALID);
        unsafe { fv_archive_close(handle) };
    }
}
