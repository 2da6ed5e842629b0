#ifndef FLOWVAULT_H
#define FLOWVAULT_H

/* Generated by cbindgen from flowvault-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FV_OK 0

#define FV_ERR_INVALID 1

#define FV_ERR_DATA 2

#define FV_ERR_INTERNAL 3

// How [`FvTimeRange`] is interpreted.
enum FvRangeKind
#ifdef __cplusplus
  : uint32_t
#endif // __cplusplus
 {
  // The whole archive; `t0`/`t1` are ignored.
  FV_RANGE_KIND_ENTIRE = 0,
  // The trailing `t0` microseconds of the capture; `t1` is ignored.
  FV_RANGE_KIND_LAST = 1,
  // Capture-time microseconds `[t0, t1)`.
  FV_RANGE_KIND_INTERVAL = 2,
};
#ifndef __cplusplus
typedef uint32_t FvRangeKind;
#endif // __cplusplus

// An open archive (opaque to C callers).
typedef struct FvArchive FvArchive;

// Time selection for queries. Granularity is the epoch: the range
// selects every epoch it overlaps.
typedef struct FvTimeRange {
  FvRangeKind kind;
  uint64_t t0_micros;
  uint64_t t1_micros;
} FvTimeRange;

// Flow predicates, ANDed together. Each value participates only when
// its `has_*` flag is set. Addresses are IPv4 in host integer form:
// `a.b.c.d` is `(a<<24) | (b<<16) | (c<<8) | d`.
typedef struct FvCriteria {
  bool has_src_ip;
  uint32_t src_ip;
  bool has_dst_ip;
  uint32_t dst_ip;
  // Matches the address on either side.
  bool has_any_ip;
  uint32_t any_ip;
  bool has_src_port;
  uint16_t src_port;
  bool has_dst_port;
  uint16_t dst_port;
  // Matches the port on either side.
  bool has_any_port;
  uint16_t any_port;
  // IP protocol number (6 TCP, 17 UDP).
  bool has_protocol;
  uint8_t protocol;
} FvCriteria;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *fv_version(void);

// Returns the calling thread's last error message, or null if the last
// call on this thread succeeded. Free with [`fv_string_free`].
char *fv_last_error_message(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a pointer previously returned by this library
// and not yet freed.
void fv_string_free(char *s);

// Records a pcap file into a new archive. `options_json` holds an
// object with `input`, `fast_dir`, and `bulk_dir` (required), plus
// optional `epoch_seconds`, `max_flow_seconds`, `idle_seconds`,
// `chunking` ("cdc:4096", "fixed:4096", or "none"),
// `dedup_window_seconds`, and `workers`.
//
// # Safety
// `options_json` must be a valid NUL-terminated string.
int32_t fv_record(const char *options_json);

// Opens an archive rooted at `fast_dir`. `bulk_dir` overrides the
// bulk-tier path stored in the manifest and may be null. On success
// writes a handle to `out` (release with [`fv_archive_close`]).
//
// # Safety
// `fast_dir` must be a valid NUL-terminated string, `bulk_dir` null or
// the same, and `out` valid for writes.
int32_t fv_archive_open(const char *fast_dir, const char *bulk_dir, struct FvArchive **out);

// Releases an archive handle. Null is ignored.
//
// # Safety
// `archive` must be null or an unreleased handle from
// [`fv_archive_open`].
void fv_archive_close(struct FvArchive *archive);

// Tests whether any flow matches. At least one of `range` and
// `criteria` must be given (non-null and non-empty). Writes the answer
// to `out_found`.
//
// # Safety
// `archive` must be a live handle; `range`/`criteria` null or valid
// for reads; `out_found` valid for writes.
int32_t fv_query_exists(const struct FvArchive *archive,
                        const struct FvTimeRange *range,
                        const struct FvCriteria *criteria,
                        bool *out_found);

// Retrieves matching traffic into a pcap file at `out_path`.
// `headers_only` selects header retrieval (payload bytes omitted,
// original lengths preserved); otherwise payloads are reassembled and
// packets are byte-identical to capture. Writes the number of packets
// retrieved to `out_packets` (may be null). Matching flows whose
// payload was evicted make the call fail with `FV_ERR_DATA` after
// writing the packets that survived.
//
// # Safety
// `archive` must be a live handle; `range`/`criteria` null or valid
// for reads; `out_path` a valid NUL-terminated string; `out_packets`
// null or valid for writes.
int32_t fv_query_to_pcap(const struct FvArchive *archive,
                         const struct FvTimeRange *range,
                         const struct FvCriteria *criteria,
                         bool headers_only,
                         const char *out_path,
                         uint64_t *out_packets);

// Returns archive statistics as a JSON object string via `out_json`
// (epoch count, tier sizes, and ingest counters). Free the string with
// [`fv_string_free`].
//
// # Safety
// `archive` must be a live handle and `out_json` valid for writes.
int32_t fv_stats_json(const struct FvArchive *archive, char **out_json);

// Drops the oldest epochs of the archive at `fast_dir`, keeping the
// newest `retain_epochs`. `bulk_dir` may be null (manifest path is
// used). Writes the number of removed epochs to `out_epochs_removed`
// (may be null). Open handles keep reading their snapshot; reopen to
// observe the eviction.
//
// # Safety
// `fast_dir` must be a valid NUL-terminated string, `bulk_dir` null or
// the same, `out_epochs_removed` null or valid for writes.
int32_t fv_evict(const char *fast_dir,
                 const char *bulk_dir,
                 uint64_t retain_epochs,
                 uint64_t *out_epochs_removed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWVAULT_H */
