//! Command-line interface: `record`, `query`, `evict`, `gen`, `sweep`,
//! and `stats` subcommands over the library.
//!
//! Exit codes: 0 success (including an existence query that finds
//! nothing), 1 usage or configuration errors, 2 data errors (corrupt
//! input, missing archives, evicted payloads a query needed).

use std::io::Write as _;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chunk::ChunkingConfig;
use crate::compress::Compressor;
use crate::error::{Error, Result};
use crate::flow::GrouperConfig;
use crate::pcap::PcapWriter;
use crate::query::{self, Criteria, Query, QueryOutcome, Retrieval, TimeRange};
use crate::recorder::{self, RecorderConfig};
use crate::store::Archive;
use crate::workload::{self, ClassMix, CostModel, GenSpec, PayloadModel, SizeModel};

/// Environment variable consulted when `--archive` is omitted.
pub const ARCHIVE_ENV: &str = "FLOWVAULT_ARCHIVE";

#[derive(Parser)]
#[command(
    name = "flowvault",
    version,
    about = "Flow-oriented lossless packet archive",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Archive a pcap stream into a two-tier archive.
    Record(RecordArgs),
    /// Search an archive and retrieve matching traffic.
    Query(QueryArgs),
    /// Drop the oldest epochs, keeping the newest N.
    Evict(EvictArgs),
    /// Generate a synthetic pcap trace with known properties.
    Gen(GenArgs),
    /// Estimate dedup savings across window sizes without re-recording.
    Sweep(SweepArgs),
    /// Print archive counters, tier sizes, and estimated cost.
    Stats(StatsArgs),
}

#[derive(Args)]
struct RecordArgs {
    /// Input pcap file; `-` reads from stdin.
    #[arg(long = "in", value_name = "PATH", default_value = "-")]
    input: String,
    /// Directory for the fast tier (headers, indexes, manifest).
    #[arg(long, value_name = "DIR")]
    fast_dir: PathBuf,
    /// Directory for the bulk tier (payload segments).
    #[arg(long, value_name = "DIR")]
    bulk_dir: PathBuf,
    /// Epoch length in seconds.
    #[arg(long, value_name = "SECONDS", default_value = "60")]
    epoch: String,
    /// Maximum flow duration before a forced flush, seconds.
    #[arg(long, value_name = "SECONDS", default_value = "300")]
    mfd: String,
    /// Flow idle timeout, seconds.
    #[arg(long, value_name = "SECONDS", default_value = "15")]
    idle: String,
    /// Grouper memory budget in bytes.
    #[arg(long, value_name = "BYTES", default_value_t = 256 * 1024 * 1024)]
    max_buffer: u64,
    /// Payload chunking: cdc:<size>, fixed:<size>, or none.
    #[arg(long, value_name = "MODE", default_value = "cdc:4096")]
    chunking: String,
    /// Dedup window in seconds; 0 disables dedup.
    #[arg(long, value_name = "SECONDS", default_value = "600")]
    dedup_window: String,
    /// Flow-compression worker threads.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

#[derive(Args)]
struct QueryArgs {
    /// Archive fast-tier directory (falls back to $FLOWVAULT_ARCHIVE).
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
    /// Override the bulk-tier directory recorded in the manifest.
    #[arg(long, value_name = "DIR")]
    bulk_dir: Option<PathBuf>,
    /// Time range: entire, last:<seconds>, or <t0>:<t1> (seconds).
    #[arg(long, value_name = "RANGE")]
    range: Option<String>,
    #[arg(long, value_name = "ADDR")]
    src_ip: Option<Ipv4Addr>,
    #[arg(long, value_name = "ADDR")]
    dst_ip: Option<Ipv4Addr>,
    /// Match this address on either side.
    #[arg(long, value_name = "ADDR")]
    ip: Option<Ipv4Addr>,
    #[arg(long, value_name = "PORT")]
    src_port: Option<u16>,
    #[arg(long, value_name = "PORT")]
    dst_port: Option<u16>,
    /// Match this port on either side.
    #[arg(long, value_name = "PORT")]
    port: Option<u16>,
    /// IP protocol: tcp, udp, icmp, or a number.
    #[arg(long, value_name = "PROTO")]
    proto: Option<String>,
    #[arg(long, value_enum, default_value_t = RetrieveArg::Headers)]
    retrieve: RetrieveArg,
    /// offline runs straight through; online checkpoints after every
    /// work unit and resumes from the serialized state.
    #[arg(long, value_enum, default_value_t = ModeArg::Offline)]
    mode: ModeArg,
    /// Write matching packets to this pcap file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

#[derive(Args)]
struct EvictArgs {
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    bulk_dir: Option<PathBuf>,
    /// Keep only the newest N sealed epochs.
    #[arg(long, value_name = "N")]
    retain_epochs: u64,
}

#[derive(Args)]
struct GenArgs {
    /// Output pcap path; `-` writes to stdout.
    #[arg(long, value_name = "PATH")]
    out: String,
    #[arg(long, default_value_t = 100)]
    flows: u64,
    #[arg(long, default_value_t = 8)]
    mean_packets: u32,
    /// Flow starts spread over this many seconds.
    #[arg(long, value_name = "SECONDS", default_value = "10")]
    duration: String,
    /// Payload model: re (ramp), nr (random), or dup:<fraction>:<gap seconds>.
    #[arg(long, default_value = "re")]
    payload: String,
    /// Packet sizes: isp or fixed:<payload bytes>.
    #[arg(long, default_value = "isp")]
    size: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Capture start time, seconds since the epoch.
    #[arg(long, value_name = "SECONDS", default_value = "0")]
    base_time: String,
    /// Flow class weights as tcp,udp,other,nonip.
    #[arg(long, value_name = "W,W,W,W", default_value = "70,20,7,3")]
    mix: String,
}

#[derive(Args)]
struct SweepArgs {
    /// Input pcap file.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Chunking configurations to sweep (repeatable).
    #[arg(long, value_name = "MODE", default_values_t = vec!["cdc:4096".to_string()])]
    chunking: Vec<String>,
    /// Comma-separated dedup windows in seconds.
    #[arg(long, value_name = "S,S,...", default_value = "0,60,600,3600")]
    windows: String,
    #[arg(long, value_name = "SECONDS", default_value = "300")]
    mfd: String,
    #[arg(long, value_name = "SECONDS", default_value = "15")]
    idle: String,
    /// Fast-tier price, dollars per GB-month.
    #[arg(long, default_value_t = 0.740)]
    fast_price: f64,
    /// Bulk-tier price, dollars per GB-month.
    #[arg(long, default_value_t = 0.0467)]
    bulk_price: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    bulk_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.740)]
    fast_price: f64,
    #[arg(long, default_value_t = 0.0467)]
    bulk_price: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RetrieveArg {
    Exists,
    Headers,
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Offline,
    Online,
}

/// Parses argv and runs the selected command, returning the process
/// exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Record(a) => cmd_record(a),
        Command::Query(a) => cmd_query(a),
        Command::Evict(a) => cmd_evict(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::InvalidQuery(_) => 1,
                _ => 2,
            }
        }
    }
}

/// Accepts decimal seconds ("1.5") and returns microseconds.
fn parse_seconds(s: &str, what: &str) -> Result<u64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{what} must be a number of seconds, got '{s}'")))?;
    if !v.is_finite() || v < 0.0 || v > 4e12 {
        return Err(Error::InvalidConfig(format!("{what} out of range: '{s}'")));
    }
    Ok((v * 1e6).round() as u64)
}

fn parse_range(s: &str) -> Result<TimeRange> {
    if s == "entire" {
        return Ok(TimeRange::Entire);
    }
    if let Some(rest) = s.strip_prefix("last:") {
        return Ok(TimeRange::Last(parse_seconds(rest, "--range last")?));
    }
    if let Some((a, b)) = s.split_once(':') {
        return Ok(TimeRange::Interval(
            parse_seconds(a, "--range start")?,
            parse_seconds(b, "--range end")?,
        ));
    }
    Err(Error::InvalidQuery(format!(
        "unrecognized range '{s}' (expected entire, last:<seconds>, or <t0>:<t1>)"
    )))
}

fn parse_proto(s: &str) -> Result<u8> {
    match s {
        "tcp" => Ok(6),
        "udp" => Ok(17),
        "icmp" => Ok(1),
        other => other
            .parse()
            .map_err(|_| Error::InvalidQuery(format!("unrecognized protocol '{other}'"))),
    }
}

fn archive_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var_os(ARCHIVE_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(Error::InvalidConfig(format!(
            "no archive given: pass --archive or set {ARCHIVE_ENV}"
        ))),
    }
}

fn open_archive(flag: Option<PathBuf>, bulk: Option<PathBuf>) -> Result<Archive> {
    let fast = archive_dir(flag)?;
    Archive::open(&fast, bulk.as_deref())
}

fn cmd_record(a: RecordArgs) -> Result<i32> {
    let config = RecorderConfig {
        epoch_len: parse_seconds(&a.epoch, "--epoch")?,
        grouper: GrouperConfig {
            max_flow_duration: parse_seconds(&a.mfd, "--mfd")?,
            idle_timeout: parse_seconds(&a.idle, "--idle")?,
            max_buffered_bytes: a.max_buffer,
        },
        chunking: ChunkingConfig::parse_label(&a.chunking)?,
        dedup_window: parse_seconds(&a.dedup_window, "--dedup-window")?,
        header_compressor: Compressor::Deflate,
        chunk_compressor: Compressor::Deflate,
        workers: a.workers,
    };
    let report = if a.input == "-" {
        let stdin = std::io::stdin();
        recorder::record_stream(stdin.lock(), &a.fast_dir, &a.bulk_dir, config)?
    } else {
        recorder::record_file(Path::new(&a.input), &a.fast_dir, &a.bulk_dir, config)?
    };
    match a.format {
        ReportFormat::Json => println!("{}", to_json(&report)?),
        _ => {
            let c = &report.counters;
            println!("packets            {}", c.packets);
            println!("flows              {}", c.flows);
            println!("epochs sealed      {}", report.epochs_sealed);
            println!("raw pcap bytes     {}", c.raw_pcap_bytes);
            println!("fast tier bytes    {}", report.fast_tier_bytes);
            println!("bulk tier bytes    {}", report.bulk_tier_bytes);
            let stored = report.fast_tier_bytes + report.bulk_tier_bytes;
            println!("stored/raw         {:.4}", ratio(stored, c.raw_pcap_bytes));
            println!("dedup hit bytes    {}", c.dedup_hit_bytes);
            println!("dedup hit chunks   {}", c.dedup_hit_chunks);
            println!("throughput MB/s    {:.1}", report.throughput_mbps);
            println!("wall ms            {}", report.timings.wall_ms);
            if c.truncated_tail {
                println!("note: input ended mid-record; the partial record was dropped");
            }
            if c.timestamp_regressions > 0 {
                println!("note: {} timestamp regressions tolerated", c.timestamp_regressions);
            }
        }
    }
    Ok(0)
}

fn build_query(a: &QueryArgs) -> Result<Query> {
    let criteria = Criteria {
        src_ip: a.src_ip,
        dst_ip: a.dst_ip,
        any_ip: a.ip,
        src_port: a.src_port,
        dst_port: a.dst_port,
        any_port: a.port,
        protocol: a.proto.as_deref().map(parse_proto).transpose()?,
    };
    let time = a.range.as_deref().map(parse_range).transpose()?;
    let retrieve = match a.retrieve {
        RetrieveArg::Exists => Retrieval::Existence,
        RetrieveArg::Headers => Retrieval::Headers,
        RetrieveArg::Full => Retrieval::Full,
    };
    Ok(Query { time, criteria, retrieve })
}

fn cmd_query(a: QueryArgs) -> Result<i32> {
    let archive = open_archive(a.archive.clone(), a.bulk_dir.clone())?;
    let query = build_query(&a)?;
    let retrieve = query.retrieve;
    let outcome = match a.mode {
        ModeArg::Offline => query::execute(&archive, query)?,
        ModeArg::Online => query::execute_checkpointed(&archive, query)?,
    };

    if let Some(out) = &a.out {
        if retrieve == Retrieval::Existence {
            return Err(Error::InvalidQuery(
                "--out needs --retrieve headers or full".into(),
            ));
        }
        write_pcap(out, archive.manifest.link_type, &outcome)?;
    }
    print_query_outcome(&a, retrieve, &outcome)?;

    if !outcome.stats.data_unavailable.is_empty() {
        for gone in &outcome.stats.data_unavailable {
            eprintln!("error: payload unavailable: {gone}");
        }
        return Ok(2);
    }
    Ok(0)
}

fn write_pcap(path: &Path, link_type: u32, outcome: &QueryOutcome) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = PcapWriter::new(std::io::BufWriter::new(file), link_type)?;
    for p in &outcome.packets {
        w.write_packet(p)?;
    }
    w.flush()?;
    Ok(())
}

fn print_query_outcome(a: &QueryArgs, retrieve: Retrieval, outcome: &QueryOutcome) -> Result<()> {
    let s = &outcome.stats;
    match (retrieve, a.format) {
        (Retrieval::Existence, ReportFormat::Json) => {
            println!("{}", if outcome.found { "true" } else { "false" });
        }
        (Retrieval::Existence, _) => {
            println!("{}", if outcome.found { "true" } else { "false" });
        }
        (_, ReportFormat::Csv) => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "ts_micros,seq,captured_len,original_len")?;
            for p in &outcome.packets {
                writeln!(
                    out,
                    "{},{},{},{}",
                    p.ts_micros(),
                    p.seq,
                    p.data.len(),
                    p.original_len
                )?;
            }
        }
        (_, ReportFormat::Json) => {
            #[derive(serde::Serialize)]
            struct JsonOutcome<'a> {
                found: bool,
                packets: u64,
                flows: u64,
                stats: &'a crate::query::QueryStats,
            }
            println!(
                "{}",
                to_json(&JsonOutcome {
                    found: outcome.found,
                    packets: s.packets_emitted,
                    flows: s.flows_emitted,
                    stats: s,
                })?
            );
        }
        (_, ReportFormat::Text) => {
            println!("matched flows      {}", s.flows_emitted);
            println!("matched packets    {}", s.packets_emitted);
            println!("epochs selected    {}", s.epochs_selected);
            println!("index candidates   {}", s.candidates);
            println!("false positives    {}", s.false_positives);
            println!("blocks parsed      {}", s.blocks_parsed);
            println!("blocks decoded     {}", s.blocks_decompressed);
            println!("header bytes read  {}", s.header_log_bytes_read);
            println!("index bytes read   {}", s.index_bytes_read);
            println!("chunk bytes read   {}", s.chunk_bytes_read);
            if s.full_scan_epochs > 0 {
                println!("full-scan epochs   {}", s.full_scan_epochs);
            }
            println!("wall ms            {}", s.wall_ms);
        }
    }
    Ok(())
}

fn cmd_evict(a: EvictArgs) -> Result<i32> {
    let mut archive = open_archive(a.archive, a.bulk_dir)?;
    let next = archive.manifest.epochs.last().map_or(0, |e| e.id + 1);
    let retain_until = next.saturating_sub(a.retain_epochs);
    let report = archive.evict_oldest(retain_until)?;
    println!("epochs removed     {}", report.epochs_removed);
    println!("segments removed   {}", report.segments_removed);
    println!("bytes freed        {}", report.bytes_freed);
    Ok(0)
}

fn parse_mix(s: &str) -> Result<ClassMix> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Error::InvalidConfig(format!("--mix expects tcp,udp,other,nonip weights, got '{s}'"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let w: Vec<u32> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if w.iter().all(|&x| x == 0) {
        return Err(bad());
    }
    Ok(ClassMix { tcp: w[0], udp: w[1], other_ip: w[2], non_ip: w[3] })
}

fn parse_payload_model(s: &str) -> Result<PayloadModel> {
    match s {
        "re" => Ok(PayloadModel::Ramp),
        "nr" => Ok(PayloadModel::Random),
        other => {
            if let Some(rest) = other.strip_prefix("dup:") {
                if let Some((frac, gap)) = rest.split_once(':') {
                    let fraction: f64 = frac.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad duplicate fraction '{frac}'"))
                    })?;
                    if !(0.0..=1.0).contains(&fraction) {
                        return Err(Error::InvalidConfig(
                            "duplicate fraction must be between 0 and 1".into(),
                        ));
                    }
                    return Ok(PayloadModel::Duplicated {
                        fraction,
                        gap: parse_seconds(gap, "duplicate gap")?,
                    });
                }
            }
            Err(Error::InvalidConfig(format!(
                "unrecognized payload model '{other}' (expected re, nr, or dup:<fraction>:<gap>)"
            )))
        }
    }
}

fn parse_size_model(s: &str) -> Result<SizeModel> {
    if s == "isp" {
        return Ok(SizeModel::IspMix);
    }
    if let Some(rest) = s.strip_prefix("fixed:") {
        let n: u32 = rest
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad fixed payload size '{rest}'")))?;
        if n > 60_000 {
            return Err(Error::InvalidConfig("fixed payload size too large".into()));
        }
        return Ok(SizeModel::Fixed(n));
    }
    Err(Error::InvalidConfig(format!(
        "unrecognized size model '{s}' (expected isp or fixed:<bytes>)"
    )))
}

fn cmd_gen(a: GenArgs) -> Result<i32> {
    let spec = GenSpec {
        seed: a.seed,
        base_time: parse_seconds(&a.base_time, "--base-time")?,
        duration: parse_seconds(&a.duration, "--duration")?.max(1),
        flows: a.flows,
        mean_packets: a.mean_packets,
        payload: parse_payload_model(&a.payload)?,
        sizes: parse_size_model(&a.size)?,
        mix: parse_mix(&a.mix)?,
    };
    if spec.flows == 0 {
        return Err(Error::InvalidConfig("--flows must be at least 1".into()));
    }
    if spec.mean_packets == 0 {
        return Err(Error::InvalidConfig("--mean-packets must be at least 1".into()));
    }
    let trace = workload::generate(&spec);
    let truth = to_json(&trace.truth)?;
    if a.out == "-" {
        let stdout = std::io::stdout();
        let mut w = PcapWriter::new(stdout.lock(), crate::packet::LINKTYPE_ETHERNET)?;
        for p in &trace.packets {
            w.write_packet(p)?;
        }
        w.flush()?;
        // Keep stdout clean for the capture bytes.
        eprintln!("{truth}");
    } else {
        crate::pcap::write_file(Path::new(&a.out), crate::packet::LINKTYPE_ETHERNET, &trace.packets)?;
        println!("{truth}");
    }
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let (packets, link_type) = crate::pcap::read_file(&a.input)?;
    let chunkings: Vec<ChunkingConfig> = a
        .chunking
        .iter()
        .map(|s| ChunkingConfig::parse_label(s))
        .collect::<Result<_>>()?;
    let windows: Vec<u64> = a
        .windows
        .split(',')
        .map(|w| parse_seconds(w.trim(), "--windows"))
        .collect::<Result<_>>()?;
    let grouper = GrouperConfig {
        max_flow_duration: parse_seconds(&a.mfd, "--mfd")?,
        idle_timeout: parse_seconds(&a.idle, "--idle")?,
        ..GrouperConfig::default()
    };
    let cost = CostModel { fast_price_per_gb: a.fast_price, bulk_price_per_gb: a.bulk_price };
    let points = workload::dedup_window_sweep(
        &packets,
        link_type,
        grouper,
        &chunkings,
        &windows,
        Compressor::Deflate,
        &cost,
    )?;
    match a.format {
        ReportFormat::Json => println!("{}", to_json(&points)?),
        ReportFormat::Csv => {
            let mut out = std::io::stdout().lock();
            writeln!(
                out,
                "chunking,window_s,redundancy_raw_pct,redundancy_compressed_pct,\
                 hit_raw_bytes,index_entries,est_fast_bytes,est_bulk_bytes,est_cost_dollars"
            )?;
            for p in &points {
                writeln!(
                    out,
                    "{},{},{:.3},{:.3},{},{},{},{},{:.2}",
                    p.chunking,
                    p.window as f64 / 1e6,
                    p.redundancy_raw_pct,
                    p.redundancy_compressed_pct,
                    p.hit_raw_bytes,
                    p.index_entries,
                    p.est_fast_bytes,
                    p.est_bulk_bytes,
                    p.est_cost_dollars
                )?;
            }
        }
        ReportFormat::Text => {
            println!(
                "{:<12} {:>10} {:>8} {:>8} {:>14} {:>10} {:>12} {:>12} {:>8}",
                "chunking", "window_s", "raw%", "comp%", "hit_bytes", "entries", "fast_bytes",
                "bulk_bytes", "cost_$"
            );
            for p in &points {
                println!(
                    "{:<12} {:>10} {:>8.2} {:>8.2} {:>14} {:>10} {:>12} {:>12} {:>8.2}",
                    p.chunking,
                    p.window as f64 / 1e6,
                    p.redundancy_raw_pct,
                    p.redundancy_compressed_pct,
                    p.hit_raw_bytes,
                    p.index_entries,
                    p.est_fast_bytes,
                    p.est_bulk_bytes,
                    p.est_cost_dollars
                );
            }
        }
    }
    Ok(0)
}

fn cmd_stats(a: StatsArgs) -> Result<i32> {
    let archive = open_archive(a.archive, a.bulk_dir)?;
    let m = &archive.manifest;
    let cost_model =
        CostModel { fast_price_per_gb: a.fast_price, bulk_price_per_gb: a.bulk_price };
    let fast = m.fast_tier_bytes();
    let bulk = m.bulk_tier_bytes();
    let cost = workload::storage_cost(&cost_model, fast, bulk);
    if a.format == ReportFormat::Json {
        #[derive(serde::Serialize)]
        struct Stats<'a> {
            epochs: usize,
            oldest_epoch: Option<u64>,
            newest_epoch: Option<u64>,
            epoch_len: u64,
            fast_tier_bytes: u64,
            bulk_tier_bytes: u64,
            est_cost_dollars: f64,
            counters: &'a crate::store::ArchiveCounters,
        }
        println!(
            "{}",
            to_json(&Stats {
                epochs: m.epochs.len(),
                oldest_epoch: m.epochs.first().map(|e| e.id),
                newest_epoch: m.epochs.last().map(|e| e.id),
                epoch_len: m.epoch_len,
                fast_tier_bytes: fast,
                bulk_tier_bytes: bulk,
                est_cost_dollars: cost,
                counters: &m.counters,
            })?
        );
        return Ok(0);
    }
    let c = &m.counters;
    println!("epochs             {}", m.epochs.len());
    if let (Some(first), Some(last)) = (m.epochs.first(), m.epochs.last()) {
        println!("epoch ids          {}..={}", first.id, last.id);
        let span = (last.id + 1 - first.id) * m.epoch_len;
        println!("covered seconds    {:.1}", span as f64 / 1e6);
    }
    println!("packets            {}", c.packets);
    println!("flows              {}", c.flows);
    println!("tcp/udp/ip/other   {}/{}/{}/{}", c.tcp_packets, c.udp_packets, c.other_ip_packets, c.non_ip_packets);
    println!("raw pcap bytes     {}", c.raw_pcap_bytes);
    println!("fast tier bytes    {}", fast);
    println!("bulk tier bytes    {}", bulk);
    println!("stored/raw         {:.4}", ratio(fast + bulk, c.raw_pcap_bytes));
    println!("dedup hit bytes    {}", c.dedup_hit_bytes);
    println!("chunks stored      {}", c.chunks_stored);
    println!("est cost $/month   {:.2}", cost);
    if c.truncated_tail {
        println!("truncated tail     yes");
    }
    if c.timestamp_regressions > 0 {
        println!("ts regressions     {}", c.timestamp_regressions);
    }
    if c.late_flows > 0 {
        println!("late flows         {}", c.late_flows);
    }
    Ok(0)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Archive(format!("report serialization failed: {e}")))
}
