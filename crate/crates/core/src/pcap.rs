//! Classic pcap container reading and writing.
//!
//! Writes are always little-endian, microsecond resolution, format
//! version 2.4. Reads accept either byte order (detected from the magic)
//! but only microsecond resolution; the nanosecond variant is rejected
//! with a distinct error. Reading is streaming — nothing buffers the
//! whole file — and a truncated final record is dropped with a warning
//! while every prior packet is kept.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::packet::{Packet, MICROS_PER_SEC};

/// Microsecond magic as written by this crate (little-endian on disk:
/// `d4 c3 b2 a1`).
pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
/// Microsecond magic read back from an opposite-endian writer.
pub const MAGIC_MICROS_SWAPPED: u32 = 0xd4c3_b2a1;
/// Nanosecond-resolution magics (both byte orders); not supported.
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const MAGIC_NANOS_SWAPPED: u32 = 0x4d3c_b2a1;

pub const VERSION_MAJOR: u16 = 2;
pub const VERSION_MINOR: u16 = 4;
pub const SNAPLEN: u32 = 65_535;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
/// Upper bound on a single record's captured length; anything larger is
/// treated as a corrupt length field rather than something to allocate.
const MAX_RECORD_LEN: u32 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    #[inline]
    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }

    #[inline]
    fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            Endian::Little => u16::from_le_bytes(b),
            Endian::Big => u16::from_be_bytes(b),
        }
    }
}

/// Streaming pcap reader.
pub struct PcapReader<R: Read> {
    inner: R,
    endian: Endian,
    link_type: u32,
    snaplen: u32,
    next_seq: u64,
    offset: u64,
    /// Set when the file ended mid-record and the tail was dropped.
    truncated_tail: bool,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        inner
            .read_exact(&mut header)
            .map_err(|e| Error::CaptureFormat(format!("file too short for global header: {e}")))?;
        let raw_magic = u32::from_le_bytes([header[0], header[1], header[2], header[3]]);
        let endian = match raw_magic {
            MAGIC_MICROS => Endian::Little,
            MAGIC_MICROS_SWAPPED => Endian::Big,
            MAGIC_NANOS | MAGIC_NANOS_SWAPPED => {
                return Err(Error::NanosecondCapture { magic: raw_magic })
            }
            other => {
                return Err(Error::CaptureFormat(format!(
                    "unrecognized magic {other:#010x}; not a pcap file"
                )))
            }
        };
        let _version_major = endian.u16([header[4], header[5]]);
        let _version_minor = endian.u16([header[6], header[7]]);
        let snaplen = endian.u32([header[16], header[17], header[18], header[19]]);
        let link_type = endian.u32([header[20], header[21], header[22], header[23]]);
        Ok(PcapReader {
            inner,
            endian,
            link_type,
            snaplen,
            next_seq: 0,
            offset: GLOBAL_HEADER_LEN as u64,
            truncated_tail: false,
            done: false,
        })
    }

    pub fn link_type(&self) -> u32 {
        self.link_type
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }

    /// True if the input ended in the middle of a record (which was
    /// dropped).
    pub fn truncated_tail(&self) -> bool {
        self.truncated_tail
    }

    /// Reads the next packet. `Ok(None)` is end of input; errors are
    /// fatal format problems (corrupt record headers), after which
    /// iteration stops.
    pub fn next_packet(&mut self) -> Result<Option<Packet>> {
        if self.done {
            return Ok(None);
        }
        let mut rec = [0u8; RECORD_HEADER_LEN];
        match read_exact_or_eof(&mut self.inner, &mut rec)? {
            ReadOutcome::Eof => {
                self.done = true;
                return Ok(None);
            }
            ReadOutcome::Partial(got) => {
                log::warn!(
                    "capture ends mid record header at offset {} ({got} of {RECORD_HEADER_LEN} bytes); dropping the partial record",
                    self.offset
                );
                self.truncated_tail = true;
                self.done = true;
                return Ok(None);
            }
            ReadOutcome::Full => {}
        }
        let e = self.endian;
        let ts_sec = e.u32([rec[0], rec[1], rec[2], rec[3]]);
        let ts_frac = e.u32([rec[4], rec[5], rec[6], rec[7]]);
        let incl_len = e.u32([rec[8], rec[9], rec[10], rec[11]]);
        let orig_len = e.u32([rec[12], rec[13], rec[14], rec[15]]);
        if ts_frac >= MICROS_PER_SEC {
            self.done = true;
            return Err(Error::CaptureFormat(format!(
                "record at offset {} has non-microsecond fraction {ts_frac}",
                self.offset
            )));
        }
        if incl_len > MAX_RECORD_LEN || incl_len > orig_len {
            self.done = true;
            return Err(Error::CaptureFormat(format!(
                "record at offset {} has impossible lengths (captured {incl_len}, original {orig_len})",
                self.offset
            )));
        }
        let mut data = vec![0u8; incl_len as usize];
        match read_exact_or_eof(&mut self.inner, &mut data)? {
            ReadOutcome::Full => {}
            ReadOutcome::Eof | ReadOutcome::Partial(_) => {
                log::warn!(
                    "capture ends mid record body at offset {} (wanted {incl_len} bytes); dropping the final record",
                    self.offset
                );
                self.truncated_tail = true;
                self.done = true;
                return Ok(None);
            }
        }
        self.offset += (RECORD_HEADER_LEN + incl_len as usize) as u64;
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(Some(Packet::new(ts_sec, ts_frac, orig_len, data, seq)?))
    }
}

enum ReadOutcome {
    Full,
    Eof,
    Partial(usize),
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Ok(if filled == 0 { ReadOutcome::Eof } else { ReadOutcome::Partial(filled) })
            }
            Ok(n) => filled += n,
            Err(ref e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ReadOutcome::Full)
}

/// Streaming pcap writer (little-endian, microsecond, version 2.4).
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, link_type: u32) -> Result<Self> {
        let mut h = [0u8; GLOBAL_HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC_MICROS.to_le_bytes());
        h[4..6].copy_from_slice(&VERSION_MAJOR.to_le_bytes());
        h[6..8].copy_from_slice(&VERSION_MINOR.to_le_bytes());
        // thiszone and sigfigs stay zero.
        h[16..20].copy_from_slice(&SNAPLEN.to_le_bytes());
        h[20..24].copy_from_slice(&link_type.to_le_bytes());
        inner.write_all(&h)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_packet(&mut self, p: &Packet) -> Result<()> {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        rec[0..4].copy_from_slice(&p.ts_sec.to_le_bytes());
        rec[4..8].copy_from_slice(&p.ts_frac.to_le_bytes());
        rec[8..12].copy_from_slice(&p.captured_len().to_le_bytes());
        rec[12..16].copy_from_slice(&p.original_len.to_le_bytes());
        self.inner.write_all(&rec)?;
        self.inner.write_all(&p.data)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Reads every packet of a pcap file into memory. Returns the packets
/// and the file's link type.
pub fn read_file(path: &Path) -> Result<(Vec<Packet>, u32)> {
    let file = File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut reader = PcapReader::new(BufReader::new(file))?;
    let mut packets = Vec::new();
    while let Some(p) = reader.next_packet()? {
        packets.push(p);
    }
    Ok((packets, reader.link_type()))
}

/// Writes `packets` to a pcap file.
pub fn write_file(path: &Path, link_type: u32, packets: &[Packet]) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = PcapWriter::new(BufWriter::new(file), link_type)?;
    for p in packets {
        writer.write_packet(p)?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::LINKTYPE_ETHERNET;

    fn sample_packets() -> Vec<Packet> {
        vec![
            Packet::new(100, 5, 4, vec![1, 2, 3, 4], 0).unwrap(),
            Packet::new(100, 999_999, 2, vec![9, 8], 1).unwrap(),
            Packet::new(101, 0, 10, vec![7; 6], 2).unwrap(), // truncated capture
        ]
    }

    #[test]
    fn global_header_golden_bytes() {
        let mut buf = Vec::new();
        PcapWriter::new(&mut buf, LINKTYPE_ETHERNET).unwrap();
        assert_eq!(
            buf,
            [
                0xd4, 0xc3, 0xb2, 0xa1, // magic, little-endian
                0x02, 0x00, 0x04, 0x00, // version 2.4
                0x00, 0x00, 0x00, 0x00, // thiszone
                0x00, 0x00, 0x00, 0x00, // sigfigs
                0xff, 0xff, 0x00, 0x00, // snaplen 65535
                0x01, 0x00, 0x00, 0x00, // linktype ethernet
            ]
        );
    }

    #[test]
    fn record_header_golden_bytes() {
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf, LINKTYPE_ETHERNET).unwrap();
            w.write_packet(&Packet::new(0x01020304, 0x000e_fa90, 8, vec![0xaa; 5], 0).unwrap())
                .unwrap();
        }
        let rec = &buf[24..40];
        assert_eq!(&rec[0..4], &[0x04, 0x03, 0x02, 0x01]);
        assert_eq!(&rec[4..8], &[0x90, 0xfa, 0x0e, 0x00]); // 981648 µs
        assert_eq!(&rec[8..12], &[0x05, 0x00, 0x00, 0x00]);
        assert_eq!(&rec[12..16], &[0x08, 0x00, 0x00, 0x00]);
        assert_eq!(&buf[40..], &[0xaa; 5]);
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let packets = sample_packets();
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf, LINKTYPE_ETHERNET).unwrap();
            for p in &packets {
                w.write_packet(p).unwrap();
            }
        }
        let mut r = PcapReader::new(&buf[..]).unwrap();
        assert_eq!(r.link_type(), LINKTYPE_ETHERNET);
        assert_eq!(r.snaplen(), 65535);
        let mut back = Vec::new();
        while let Some(p) = r.next_packet().unwrap() {
            back.push(p);
        }
        assert_eq!(back, packets);
        assert!(!r.truncated_tail());
    }

    #[test]
    fn reads_byte_swapped_files() {
        // Hand-build a big-endian file with one record.
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC_MICROS.to_be_bytes());
        buf.extend_from_slice(&2u16.to_be_bytes());
        buf.extend_from_slice(&4u16.to_be_bytes());
        buf.extend_from_slice(&0i32.to_be_bytes());
        buf.extend_from_slice(&0u32.to_be_bytes());
        buf.extend_from_slice(&65535u32.to_be_bytes());
        buf.extend_from_slice(&1u32.to_be_bytes());
        buf.extend_from_slice(&7u32.to_be_bytes()); // ts_sec
        buf.extend_from_slice(&13u32.to_be_bytes()); // ts_usec
        buf.extend_from_slice(&3u32.to_be_bytes()); // incl
        buf.extend_from_slice(&3u32.to_be_bytes()); // orig
        buf.extend_from_slice(&[0xde, 0xad, 0xbf]);
        let mut r = PcapReader::new(&buf[..]).unwrap();
        let p = r.next_packet().unwrap().unwrap();
        assert_eq!((p.ts_sec, p.ts_frac), (7, 13));
        assert_eq!(p.data, vec![0xde, 0xad, 0xbf]);
        assert!(r.next_packet().unwrap().is_none());
    }

    #[test]
    fn rejects_nanosecond_resolution() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC_NANOS.to_le_bytes());
        buf.extend_from_slice(&[0u8; 20]);
        match PcapReader::new(&buf[..]) {
            Err(Error::NanosecondCapture { magic }) => assert_eq!(magic, MAGIC_NANOS),
            Err(other) => panic!("expected nanosecond rejection, got {other:?}"),
            Ok(_) => panic!("expected nanosecond rejection, got a reader"),
        }
        // Swapped byte order of the nanosecond magic is also rejected.
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC_NANOS.to_be_bytes());
        buf.extend_from_slice(&[0u8; 20]);
        assert!(matches!(PcapReader::new(&buf[..]), Err(Error::NanosecondCapture { .. })));
    }

    #[test]
    fn rejects_unknown_magic() {
        let mut buf = vec![0u8; 24];
        buf[0..4].copy_from_slice(&0xdeadbeefu32.to_le_bytes());
        assert!(matches!(PcapReader::new(&buf[..]), Err(Error::CaptureFormat(_))));
    }

    #[test]
    fn truncated_final_record_drops_tail_keeps_rest() {
        let packets = sample_packets();
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf, LINKTYPE_ETHERNET).unwrap();
            for p in &packets {
                w.write_packet(p).unwrap();
            }
        }
        // Chop 3 bytes off the final record's body.
        buf.truncate(buf.len() - 3);
        let mut r = PcapReader::new(&buf[..]).unwrap();
        let mut back = Vec::new();
        while let Some(p) = r.next_packet().unwrap() {
            back.push(p);
        }
        assert_eq!(back, packets[..2]);
        assert!(r.truncated_tail());

        // Chop into the final record's header instead.
        let mut buf2 = buf.clone();
        let keep = 24 + (16 + 4) + (16 + 2) + 7; // mid third header
        buf2.truncate(keep);
        let mut r = PcapReader::new(&buf2[..]).unwrap();
        let mut n = 0;
        while let Some(_p) = r.next_packet().unwrap() {
            n += 1;
        }
        assert_eq!(n, 2);
        assert!(r.truncated_tail());
    }

    #[test]
    fn corrupt_lengths_are_fatal() {
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf, LINKTYPE_ETHERNET).unwrap();
            w.write_packet(&Packet::new(0, 0, 4, vec![0; 4], 0).unwrap()).unwrap();
        }
        // incl_len 4 > orig_len 1
        buf[36..40].copy_from_slice(&1u32.to_le_bytes());
        let mut r = PcapReader::new(&buf[..]).unwrap();
        assert!(r.next_packet().is_err());

        // Fraction beyond a second is also fatal.
        let mut buf2 = buf.clone();
        buf2[36..40].copy_from_slice(&4u32.to_le_bytes());
        buf2[28..32].copy_from_slice(&1_000_000u32.to_le_bytes());
        let mut r = PcapReader::new(&buf2[..]).unwrap();
        assert!(r.next_packet().is_err());
    }
}
