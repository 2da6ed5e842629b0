//! Variable-length integer encoding used by every on-disk structure:
//! unsigned LEB128, with zigzag mapping for signed values.

use crate::error::{Error, Result};

/// Appends `value` as unsigned LEB128.
#[inline]
pub fn put_u64(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Appends `value` zigzag-mapped then LEB128-encoded.
#[inline]
pub fn put_i64(out: &mut Vec<u8>, value: i64) {
    put_u64(out, zigzag(value));
}

#[inline]
pub fn zigzag(value: i64) -> u64 {
    ((value << 1) ^ (value >> 63)) as u64
}

#[inline]
pub fn unzigzag(value: u64) -> i64 {
    ((value >> 1) as i64) ^ -((value & 1) as i64)
}

/// Cursor over a byte slice for decoding.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn truncated(&self) -> Error {
        Error::CaptureFormat(format!("truncated varint data at byte {}", self.pos))
    }

    #[inline]
    pub fn u64(&mut self) -> Result<u64> {
        let mut value = 0u64;
        let mut shift = 0u32;
        loop {
            let byte = *self.buf.get(self.pos).ok_or_else(|| self.truncated())?;
            self.pos += 1;
            if shift == 63 && byte > 1 {
                return Err(Error::CaptureFormat("varint overflows u64".into()));
            }
            value |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
            shift += 7;
            if shift > 63 {
                return Err(Error::CaptureFormat("varint longer than 10 bytes".into()));
            }
        }
    }

    #[inline]
    pub fn i64(&mut self) -> Result<i64> {
        Ok(unzigzag(self.u64()?))
    }

    #[inline]
    pub fn byte(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    #[inline]
    pub fn bytes(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(self.truncated());
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u64_roundtrip_boundaries() {
        let cases = [
            0u64,
            1,
            127,
            128,
            300,
            16383,
            16384,
            u32::MAX as u64,
            u64::MAX - 1,
            u64::MAX,
        ];
        for &v in &cases {
            let mut buf = Vec::new();
            put_u64(&mut buf, v);
            let mut r = Reader::new(&buf);
            assert_eq!(r.u64().unwrap(), v, "value {v}");
            assert!(r.is_empty());
        }
    }

    #[test]
    fn single_byte_values() {
        for v in 0..=127u64 {
            let mut buf = Vec::new();
            put_u64(&mut buf, v);
            assert_eq!(buf, vec![v as u8]);
        }
    }

    #[test]
    fn known_encodings() {
        let mut buf = Vec::new();
        put_u64(&mut buf, 300);
        assert_eq!(buf, vec![0xac, 0x02]);
    }

    #[test]
    fn zigzag_mapping() {
        assert_eq!(zigzag(0), 0);
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
        assert_eq!(zigzag(-2), 3);
        assert_eq!(zigzag(2), 4);
        assert_eq!(zigzag(i64::MAX), u64::MAX - 1);
        assert_eq!(zigzag(i64::MIN), u64::MAX);
        for v in [-5i64, -1, 0, 1, 12345, -987654321, i64::MIN, i64::MAX] {
            assert_eq!(unzigzag(zigzag(v)), v);
        }
    }

    #[test]
    fn i64_roundtrip() {
        for &v in &[0i64, -1, 1, -64, 64, i64::MIN, i64::MAX, 1460, -1460] {
            let mut buf = Vec::new();
            put_i64(&mut buf, v);
            let mut r = Reader::new(&buf);
            assert_eq!(r.i64().unwrap(), v);
        }
    }

    #[test]
    fn truncated_input_errors() {
        let mut r = Reader::new(&[0x80]);
        assert!(r.u64().is_err());
        let mut r = Reader::new(&[]);
        assert!(r.u64().is_err());
    }

    #[test]
    fn overlong_input_errors() {
        // 11 continuation bytes can never be a valid u64.
        let buf = [0x80u8; 10];
        let mut r = Reader::new(&buf);
        assert!(r.u64().is_err());
    }
}
