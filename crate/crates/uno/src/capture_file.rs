//! Binary capture files (`.uno`).
//!
//! All integers and floats are little-endian.
//!
//! | field            | type                                  |
//! |------------------|---------------------------------------|
//! | magic            | `b"UNO1"`                             |
//! | version          | `u16` = 1                             |
//! | n                | `u32`                                 |
//! | m                | `u32`                                 |
//! | lambda           | `f64`                                 |
//! | period `T`       | `f64`                                 |
//! | seed             | `u64` (0 when Γ is stored)            |
//! | generator id     | `u16` length + ASCII                  |
//! | row index        | `u32`                                 |
//! | row length       | `u32`                                 |
//! | image id         | `u16` length + ASCII                  |
//! | flags            | `u32`, bit 0 = Γ block present        |
//! | sign bits        | `n` rows of `ceil(m/8)` bytes         |
//! | Γ (optional)     | `n·m` `f64`, row-major                |
//!
//! Sign bits: entry `ℓ` of row `k` is bit `ℓ % 8` of byte `ℓ / 8` in that
//! row, 1 = `+1`, 0 = `-1`, unused high bits zero. A capture with stored Γ
//! uses generator id `"explicit"`.
//!
//! Reference dump of a 2×2 seeded capture (λ = 1, T = 0.5, seed 42, row 0 of
//! length 2, empty image id, `R = [[+1, -1], [-1, +1]]`):
//!
//! ```text
//! 55 4e 4f 31 01 00 02 00 00 00 02 00 00 00 00 00
//! 00 00 00 00 f0 3f 00 00 00 00 00 00 e0 3f 2a 00
//! 00 00 00 00 00 00 18 00 63 68 61 63 68 61 38 2d
//! 73 65 71 73 74 72 65 61 6d 2d 75 35 33 2f 76 31
//! 00 00 00 00 02 00 00 00 00 00 00 00 00 00 01 02
//! ```

use std::path::Path;

use uno_core::onebit::{DitherPlan, DitherSource, OneBitCapture, RowMeta, SignMatrix, ThresholdMatrix};

use crate::atomic;
use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"UNO1";
pub const VERSION: u16 = 1;
pub const FLAG_EXPLICIT_THRESHOLDS: u32 = 1;
pub const EXPLICIT_GENERATOR_ID: &str = "explicit";

fn invalid(reason: impl Into<String>) -> Error {
    Error::Invalid {
        what: "capture",
        reason: reason.into(),
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| invalid(format!("{what} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    if !s.is_ascii() {
        return Err(invalid(format!("{what} must be ASCII")));
    }
    let len = u16::try_from(s.len()).map_err(|_| invalid(format!("{what} longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn to_bytes(capture: &OneBitCapture) -> Result<Vec<u8>> {
    let (n, m) = (capture.n(), capture.m());
    let (seed, generator, gamma) = match capture.dither() {
        DitherSource::Seeded(plan) => (plan.seed, plan.generator_id.as_str(), None),
        DitherSource::Explicit(g) => (0, EXPLICIT_GENERATOR_ID, Some(g)),
    };
    let meta = capture.row_meta();
    let mut out = Vec::with_capacity(64 + capture.bits().packed().len() + gamma.map_or(0, |_| 8 * n * m));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, n, "n")?;
    put_u32(&mut out, m, "m")?;
    out.extend_from_slice(&capture.lambda().to_le_bytes());
    out.extend_from_slice(&capture.period().to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    put_str(&mut out, generator, "generator id")?;
    out.extend_from_slice(&meta.row_index.to_le_bytes());
    out.extend_from_slice(&meta.row_length.to_le_bytes());
    put_str(&mut out, &meta.image_id, "image id")?;
    let flags = if gamma.is_some() { FLAG_EXPLICIT_THRESHOLDS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(capture.bits().packed());
    if let Some(g) = gamma {
        for v in g.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            what: "capture file",
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, len: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail(format!(
                "truncated {field}: need {len} bytes, {} left",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn array<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        Ok(self.take(N, field)?.try_into().expect("length checked"))
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        self.array(field).map(u16::from_le_bytes)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        self.array(field).map(u32::from_le_bytes)
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        self.array(field).map(u64::from_le_bytes)
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        self.array(field).map(f64::from_le_bytes)
    }

    fn string(&mut self, field: &str) -> Result<String> {
        let len = self.u16(field)? as usize;
        let start = self.pos;
        let raw = self.take(len, field)?;
        if !raw.is_ascii() {
            self.pos = start;
            return Err(self.fail(format!("{field} is not ASCII")));
        }
        Ok(String::from_utf8(raw.to_vec()).expect("ASCII is UTF-8"))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<OneBitCapture> {
    let mut r = Reader { bytes, pos: 0 };
    if r.array::<4>("magic")? != *MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic, expected UNO1"));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        r.pos -= 2;
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let n = r.u32("n")? as usize;
    let m = r.u32("m")? as usize;
    let lambda = r.f64("lambda")?;
    let period = r.f64("period")?;
    let seed = r.u64("seed")?;
    let generator_id = r.string("generator id")?;
    let row_index = r.u32("row index")?;
    let row_length = r.u32("row length")?;
    let image_id = r.string("image id")?;
    let flags_at = r.pos;
    let flags = r.u32("flags")?;
    if flags & !FLAG_EXPLICIT_THRESHOLDS != 0 {
        r.pos = flags_at;
        return Err(r.fail(format!("unknown flags {flags:#x}")));
    }
    let packed_len = n
        .checked_mul(SignMatrix::row_stride(m))
        .ok_or_else(|| r.fail("sign matrix size overflows"))?;
    let bits_at = r.pos;
    let packed = r.take(packed_len, "sign bits")?.to_vec();
    let bits = SignMatrix::from_packed(n, m, packed).map_err(|e| Error::Parse {
        what: "capture file",
        offset: bits_at,
        reason: e.to_string(),
    })?;
    let dither = if flags & FLAG_EXPLICIT_THRESHOLDS != 0 {
        if generator_id != EXPLICIT_GENERATOR_ID {
            return Err(r.fail("stored thresholds need generator id \"explicit\""));
        }
        let count = n.checked_mul(m).ok_or_else(|| r.fail("threshold block size overflows"))?;
        let block_len = count.checked_mul(8).ok_or_else(|| r.fail("threshold block size overflows"))?;
        let raw = r.take(block_len, "threshold block")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        DitherSource::Explicit(ThresholdMatrix::from_vec(n, m, data)?)
    } else {
        DitherSource::Seeded(DitherPlan {
            n,
            m,
            lambda,
            seed,
            generator_id,
        })
    };
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let meta = RowMeta {
        row_index,
        row_length,
        image_id,
    };
    Ok(OneBitCapture::from_parts(bits, dither, lambda, period, meta)?)
}

pub fn write_capture(path: &Path, capture: &OneBitCapture) -> Result<()> {
    let bytes = to_bytes(capture)?;
    atomic::write_bytes(path, &bytes)
}

pub fn read_capture(path: &Path) -> Result<OneBitCapture> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uno_core::onebit::GENERATOR_ID;

    fn reference_capture() -> OneBitCapture {
        let mut bits = SignMatrix::new(2, 2);
        bits.set(0, 0, true);
        bits.set(1, 1, true);
        let plan = DitherPlan::new(2, 2, 1.0, 42);
        let meta = RowMeta {
            row_index: 0,
            row_length: 2,
            image_id: String::new(),
        };
        OneBitCapture::from_parts(bits, DitherSource::Seeded(plan), 1.0, 0.5, meta).unwrap()
    }

    const REFERENCE_HEX: &str = "
        55 4e 4f 31 01 00 02 00 00 00 02 00 00 00 00 00
        00 00 00 00 f0 3f 00 00 00 00 00 00 e0 3f 2a 00
        00 00 00 00 00 00 18 00 63 68 61 63 68 61 38 2d
        73 65 71 73 74 72 65 61 6d 2d 75 35 33 2f 76 31
        00 00 00 00 02 00 00 00 00 00 00 00 00 00 01 02";

    fn parse_hex(s: &str) -> Vec<u8> {
        s.split_whitespace()
            .map(|b| u8::from_str_radix(b, 16).unwrap())
            .collect()
    }

    #[test]
    fn reference_dump() {
        assert_eq!(GENERATOR_ID.len(), 24);
        let bytes = to_bytes(&reference_capture()).unwrap();
        assert_eq!(bytes, parse_hex(REFERENCE_HEX));
        assert_eq!(from_bytes(&bytes).unwrap(), reference_capture());
    }

    #[test]
    fn explicit_thresholds_round_trip() {
        let gamma = ThresholdMatrix::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        let mut bits = SignMatrix::new(2, 3);
        bits.set(1, 2, true);
        let cap = OneBitCapture::from_parts(
            bits,
            DitherSource::Explicit(gamma),
            1.0,
            0.25,
            RowMeta {
                row_index: 7,
                row_length: 9,
                image_id: "cam".into(),
            },
        )
        .unwrap();
        let bytes = to_bytes(&cap).unwrap();
        assert_eq!(bytes.len(), 4 + 2 + 4 + 4 + 8 + 8 + 8 + 2 + 8 + 4 + 4 + 2 + 3 + 4 + 2 + 48);
        assert_eq!(from_bytes(&bytes).unwrap(), cap);
        assert_eq!(to_bytes(&from_bytes(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn truncation_names_offset() {
        let bytes = to_bytes(&reference_capture()).unwrap();
        let err = from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 78),
            other => panic!("{other}"),
        }
        assert!(from_bytes(&bytes[..3]).unwrap_err().to_string().contains("offset 0"));
    }

    #[test]
    fn rejects_corruption() {
        let good = to_bytes(&reference_capture()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(from_bytes(&bad).is_err());
        let mut bad = good.clone();
        bad[79] |= 0x80;
        assert!(from_bytes(&bad).is_err(), "padding bits set");
        let mut bad = good.clone();
        bad.push(0);
        assert!(from_bytes(&bad).is_err(), "trailing byte");
        let mut bad = good;
        bad[74] = 2;
        assert!(from_bytes(&bad).is_err(), "unknown flag");
    }
}
