//! `.spk` container: a fixed 34-byte little-endian header followed by the packed payload.
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `SPK1`                  |
//! | 4      | 2    | version (u16, currently 1)    |
//! | 6      | 2    | h (u16)                       |
//! | 8      | 2    | w (u16)                       |
//! | 10     | 4    | k (u32)                       |
//! | 14     | 4    | threshold × 1000 (u32)        |
//! | 18     | 16   | reserved, zero                |

use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::{payload_len, SpikeStream};

pub const MAGIC: [u8; 4] = *b"SPK1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 34;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpikeFileHeader {
    pub version: u16,
    pub h: u16,
    pub w: u16,
    pub k: u32,
    pub theta_milli: u32,
}

impl SpikeFileHeader {
    pub fn theta(&self) -> f64 {
        f64::from(self.theta_milli) / 1000.0
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..8].copy_from_slice(&self.h.to_le_bytes());
        out[8..10].copy_from_slice(&self.w.to_le_bytes());
        out[10..14].copy_from_slice(&self.k.to_le_bytes());
        out[14..18].copy_from_slice(&self.theta_milli.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"SPK1\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at =
            |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let header = SpikeFileHeader {
            version: u16_at(4),
            h: u16_at(6),
            w: u16_at(8),
            k: u32_at(10),
            theta_milli: u32_at(14),
        };
        if header.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.h == 0 || header.w == 0 || header.k == 0 {
            return Err(Error::Format(format!(
                "zero dimension in header: k={} h={} w={}",
                header.k, header.h, header.w
            )));
        }
        Ok(header)
    }
}

/// Threshold in thousandths, rounded and saturated to the u32 range.
fn theta_to_milli(theta: f64) -> u32 {
    let milli = (theta * 1000.0).round();
    if milli.is_nan() || milli <= 0.0 {
        0
    } else if milli >= f64::from(u32::MAX) {
        u32::MAX
    } else {
        milli as u32
    }
}

pub fn header_for(stream: &SpikeStream, theta: f64) -> SpikeFileHeader {
    SpikeFileHeader {
        version: VERSION,
        // SpikeStream construction bounds these to the header widths.
        h: stream.h() as u16,
        w: stream.w() as u16,
        k: stream.k() as u32,
        theta_milli: theta_to_milli(theta),
    }
}

pub fn encode(stream: &SpikeStream, theta: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + stream.payload().len());
    out.extend_from_slice(&header_for(stream, theta).to_bytes());
    out.extend_from_slice(stream.payload());
    out
}

/// Inverse of [`encode`]. Returns the stream and its threshold.
pub fn decode(bytes: &[u8]) -> Result<(SpikeStream, f64)> {
    let header = SpikeFileHeader::parse(bytes)?;
    let (k, h, w) = (header.k as usize, header.h as usize, header.w as usize);
    let expected = HEADER_LEN + payload_len(k, h, w);
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let stream = SpikeStream::from_payload(k, h, w, bytes[HEADER_LEN..].to_vec())?;
    Ok((stream, header.theta()))
}

/// Headerless raw dump (`.dat`) in the same bit layout; `k` is inferred from the length.
pub fn decode_raw(bytes: &[u8], h: usize, w: usize) -> Result<SpikeStream> {
    let frame = payload_len(1, h, w);
    if frame == 0 {
        return Err(Error::Shape(format!("invalid frame shape {h}×{w}")));
    }
    if bytes.is_empty() || !bytes.len().is_multiple_of(frame) {
        return Err(Error::Length {
            expected: (bytes.len() / frame).max(1) * frame,
            found: bytes.len(),
        });
    }
    SpikeStream::from_payload(bytes.len() / frame, h, w, bytes.to_vec())
}

pub fn read_spk(path: impl AsRef<Path>) -> Result<(SpikeStream, f64)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_spk(path: impl AsRef<Path>, stream: &SpikeStream, theta: f64) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(stream, theta)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lsb_first_packing() {
        let bits = [1, 0, 0, 0, 0, 0, 0, 1];
        let s = SpikeStream::from_fn(1, 1, 8, |_, _, x| bits[x] == 1).unwrap();
        let bytes = encode(&s, 1.0);
        assert_eq!(bytes.len(), HEADER_LEN + 1);
        assert_eq!(bytes[HEADER_LEN], 0x81);
    }

    #[test]
    fn empty_stream_is_all_zero_payload() {
        let s = SpikeStream::zeros(2, 2, 2).unwrap();
        let bytes = encode(&s, 1.0);
        // one byte per padded row, 2 rows per frame, 2 frames
        assert_eq!(&bytes[HEADER_LEN..], &[0, 0, 0, 0]);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let s = SpikeStream::zeros(3, 0x0102, 0x0304).unwrap();
        let header = header_for(&s, 1.5).to_bytes();
        assert_eq!(&header[0..4], b"SPK1");
        assert_eq!(&header[4..6], &[1, 0]);
        assert_eq!(&header[6..8], &[0x02, 0x01]);
        assert_eq!(&header[8..10], &[0x04, 0x03]);
        assert_eq!(&header[10..14], &[3, 0, 0, 0]);
        assert_eq!(&header[14..18], &1500u32.to_le_bytes());
        assert!(header[18..].iter().all(|&b| b == 0));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode(&SpikeStream::zeros(1, 1, 1).unwrap(), 1.0);
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let bytes = encode(&SpikeStream::zeros(4, 3, 10).unwrap(), 1.0);
        let err = decode(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(
            err,
            Error::Length {
                expected: 58,
                found: 57
            }
        ));
        assert!(matches!(decode(&bytes[..10]), Err(Error::Length { .. })));
    }

    #[test]
    fn theta_round_trips_in_milli_units() {
        let s = SpikeStream::zeros(1, 1, 1).unwrap();
        let (_, theta) = decode(&encode(&s, 1.0)).unwrap();
        assert_eq!(theta, 1.0);
        let (_, theta) = decode(&encode(&s, 0.25)).unwrap();
        assert_eq!(theta, 0.25);
    }

    #[test]
    fn raw_dump_infers_frame_count() {
        let s = SpikeStream::from_fn(6, 3, 12, |t, y, x| (t + y + x) % 3 == 0).unwrap();
        let raw = decode_raw(s.payload(), 3, 12).unwrap();
        assert_eq!(raw, s);
        assert!(matches!(
            decode_raw(&s.payload()[1..], 3, 12),
            Err(Error::Length { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_bits(
            k in 1usize..40, h in 1usize..12, w in 1usize..30, seed in any::<u64>(),
            theta in 0.001f64..100.0,
        ) {
            let s = SpikeStream::from_fn(k, h, w, |t, y, x| {
                let v = ((t as u64 * 0x9E37_79B9) ^ ((y as u64) << 20) ^ ((x as u64) << 40)) ^ seed;
                v.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 63 == 1
            }).unwrap();
            let (back, theta_back) = decode(&encode(&s, theta)).unwrap();
            prop_assert_eq!(back.count_spikes(), s.count_spikes());
            prop_assert_eq!(&back, &s);
            prop_assert!((theta_back - theta).abs() <= 0.0005 + 1e-12);
            prop_assert!(back.firing_rate().values().iter().all(|&v| v <= 1.0));
        }
    }
}
