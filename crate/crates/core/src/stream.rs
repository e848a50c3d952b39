//! Core spike-stream and image types.
//!
//! Bits are stored frame-major, then row-major with `x` fastest. Each row is
//! padded to a whole number of bytes and the lowest `x` of a byte sits in its
//! least significant bit.

use crate::error::{Error, Result};

/// Immutable bit-packed binary tensor of shape `k × h × w`.
#[derive(Clone, PartialEq, Eq)]
pub struct SpikeStream {
    k: usize,
    h: usize,
    w: usize,
    bits: Vec<u8>,
}

impl std::fmt::Debug for SpikeStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpikeStream")
            .field("k", &self.k)
            .field("h", &self.h)
            .field("w", &self.w)
            .field("spikes", &self.count_spikes())
            .finish()
    }
}

/// Bytes needed to hold one padded row of `w` pixels.
pub fn row_bytes(w: usize) -> usize {
    w.div_ceil(8)
}

/// Payload size in bytes for a `k × h × w` stream.
pub fn payload_len(k: usize, h: usize, w: usize) -> usize {
    k * h * row_bytes(w)
}

fn check_dims(k: usize, h: usize, w: usize) -> Result<()> {
    if k == 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "stream dimensions must be positive, got k={k} h={h} w={w}"
        )));
    }
    if h > u16::MAX as usize || w > u16::MAX as usize || k > u32::MAX as usize {
        return Err(Error::Shape(format!(
            "stream dimensions exceed container limits, got k={k} h={h} w={w}"
        )));
    }
    Ok(())
}

impl SpikeStream {
    /// All-zero stream.
    pub fn zeros(k: usize, h: usize, w: usize) -> Result<Self> {
        check_dims(k, h, w)?;
        Ok(SpikeStream {
            k,
            h,
            w,
            bits: vec![0; payload_len(k, h, w)],
        })
    }

    /// Builds a stream by evaluating `f(t, y, x)` at every position.
    pub fn from_fn(
        k: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut stream = Self::zeros(k, h, w)?;
        let rb = row_bytes(w);
        for t in 0..k {
            for y in 0..h {
                let base = (t * h + y) * rb;
                for x in 0..w {
                    if f(t, y, x) {
                        stream.bits[base + x / 8] |= 1 << (x % 8);
                    }
                }
            }
        }
        Ok(stream)
    }

    /// Wraps an already packed payload. Padding bits must be zero.
    pub fn from_payload(k: usize, h: usize, w: usize, bits: Vec<u8>) -> Result<Self> {
        check_dims(k, h, w)?;
        let expected = payload_len(k, h, w);
        if bits.len() != expected {
            return Err(Error::Length {
                expected,
                found: bits.len(),
            });
        }
        if !w.is_multiple_of(8) {
            let rb = row_bytes(w);
            let pad_mask: u8 = !((1u16 << (w % 8)) - 1) as u8;
            if bits.chunks_exact(rb).any(|row| row[rb - 1] & pad_mask != 0) {
                return Err(Error::Format("non-zero padding bits in row".into()));
            }
        }
        Ok(SpikeStream { k, h, w, bits })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Packed payload bytes.
    pub fn payload(&self) -> &[u8] {
        &self.bits
    }

    /// Checked read of a single spike bit.
    pub fn get_bit(&self, t: usize, y: usize, x: usize) -> Result<bool> {
        if t >= self.k || y >= self.h || x >= self.w {
            return Err(Error::Range(format!(
                "(t={t}, y={y}, x={x}) outside stream of shape {}×{}×{}",
                self.k, self.h, self.w
            )));
        }
        Ok(self.bit(t, y, x))
    }

    #[inline]
    pub(crate) fn bit(&self, t: usize, y: usize, x: usize) -> bool {
        let idx = (t * self.h + y) * row_bytes(self.w) + x / 8;
        (self.bits[idx] >> (x % 8)) & 1 == 1
    }

    /// Packed bytes for row `y` of frame `t`.
    pub fn row(&self, t: usize, y: usize) -> &[u8] {
        let rb = row_bytes(self.w);
        let start = (t * self.h + y) * rb;
        &self.bits[start..start + rb]
    }

    /// Total number of set bits.
    pub fn count_spikes(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// Per-pixel spike counts over frames `[start, end)`, row-major.
    pub fn counts_in(&self, start: usize, end: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.h * self.w];
        for t in start..end.min(self.k) {
            for y in 0..self.h {
                let row = self.row(t, y);
                let out = &mut counts[y * self.w..(y + 1) * self.w];
                for (x, c) in out.iter_mut().enumerate() {
                    *c += u32::from((row[x / 8] >> (x % 8)) & 1);
                }
            }
        }
        counts
    }

    /// Per-pixel spike count divided by `k`.
    pub fn firing_rate(&self) -> IntensityImage {
        let k = self.k as f64;
        let values = self
            .counts_in(0, self.k)
            .into_iter()
            .map(|c| f64::from(c) / k)
            .collect();
        IntensityImage::new_clamped(self.h, self.w, values)
            .expect("rates are finite and sized to the stream")
    }
}

/// Single-channel image with every value finite and inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl IntensityImage {
    /// Builds an image, clamping values into `[0, 1]`. Non-finite values are rejected.
    pub fn new_clamped(h: usize, w: usize, mut values: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "image must be non-empty, got {h}×{w}"
            )));
        }
        if values.len() != h * w {
            return Err(Error::Shape(format!(
                "{} values supplied for a {h}×{w} image",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite pixel value at index {i}"
            )));
        }
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(IntensityImage { h, w, values })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                values.push(f(y, x));
            }
        }
        Self::new_clamped(h, w, values)
    }

    pub fn constant(h: usize, w: usize, value: f64) -> Result<Self> {
        Self::new_clamped(h, w, vec![value; h * w])
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.w + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
