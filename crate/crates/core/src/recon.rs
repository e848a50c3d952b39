//! Model-based reconstruction from spike streams.
//!
//! * TFP averages spike counts over a virtual exposure window centred on the stream.
//! * TFI inverts the inter-spike interval that brackets the middle frame.
//! * Voxelization sums spike frames into equal-width temporal bins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{IntensityImage, SpikeStream};

/// Reference frame used by TFI and default for ISI queries.
pub fn mid_time(k: usize) -> usize {
    k / 2
}

/// Texture-from-playback: `theta · count / window` over a centred window.
pub fn tfp(stream: &SpikeStream, window: usize, theta: f64) -> Result<IntensityImage> {
    let k = stream.k();
    if window == 0 || window > k {
        return Err(Error::Parameter(format!(
            "window must lie in [1, {k}], got {window}"
        )));
    }
    let start = mid_time(k) - window / 2;
    let counts = stream.counts_in(start, start + window);
    let values = counts
        .into_iter()
        .map(|c| theta * f64::from(c) / window as f64)
        .collect();
    IntensityImage::new_clamped(stream.h(), stream.w(), values)
}

/// Per-pixel inter-spike interval around a reference frame.
///
/// `None` stands for an infinite interval: no spike at or before the reference,
/// or none after it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsiMap {
    h: usize,
    w: usize,
    values: Vec<Option<u32>>,
}

impl IsiMap {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn get(&self, y: usize, x: usize) -> Option<u32> {
        self.values[y * self.w + x]
    }

    pub fn values(&self) -> &[Option<u32>] {
        &self.values
    }
}

/// ISI around `t_mid`: `t⁺ − t⁻` where `t⁻` is the last spike at or before
/// `t_mid` and `t⁺` the first spike strictly after it.
pub fn isi_map(stream: &SpikeStream, t_mid: usize) -> Result<IsiMap> {
    let (k, h, w) = (stream.k(), stream.h(), stream.w());
    if t_mid >= k {
        return Err(Error::Range(format!("t_mid {t_mid} outside [0, {k})")));
    }
    let mut values = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let before = (0..=t_mid).rev().find(|&t| stream.bit(t, y, x));
            let after = (t_mid + 1..k).find(|&t| stream.bit(t, y, x));
            values.push(match (before, after) {
                (Some(lo), Some(hi)) => Some((hi - lo) as u32),
                _ => None,
            });
        }
    }
    Ok(IsiMap { h, w, values })
}

/// Texture-from-ISI: `theta / ISI` at the middle frame, 0 where the ISI is infinite.
pub fn tfi(stream: &SpikeStream, theta: f64) -> Result<IntensityImage> {
    if stream.k() < 2 {
        return Err(Error::Parameter(format!(
            "TFI needs at least 2 frames, got {}",
            stream.k()
        )));
    }
    let isi = isi_map(stream, mid_time(stream.k()))?;
    let values = isi
        .values
        .iter()
        .map(|v| v.map_or(0.0, |d| theta / f64::from(d)))
        .collect();
    IntensityImage::new_clamped(stream.h(), stream.w(), values)
}

/// Spike counts binned over time, shape `c × h × w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    c: usize,
    h: usize,
    w: usize,
    values: Vec<u32>,
}

/// JSON sidecar describing a `.vox` tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelHeader {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub dtype: String,
}

impl VoxelGrid {
    pub fn c(&self) -> usize {
        self.c
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Counts in `c, h, w` order with `x` fastest.
    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u32 {
        self.values[(c * self.h + y) * self.w + x]
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    /// Flat little-endian `f32` payload.
    pub fn to_f32le(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn header(&self) -> VoxelHeader {
        VoxelHeader {
            c: self.c,
            h: self.h,
            w: self.w,
            dtype: "f32le".into(),
        }
    }

    /// Writes `path` (raw tensor) and `path.json` (sidecar).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_f32le()).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_vec(&self.header())?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(sidecar, e))
    }
}

/// Location of the JSON sidecar for a voxel file: the same name with `.json` appended.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Reads a `.vox` tensor written by [`VoxelGrid::write`] back as `f32` values.
pub fn read_voxels(path: impl AsRef<Path>) -> Result<(VoxelHeader, Vec<f32>)> {
    let path = path.as_ref();
    let sidecar = sidecar_path(path);
    let header: VoxelHeader =
        serde_json::from_slice(&std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?)?;
    if header.dtype != "f32le" {
        return Err(Error::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.c * header.h * header.w * 4;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((header, values))
}

/// Sums frames into `bins` equal temporal bins. `bins` must divide `k`.
pub fn voxelize(stream: &SpikeStream, bins: usize) -> Result<VoxelGrid> {
    let k = stream.k();
    if bins == 0 || !k.is_multiple_of(bins) {
        return Err(Error::Parameter(format!(
            "bin count {bins} does not divide stream length {k}"
        )));
    }
    let width = k / bins;
    let mut values = Vec::with_capacity(bins * stream.h() * stream.w());
    for j in 0..bins {
        values.extend(stream.counts_in(j * width, (j + 1) * width));
    }
    Ok(VoxelGrid {
        c: bins,
        h: stream.h(),
        w: stream.w(),
        values,
    })
}
