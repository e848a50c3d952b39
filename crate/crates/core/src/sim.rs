//! Integrate-and-fire spike camera simulator.
//!
//! Each pixel integrates `light_scale · I(t)` once per frame. When the integral
//! reaches the threshold the pixel fires and the threshold is subtracted, so the
//! residue carries over to the next interval. Dark current is modelled as a
//! Bernoulli jolt of one full threshold per frame with probability `dark_rate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{row_bytes, IntensityImage, SpikeStream};

/// Relative slack on the firing comparison so that sums like `10 × 0.1` fire on time.
const FIRE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub theta: f64,
    pub light_scale: f64,
    pub dark_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            theta: 1.0,
            light_scale: 1.0,
            dark_rate: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::Parameter(format!(
                "theta must be > 0, got {}",
                self.theta
            )));
        }
        if !(self.light_scale.is_finite() && self.light_scale > 0.0) {
            return Err(Error::Parameter(format!(
                "light_scale must be > 0, got {}",
                self.light_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.dark_rate) {
            return Err(Error::Parameter(format!(
                "dark_rate must lie in [0, 1], got {}",
                self.dark_rate
            )));
        }
        Ok(())
    }
}

/// Simulates one spike frame per input frame.
pub fn simulate(frames: &[IntensityImage], cfg: &SimConfig) -> Result<SpikeStream> {
    cfg.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Shape("at least one frame is required".into()))?;
    let (h, w) = (first.h(), first.w());
    if let Some((i, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.h() != h || f.w() != w)
    {
        return Err(Error::Shape(format!(
            "frame {i} is {}×{}, expected {h}×{w}",
            f.h(),
            f.w()
        )));
    }
    let k = frames.len();
    // Validate container limits before doing the work.
    SpikeStream::zeros(1, h, w)?;
    if k > u32::MAX as usize {
        return Err(Error::Shape(format!(
            "{k} frames exceed the container limit"
        )));
    }

    let rb = row_bytes(w);
    let fire_level = cfg.theta * (1.0 - FIRE_EPS);
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|y| {
            // k frames of this row's packed bytes
            let mut out = vec![0u8; k * rb];
            for x in 0..w {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((y * w + x) as u64);
                let mut acc = 0.0f64;
                for (t, frame) in frames.iter().enumerate() {
                    acc += cfg.light_scale * frame.get(y, x);
                    if cfg.dark_rate > 0.0 && rng.random::<f64>() < cfg.dark_rate {
                        acc += cfg.theta;
                    }
                    if acc >= fire_level {
                        acc -= cfg.theta;
                        out[t * rb + x / 8] |= 1 << (x % 8);
                    }
                }
            }
            out
        })
        .collect();

    let mut payload = vec![0u8; k * h * rb];
    for (y, row) in rows.iter().enumerate() {
        for t in 0..k {
            let dst = (t * h + y) * rb;
            payload[dst..dst + rb].copy_from_slice(&row[t * rb..(t + 1) * rb]);
        }
    }
    SpikeStream::from_payload(k, h, w, payload)
}

/// Simulates a static scene held for `k` frames.
pub fn simulate_constant(
    intensity: &IntensityImage,
    k: usize,
    cfg: &SimConfig,
) -> Result<SpikeStream> {
    if k == 0 {
        return Err(Error::Shape("frame count must be at least 1".into()));
    }
    let frames = vec![intensity.clone(); k];
    simulate(&frames, cfg)
}
