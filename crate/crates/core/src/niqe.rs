//! NIQE: a no-reference image quality score.
//!
//! An image is normalized into mean-subtracted contrast-normalized (MSCN)
//! coefficients, cut into square patches, and each patch is summarized by
//! asymmetric generalized Gaussian (AGGD) fits of the MSCN field and of four
//! neighbour products, at full and half resolution. The score is a
//! Mahalanobis-style distance between the test image's patch statistics and a
//! model fitted on a pristine corpus. Lower is better.

use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stream::IntensityImage;

pub const DEFAULT_PATCH_SIZE: usize = 96;
/// AGGD summary of the MSCN field (2) plus four neighbour products (4 each).
pub const FEATURES_PER_SCALE: usize = 18;
pub const FEATURE_LEN: usize = 2 * FEATURES_PER_SCALE;
/// Smallest patch whose half-resolution block still holds enough samples for a fit.
pub const MIN_PATCH_SIZE: usize = 24;
/// Minimum number of pristine images for [`fit_niqe_model`].
pub const MIN_CORPUS: usize = 10;

const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
/// MSCN stabilizer for images on a `[0, 1]` scale.
const STABILIZER: f64 = 1.0 / 255.0;
const SHARPNESS_FRACTION: f64 = 0.75;
const COV_EPS: f64 = 1e-6;
const MIN_FIT_SAMPLES: usize = 100;

/// A real-valued single-channel field.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl Plane {
    fn from_image(img: &IntensityImage) -> Self {
        Plane {
            h: img.h(),
            w: img.w(),
            values: img.values().to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.w + x]
    }

    /// 2×2 box average, dropping an odd last row/column.
    fn half(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut values = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let s = self.get(2 * y, 2 * x)
                    + self.get(2 * y, 2 * x + 1)
                    + self.get(2 * y + 1, 2 * x)
                    + self.get(2 * y + 1, 2 * x + 1);
                values.push(s / 4.0);
            }
        }
        Plane { h, w, values }
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filter with replicated borders.
fn blur(plane: &Plane, kernel: &[f64; WINDOW]) -> Plane {
    let (h, w) = (plane.h, plane.w);
    let r = (WINDOW / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * plane.get(y, clampi(x as isize + i as isize - r, w)))
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clampi(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    Plane { h, w, values: out }
}

/// MSCN coefficients and the local standard deviation field.
fn mscn_fields(plane: &Plane) -> Result<(Plane, Plane)> {
    if plane.h < WINDOW || plane.w < WINDOW {
        return Err(Error::Shape(format!(
            "MSCN needs at least {WINDOW}×{WINDOW} pixels, got {}×{}",
            plane.h, plane.w
        )));
    }
    let kernel = gaussian_window();
    let mu = blur(plane, &kernel);
    let squared = Plane {
        h: plane.h,
        w: plane.w,
        values: plane.values.iter().map(|v| v * v).collect(),
    };
    let mu_sq = blur(&squared, &kernel);
    let sigma: Vec<f64> = mu_sq
        .values
        .iter()
        .zip(&mu.values)
        .map(|(s, m)| (s - m * m).abs().sqrt())
        .collect();
    let coeffs = plane
        .values
        .iter()
        .zip(&mu.values)
        .zip(&sigma)
        .map(|((v, m), s)| (v - m) / (s + STABILIZER))
        .collect();
    Ok((
        Plane {
            h: plane.h,
            w: plane.w,
            values: coeffs,
        },
        Plane {
            h: plane.h,
            w: plane.w,
            values: sigma,
        },
    ))
}

/// Mean-subtracted contrast-normalized coefficients `(I − μ) / (σ + C)`.
pub fn mscn(image: &IntensityImage) -> Result<Plane> {
    mscn_fields(&Plane::from_image(image)).map(|(m, _)| m)
}

/// Asymmetric generalized Gaussian parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams {
    pub alpha: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub eta: f64,
}

/// `(alpha, Γ(2/α)² / (Γ(1/α) Γ(3/α)))` over the search grid `0.2, 0.201, …, 10`.
fn ratio_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (200..=10_000)
            .map(|i| {
                let a = f64::from(i) / 1000.0;
                let r = (2.0 * ln_gamma(2.0 / a) - ln_gamma(1.0 / a) - ln_gamma(3.0 / a)).exp();
                (a, r)
            })
            .collect()
    })
}

/// Moment-matching AGGD fit.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdParams> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::Fit("all samples are equal".into()));
    }

    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::Fit("samples lie on one side of zero".into()));
    }
    let sigma_l = (left_sq / left_n as f64).sqrt();
    let sigma_r = (right_sq / right_n as f64).sqrt();
    let n = samples.len() as f64;
    let gamma_hat = sigma_l / sigma_r;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat * gamma_hat + 1.0).powi(2);

    let (alpha, _) = ratio_table()
        .iter()
        .map(|&(a, r)| (a, (r - r_norm).powi(2)))
        .fold((f64::NAN, f64::INFINITY), |best, cand| {
            if cand.1 < best.1 {
                cand
            } else {
                best
            }
        });
    let eta = (sigma_r - sigma_l)
        * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp()
        * (0.5 * (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha))).exp();

    Ok(AggdParams {
        alpha,
        sigma_l,
        sigma_r,
        eta,
    })
}

/// The 18 statistics of one square block of an MSCN field.
fn block_features(
    field: &Plane,
    y0: usize,
    x0: usize,
    size: usize,
) -> Result<[f64; FEATURES_PER_SCALE]> {
    let mut out = [0.0; FEATURES_PER_SCALE];
    let mut samples = Vec::with_capacity(size * size);
    for y in y0..y0 + size {
        samples.extend_from_slice(&field.values[y * field.w + x0..y * field.w + x0 + size]);
    }
    let p = fit_aggd(&samples)?;
    out[0] = p.alpha;
    out[1] = (p.sigma_l * p.sigma_l + p.sigma_r * p.sigma_r) / 2.0;

    // horizontal, vertical, main diagonal, anti-diagonal neighbours
    const SHIFTS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
    for (i, (dy, dx)) in SHIFTS.iter().enumerate() {
        samples.clear();
        for y in 0..size as isize {
            for x in 0..size as isize {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= size as isize || nx >= size as isize {
                    continue;
                }
                let a = field.get(y0 + y as usize, x0 + x as usize);
                let b = field.get(y0 + ny as usize, x0 + nx as usize);
                samples.push(a * b);
            }
        }
        let p = fit_aggd(&samples)?;
        let base = 2 + 4 * i;
        out[base] = p.alpha;
        out[base + 1] = p.eta;
        out[base + 2] = p.sigma_l * p.sigma_l;
        out[base + 3] = p.sigma_r * p.sigma_r;
    }
    Ok(out)
}

/// Feature vector of one patch, plus its sharpness (mean local deviation).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchFeatures {
    pub features: Vec<f64>,
    pub sharpness: f64,
}

fn check_patch_size(patch_size: usize) -> Result<()> {
    if patch_size < MIN_PATCH_SIZE || !patch_size.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "patch size must be even and at least {MIN_PATCH_SIZE}, got {patch_size}"
        )));
    }
    Ok(())
}

fn check_image_size(image: &IntensityImage, patch_size: usize) -> Result<()> {
    let min = 2 * patch_size;
    if image.h() < min || image.w() < min {
        return Err(Error::Shape(format!(
            "image {}×{} is smaller than {min}×{min} (twice the patch size)",
            image.h(),
            image.w()
        )));
    }
    Ok(())
}

/// Per-patch features over a non-overlapping grid. Patches whose statistics
/// cannot be fitted (flat or one-signed regions) are skipped.
pub fn patch_features(image: &IntensityImage, patch_size: usize) -> Result<Vec<PatchFeatures>> {
    check_patch_size(patch_size)?;
    check_image_size(image, patch_size)?;
    let full = Plane::from_image(image);
    let (mscn_full, sigma_full) = mscn_fields(&full)?;
    let (mscn_half, _) = mscn_fields(&full.half())?;
    let half = patch_size / 2;

    let mut patches = Vec::new();
    for py in 0..image.h() / patch_size {
        for px in 0..image.w() / patch_size {
            let (y0, x0) = (py * patch_size, px * patch_size);
            let fine = block_features(&mscn_full, y0, x0, patch_size);
            let coarse = block_features(&mscn_half, y0 / 2, x0 / 2, half);
            let (Ok(fine), Ok(coarse)) = (fine, coarse) else {
                continue;
            };
            let mut sharpness = 0.0;
            for y in y0..y0 + patch_size {
                sharpness += sigma_full.values[y * full.w + x0..y * full.w + x0 + patch_size]
                    .iter()
                    .sum::<f64>();
            }
            sharpness /= (patch_size * patch_size) as f64;
            let mut features = Vec::with_capacity(FEATURE_LEN);
            features.extend_from_slice(&fine);
            features.extend_from_slice(&coarse);
            patches.push(PatchFeatures {
                features,
                sharpness,
            });
        }
    }
    if patches.is_empty() {
        return Err(Error::Fit("no patch has usable statistics".into()));
    }
    Ok(patches)
}

/// Keeps patches whose sharpness reaches 75 % of the sharpest one.
fn select_sharp(patches: Vec<PatchFeatures>) -> Vec<PatchFeatures> {
    let max = patches.iter().map(|p| p.sharpness).fold(0.0, f64::max);
    patches
        .into_iter()
        .filter(|p| p.sharpness >= SHARPNESS_FRACTION * max)
        .collect()
}

/// Mean feature vector over the sharpness-selected patches.
pub fn niqe_features(image: &IntensityImage, patch_size: usize) -> Result<Vec<f64>> {
    let selected = select_sharp(patch_features(image, patch_size)?);
    let rows: Vec<&[f64]> = selected.iter().map(|p| p.features.as_slice()).collect();
    Ok(mean_and_cov(&rows).0)
}

/// Sample mean and covariance (row-major, `n − 1` normalization; zero for one row).
fn mean_and_cov(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let f = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut mean = vec![0.0; f];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; f * f];
    if rows.len() > 1 {
        for row in rows {
            for i in 0..f {
                let di = row[i] - mean[i];
                for j in i..f {
                    cov[i * f + j] += di * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..f {
            for j in i..f {
                let v = cov[i * f + j] / (n - 1.0);
                cov[i * f + j] = v;
                cov[j * f + i] = v;
            }
        }
    }
    (mean, cov)
}

/// Pristine-corpus statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// `F × F`, row-major.
    pub cov: Vec<f64>,
    pub patch_size: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    features: usize,
    patch_size: usize,
}

impl NiqeModel {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>, patch_size: usize) -> Result<Self> {
        let f = mean.len();
        if f == 0 || cov.len() != f * f {
            return Err(Error::Shape(format!(
                "covariance of length {} does not match {f} features",
                cov.len()
            )));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite model statistics".into()));
        }
        for i in 0..f {
            for j in 0..i {
                let (a, b) = (cov[i * f + j], cov[j * f + i]);
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Numeric(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        check_patch_size(patch_size)?;
        Ok(NiqeModel {
            mean,
            cov,
            patch_size,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.mean.len()
    }

    /// One JSON header line, then `F` little-endian `f64` means and the `F × F` covariance.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            format: "niqe".into(),
            version: 1,
            features: self.feature_len(),
            patch_size: self.patch_size,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for v in self.mean.iter().chain(&self.cov) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing model header line".into()))?;
        let header: ModelHeader = serde_json::from_slice(&bytes[..nl])?;
        if header.format != "niqe" || header.version != 1 {
            return Err(Error::Format(format!(
                "unsupported model format {:?} v{}",
                header.format, header.version
            )));
        }
        let f = header.features;
        let body = &bytes[nl + 1..];
        let expected = 8 * (f + f * f);
        if body.len() != expected {
            return Err(Error::Length {
                expected,
                found: body.len(),
            });
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let (mean, cov) = values.split_at(f);
        NiqeModel::new(mean.to_vec(), cov.to_vec(), header.patch_size)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Fits the pristine model over the sharpness-selected patches of every image.
pub fn fit_niqe_model(corpus: &[IntensityImage], patch_size: usize) -> Result<NiqeModel> {
    check_patch_size(patch_size)?;
    if corpus.len() < MIN_CORPUS {
        return Err(Error::Parameter(format!(
            "need at least {MIN_CORPUS} pristine images, got {}",
            corpus.len()
        )));
    }
    for img in corpus {
        check_image_size(img, patch_size)?;
    }
    let per_image: Vec<Vec<PatchFeatures>> = corpus
        .par_iter()
        .map(|img| patch_features(img, patch_size).map(select_sharp))
        .collect::<Result<_>>()?;
    let rows: Vec<&[f64]> = per_image
        .iter()
        .flatten()
        .map(|p| p.features.as_slice())
        .collect();
    if rows.len() < 2 {
        return Err(Error::Parameter(format!(
            "corpus yields {} usable patches, need at least 2",
            rows.len()
        )));
    }
    let (mean, cov) = mean_and_cov(&rows);
    NiqeModel::new(mean, cov, patch_size)
}

/// `sqrt((ν₁−ν₂)ᵀ ((Σ₁+Σ₂)/2 + εI)⁻¹ (ν₁−ν₂))` against the model's `(ν₁, Σ₁)`.
pub fn niqe_distance(model: &NiqeModel, mean: &[f64], cov: &[f64]) -> Result<f64> {
    let f = model.feature_len();
    if mean.len() != f || cov.len() != f * f {
        return Err(Error::Shape(format!(
            "test statistics have {} features, model has {f}",
            mean.len()
        )));
    }
    let pooled = DMatrix::from_fn(f, f, |i, j| {
        let v = (model.cov[i * f + j] + cov[i * f + j]) / 2.0;
        if i == j {
            v + COV_EPS
        } else {
            v
        }
    });
    let diff = DVector::from_iterator(f, model.mean.iter().zip(mean).map(|(a, b)| a - b));
    let solved = match pooled.clone().cholesky() {
        Some(chol) => chol.solve(&diff),
        None => pooled
            .lu()
            .solve(&diff)
            .ok_or_else(|| Error::Numeric("pooled covariance is singular".into()))?,
    };
    let q = diff.dot(&solved);
    if !q.is_finite() {
        return Err(Error::Numeric("non-finite quadratic form".into()));
    }
    Ok(q.max(0.0).sqrt())
}

/// NIQE score of `image` against `model`, over all usable patches of the image.
pub fn niqe_score(image: &IntensityImage, model: &NiqeModel) -> Result<f64> {
    let patches = patch_features(image, model.patch_size)?;
    let rows: Vec<&[f64]> = patches.iter().map(|p| p.features.as_slice()).collect();
    let (mean, cov) = mean_and_cov(&rows);
    niqe_distance(model, &mean, &cov)
}
