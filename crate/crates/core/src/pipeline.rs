//! HQ image selection and dataset export.
//!
//! Every clip is reconstructed by each registered method, each result is
//! scored with NIQE, and the lowest-scoring image becomes the clip's HQ image.
//! [`build_dataset`] writes spikes, voxel tensors and HQ images to disk along
//! with a `manifest.json` that downstream training consumes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::imageio;
use crate::niqe::{niqe_score, NiqeModel};
use crate::recon;
use crate::stream::{IntensityImage, SpikeStream};

pub trait Reconstructor: Send + Sync {
    fn reconstruct(&self, clip_id: &str, stream: &SpikeStream) -> Result<IntensityImage>;
}

impl<F> Reconstructor for F
where
    F: Fn(&str, &SpikeStream) -> Result<IntensityImage> + Send + Sync,
{
    fn reconstruct(&self, clip_id: &str, stream: &SpikeStream) -> Result<IntensityImage> {
        self(clip_id, stream)
    }
}

/// TFP over a centred window; `None` uses the whole stream.
#[derive(Clone, Copy, Debug)]
pub struct Tfp {
    pub window: Option<usize>,
    pub theta: f64,
}

impl Reconstructor for Tfp {
    fn reconstruct(&self, _: &str, stream: &SpikeStream) -> Result<IntensityImage> {
        recon::tfp(stream, self.window.unwrap_or(stream.k()), self.theta)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tfi {
    pub theta: f64,
}

impl Reconstructor for Tfi {
    fn reconstruct(&self, _: &str, stream: &SpikeStream) -> Result<IntensityImage> {
        recon::tfi(stream, self.theta)
    }
}

/// Loads `<dir>/<clip_id>.png`, produced offline by some external method.
#[derive(Clone, Debug)]
pub struct Precomputed {
    pub dir: PathBuf,
}

impl Reconstructor for Precomputed {
    fn reconstruct(&self, clip_id: &str, stream: &SpikeStream) -> Result<IntensityImage> {
        let img = imageio::read_png(self.dir.join(format!("{clip_id}.png")))?;
        if img.h() != stream.h() || img.w() != stream.w() {
            return Err(Error::Shape(format!(
                "precomputed image is {}×{}, clip is {}×{}",
                img.h(),
                img.w(),
                stream.h(),
                stream.w()
            )));
        }
        Ok(img)
    }
}

/// Ordered, uniquely named set of reconstruction methods.
#[derive(Default)]
pub struct ReconRegistry {
    entries: Vec<(String, Box<dyn Reconstructor>)>,
}

impl ReconRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `tfp` over the whole stream followed by `tfi`.
    pub fn model_based(theta: f64, tfp_window: Option<usize>) -> Self {
        let mut registry = Self::new();
        registry
            .register(
                "tfp",
                Tfp {
                    window: tfp_window,
                    theta,
                },
            )
            .expect("fresh registry");
        registry
            .register("tfi", Tfi { theta })
            .expect("fresh registry");
        registry
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        recon: impl Reconstructor + 'static,
    ) -> Result<&mut Self> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::Parameter(format!(
                "duplicate reconstructor name {name:?}"
            )));
        }
        self.entries.push((name, Box::new(recon)));
        Ok(self)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Index of the smallest score; the earliest entry wins ties. NaN never wins.
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug)]
pub struct HqSelection {
    pub image: IntensityImage,
    pub chosen: String,
    pub scores: BTreeMap<String, f64>,
}

/// Reconstructs with every method and keeps the image with the lowest NIQE score.
pub fn select_hq(
    clip_id: &str,
    stream: &SpikeStream,
    registry: &ReconRegistry,
    model: &NiqeModel,
) -> Result<HqSelection> {
    select_hq_by(clip_id, stream, registry, |img| niqe_score(img, model))
}

/// [`select_hq`] with an arbitrary lower-is-better score.
pub fn select_hq_by(
    clip_id: &str,
    stream: &SpikeStream,
    registry: &ReconRegistry,
    score: impl Fn(&IntensityImage) -> Result<f64>,
) -> Result<HqSelection> {
    if registry.is_empty() {
        return Err(Error::Parameter("reconstructor registry is empty".into()));
    }
    let mut candidates = Vec::with_capacity(registry.len());
    let mut failures = Vec::new();
    for (name, recon) in &registry.entries {
        let scored = recon
            .reconstruct(clip_id, stream)
            .and_then(|img| score(&img).map(|s| (img, s)));
        match scored {
            Ok((img, s)) if s.is_finite() => candidates.push((name.clone(), img, s)),
            Ok((_, s)) => failures.push((name.clone(), format!("non-finite score {s}"))),
            Err(e) => failures.push((name.clone(), e.to_string())),
        }
    }
    let scores: Vec<f64> = candidates.iter().map(|c| c.2).collect();
    let Some(best) = argmin_first(&scores) else {
        return Err(Error::Pipeline(failures));
    };
    let score_map = candidates.iter().map(|(n, _, s)| (n.clone(), *s)).collect();
    let (chosen, image, _) = candidates.swap_remove(best);
    Ok(HqSelection {
        image,
        chosen,
        scores: score_map,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub clip_id: String,
    pub class_label: String,
    pub spike_path: String,
    pub voxel_path: String,
    pub hq_path: Option<String>,
    /// Reserved for the trainer's coarse reconstructions.
    pub lq_path: Option<String>,
    pub niqe_scores: BTreeMap<String, f64>,
    pub chosen_method: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Checks that each item's chosen method carries its minimal score.
    pub fn validate(&self) -> Result<()> {
        for item in &self.items {
            let chosen = item.niqe_scores.get(&item.chosen_method).ok_or_else(|| {
                Error::Format(format!("{}: chosen method has no score", item.clip_id))
            })?;
            if item.niqe_scores.values().any(|s| s < chosen) {
                return Err(Error::Format(format!(
                    "{}: chosen method {:?} is not the minimum",
                    item.clip_id, item.chosen_method
                )));
            }
        }
        Ok(())
    }
}

/// One labelled spike clip.
#[derive(Clone, Debug)]
pub struct Clip {
    pub class_label: String,
    pub stream: SpikeStream,
    pub theta: f64,
}

fn write_clip(
    index: usize,
    clip: &Clip,
    registry: &ReconRegistry,
    model: &NiqeModel,
    bins: usize,
    out_dir: &Path,
) -> Result<ManifestItem> {
    let clip_id = format!("clip_{index:04}");
    let spike_path = format!("spikes/{clip_id}.spk");
    let voxel_path = format!("voxels/{clip_id}.vox");
    let hq_path = format!("hq/{clip_id}.png");

    codec::write_spk(out_dir.join(&spike_path), &clip.stream, clip.theta)?;
    recon::voxelize(&clip.stream, bins)?.write(out_dir.join(&voxel_path))?;
    let hq = select_hq(&clip_id, &clip.stream, registry, model)?;
    imageio::write_png(out_dir.join(&hq_path), &hq.image)?;

    Ok(ManifestItem {
        clip_id,
        class_label: clip.class_label.clone(),
        spike_path,
        voxel_path,
        hq_path: Some(hq_path),
        lq_path: None,
        niqe_scores: hq.scores,
        chosen_method: hq.chosen,
    })
}

/// Exports every clip under `out_dir` and writes `manifest.json` atomically.
///
/// Layout: `spikes/`, `voxels/` (with JSON sidecars), `hq/` and an empty `lq/`.
/// Paths in the manifest are relative to `out_dir`.
pub fn build_dataset(
    clips: &[Clip],
    registry: &ReconRegistry,
    model: &NiqeModel,
    bins: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if let Some((i, clip)) = clips
        .iter()
        .enumerate()
        .find(|(_, c)| bins == 0 || !c.stream.k().is_multiple_of(bins))
    {
        return Err(Error::Parameter(format!(
            "clip {i}: bin count {bins} does not divide stream length {}",
            clip.stream.k()
        )));
    }
    for sub in ["spikes", "voxels", "hq", "lq"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))?;
    }

    let items = clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| write_clip(i, clip, registry, model, bins, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { items };

    let tmp = out_dir.join(format!("{MANIFEST_NAME}.tmp"));
    let dst = out_dir.join(MANIFEST_NAME);
    std::fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &dst).map_err(|e| Error::io(dst, e))?;
    Ok(manifest)
}
