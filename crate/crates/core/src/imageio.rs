//! 8-bit grayscale PNG I/O for [`IntensityImage`].

use std::path::Path;

use image::{GrayImage, ImageReader, Luma};

use crate::error::{Error, Result};
use crate::stream::IntensityImage;

/// Quantizes to 8 bits as `round(255 · I)`.
pub fn to_gray8(img: &IntensityImage) -> GrayImage {
    GrayImage::from_fn(img.w() as u32, img.h() as u32, |x, y| {
        Luma([(img.get(y as usize, x as usize) * 255.0).round() as u8])
    })
}

pub fn write_png(path: impl AsRef<Path>, img: &IntensityImage) -> Result<()> {
    to_gray8(img).save(path.as_ref())?;
    Ok(())
}

/// Reads any supported image as luminance, scaled to `[0, 1]`.
pub fn read_png(path: impl AsRef<Path>) -> Result<IntensityImage> {
    let path = path.as_ref();
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()?
        .into_luma16();
    let (w, h) = decoded.dimensions();
    let values = decoded
        .pixels()
        .map(|p| f64::from(p.0[0]) / f64::from(u16::MAX))
        .collect();
    IntensityImage::new_clamped(h as usize, w as usize, values)
}

/// Lists `*.png` files in a directory, sorted by file name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}
