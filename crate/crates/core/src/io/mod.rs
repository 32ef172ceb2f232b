//! On-disk formats: light field directories, model checkpoints, metric
//! reports and feature-extractor weights.

mod checkpoint;
mod lfdir;
mod report;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use lfdir::{load_lf, save_lf, view_file_name, LfMeta, DEFAULT_PATTERN, META_FILE};
pub use report::{read_report_csv, read_report_json, write_report_csv, write_report_json};

use crate::error::{Error, Result};
use crate::lightfield::Image;
use crate::losses::{ExtractorOrigin, FeatureExtractor, FeatureStage};

/// Creates the directory that will hold `path`, if any.
pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// 8-bit quantisation with round-half-up.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = img.size();
    let mut buf = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf.push(quantize(img.get(y, x, c)));
            }
        }
    }
    let rgb = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from the image");
    ensure_parent(path)?;
    rgb.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Loads any 8-bit PNG as RGB in `[0, 1]`.
pub fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Image::from_fn(h, w, |y, x, c| f32::from(raw[(y * w + x) * 3 + c]) / 255.0)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Imported perceptual feature weights. Only the first `tap_depth` stages
/// are used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorFile {
    pub tap_depth: usize,
    #[serde(default)]
    pub description: String,
    pub stages: Vec<FeatureStage>,
}

pub fn load_extractor(path: &Path) -> Result<FeatureExtractor> {
    let file: ExtractorFile = read_json(path)?;
    if file.tap_depth == 0 || file.tap_depth > file.stages.len() {
        return Err(Error::format(
            path,
            format!("tap depth {} outside 1..={}", file.tap_depth, file.stages.len()),
        ));
    }
    let origin = ExtractorOrigin::Imported { tap_depth: file.tap_depth, description: file.description };
    let mut stages = file.stages;
    stages.truncate(file.tap_depth);
    FeatureExtractor::from_stages(stages, origin).map_err(|e| Error::format(path, e.to_string()))
}
