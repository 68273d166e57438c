//! On-disk datasets: `%06d.ppm` image, `%06d.pgm` labels and `%06d.json`
//! sidecar per sample, plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use plrefine::dataset::LabeledImage;
use plrefine::pnm;
use plrefine::scenegen::{DomainPreset, Sample};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub preset: DomainPreset,
    pub count: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    caption: String,
    spec: &'a plrefine::scenegen::SceneSpec,
    style: &'a plrefine::scenegen::DomainStyle,
}

pub fn stem(index: usize) -> String {
    format!("{index:06}")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes one sample triple.
pub fn write_sample(dir: &Path, index: usize, sample: &Sample) -> Result<(), CliError> {
    let base = dir.join(stem(index));
    let ppm = pnm::encode_ppm(&sample.image).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&base.with_extension("ppm"), &ppm)?;
    write_file(&base.with_extension("pgm"), &pnm::encode_pgm(&sample.labels))?;
    write_json(
        &base.with_extension("json"),
        &Sidecar {
            caption: sample.spec.caption(),
            spec: &sample.spec,
            style: &sample.style,
        },
    )
}

pub fn read_image(path: &Path) -> Result<plrefine::ImageBuf, CliError> {
    pnm::decode_ppm(&read_file(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_labels(path: &Path) -> Result<plrefine::LabelMap, CliError> {
    pnm::decode_pgm(&read_file(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Loads the first `limit` samples of a dataset directory.
pub fn load_dataset(dir: &Path, limit: Option<usize>) -> Result<(DatasetManifest, Vec<LabeledImage>), CliError> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST))?;
    let count = limit.map_or(manifest.count, |l| l.min(manifest.count));
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let base = dir.join(stem(i));
        let image = read_image(&base.with_extension("ppm"))?;
        let labels = read_labels(&base.with_extension("pgm"))?;
        if (image.width(), image.height()) != (manifest.width, manifest.height)
            || (labels.width(), labels.height()) != (manifest.width, manifest.height)
        {
            return Err(CliError::Validation(format!(
                "{}: dimensions disagree with manifest {}x{}",
                base.display(),
                manifest.width,
                manifest.height
            )));
        }
        samples.push(LabeledImage { image, labels });
    }
    Ok((manifest, samples))
}

/// Sorted `*.pgm` stems of a directory.
pub fn pgm_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path: PathBuf = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            if let Some(s) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(s.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}
