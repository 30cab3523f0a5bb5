//! Corpus loading: IDX binaries, directories of grayscale images, per-class
//! subsampling and conversion of 8-bit rasters into filtration functions.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: bad magic number 0x{found:08x} at offset 0 (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{images}: {image_count} images but {labels}: {label_count} labels")]
    CountMismatch {
        images: PathBuf,
        labels: PathBuf,
        image_count: usize,
        label_count: usize,
    },
    #[error("{path}: truncated at offset {offset} (needed {needed} more bytes)")]
    TruncatedFile {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{path}: file name does not match <label>_<index>.<ext>")]
    UnparsableName { path: PathBuf },
    #[error("{path}: not a grayscale image ({color})")]
    NonGrayscaleImage { path: PathBuf, color: String },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: invalid raster: {reason}")]
    InvalidRaster { path: PathBuf, reason: String },
    #[error("label {label}: {available} items available, {requested} requested")]
    InsufficientClassMembers {
        label: u8,
        available: usize,
        requested: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One labeled 8-bit raster of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRaster {
    pub id: String,
    pub label: u8,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    #[serde(with = "base64_bytes")]
    pub pixels: Vec<u8>,
}

impl LabeledRaster {
    pub fn new(
        id: impl Into<String>,
        label: u8,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, String> {
        if width < 2 || height < 2 {
            return Err(format!("raster must be at least 2x2, got {width}x{height}"));
        }
        if pixels.len() != width * height {
            return Err(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            ));
        }
        Ok(Self {
            id: id.into(),
            label,
            width,
            height,
            pixels,
        })
    }
}

/// A scalar field on the pixel grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, String> {
        if values.len() != width * height {
            return Err(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            ));
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(format!("value {bad} outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> IdxReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], IngestError> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(IngestError::TruncatedFile {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: len - available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32, IngestError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IngestError> {
        let found = self.u32_be()?;
        if found != expected {
            return Err(IngestError::BadMagic {
                path: self.path.to_path_buf(),
                found,
                expected,
            });
        }
        Ok(())
    }
}

/// Loads an IDX image file together with its IDX label file. Either file may
/// be gzip-compressed.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<LabeledRaster>, IngestError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = read_maybe_gz(images_path)?;
    let label_bytes = read_maybe_gz(labels_path)?;

    let mut images = IdxReader {
        path: images_path,
        bytes: &image_bytes,
        offset: 0,
    };
    images.magic(IDX_IMAGES_MAGIC)?;
    let image_count = images.u32_be()? as usize;
    let height = images.u32_be()? as usize;
    let width = images.u32_be()? as usize;

    let mut labels = IdxReader {
        path: labels_path,
        bytes: &label_bytes,
        offset: 0,
    };
    labels.magic(IDX_LABELS_MAGIC)?;
    let label_count = labels.u32_be()? as usize;

    if image_count != label_count {
        return Err(IngestError::CountMismatch {
            images: images_path.to_path_buf(),
            labels: labels_path.to_path_buf(),
            image_count,
            label_count,
        });
    }

    let label_data = labels.take(label_count)?;
    let mut out = Vec::with_capacity(image_count);
    for (position, &label) in label_data.iter().enumerate() {
        let pixels = images.take(width * height)?.to_vec();
        let raster = LabeledRaster::new(format!("idx-{position}"), label, width, height, pixels)
            .map_err(|reason| IngestError::InvalidRaster {
                path: images_path.to_path_buf(),
                reason,
            })?;
        out.push(raster);
    }
    Ok(out)
}

fn parse_label_name(path: &Path) -> Option<u8> {
    let stem = path.file_stem()?.to_str()?;
    path.extension()?;
    let (label, index) = stem.split_once('_')?;
    index.parse::<u64>().ok()?;
    label.parse::<u8>().ok()
}

/// Loads every file of `dir` as a grayscale raster named `<label>_<index>.<ext>`.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<LabeledRaster>, IngestError> {
    let dir = dir.as_ref();
    let io_err = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_type().map_err(io_err)?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let label = parse_label_name(&path)
            .ok_or_else(|| IngestError::UnparsableName { path: path.clone() })?;
        let img = image::open(&path).map_err(|source| IngestError::Decode {
            path: path.clone(),
            source,
        })?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            image::DynamicImage::ImageLuma8(buf) => buf.into_raw(),
            image::DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(|v| (v >> 8) as u8).collect()
            }
            other => {
                return Err(IngestError::NonGrayscaleImage {
                    path,
                    color: format!("{:?}", other.color()),
                })
            }
        };
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let raster = LabeledRaster::new(id, label, width, height, pixels).map_err(|reason| {
            IngestError::InvalidRaster {
                path: path.clone(),
                reason,
            }
        })?;
        out.push(raster);
    }
    Ok(out)
}

/// Picks exactly `per_class` items of every label present, preserving the
/// input order. Labels are visited in ascending order so the random stream is
/// consumed identically on every platform.
pub fn sample_per_class(
    items: &[LabeledRaster],
    per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledRaster>, IngestError> {
    let mut by_label: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_label.entry(item.label).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(per_class * by_label.len());
    for (&label, positions) in &by_label {
        if positions.len() < per_class {
            return Err(IngestError::InsufficientClassMembers {
                label,
                available: positions.len(),
                requested: per_class,
            });
        }
        let picked = rand::seq::index::sample(&mut rng, positions.len(), per_class);
        keep.extend(picked.into_iter().map(|k| positions[k]));
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Maps intensities to `[0, 1]`; with `invert` bright strokes become low values
/// so they enter the sublevel-set filtration first.
pub fn to_filtration_function(raster: &LabeledRaster, invert: bool) -> ScalarGrid {
    let values = raster
        .pixels
        .iter()
        .map(|&p| {
            let v = f64::from(p) / 255.0;
            if invert {
                1.0 - v
            } else {
                v
            }
        })
        .collect();
    ScalarGrid {
        width: raster.width,
        height: raster.height,
        values,
    }
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}
