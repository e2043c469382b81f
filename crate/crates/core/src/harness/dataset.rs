use crate::boundary::image_seed;
use crate::error::{Error, Result};
use crate::imageops::{load_png, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// Fixed crop window of one image; the full image when it is too small.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// The path as written in the MOS file, which also serves as the id.
    pub id: String,
    pub path: PathBuf,
    pub mos: f64,
    pub crop: Crop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub crop_seed: u64,
    pub crop_size: usize,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Deserialize)]
struct MosRow {
    path: String,
    mos: String,
}

/// Draws the crop window for `id`; images no larger than `size` in a
/// dimension are taken whole in that dimension.
pub fn crop_for(id: &str, height: usize, width: usize, size: usize, crop_seed: u64) -> Crop {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(crop_seed, id));
    let (ch, cw) = (height.min(size), width.min(size));
    let top = rng.random_range(0..=height - ch);
    let left = rng.random_range(0..=width - cw);
    Crop {
        top,
        left,
        height: ch,
        width: cw,
    }
}

/// Reads `mos_csv` (header `path,mos`; paths relative to `dir`) and fixes a
/// crop per image.
pub fn load_dataset(dir: impl AsRef<Path>, mos_csv: impl AsRef<Path>, crop_seed: u64) -> Result<DatasetManifest> {
    load_dataset_with(dir, mos_csv, crop_seed, 224)
}

pub fn load_dataset_with(
    dir: impl AsRef<Path>,
    mos_csv: impl AsRef<Path>,
    crop_seed: u64,
    crop_size: usize,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(mos_csv.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "mos"] {
        return Err(Error::Dataset(format!("expected header `path,mos`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, row) in reader.deserialize::<MosRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Dataset(format!("row {line}: {e}")))?;
        let mos: f64 = row
            .mos
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Dataset(format!("row {line}: MOS {:?} is not a finite number", row.mos)))?;
        if !seen.insert(row.path.clone()) {
            return Err(Error::Dataset(format!("row {line}: duplicate id {:?}", row.path)));
        }
        let path = dir.join(&row.path);
        let (w, h) = image::image_dimensions(&path)
            .map_err(|e| Error::Dataset(format!("row {line}: {}: {e}", path.display())))?;
        let crop = crop_for(&row.path, h as usize, w as usize, crop_size, crop_seed);
        entries.push(DatasetEntry {
            id: row.path,
            path,
            mos,
            crop,
        });
    }
    Ok(DatasetManifest {
        crop_seed,
        crop_size,
        entries,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl DatasetEntry {
    /// Decodes the image and applies the fixed crop.
    pub fn load(&self) -> Result<Image> {
        let img = load_png(&self.path)?;
        let c = self.crop;
        if (c.top, c.left, c.height, c.width) == (0, 0, img.height(), img.width()) {
            return Ok(img);
        }
        img.crop(c.top, c.left, c.height, c.width)
    }
}
